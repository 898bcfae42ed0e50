"""Standard-form conic problem containers and symmetric vectorization.

The canonical form is

    minimize    c'x
    subject to  A x = b,   x in K,

with K a product of free, nonnegative, and PSD cones (in that order).
PSD blocks use the scaled upper-triangular vectorization ``svec``:
column-major upper triangle with off-diagonal entries multiplied by
sqrt(2), so that <X, Y> = svec(X)'svec(Y).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

SQRT2 = float(np.sqrt(2.0))

Cone = Tuple[str, int]  # ("free"|"nonneg"|"psd", size); psd size = matrix order


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def svec_indices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(row, col) of the upper triangle in svec order."""
    cols = np.concatenate([np.full(j + 1, j) for j in range(n)])
    rows = np.concatenate([np.arange(j + 1) for j in range(n)])
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def svec(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    r, c = svec_indices(n)
    v = mat[r, c].astype(float).copy()
    v[r != c] *= SQRT2
    return v


def smat(vec: np.ndarray) -> np.ndarray:
    m = len(vec)
    n = int((np.sqrt(8 * m + 1) - 1) / 2)
    if svec_dim(n) != m:
        raise ValueError("vector length is not a triangular number")
    r, c = svec_indices(n)
    out = np.zeros((n, n))
    v = np.asarray(vec, dtype=float).copy()
    off = r != c
    v[off] /= SQRT2
    out[r, c] = v
    out[c, r] = v
    return out


def cone_dims(cones: List[Cone]) -> List[int]:
    """Vectorized length of each cone block."""
    out = []
    for kind, n in cones:
        if kind in ("free", "nonneg"):
            out.append(n)
        elif kind == "psd":
            out.append(svec_dim(n))
        else:
            raise ValueError(f"unknown cone {kind!r}")
    return out


@dataclass
class ConicProblem:
    """min c'x  s.t.  A x = b,  x in product cone."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: List[Cone]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csr_matrix(self.A)
        n = sum(cone_dims(self.cones))
        if self.A.shape != (len(self.b), n) or len(self.c) != n:
            raise ValueError(
                f"shape mismatch: A {self.A.shape}, b {len(self.b)}, "
                f"c {len(self.c)}, cones total {n}")

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def block_slices(self) -> List[slice]:
        out = []
        at = 0
        for d in cone_dims(self.cones):
            out.append(slice(at, at + d))
            at += d
        return out


@dataclass
class Solution:
    """Solver output.

    status is one of "optimal", "primal_infeasible", "dual_infeasible",
    "max_iter".  For infeasible statuses ``ray`` holds the certificate:
    a dual improving ray y with A'y in -K*, b'y = 1 (primal infeasible)
    or a primal ray x in K with A x = 0, c'x = -1 (dual infeasible).
    """

    status: str
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    objective: float = np.nan
    ray: Optional[np.ndarray] = None
    iterations: int = 0
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    gap: float = np.nan
    backend: str = ""
    info: dict = field(default_factory=dict)

"""Backend selection and packing helpers for the hot numeric kernels.

At import time the compiled Cython core (``conset._kernels``) is preferred;
the pure-numpy fallback (``conset._kernels_py``) is used when the extension
is unavailable or when the environment variable CONSET_PURE is set to a
nonempty value.
"""

from __future__ import annotations

import os
from typing import Sequence, Tuple

import numpy as np

from conset.poly import Polynomial

if os.environ.get("CONSET_PURE"):
    from conset import _kernels_py as _backend
    BACKEND = "pure"
else:
    try:
        from conset import _kernels as _backend  # type: ignore
        BACKEND = "compiled"
    except ImportError:
        from conset import _kernels_py as _backend
        BACKEND = "pure"

eval_many_packed = _backend.eval_many
rk4_propagate_packed = _backend.rk4_propagate


def pack_polys(polys: Sequence[Polynomial]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a family of same-space polynomials to (exps, coefs, offsets)."""
    if not polys:
        return (np.zeros((0, 1), dtype=np.int64), np.zeros(0),
                np.zeros(1, dtype=np.int64))
    nv = polys[0].varspace.arity
    exps, coefs, offsets = [], [], [0]
    for p in polys:
        if p.varspace.arity != nv:
            raise ValueError("polynomials must share a variable space")
        for mono, c in sorted(p.terms.items()):
            exps.append(mono)
            coefs.append(c)
        offsets.append(len(coefs))
    if not exps:
        exps = np.zeros((0, nv), dtype=np.int64)
    return (np.asarray(exps, dtype=np.int64).reshape(len(coefs), nv),
            np.asarray(coefs, dtype=float),
            np.asarray(offsets, dtype=np.int64))


class PackedFamily:
    """Reusable packed form of a polynomial family for the kernels."""

    def __init__(self, polys: Sequence[Polynomial]):
        self.n_polys = len(polys)
        self.arity = polys[0].varspace.arity if polys else 1
        self.exps, self.coefs, self.offsets = pack_polys(polys)

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        points = np.ascontiguousarray(points, dtype=float)
        if self.n_polys == 0:
            return np.zeros((points.shape[0], 0))
        return eval_many_packed(self.exps, self.coefs, self.offsets, points)


def rk4_propagate(f: PackedFamily, x0: np.ndarray, t0: float, t1: float,
                  n_steps: int, checks: PackedFamily | None = None,
                  tol: float = 0.0, diverge_norm: float = 1e6):
    """Batch RK4 propagation with optional per-node constraint checking."""
    x0 = np.ascontiguousarray(x0, dtype=float)
    if f.exps.shape[1] != x0.shape[1] + 1:
        raise ValueError("dynamics must live over (t, x)")
    if checks is not None and checks.n_polys and \
            checks.exps.shape[1] != x0.shape[1]:
        raise ValueError("check polynomials must live over the state space")
    if checks is None or checks.n_polys == 0:
        g_exps = np.zeros((0, x0.shape[1]), dtype=np.int64)
        g_coefs = np.zeros(0)
        g_offsets = np.zeros(1, dtype=np.int64)
    else:
        g_exps, g_coefs, g_offsets = checks.exps, checks.coefs, checks.offsets
    return rk4_propagate_packed(f.exps, f.coefs, f.offsets, x0,
                                float(t0), float(t1), int(n_steps),
                                g_exps, g_coefs, g_offsets,
                                float(tol), float(diverge_norm))

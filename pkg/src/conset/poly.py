"""Sparse multivariate polynomials over (t, x_1..x_n) with a fixed graded order.

Monomials are exponent tuples, one entry per variable.  When a variable
space carries time, t is variable 0 and the states follow; otherwise the
states occupy indices 0..n-1.  All coefficient layouts elsewhere in the
package use the graded lexicographic order produced by ``monomial_basis``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

Monomial = Tuple[int, ...]

# Coefficients below this magnitude are dropped during normalization.
COEF_TOL = 1e-14

# Hard cap on the total degree a product/substitution may produce.
DEGREE_CAP = 30


class DegreeCapError(ValueError):
    """Raised when an operation would exceed the configured degree cap."""


@dataclass(frozen=True)
class VarSpace:
    """Variable layout: optional time variable followed by state variables."""

    n_states: int
    has_time: bool = False

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("need at least one state variable")

    @property
    def arity(self) -> int:
        return self.n_states + (1 if self.has_time else 0)

    @property
    def time_index(self) -> int:
        if not self.has_time:
            raise ValueError("variable space has no time variable")
        return 0

    def state_index(self, i: int) -> int:
        """Flat index of state i (0-based)."""
        if not 0 <= i < self.n_states:
            raise IndexError(f"state index {i} out of range")
        return i + (1 if self.has_time else 0)


def _grlex_key(mono: Monomial):
    # graded: total degree first, then lexicographic with earlier
    # variables ranked higher (x1^2 before x1*x2 before x2^2)
    return (sum(mono), tuple(-e for e in mono))


def monomial_basis(varspace: VarSpace, max_degree: int) -> list[Monomial]:
    """All monomials of total degree <= max_degree, graded lexicographic.

    The list has C(arity + max_degree, max_degree) entries and its order is
    deterministic; every vectorized coefficient layout in the package
    refers to it.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    nv = varspace.arity
    out: list[Monomial] = []
    for d in range(max_degree + 1):
        for combo in combinations_with_replacement(range(nv), d):
            exp = [0] * nv
            for idx in combo:
                exp[idx] += 1
            out.append(tuple(exp))
    out.sort(key=_grlex_key)
    return out


def basis_size(n_vars: int, max_degree: int) -> int:
    return math.comb(n_vars + max_degree, max_degree)


class Polynomial:
    """Immutable sparse polynomial: map from exponent tuple to float."""

    __slots__ = ("varspace", "terms")

    def __init__(self, varspace: VarSpace, terms: Mapping[Monomial, float]):
        clean: Dict[Monomial, float] = {}
        nv = varspace.arity
        for mono, coef in terms.items():
            if len(mono) != nv:
                raise ValueError(f"monomial {mono} has wrong arity for {varspace}")
            c = float(coef)
            if abs(c) >= COEF_TOL:
                clean[tuple(int(e) for e in mono)] = c
        object.__setattr__(self, "varspace", varspace)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("Polynomial is immutable")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(varspace: VarSpace) -> "Polynomial":
        return Polynomial(varspace, {})

    @staticmethod
    def constant(varspace: VarSpace, c: float) -> "Polynomial":
        return Polynomial(varspace, {(0,) * varspace.arity: c})

    @staticmethod
    def variable(varspace: VarSpace, index: int) -> "Polynomial":
        if not 0 <= index < varspace.arity:
            raise IndexError(f"variable index {index} out of range")
        mono = [0] * varspace.arity
        mono[index] = 1
        return Polynomial(varspace, {tuple(mono): 1.0})

    @staticmethod
    def state(varspace: VarSpace, i: int) -> "Polynomial":
        return Polynomial.variable(varspace, varspace.state_index(i))

    @staticmethod
    def time(varspace: VarSpace) -> "Polynomial":
        return Polynomial.variable(varspace, varspace.time_index)

    # -- basic queries -----------------------------------------------------

    def degree(self) -> int:
        """Total degree; zero polynomial reports -1."""
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def degree_in(self, index: int) -> int:
        if not self.terms:
            return -1
        return max(m[index] for m in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, mono: Monomial) -> float:
        return self.terms.get(tuple(mono), 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.varspace == other.varspace and self.terms == other.terms

    def __hash__(self):
        return hash((self.varspace, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for mono in sorted(self.terms, key=_grlex_key):
            c = self.terms[mono]
            mono_s = "*".join(
                f"z{i}^{e}" if e > 1 else f"z{i}"
                for i, e in enumerate(mono) if e
            )
            bits.append(f"{c:+g}" + (f"*{mono_s}" if mono_s else ""))
        return "Polynomial(" + " ".join(bits) + ")"

    # -- arithmetic --------------------------------------------------------

    def _check_space(self, other: "Polynomial"):
        if self.varspace != other.varspace:
            raise ValueError("variable space mismatch")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.varspace, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_space(other)
        terms = dict(self.terms)
        for mono, c in other.terms.items():
            terms[mono] = terms.get(mono, 0.0) + c
        return Polynomial(self.varspace, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.varspace, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.varspace, other)
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_space(other)
        da, db = self.degree(), other.degree()
        if da >= 0 and db >= 0 and da + db > DEGREE_CAP:
            raise DegreeCapError(
                f"product degree {da + db} exceeds cap {DEGREE_CAP}")
        terms: Dict[Monomial, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                mono = tuple(a + b for a, b in zip(ma, mb))
                terms[mono] = terms.get(mono, 0.0) + ca * cb
        return Polynomial(self.varspace, terms)

    __rmul__ = __mul__

    def scale(self, c: float) -> "Polynomial":
        return Polynomial(self.varspace, {m: c * v for m, v in self.terms.items()})

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a nonnegative integer")
        d = self.degree()
        if d > 0 and d * k > DEGREE_CAP:
            raise DegreeCapError(f"power degree {d * k} exceeds cap {DEGREE_CAP}")
        out = Polynomial.constant(self.varspace, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    def differentiate(self, index: int) -> "Polynomial":
        """Formal partial derivative with respect to variable ``index``."""
        if not 0 <= index < self.varspace.arity:
            raise IndexError(f"variable index {index} out of range")
        terms: Dict[Monomial, float] = {}
        for mono, c in self.terms.items():
            e = mono[index]
            if e == 0:
                continue
            new = list(mono)
            new[index] = e - 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + c * e
        return Polynomial(self.varspace, terms)

    def substitute(self, bindings: Mapping[int, "Polynomial"]) -> "Polynomial":
        """Compose: replace variable i by bindings[i]; unbound pass through.

        All bound polynomials must live in a common target space (which may
        differ from this polynomial's space); unbound variables must exist
        at the same index in the target space.
        """
        if not bindings:
            return self
        target = next(iter(bindings.values())).varspace
        for i, p in bindings.items():
            if not 0 <= i < self.varspace.arity:
                raise IndexError(f"bound variable {i} out of range")
            if p.varspace != target:
                raise ValueError("bindings live in different variable spaces")
        # degree pre-check
        max_b = max((p.degree() for p in bindings.values()), default=0)
        if self.degree() > 0 and max(1, max_b) * self.degree() > DEGREE_CAP:
            raise DegreeCapError("substitution result would exceed degree cap")
        out = Polynomial.zero(target)
        for mono, c in self.terms.items():
            term = Polynomial.constant(target, c)
            for i, e in enumerate(mono):
                if e == 0:
                    continue
                if i in bindings:
                    term = term * bindings[i] ** e
                else:
                    if i >= target.arity:
                        raise ValueError(
                            f"unbound variable {i} missing from target space")
                    term = term * Polynomial.variable(target, i) ** e
            out = out + term
        return out

    # -- evaluation --------------------------------------------------------

    def __call__(self, point: Sequence[float]) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.varspace.arity,):
            raise ValueError(
                f"point has shape {point.shape}, expected ({self.varspace.arity},)")
        total = 0.0
        for mono, c in self.terms.items():
            v = c
            for xi, e in zip(point, mono):
                if e:
                    v *= xi ** e
            total += v
        return total

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an (N, arity) array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.varspace.arity:
            raise ValueError("points must be (N, arity)")
        out = np.zeros(points.shape[0])
        for mono, c in self.terms.items():
            term = np.full(points.shape[0], c)
            for i, e in enumerate(mono):
                if e:
                    term *= points[:, i] ** e
            out += term
        return out

    # -- coefficient vectors -----------------------------------------------

    def coeff_vector(self, basis: Sequence[Monomial]) -> np.ndarray:
        vec = np.zeros(len(basis))
        index = {m: i for i, m in enumerate(basis)}
        for mono, c in self.terms.items():
            try:
                vec[index[mono]] = c
            except KeyError:
                raise ValueError(f"monomial {mono} not in basis") from None
        return vec

    @staticmethod
    def from_coeff_vector(varspace: VarSpace, basis: Sequence[Monomial],
                          vec: Sequence[float]) -> "Polynomial":
        if len(basis) != len(vec):
            raise ValueError("basis/vector length mismatch")
        return Polynomial(varspace, dict(zip(basis, vec)))

    # -- space changes -----------------------------------------------------

    def with_time(self) -> "Polynomial":
        """Embed a state-only polynomial into the (t, x) space."""
        if self.varspace.has_time:
            return self
        ws = VarSpace(self.varspace.n_states, has_time=True)
        return Polynomial(ws, {(0,) + m: c for m, c in self.terms.items()})

    def at_time(self, t_value: float) -> "Polynomial":
        """Fix t = t_value and return a state-only polynomial."""
        if not self.varspace.has_time:
            return self
        ws = VarSpace(self.varspace.n_states, has_time=False)
        terms: Dict[Monomial, float] = {}
        for mono, c in self.terms.items():
            scale = t_value ** mono[0] if mono[0] else 1.0
            key = mono[1:]
            terms[key] = terms.get(key, 0.0) + c * scale
        return Polynomial(ws, terms)


def liouville_apply(v: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """dv/dt + grad_x v . f, the generator of the flow of xdot = f(t, x).

    ``v`` and every component of ``f`` must live in the same (t, x) space,
    with one f component per state variable.
    """
    ws = v.varspace
    if not ws.has_time:
        raise ValueError("v must live in a space with a time variable")
    if len(f) != ws.n_states:
        raise ValueError(
            f"vector field has {len(f)} components, expected {ws.n_states}")
    out = v.differentiate(ws.time_index)
    for i, fi in enumerate(f):
        if fi.varspace != ws:
            raise ValueError("vector field component in wrong variable space")
        out = out + v.differentiate(ws.state_index(i)) * fi
    return out

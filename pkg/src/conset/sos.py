"""Sum-of-squares machinery: Putinar certificates as conic programs.

A positivity constraint "target(z) >= 0 on {g_i(z) >= 0}" is imposed
through the Putinar form

    target = sigma_0 + sum_i sigma_i g_i,

with every sigma a sum of squares.  Matching coefficients monomial by
monomial turns this into linear equalities between the free decision
variables (the coefficients of the unknown polynomials inside ``target``)
and the entries of the PSD Gram matrices of the multipliers.  The degree
of the identity is 2D: sigma_0 has Gram basis of degree D and sigma_i of
degree floor((2D - deg g_i)/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from conset.poly import Monomial, Polynomial, VarSpace, monomial_basis
from conset.sdp.problem import ConicProblem, SQRT2, svec_dim


def lebesgue_moments(varspace: VarSpace, max_degree: int,
                     box: Sequence[Tuple[float, float]]) -> Dict[Monomial, float]:
    """Monomial moments of the Lebesgue measure on a box.

    integral over the box of z^alpha equals the product over coordinates
    of (u^(a+1) - l^(a+1))/(a+1).
    """
    if varspace.has_time:
        raise ValueError("moments are over state variables only")
    if len(box) != varspace.arity:
        raise ValueError("box dimension mismatch")
    out: Dict[Monomial, float] = {}
    for mono in monomial_basis(varspace, max_degree):
        val = 1.0
        for a, (lo, hi) in zip(mono, box):
            val *= (hi ** (a + 1) - lo ** (a + 1)) / (a + 1)
        out[mono] = val
    return out


def moment_vector(moments: Dict[Monomial, float],
                  monos: Sequence[Monomial]) -> np.ndarray:
    return np.array([moments[m] for m in monos])


@dataclass
class PolyVar:
    """An unknown polynomial: one free scalar variable per basis monomial."""

    name: str
    varspace: VarSpace
    degree: int
    monos: Tuple[Monomial, ...]
    ids: np.ndarray                  # global free-variable indices

    def as_linpoly(self) -> "LinPoly":
        terms = {int(i): Polynomial(self.varspace, {m: 1.0})
                 for i, m in zip(self.ids, self.monos)}
        return LinPoly(self.varspace, Polynomial.zero(self.varspace), terms)

    def value(self, x_free: np.ndarray) -> Polynomial:
        coeffs = {m: x_free[i] for m, i in zip(self.monos, self.ids)}
        return Polynomial(self.varspace, coeffs)

    def functional(self, weights: Dict[Monomial, float]) -> Dict[int, float]:
        """Linear functional p -> sum_m weights[m] * coeff_m as var->coef."""
        return {int(i): weights.get(m, 0.0)
                for i, m in zip(self.ids, self.monos)}


@dataclass
class LinPoly:
    """Polynomial with coefficients affine in the free decision variables:

        p(z) = const(z) + sum_j theta_j * coef_j(z).
    """

    varspace: VarSpace
    const: Polynomial
    terms: Dict[int, Polynomial] = field(default_factory=dict)

    @staticmethod
    def wrap(p: Polynomial) -> "LinPoly":
        return LinPoly(p.varspace, p, {})

    def apply(self, fn: Callable[[Polynomial], Polynomial]) -> "LinPoly":
        """Apply a linear polynomial map to every coefficient polynomial."""
        const = fn(self.const)
        terms = {}
        for j, q in self.terms.items():
            r = fn(q)
            if not r.is_zero():
                terms[j] = r
        return LinPoly(const.varspace, const, terms)

    def __neg__(self) -> "LinPoly":
        return self.apply(lambda p: -p)

    def __add__(self, other) -> "LinPoly":
        if isinstance(other, LinPoly):
            terms = dict(self.terms)
            for j, q in other.terms.items():
                r = terms.get(j, Polynomial.zero(q.varspace)) + q
                if r.is_zero():
                    terms.pop(j, None)
                else:
                    terms[j] = r
            return LinPoly(self.varspace, self.const + other.const, terms)
        return LinPoly(self.varspace, self.const + other, dict(self.terms))

    def __sub__(self, other) -> "LinPoly":
        return self + (-other if isinstance(other, LinPoly)
                       else LinPoly.wrap(-other) if isinstance(other, Polynomial)
                       else -other)

    def value(self, x_free: np.ndarray) -> Polynomial:
        p = self.const
        for j, q in self.terms.items():
            p = p + q.scale(float(x_free[j]))
        return p


@dataclass
class PutinarRecord:
    """Bookkeeping for one Putinar identity, for later verification."""

    target: LinPoly
    domain: Tuple[Polynomial, ...]       # multipliers g_1.., g_0 = 1 first
    bases: Tuple[Tuple[Monomial, ...], ...]
    block_ids: Tuple[int, ...]           # PSD block positions in the cone list
    degree2: int
    label: str = ""


@dataclass
class ProgramInfo:
    poly_vars: Dict[str, PolyVar]
    putinar: List[PutinarRecord]
    n_free: int
    cones: List[Tuple[str, int]]
    objective_moments: Optional[Dict[Monomial, float]] = None

    def block_offset(self, block_id: int) -> int:
        at = self.n_free
        for i, (kind, n) in enumerate(self.cones):
            if kind == "free":
                continue
            if i == block_id:
                return at
            at += svec_dim(n) if kind == "psd" else n
        raise KeyError(block_id)

    def gram(self, x: np.ndarray, block_id: int) -> np.ndarray:
        from conset.sdp.problem import smat
        kind, n = self.cones[block_id]
        off = self.block_offset(block_id)
        return smat(x[off:off + svec_dim(n)])


def multiplier_degree(degree2: int, g_degree: int) -> int:
    """Gram basis degree for a multiplier of g in an identity of degree 2D."""
    d = (degree2 - g_degree) // 2
    if d < 0:
        raise ValueError("identity degree too small for this constraint")
    return d


class SOSProgramBuilder:
    """Assembles Putinar constraints and scalar equalities into standard
    conic form over (free coefficient variables, PSD Gram blocks)."""

    def __init__(self):
        self.n_free = 0
        self.poly_vars: Dict[str, PolyVar] = {}
        self.cones: List[Tuple[str, int]] = []
        self._psd_cols: List[sp.coo_matrix] = []   # per block: rows x svec
        self._free_rows: List[Tuple[int, int, float]] = []  # (row, var, coef)
        self._b: List[float] = []
        self._row = 0
        self._objective: Dict[int, float] = {}
        self._records: List[PutinarRecord] = []
        self._block_rows: List[List[Tuple[int, int, float]]] = []
        self.objective_moments: Optional[Dict[Monomial, float]] = None

    # ---------------- variables ----------------

    def add_poly_var(self, name: str, varspace: VarSpace,
                     degree: int) -> PolyVar:
        if name in self.poly_vars:
            raise ValueError(f"duplicate polynomial variable {name!r}")
        monos = tuple(monomial_basis(varspace, degree))
        ids = np.arange(self.n_free, self.n_free + len(monos))
        self.n_free += len(monos)
        pv = PolyVar(name, varspace, degree, monos, ids)
        self.poly_vars[name] = pv
        return pv

    # ---------------- constraints ----------------

    def add_putinar(self, target: LinPoly, domain: Sequence[Polynomial],
                    degree2: int, label: str = "") -> None:
        """Impose target >= 0 on {g >= 0 for g in domain} in Putinar form."""
        vs = target.varspace
        if degree2 % 2:
            raise ValueError("identity degree must be even")
        multipliers = [Polynomial.constant(vs, 1.0)] + list(domain)
        bases = []
        block_ids = []
        for g in multipliers:
            if g.varspace != vs:
                raise ValueError("domain polynomial in wrong variable space")
            basis = tuple(monomial_basis(vs, multiplier_degree(degree2,
                                                               g.degree())))
            bases.append(basis)
            block_ids.append(len(self.cones))
            self.cones.append(("psd", len(basis)))
            self._block_rows.append([])

        row_of: Dict[Monomial, int] = {}
        for mono in monomial_basis(vs, degree2):
            row_of[mono] = self._row
            self._row += 1
            self._b.append(0.0)

        # free-variable columns: theta_j coefficient polynomials
        for j, q in target.terms.items():
            for mono, c in q.terms.items():
                self._free_rows.append((row_of[mono], j, c))
        for mono, c in target.const.terms.items():
            self._b[row_of[mono]] -= c
        # b holds -const so that  sum q_j theta_j - sum <C, G> = -const

        # Gram columns: coefficient of mono in g * w_a * w_b
        for g, basis, blk in zip(multipliers, bases, block_ids):
            nb = len(basis)
            entries = self._block_rows[blk]
            col = 0
            for bcol in range(nb):
                for brow in range(bcol + 1):
                    wline = tuple(a + b for a, b in
                                  zip(basis[brow], basis[bcol]))
                    scale = 1.0 if brow == bcol else SQRT2
                    for gm, gc in g.terms.items():
                        mono = tuple(a + b for a, b in zip(wline, gm))
                        entries.append((row_of[mono], col, -gc * scale))
                    col += 1
        self._records.append(PutinarRecord(target, tuple(multipliers),
                                           tuple(bases), tuple(block_ids),
                                           degree2, label))

    def add_equality(self, lin: Dict[int, float], rhs: float) -> None:
        """Scalar equality sum_j lin[j] * theta_j = rhs."""
        for j, c in lin.items():
            self._free_rows.append((self._row, j, c))
        self._b.append(float(rhs))
        self._row += 1

    def set_objective(self, lin: Dict[int, float]) -> None:
        self._objective = dict(lin)

    # ---------------- assembly ----------------

    def build(self) -> Tuple[ConicProblem, ProgramInfo]:
        m = self._row
        blocks = []
        if self.n_free:
            r, c, v = (np.array([e[0] for e in self._free_rows]),
                       np.array([e[1] for e in self._free_rows]),
                       np.array([e[2] for e in self._free_rows]))
            blocks.append(sp.coo_matrix((v, (r, c)), shape=(m, self.n_free)))
        for (kind, n), entries in zip(self.cones, self._block_rows):
            d = svec_dim(n)
            if entries:
                r = np.array([e[0] for e in entries])
                c = np.array([e[1] for e in entries])
                v = np.array([e[2] for e in entries])
                blocks.append(sp.coo_matrix((v, (r, c)), shape=(m, d)))
            else:
                blocks.append(sp.coo_matrix((m, d)))
        A = sp.hstack(blocks).tocsr() if blocks else sp.csr_matrix((m, 0))
        b = np.array(self._b)

        # drop rows that are identically zero with zero right-hand side
        nz = np.diff(A.indptr) > 0
        keep = nz | (b != 0.0)
        if not keep.all():
            A = A[keep]
            b = b[keep]

        n_cone = A.shape[1] - self.n_free
        c_vec = np.zeros(self.n_free + n_cone)
        for j, w in self._objective.items():
            c_vec[j] = w
        cones = ([("free", self.n_free)] if self.n_free else []) + self.cones
        prob = ConicProblem(c_vec, A, b, cones)
        # info.cones holds only the PSD blocks, indexed as in the records
        info = ProgramInfo(dict(self.poly_vars), list(self._records),
                           self.n_free, list(self.cones),
                           self.objective_moments)
        return prob, info


# ---------------------------------------------------------------------------
# certificate verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    ok: bool
    max_coeff_residual: float
    min_gram_eigenvalue: float
    max_pointwise_residual: float
    details: List[str] = field(default_factory=list)


def _block_index_map(info: ProgramInfo) -> Dict[int, slice]:
    out = {}
    at = info.n_free
    for i, (kind, n) in enumerate(info.cones):
        if kind == "free":
            continue
        d = svec_dim(n) if kind == "psd" else n
        out[i] = slice(at, at + d)
        at += d
    return out


def verify_certificate(info: ProgramInfo, x: np.ndarray,
                       coeff_tol: float = 1e-6, eig_tol: float = -1e-7,
                       n_points: int = 50, seed: int = 0,
                       box: Optional[Sequence[Tuple[float, float]]] = None,
                       ) -> VerificationReport:
    """Independently re-check every Putinar identity in a solution.

    For each identity the left-hand side (target with solved coefficients)
    is compared against sigma_0 + sum sigma_i g_i reconstructed from the
    Gram matrices: coefficient-wise residual, minimum Gram eigenvalue, and
    agreement at random points of the (scaled) domain box.
    """
    from conset.sdp.problem import smat

    # offsets: cone blocks follow the free block in declaration order
    slices = {}
    at = info.n_free
    for i, (kind, n) in enumerate(info.cones):
        if kind == "free":
            continue
        d = svec_dim(n) if kind == "psd" else n
        slices[i] = slice(at, at + d)
        at += d

    rng = np.random.default_rng(np.random.PCG64(seed))
    max_resid = 0.0
    min_eig = np.inf
    max_pw = 0.0
    details = []
    for rec in info.putinar:
        lhs = rec.target.value(x[:info.n_free])
        rhs_terms: Dict[tuple, float] = {}
        for g, basis, blk in zip(rec.domain, rec.bases, rec.block_ids):
            G = smat(x[slices[blk]])
            ev = float(np.linalg.eigvalsh(G).min()) if G.size else 0.0
            min_eig = min(min_eig, ev)
            sigma_terms: Dict[tuple, float] = {}
            for a in range(len(basis)):
                for bidx in range(len(basis)):
                    w = float(G[a, bidx])
                    if w != 0.0:
                        mono = tuple(p + q for p, q in
                                     zip(basis[a], basis[bidx]))
                        sigma_terms[mono] = sigma_terms.get(mono, 0.0) + w
            for gm, gc in g.terms.items():
                for sm, sc in sigma_terms.items():
                    mono = tuple(p + q for p, q in zip(gm, sm))
                    rhs_terms[mono] = rhs_terms.get(mono, 0.0) + gc * sc
        rhs = Polynomial(lhs.varspace, rhs_terms)
        diff = lhs - rhs
        resid = max((abs(c) for c in diff.terms.values()), default=0.0)
        scale = max((abs(c) for c in lhs.terms.values()), default=1.0)
        max_resid = max(max_resid, resid / max(1.0, scale))
        if box is None:
            lo = np.zeros(lhs.varspace.arity)
            hi = np.ones(lhs.varspace.arity)
        else:
            lo = np.array([v[0] for v in box])
            hi = np.array([v[1] for v in box])
        pts = rng.uniform(lo, hi, size=(n_points, lhs.varspace.arity))
        lv = lhs.eval_many(pts)
        rv = rhs.eval_many(pts)
        pw = float(np.max(np.abs(lv - rv) / (1.0 + np.abs(lv))))
        max_pw = max(max_pw, pw)
        if resid / max(1.0, scale) > coeff_tol or pw > coeff_tol:
            details.append(f"{rec.label or 'identity'}: residual {resid:.2e} "
                           f"pointwise {pw:.2e}")
    ok = (max_resid <= coeff_tol and min_eig >= eig_tol
          and max_pw <= coeff_tol)
    return VerificationReport(ok, max_resid, min_eig if min_eig < np.inf
                              else 0.0, max_pw, details)

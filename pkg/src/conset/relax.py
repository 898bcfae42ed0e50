"""Estimation programs over the arc-split time grid.

Three program families, all built from one normalized EstimationModel:

* outer: minimize the Lebesgue-moment functional of v0 subject to the
  dual linking system; the solved v0 gives the outer approximation
  O = {x in X_0 : v0(x) >= 1} of the consistent set.
* violation: the same system with the measurement sets rewritten so that
  constraint ``eta`` of measurement set ``kappa`` is violated by at least
  ``epsilon`` (sets after t_kappa are unconstrained); the union of these
  outer approximations covers the inconsistent set, so its complement
  within X_0 is an inner approximation.
* certificate: a feasibility program whose solutions prove the consistent
  set empty.  A feasible point carries v0 <= 0 on X, v0 >= 1 + v_{0,1}(0,.)
  on X_0, the linking/terminal/flow constraints of the outer system, and
  the normalization <v0, lambda> = -1: for any consistent initial point
  the decreasing chain along its trajectory would force v0 >= 1 there,
  contradicting v0 <= 0, so feasibility certifies inconsistency of the
  whole measurement record.

The unknown polynomials are v0 over the states (degree 2d) and one
v_{k,k+1} over (t, x) per arc.  With arc_degree="auto" the arc degrees
are lowered by deg(f) - 1 so that every Putinar identity closes at
degree exactly 2d; "full" keeps all unknowns at 2d and pays for the
flow identities at degree 2d + deg(f) - 1 rounded up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from conset import sdp
from conset.sdp import polish
from conset.model import EstimationModel, ScalingRecord
from conset.poly import Polynomial, VarSpace, liouville_apply
from conset.sos import (LinPoly, ProgramInfo, SOSProgramBuilder,
                        VerificationReport, lebesgue_moments,
                        verify_certificate)


@dataclass(frozen=True)
class ViolationIndex:
    """Measurement time index and own-constraint index to violate."""

    kappa: int
    eta: int


def violation_indices(model: EstimationModel) -> List[ViolationIndex]:
    """All (time point, own constraint) pairs, one program each."""
    out = []
    for k, sk in enumerate(model.measurement_sets):
        for eta in range(len(sk.own)):
            out.append(ViolationIndex(k, eta))
    return out


def arc_poly_degree(model: EstimationModel, d: int,
                    arc_degree: str = "auto") -> int:
    deg_f = max((f.degree() for f in model.dynamics), default=0)
    if arc_degree == "auto":
        return max(2, 2 * d - max(0, deg_f - 1))
    if arc_degree == "full":
        return 2 * d
    raise ValueError(f"unknown arc_degree mode {arc_degree!r}")


def _flow_degree2(arc_deg: int, deg_f: int, d: int) -> int:
    deg_lv = arc_deg - 1 + max(deg_f, 1)
    return max(2 * d, deg_lv + (deg_lv % 2))


def _build(model: EstimationModel, d: int, kind: str,
           violation: Optional[ViolationIndex] = None,
           epsilon: float = 1e-4, localize_arcs: bool = False,
           arc_degree: str = "auto"):
    """Shared assembly of the outer/violation/certificate programs."""
    if not model.is_normalized():
        raise ValueError("model must be normalized first")
    S = model.state_space
    TS = model.varspace
    n = model.n_states
    m_t = model.grid.m_t
    times = model.grid.points
    X = list(model.global_set.inequalities)
    box = model.global_set.box

    own = [list(sk.own) for sk in model.measurement_sets]
    if violation is not None:
        kappa, eta = violation.kappa, violation.eta
        if not (0 <= kappa < m_t and 0 <= eta < len(own[kappa])):
            raise ValueError(f"violation index {violation} out of range")
        g = own[kappa][eta]
        own[kappa] = [q for i, q in enumerate(own[kappa]) if i != eta]
        own[kappa].append(-g - epsilon)
        for k in range(kappa + 1, m_t):
            own[k] = []

    deg_f = max((f.degree() for f in model.dynamics), default=0)
    arc_deg = arc_poly_degree(model, d, arc_degree)
    deg2 = 2 * d
    flow_deg2 = _flow_degree2(arc_deg, deg_f, d)

    B = SOSProgramBuilder()
    pv0 = B.add_poly_var("v0", S, 2 * d)
    arcs = [B.add_poly_var(f"v{k}{k+1}", TS, arc_deg)
            for k in range(m_t - 1)]
    v0 = pv0.as_linpoly()

    if kind == "certificate":
        B.add_putinar(-v0, X, deg2, label="A")
    else:
        B.add_putinar(v0, X, deg2, label="A")
    v01_at0 = arcs[0].as_linpoly().apply(lambda p: p.at_time(times[0]))
    B.add_putinar(v0 - v01_at0 - 1.0, X + own[0], deg2, label="B")
    for k in range(1, m_t - 1):
        prev = arcs[k - 1].as_linpoly().apply(lambda p: p.at_time(times[k]))
        nxt = arcs[k].as_linpoly().apply(lambda p: p.at_time(times[k]))
        B.add_putinar(prev - nxt, X + own[k], deg2, label=f"C{k}")
    term = arcs[-1].as_linpoly().apply(lambda p: p.at_time(times[-1]))
    B.add_putinar(term, X + own[-1], deg2, label="D")

    fs = tuple(model.dynamics)
    X_ts = [g.with_time() for g in X]
    t = Polynomial.time(TS)
    for k, pv in enumerate(arcs):
        if localize_arcs:
            tp = (t - times[k]) * (times[k + 1] - t)
        else:
            tp = t * (1.0 - t)
        target = pv.as_linpoly().apply(lambda p: -liouville_apply(p, fs))
        B.add_putinar(target, X_ts + [tp], flow_deg2, label=f"E{k}")

    moments = lebesgue_moments(S, 2 * d, box)
    B.objective_moments = moments
    functional = pv0.functional(moments)
    if kind == "certificate":
        B.add_equality(functional, -1.0)
    else:
        B.set_objective(functional)
    return B.build()


def build_outer_program(model: EstimationModel, d: int,
                        localize_arcs: bool = False,
                        arc_degree: str = "auto"):
    return _build(model, d, "outer", localize_arcs=localize_arcs,
                  arc_degree=arc_degree)


def build_violation_program(model: EstimationModel, idx: ViolationIndex,
                            d: int, epsilon: float = 1e-4,
                            localize_arcs: bool = False,
                            arc_degree: str = "auto"):
    return _build(model, d, "violation", violation=idx, epsilon=epsilon,
                  localize_arcs=localize_arcs, arc_degree=arc_degree)


def build_certificate_program(model: EstimationModel, d: int,
                              localize_arcs: bool = False,
                              arc_degree: str = "auto"):
    return _build(model, d, "certificate", localize_arcs=localize_arcs,
                  arc_degree=arc_degree)


# ---------------------------------------------------------------------------
# solution post-processing
# ---------------------------------------------------------------------------

@dataclass
class SetApproximation:
    """A polynomial sublevel description {x in X_0 : v0(x) >= threshold}."""

    kind: str                      # "outer" or "violation"
    order: int
    v0: Polynomial                 # over the scaled state space
    threshold: float
    objective: float
    verification: VerificationReport
    violation: Optional[ViolationIndex] = None
    epsilon: float = 0.0
    names: Tuple[str, ...] = ()

    def contains(self, points: np.ndarray,
                 margin: float = 1e-6) -> np.ndarray:
        """Vectorized membership in scaled coordinates (N, n) -> bool.

        ``margin`` absorbs solver noise at the threshold: the guaranteed
        superset is closed, so boundary points count as inside.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.v0.eval_many(points) >= self.threshold - margin

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "threshold": self.threshold,
            "objective": self.objective,
            "names": list(self.names),
            "violation": ([self.violation.kappa, self.violation.eta]
                          if self.violation else None),
            "epsilon": self.epsilon,
            "v0": {"n_vars": self.v0.varspace.arity,
                   "terms": [[list(m), c]
                             for m, c in sorted(self.v0.terms.items())]},
            "verification": {
                "ok": self.verification.ok,
                "max_coeff_residual": self.verification.max_coeff_residual,
                "min_gram_eigenvalue": self.verification.min_gram_eigenvalue,
                "max_pointwise_residual":
                    self.verification.max_pointwise_residual,
            },
        }

    @staticmethod
    def from_dict(data: dict) -> "SetApproximation":
        vs = VarSpace(data["v0"]["n_vars"], has_time=False)
        v0 = Polynomial(vs, {tuple(m): c for m, c in data["v0"]["terms"]})
        ver = data["verification"]
        rep = VerificationReport(ver["ok"], ver["max_coeff_residual"],
                                 ver["min_gram_eigenvalue"],
                                 ver["max_pointwise_residual"])
        vio = (ViolationIndex(*data["violation"]) if data.get("violation")
               else None)
        return SetApproximation(data["kind"], data["order"], v0,
                                data["threshold"], data["objective"], rep,
                                vio, data.get("epsilon", 0.0),
                                tuple(data.get("names", ())))


@dataclass
class InconsistencyCertificate:
    order: int
    v0: Polynomial
    arc_polys: Tuple[Polynomial, ...]
    verification: VerificationReport
    moment_value: float            # <v0, lambda>, should be -1

    def to_dict(self) -> dict:
        def poly_dict(p):
            return {"n_vars": p.varspace.arity,
                    "has_time": p.varspace.has_time,
                    "terms": [[list(m), c] for m, c in sorted(p.terms.items())]}
        return {
            "order": self.order,
            "moment_value": self.moment_value,
            "v0": poly_dict(self.v0),
            "arc_polys": [poly_dict(p) for p in self.arc_polys],
            "verification": {
                "ok": self.verification.ok,
                "max_coeff_residual": self.verification.max_coeff_residual,
                "min_gram_eigenvalue": self.verification.min_gram_eigenvalue,
                "max_pointwise_residual":
                    self.verification.max_pointwise_residual,
            },
        }


class ExtractionError(RuntimeError):
    pass


def extract_set(model: EstimationModel, solution: sdp.Solution,
                prob: sdp.ConicProblem, info: ProgramInfo,
                kind: str, order: int,
                violation: Optional[ViolationIndex] = None,
                epsilon: float = 0.0,
                verify_tol: float = 1e-6) -> SetApproximation:
    """Turn a solved outer/violation program into a SetApproximation.

    The solver iterate is polished (projected back onto the constraints)
    and the Putinar identities are independently re-verified; failure
    raises, since an unverified v0 provides no guarantee.
    """
    if solution.status not in ("optimal", "max_iter"):
        raise ExtractionError(f"solver status {solution.status}")
    x = polish(prob, solution.x)
    report = verify_certificate(info, x, coeff_tol=verify_tol)
    if not report.ok:
        raise ExtractionError(
            f"certificate verification failed: residual "
            f"{report.max_coeff_residual:.2e}, min eig "
            f"{report.min_gram_eigenvalue:.2e}, pointwise "
            f"{report.max_pointwise_residual:.2e}")
    v0 = info.poly_vars["v0"].value(x)
    return SetApproximation(kind, order, v0, 1.0,
                            float(prob.c @ x), report,
                            violation, epsilon, model.names)


def extract_certificate(model: EstimationModel, solution: sdp.Solution,
                        prob: sdp.ConicProblem, info: ProgramInfo,
                        order: int, verify_tol: float = 1e-6,
                        ) -> Optional[InconsistencyCertificate]:
    """Certificate from a solved feasibility program, or None when the
    program is infeasible (no certificate at this order)."""
    if solution.status == "primal_infeasible":
        return None
    if solution.status not in ("optimal", "max_iter"):
        raise ExtractionError(f"solver status {solution.status}")
    x = polish(prob, solution.x)
    solution = sdp.Solution(solution.status, x=x, y=solution.y,
                            iterations=solution.iterations,
                            backend=solution.backend)
    report = verify_certificate(info, solution.x, coeff_tol=verify_tol)
    if not report.ok:
        raise ExtractionError(
            f"certificate verification failed: residual "
            f"{report.max_coeff_residual:.2e}, min eig "
            f"{report.min_gram_eigenvalue:.2e}")
    v0 = info.poly_vars["v0"].value(solution.x)
    arcs = tuple(info.poly_vars[name].value(solution.x)
                 for name in sorted(info.poly_vars) if name != "v0")
    mom = info.objective_moments or {}
    val = sum(mom.get(m, 0.0) * c for m, c in v0.terms.items())
    return InconsistencyCertificate(order, v0, arcs, report, float(val))


@dataclass
class InnerApproximation:
    """Complement of the violation covers within the initial set.

    Membership: x in X_0 and v0(x) < 1 for every violation program.  When
    any violation program could not be solved and verified, no guarantee
    is possible and the inner approximation is empty.
    """

    order: int
    covers: Tuple[SetApproximation, ...]
    model: EstimationModel
    complete: bool = True

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.complete:
            return np.zeros(points.shape[0], dtype=bool)
        ok = np.ones(points.shape[0], dtype=bool)
        for g in self.model.initial_set.inequalities:
            ok &= g.eval_many(points) >= 0
        for cover in self.covers:
            ok &= ~cover.contains(points)
        return ok


def inner_from_outers(model: EstimationModel,
                      covers: Sequence[Optional[SetApproximation]],
                      order: int) -> InnerApproximation:
    """Assemble the inner approximation from violation covers.

    ``covers`` entries are None for programs that failed or were skipped;
    any missing cover makes the result empty (complete=False).
    """
    solved = [c for c in covers if c is not None]
    complete = len(solved) == len(covers)
    return InnerApproximation(order, tuple(solved), model, complete)


# ---------------------------------------------------------------------------
# one-call drivers
# ---------------------------------------------------------------------------

def solve_outer(model: EstimationModel, d: int, tol: float = 1e-8,
                localize_arcs: bool = False, arc_degree: str = "auto",
                backend: str = "native", max_iter: Optional[int] = None,
                verbose: bool = False) -> SetApproximation:
    prob, info = build_outer_program(model, d, localize_arcs, arc_degree)
    sol = sdp.solve(prob, tol=tol, max_iter=max_iter, backend=backend,
                    verbose=verbose)
    return extract_set(model, sol, prob, info, "outer", d)


def solve_violation(model: EstimationModel, idx: ViolationIndex, d: int,
                    epsilon: float = 1e-4, tol: float = 1e-8,
                    localize_arcs: bool = False, arc_degree: str = "auto",
                    backend: str = "native", max_iter: Optional[int] = None,
                    verbose: bool = False) -> Optional[SetApproximation]:
    """Solve one violation program; None when it fails to verify."""
    prob, info = build_violation_program(model, idx, d, epsilon,
                                         localize_arcs, arc_degree)
    sol = sdp.solve(prob, tol=tol, max_iter=max_iter, backend=backend,
                    verbose=verbose)
    try:
        return extract_set(model, sol, prob, info, "violation", d,
                           idx, epsilon)
    except ExtractionError:
        return None


def solve_certificate(model: EstimationModel, d: int, tol: float = 1e-8,
                      localize_arcs: bool = False,
                      arc_degree: str = "auto", backend: str = "native",
                      max_iter: Optional[int] = None, verbose: bool = False,
                      ) -> Optional[InconsistencyCertificate]:
    prob, info = build_certificate_program(model, d, localize_arcs,
                                           arc_degree)
    sol = sdp.solve(prob, tol=tol, max_iter=max_iter, backend=backend,
                    verbose=verbose)
    try:
        return extract_certificate(model, sol, prob, info, d)
    except ExtractionError:
        # the solver neither produced a verifiable certificate nor proved
        # the program infeasible: no conclusion at this order
        return None

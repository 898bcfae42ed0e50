"""Estimation problem description and its normalizations.

An :class:`EstimationModel` bundles polynomial dynamics, an optional output
map, the global state constraint set, one constraint set per measurement
time, and the affine scaling that maps the user's coordinates onto the
normalized ones (time in [0, 1], every state box mapped to [0, 1]).

Parameters are handled by state augmentation: a parameter is a state with
zero dynamics whose value equals its initial condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from conset.poly import Polynomial, VarSpace

Box = Tuple[Tuple[float, float], ...]


def _unit_rescale(p: Polynomial) -> Polynomial:
    """Scale an inequality to max |coefficient| = 1 (same sublevel set)."""
    if p.is_zero():
        return p
    m = max(abs(c) for c in p.terms.values())
    return p.scale(1.0 / m)


def box_inequalities(varspace: VarSpace, box: Box,
                     form: str = "pairs") -> list[Polynomial]:
    """Box constraints as polynomials >= 0.

    form="pairs" gives 2n linear inequalities x-l, u-x; form="quadratic"
    gives n inequalities (x-l)(u-x).
    """
    out = []
    for i, (lo, hi) in enumerate(box):
        x = Polynomial.state(varspace, i)
        if form == "pairs":
            out.append(x - lo)
            out.append(hi - x)
        elif form == "quadratic":
            out.append(_unit_rescale((x - lo) * (hi - x)))
        else:
            raise ValueError(f"unknown box form {form!r}")
    return out


@dataclass(frozen=True)
class SemialgebraicSet:
    """{x : g_i(x) >= 0} over state variables, with known bounding box.

    The first ``n_base`` inequalities are inherited from the global set;
    the remainder are specific to this set (measurement constraints).
    """

    varspace: VarSpace
    inequalities: Tuple[Polynomial, ...]
    box: Optional[Box] = None
    n_base: int = 0

    def __post_init__(self):
        if self.varspace.has_time:
            raise ValueError("constraint sets are over state variables only")
        for g in self.inequalities:
            if g.varspace != self.varspace:
                raise ValueError("inequality in wrong variable space")
        if not 0 <= self.n_base <= len(self.inequalities):
            raise ValueError("invalid n_base")

    @property
    def own(self) -> Tuple[Polynomial, ...]:
        """Inequalities specific to this set (excluding inherited ones)."""
        return self.inequalities[self.n_base:]

    def margins(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([g(x) for g in self.inequalities])

    def contains(self, x, tol: float = 0.0) -> bool:
        if not self.inequalities:
            return True
        return bool(self.margins(x).min() >= -tol)

    def with_extra(self, extra: Sequence[Polynomial]) -> "SemialgebraicSet":
        return replace(self, inequalities=self.inequalities + tuple(extra))


@dataclass(frozen=True)
class TimeGrid:
    points: Tuple[float, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("need at least two time points")
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ValueError("time points must be strictly increasing")

    @property
    def m_t(self) -> int:
        return len(self.points)

    @property
    def arcs(self) -> list[Tuple[float, float]]:
        return list(zip(self.points, self.points[1:]))


@dataclass(frozen=True)
class ScalingRecord:
    """Affine map user coords -> scaled coords: x~ = (x - offset)/factor."""

    offsets: Tuple[float, ...]
    factors: Tuple[float, ...]
    time_factor: float = 1.0

    def __post_init__(self):
        if any(f == 0 for f in self.factors) or self.time_factor == 0:
            raise ValueError("scaling factors must be nonzero")

    @staticmethod
    def identity(n: int) -> "ScalingRecord":
        return ScalingRecord((0.0,) * n, (1.0,) * n, 1.0)

    def to_scaled(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.offsets)) / np.asarray(self.factors)

    def to_original(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x * np.asarray(self.factors) + np.asarray(self.offsets)

    def compose(self, offsets, factors, time_factor) -> "ScalingRecord":
        """Apply a further scaling on top of this one."""
        new_off = tuple(o + f * o2 for o, f, o2 in
                        zip(self.offsets, self.factors, offsets))
        new_fac = tuple(f * f2 for f, f2 in zip(self.factors, factors))
        return ScalingRecord(new_off, new_fac, self.time_factor * time_factor)


@dataclass(frozen=True)
class EstimationModel:
    """Dynamics + constraint data for one estimation problem."""

    varspace: VarSpace                        # (t, x) space of the dynamics
    dynamics: Tuple[Polynomial, ...]
    global_set: SemialgebraicSet
    measurement_sets: Tuple[SemialgebraicSet, ...]
    grid: TimeGrid
    scaling: ScalingRecord
    output: Optional[Tuple[Polynomial, ...]] = None
    names: Tuple[str, ...] = ()
    n_params: int = 0

    def __post_init__(self):
        n = self.varspace.n_states
        if not self.varspace.has_time:
            raise ValueError("dynamics space must carry a time variable")
        if len(self.dynamics) != n:
            raise ValueError("dynamics dimension mismatch")
        for f in self.dynamics:
            if f.varspace != self.varspace:
                raise ValueError("dynamics component in wrong variable space")
        if len(self.measurement_sets) != self.grid.m_t:
            raise ValueError("need one measurement set per time point")
        if not self.names:
            object.__setattr__(self, "names",
                               tuple(f"x{i+1}" for i in range(n)))
        # representational X_k subset of X: inherited inequalities present
        base = self.global_set.inequalities
        for sk in self.measurement_sets:
            if sk.inequalities[:len(base)] != base or sk.n_base != len(base):
                raise ValueError(
                    "measurement sets must inherit the global inequalities")

    @property
    def n_states(self) -> int:
        return self.varspace.n_states

    @property
    def state_space(self) -> VarSpace:
        return self.global_set.varspace

    @property
    def initial_set(self) -> SemialgebraicSet:
        return self.measurement_sets[0]

    def is_normalized(self, tol: float = 1e-12) -> bool:
        g = self.grid.points
        if abs(g[0]) > tol or abs(g[-1] - 1.0) > tol:
            return False
        box = self.global_set.box
        if box is None:
            return False
        return all(abs(lo) <= tol and abs(hi - 1.0) <= tol for lo, hi in box)


def make_measurement_sets(global_set: SemialgebraicSet,
                          own_lists: Sequence[Sequence[Polynomial]],
                          ) -> Tuple[SemialgebraicSet, ...]:
    """Attach per-time-point constraints on top of the global set."""
    base = global_set.inequalities
    return tuple(
        SemialgebraicSet(global_set.varspace, base + tuple(own),
                         box=global_set.box, n_base=len(base))
        for own in own_lists)


def interval_pair(varspace: VarSpace, state: int, lo: float,
                  hi: float) -> list[Polynomial]:
    """x_state in [lo, hi] as the two linear inequalities x-lo, hi-x."""
    x = Polynomial.state(varspace, state)
    return [x - lo, hi - x]


# ---------------------------------------------------------------------------
# model transformations
# ---------------------------------------------------------------------------

def _extend_poly(p: Polynomial, new_space: VarSpace) -> Polynomial:
    """Reinterpret p in a space with extra trailing state variables."""
    extra = new_space.arity - p.varspace.arity
    if extra < 0:
        raise ValueError("target space smaller than source")
    return Polynomial(new_space, {m + (0,) * extra: c for m, c in p.terms.items()})


def augment_parameters(model: EstimationModel,
                       parameter_bounds: Sequence[Tuple[float, float]],
                       names: Sequence[str] = (),
                       box_form: str = "quadratic") -> EstimationModel:
    """Append one constant-dynamics state per parameter.

    Parameter bounds enter the global set (and hence every measurement
    set) as box inequalities in the requested form.
    """
    n_p = len(parameter_bounds)
    if n_p == 0:
        return model
    for lo, hi in parameter_bounds:
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"invalid parameter bounds ({lo}, {hi})")
    n_old = model.n_states
    n_new = n_old + n_p
    dyn_space = VarSpace(n_new, has_time=True)
    state_space = VarSpace(n_new, has_time=False)

    dynamics = tuple(_extend_poly(f, dyn_space) for f in model.dynamics)
    dynamics += tuple(Polynomial.zero(dyn_space) for _ in range(n_p))

    old_box = model.global_set.box
    if old_box is None:
        raise ValueError("global set needs a box before augmentation")
    box = tuple(old_box) + tuple((float(l), float(h)) for l, h in parameter_bounds)

    param_ineqs = []
    for j, (lo, hi) in enumerate(parameter_bounds):
        p = Polynomial.state(state_space, n_old + j)
        if box_form == "pairs":
            param_ineqs += [p - lo, hi - p]
        else:
            param_ineqs.append(_unit_rescale((p - lo) * (hi - p)))

    base = tuple(_extend_poly(g, state_space)
                 for g in model.global_set.inequalities) + tuple(param_ineqs)
    global_set = SemialgebraicSet(state_space, base, box=box)
    own_lists = [[_extend_poly(g, state_space) for g in sk.own]
                 for sk in model.measurement_sets]
    measurement_sets = make_measurement_sets(global_set, own_lists)

    scaling = ScalingRecord(model.scaling.offsets + (0.0,) * n_p,
                            model.scaling.factors + (1.0,) * n_p,
                            model.scaling.time_factor)
    output = None
    if model.output is not None:
        output = tuple(_extend_poly(h, dyn_space) for h in model.output)
    names = model.names + (tuple(names) or tuple(
        f"p{i+1}" for i in range(n_p)))
    return EstimationModel(dyn_space, dynamics, global_set, measurement_sets,
                           model.grid, scaling, output, names,
                           model.n_params + n_p)


def normalize(model: EstimationModel) -> EstimationModel:
    """Map time onto [0, 1] and every state box affinely onto [0, 1].

    Dynamics transform by the chain rule; the scaling record composes with
    any scaling already present so points can always be mapped back to the
    user's coordinates.  Idempotent up to floating point.
    """
    box = model.global_set.box
    if box is None:
        raise ValueError("normalization requires box bounds on every state")
    T = model.grid.points[-1] - model.grid.points[0]
    t0 = model.grid.points[0]
    los = np.array([b[0] for b in box])
    his = np.array([b[1] for b in box])
    if np.any(~np.isfinite(los)) or np.any(~np.isfinite(his)):
        raise ValueError("normalization requires finite box bounds")
    widths = his - los

    ds, ss = model.varspace, model.state_space
    # substitutions expressing original coordinates in scaled ones
    dyn_bind = {ds.time_index: Polynomial.time(ds) * T + t0}
    for i in range(model.n_states):
        dyn_bind[ds.state_index(i)] = (
            Polynomial.state(ds, i) * widths[i] + los[i])
    state_bind = {i: Polynomial.state(ss, i) * widths[i] + los[i]
                  for i in range(model.n_states)}

    dynamics = tuple(
        f.substitute(dyn_bind).scale(T / widths[i])
        for i, f in enumerate(model.dynamics))
    base = tuple(_unit_rescale(g.substitute(state_bind))
                 for g in model.global_set.inequalities)
    new_box = tuple((0.0, 1.0) for _ in range(model.n_states))
    global_set = SemialgebraicSet(ss, base, box=new_box)
    own_lists = [[_unit_rescale(g.substitute(state_bind)) for g in sk.own]
                 for sk in model.measurement_sets]
    measurement_sets = make_measurement_sets(global_set, own_lists)
    grid = TimeGrid(tuple((t - t0) / T for t in model.grid.points))
    output = None
    if model.output is not None:
        output = tuple(h.substitute(dyn_bind) for h in model.output)
    scaling = model.scaling.compose(tuple(los), tuple(widths), T)
    return EstimationModel(ds, dynamics, global_set, measurement_sets,
                           grid, scaling, output, model.names, model.n_params)


def rewrite_output_constraints(model: EstimationModel,
                               output_inequalities: Sequence[Polynomial],
                               k: Optional[int] = None) -> EstimationModel:
    """Compose constraints g(y) >= 0 with the output map.

    The inequalities live over output variables y_1..y_ny only.  With
    ``k`` given they are appended to measurement set k (evaluating the
    output map at t_k); with ``k`` None they join the global set, which
    requires a time-invariant output map.
    """
    if model.output is None:
        raise ValueError("model has no output map")
    n_y = len(model.output)
    ss = model.state_space
    composed = []
    for g in output_inequalities:
        if g.varspace.arity != n_y or g.varspace.has_time:
            raise ValueError("output inequality must be over y variables only")
        if k is None:
            for h in model.output:
                if h.degree_in(model.varspace.time_index) > 0:
                    raise ValueError(
                        "global output constraints need a time-invariant output")
            bind = {j: model.output[j].at_time(0.0) for j in range(n_y)}
        else:
            t_k = model.grid.points[k]
            bind = {j: model.output[j].at_time(t_k) for j in range(n_y)}
        composed.append(g.substitute(bind))
    if k is None:
        global_set = model.global_set.with_extra(composed)
        own_lists = [list(sk.own) for sk in model.measurement_sets]
    else:
        global_set = model.global_set
        own_lists = [list(sk.own) for sk in model.measurement_sets]
        own_lists[k] += composed
    measurement_sets = make_measurement_sets(global_set, own_lists)
    return replace(model, global_set=global_set,
                   measurement_sets=measurement_sets)


# ---------------------------------------------------------------------------
# bundled benchmark models
# ---------------------------------------------------------------------------

ENZYME_NOMINAL_STATE = (0.9, 0.05)
ENZYME_NOMINAL_PARAMS = (5.05, 5.05, 5.05)
ENZYME_PARAM_BOUNDS = ((0.1, 10.0),) * 3
ENZYME_NOISE = 0.025
ENZYME_TIMES = (0.0, 0.3, 1.0)


def enzyme_example(noise: float = ENZYME_NOISE,
                   nominal_step: float = 1e-4) -> EstimationModel:
    """Two-species enzymatic reaction benchmark with three rate parameters.

    Substrate x1 converts into product via intermediary complex x2:

        x1' = -p1 x1 (1 - x2) + p2 x2
        x2' =  p1 x1 (1 - x2) - (p2 + p3) x2

    with x_i(1-x_i) >= 0 and (p_i-0.1)(10-p_i) >= 0.  Measurement boxes at
    t = 0, 0.3, 1 are the nominal trajectory values +/- ``noise`` for the
    nominal point p = (5.05, 5.05, 5.05), x(0) = (0.9, 0.05); intermediate
    values come from the reference RK4 integrator at ``nominal_step``.
    Returned in normalized coordinates (parameters scaled to [0, 1]).
    """
    ds = VarSpace(2, has_time=True)
    ss = VarSpace(2, has_time=False)
    global_set = SemialgebraicSet(
        ss, tuple(box_inequalities(ss, ((0.0, 1.0), (0.0, 1.0)),
                                   form="quadratic")),
        box=((0.0, 1.0), (0.0, 1.0)))
    base_model = EstimationModel(
        ds, (Polynomial.zero(ds), Polynomial.zero(ds)), global_set,
        make_measurement_sets(global_set, [[], [], []]),
        TimeGrid(ENZYME_TIMES), ScalingRecord.identity(2),
        names=("x1", "x2"))
    model = augment_parameters(base_model, ENZYME_PARAM_BOUNDS,
                               names=("p1", "p2", "p3"),
                               box_form="quadratic")

    dsa = model.varspace
    x1, x2 = Polynomial.state(dsa, 0), Polynomial.state(dsa, 1)
    q1, q2, q3 = (Polynomial.state(dsa, 2), Polynomial.state(dsa, 3),
                  Polynomial.state(dsa, 4))
    rate = q1 * x1 * (1 - x2)
    dynamics = (-rate + q2 * x2, rate - (q2 + q3) * x2,
                Polynomial.zero(dsa), Polynomial.zero(dsa),
                Polynomial.zero(dsa))
    model = replace(model, dynamics=dynamics)

    # nominal trajectory through the reference integrator
    from conset import kernels
    x0 = np.array([ENZYME_NOMINAL_STATE + ENZYME_NOMINAL_PARAMS])
    pf = kernels.PackedFamily(list(dynamics))
    nominal = {0.0: x0[0]}
    state = x0
    t_prev = 0.0
    for t_k in ENZYME_TIMES[1:]:
        n_steps = max(1, round((t_k - t_prev) / nominal_step))
        state, _, _ = kernels.rk4_propagate(pf, state, t_prev, t_k, n_steps)
        nominal[t_k] = state[0].copy()
        t_prev = t_k

    ssa = model.state_space
    own_lists = []
    for t_k in ENZYME_TIMES:
        own = []
        for i in (0, 1):
            c = nominal[t_k][i]
            own += interval_pair(ssa, i, c - noise, c + noise)
        own_lists.append(own)
    model = replace(model, measurement_sets=make_measurement_sets(
        model.global_set, own_lists))
    return normalize(model)


def static_example(lo: float = 0.2, hi: float = 0.8,
                   measurement_form: str = "quadratic") -> EstimationModel:
    """One frozen state (f = 0) with terminal constraint x in [lo, hi].

    The consistent set is exactly [lo, hi], which makes this an
    interval-arithmetic ground truth for the hierarchy.
    """
    ds = VarSpace(1, has_time=True)
    ss = VarSpace(1, has_time=False)
    global_set = SemialgebraicSet(
        ss, tuple(box_inequalities(ss, ((0.0, 1.0),), form="pairs")),
        box=((0.0, 1.0),))
    x = Polynomial.state(ss, 0)
    if measurement_form == "quadratic":
        own1 = [_unit_rescale((x - lo) * (hi - x))]
    else:
        own1 = [x - lo, hi - x]
    model = EstimationModel(
        ds, (Polynomial.zero(ds),), global_set,
        make_measurement_sets(global_set, [[], own1]),
        TimeGrid((0.0, 1.0)), ScalingRecord.identity(1), names=("x1",))
    return normalize(model)


def disjoint_example(initial: Tuple[float, float] = (0.0, 0.3),
                     terminal: Tuple[float, float] = (0.7, 1.0),
                     ) -> EstimationModel:
    """Frozen state with disjoint initial and terminal windows: no
    consistent initial condition exists."""
    ds = VarSpace(1, has_time=True)
    ss = VarSpace(1, has_time=False)
    global_set = SemialgebraicSet(
        ss, tuple(box_inequalities(ss, ((0.0, 1.0),), form="pairs")),
        box=((0.0, 1.0),))
    own0 = interval_pair(ss, 0, *initial)
    own1 = interval_pair(ss, 0, *terminal)
    model = EstimationModel(
        ds, (Polynomial.zero(ds),), global_set,
        make_measurement_sets(global_set, [own0, own1]),
        TimeGrid((0.0, 1.0)), ScalingRecord.identity(1), names=("x1",))
    return normalize(model)

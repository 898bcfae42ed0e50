"""Reference integrator and sampling-based ground truth.

Everything here works on a normalized EstimationModel: a fixed-step
fourth-order Runge-Kutta integrator, a point-consistency check against
the measurement sets, rejection sampling of consistent initial
conditions, and Monte Carlo volume of sublevel sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from conset import kernels
from conset.model import EstimationModel, SemialgebraicSet

DIVERGE_NORM = 1e6


def _arc_steps(model: EstimationModel, step: float) -> list[int]:
    """Step counts per arc so grid points are hit exactly."""
    return [max(1, round((t1 - t0) / step))
            for t0, t1 in model.grid.arcs]


def _packed_dynamics(model: EstimationModel) -> kernels.PackedFamily:
    return kernels.PackedFamily(list(model.dynamics))


@dataclass
class Trajectory:
    """States of one initial condition at the measurement times."""

    times: Tuple[float, ...]
    states: np.ndarray          # (m_t, n) rows at the grid times
    diverged: bool = False

    def state_at(self, k: int) -> np.ndarray:
        return self.states[k]


@dataclass
class ConsistencyVerdict:
    consistent: bool
    diverged: bool = False
    violated_time_index: Optional[int] = None
    violated_constraint: Optional[int] = None   # index into X_k inequalities
    margin: float = np.inf                      # most negative margin seen


def integrate(model: EstimationModel, x0, step: float = 1e-3) -> Trajectory:
    """Integrate one initial condition across the measurement grid."""
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    pf = _packed_dynamics(model)
    states = [x0[0].copy()]
    state = x0
    diverged = False
    for (t0, t1), n_steps in zip(model.grid.arcs, _arc_steps(model, step)):
        state, ok, _ = kernels.rk4_propagate(
            pf, state, t0, t1, n_steps, diverge_norm=DIVERGE_NORM)
        if not ok[0]:
            diverged = True
            states += [np.full(model.n_states, np.nan)
                       for _ in range(model.grid.m_t - len(states))]
            break
        states.append(state[0].copy())
    return Trajectory(model.grid.points, np.array(states), diverged)


def is_consistent(model: EstimationModel, x0, step: float = 1e-3,
                  tol: float = 0.0) -> ConsistencyVerdict:
    """Check one initial condition against every measurement set.

    Constraint margins below ``-tol`` are violations; the verdict records
    the first violated time point and constraint plus the worst margin.
    """
    traj = integrate(model, x0, step=step)
    if traj.diverged:
        return ConsistencyVerdict(False, diverged=True, margin=-np.inf)
    worst = np.inf
    first: Optional[Tuple[int, int]] = None
    for k, sk in enumerate(model.measurement_sets):
        margins = sk.margins(traj.states[k])
        worst = min(worst, margins.min(initial=np.inf))
        bad = np.nonzero(margins < -tol)[0]
        if bad.size and first is None:
            first = (k, int(bad[0]))
    if first is None:
        return ConsistencyVerdict(True, margin=worst)
    return ConsistencyVerdict(False, violated_time_index=first[0],
                              violated_constraint=first[1], margin=worst)


def _batch_consistent(model: EstimationModel, x0s: np.ndarray,
                      step: float, tol: float) -> np.ndarray:
    """Vectorized consistency over a batch of initial conditions."""
    pf = _packed_dynamics(model)
    n_batch = x0s.shape[0]
    ok = np.ones(n_batch, dtype=bool)
    # time-zero constraints
    g0 = kernels.PackedFamily(list(model.measurement_sets[0].inequalities))
    ok &= g0.eval_many(x0s).min(axis=1) >= -tol
    state = x0s
    checks = kernels.PackedFamily(list(model.global_set.inequalities))
    for k, ((t0, t1), n_steps) in enumerate(
            zip(model.grid.arcs, _arc_steps(model, step))):
        state, alive, _ = kernels.rk4_propagate(
            pf, state, t0, t1, n_steps, checks=checks, tol=tol,
            diverge_norm=DIVERGE_NORM)
        ok &= alive
        gk = kernels.PackedFamily(
            list(model.measurement_sets[k + 1].inequalities))
        vals = gk.eval_many(np.where(np.isfinite(state), state, 0.0))
        ok &= alive & (vals.min(axis=1) >= -tol)
    return ok


def sample_consistent(model: EstimationModel, n_attempts: int, seed: int,
                      step: float = 1e-3, tol: float = 0.0,
                      batch: int = 8192) -> Tuple[np.ndarray, float]:
    """Uniform rejection sampling of consistent initial conditions.

    Draws ``n_attempts`` points uniformly from the bounding box of the
    initial measurement set and keeps those whose trajectory satisfies the
    global and measurement constraints.  Returns (points, acceptance rate).
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    box = model.initial_set.box
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    kept = []
    drawn = 0
    while drawn < n_attempts:
        m = min(batch, n_attempts - drawn)
        pts = rng.uniform(lo, hi, size=(m, len(lo)))
        drawn += m
        mask = _batch_consistent(model, pts, step, tol)
        if mask.any():
            kept.append(pts[mask])
    if kept:
        pts = np.concatenate(kept)
    else:
        pts = np.zeros((0, len(lo)))
    return pts, pts.shape[0] / max(drawn, 1)


def expand_consistent(model: EstimationModel, n: int, seed: int,
                      step: float = 1e-3, tol: float = 0.0,
                      coarse_step: float = 0.05,
                      max_batches: int = 400) -> np.ndarray:
    """Collect ``n`` oracle-verified consistent points by random walk.

    When the consistent set occupies a tiny fraction of the X_0 box,
    uniform rejection is too slow to build a validation cloud.  This
    routine finds seeds by coarse-step uniform rejection and then grows
    the cloud with box-clipped Gaussian perturbations; every returned
    point is verified consistent by full-accuracy integration.  Points
    are not uniformly distributed over the consistent set.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    box = model.initial_set.box
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    width = hi - lo
    batch = 8192

    found = np.zeros((0, len(lo)))
    for _ in range(max_batches):
        pts = rng.uniform(lo, hi, size=(batch, len(lo)))
        rough = pts[_batch_consistent(model, pts, coarse_step,
                                      max(tol, 1e-3))]
        if rough.size:
            exact = rough[_batch_consistent(model, rough, step, tol)]
            if exact.size:
                found = exact
                break
    if found.shape[0] == 0:
        raise RuntimeError("no consistent seed point found")

    scale = 0.1
    for _ in range(max_batches):
        if found.shape[0] >= n:
            break
        base = found[rng.integers(0, found.shape[0], size=batch)]
        props = base + rng.normal(0.0, 1.0, size=base.shape) * (scale * width)
        props = np.clip(props, lo, hi)
        good = props[_batch_consistent(model, props, step, tol)]
        rate = good.shape[0] / batch
        if good.size:
            found = np.concatenate([found, good])
        # keep the walk productive without collapsing onto the seeds
        if rate < 0.05:
            scale = max(scale * 0.5, 1e-3)
        elif rate > 0.4:
            scale = min(scale * 1.5, 0.5)
    if found.shape[0] < n:
        raise RuntimeError(
            f"collected only {found.shape[0]}/{n} consistent points")
    return found[:n]


def mc_volume(region, box: Sequence[Tuple[float, float]], n: int,
              seed: int) -> Tuple[float, float]:
    """Monte Carlo volume of ``region`` within ``box``.

    ``region`` is a vectorized predicate (N, d) -> bool array or a
    SemialgebraicSet.  Returns (volume estimate, binomial standard error).
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = rng.uniform(lo, hi, size=(n, len(lo)))
    if isinstance(region, SemialgebraicSet):
        fam = kernels.PackedFamily(list(region.inequalities))
        hits = fam.eval_many(pts).min(axis=1) >= 0
    else:
        hits = np.asarray(region(pts), dtype=bool)
    vol_box = float(np.prod(hi - lo))
    p = hits.mean()
    se = float(np.sqrt(p * (1 - p) / n)) * vol_box
    return p * vol_box, se

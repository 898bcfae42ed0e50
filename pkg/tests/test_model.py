"""Model construction, scaling, and the bundled benchmark examples.

The enzyme nominal trajectory is cross-checked against scipy's solve_ivp
at tight tolerances (independent of the package's own RK4 kernels).
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conset import model as mod
from conset.model import (ENZYME_NOMINAL_PARAMS, ENZYME_NOMINAL_STATE,
                          ENZYME_NOISE, ENZYME_TIMES, EstimationModel,
                          ScalingRecord, SemialgebraicSet, TimeGrid,
                          augment_parameters, box_inequalities,
                          disjoint_example, enzyme_example, interval_pair,
                          make_measurement_sets, normalize, static_example)
from conset.poly import Polynomial, VarSpace


def _enzyme_rhs(t, z):
    x1, x2, p1, p2, p3 = z
    rate = p1 * x1 * (1 - x2)
    return [-rate + p2 * x2, rate - (p2 + p3) * x2, 0.0, 0.0, 0.0]


def _nominal_at(t):
    z0 = list(ENZYME_NOMINAL_STATE) + list(ENZYME_NOMINAL_PARAMS)
    sol = solve_ivp(_enzyme_rhs, (0.0, t), z0, rtol=1e-11, atol=1e-12,
                    dense_output=True)
    return sol.y[:2, -1]


def test_scaling_roundtrip():
    s = ScalingRecord((1.0, -2.0), (0.5, 4.0), 2.0)
    x = np.array([[1.3, 0.7], [0.0, -2.0]])
    np.testing.assert_allclose(s.to_original(s.to_scaled(x)), x, atol=1e-14)


def test_box_inequalities_pairs_and_quadratic():
    ss = VarSpace(1, has_time=False)
    pairs = box_inequalities(ss, ((0.2, 0.8),), form="pairs")
    quad = box_inequalities(ss, ((0.2, 0.8),), form="quadratic")
    assert len(pairs) == 2 and len(quad) == 1
    for x in (0.2, 0.5, 0.8):
        assert all(g((x,)) >= -1e-12 for g in pairs)
        assert quad[0]((x,)) >= -1e-12
    for x in (0.1, 0.9):
        assert min(g((x,)) for g in pairs) < 0
        assert quad[0]((x,)) < 0


def test_interval_pair_margins():
    ss = VarSpace(2, has_time=False)
    lo_g, hi_g = interval_pair(ss, 1, 0.3, 0.6)
    assert lo_g((0.0, 0.3)) >= -1e-12 and hi_g((0.0, 0.6)) >= -1e-12
    assert lo_g((0.0, 0.29)) < 0 and hi_g((0.0, 0.61)) < 0


def test_measurement_sets_inherit_global():
    m = static_example()
    for sk in m.measurement_sets:
        assert sk.n_base == len(m.global_set.inequalities)
        assert sk.inequalities[:sk.n_base] == m.global_set.inequalities


def test_normalize_is_idempotent_and_unit_box():
    m = enzyme_example()
    assert m.is_normalized()
    m2 = normalize(m)
    assert m2.grid.points == m.grid.points
    for f2, f1 in zip(m2.dynamics, m.dynamics):
        diff = f2 - f1
        worst = max((abs(c) for c in diff.terms.values()), default=0.0)
        assert worst <= 1e-9


def test_normalized_dynamics_match_chain_rule():
    # scaled trajectory of the normalized model == scaled original solution
    m = enzyme_example()
    t_end = ENZYME_TIMES[-1]
    z_orig = _nominal_at(t_end)
    z0 = np.array(list(ENZYME_NOMINAL_STATE) + list(ENZYME_NOMINAL_PARAMS))
    from conset import kernels
    pf = kernels.PackedFamily(list(m.dynamics))
    x0s = m.scaling.to_scaled(z0).reshape(1, -1)
    xT, ok, _ = kernels.rk4_propagate(pf, x0s, 0.0, 1.0, 10000)
    assert ok.all()
    back = m.scaling.to_original(xT[0])
    np.testing.assert_allclose(back[:2], z_orig, rtol=1e-7, atol=1e-8)


def test_enzyme_measurement_boxes_contain_nominal():
    m = enzyme_example()
    for t_k, sk in zip(ENZYME_TIMES, m.measurement_sets):
        z = _nominal_at(t_k) if t_k > 0 else np.array(ENZYME_NOMINAL_STATE)
        scaled = m.scaling.to_scaled(
            np.concatenate([z, ENZYME_NOMINAL_PARAMS]))
        assert sk.contains(scaled, tol=1e-9)
        # a point noise*3 away in x1 must violate the measurement box
        z_off = z.copy()
        z_off[0] += 3 * ENZYME_NOISE
        scaled_off = m.scaling.to_scaled(
            np.concatenate([z_off, ENZYME_NOMINAL_PARAMS]))
        assert not sk.contains(scaled_off, tol=1e-9)


def test_enzyme_shapes():
    m = enzyme_example()
    assert m.n_states == 5          # 2 states + 3 augmented parameters
    assert m.n_params == 3
    assert m.grid.m_t == 3
    assert len(m.measurement_sets) == 3
    # four own (non-inherited) constraints per time point: 2 states x 2 sides
    for sk in m.measurement_sets:
        assert len(sk.own) == 4


def test_augment_parameters_freezes_params():
    ds = VarSpace(1, has_time=True)
    ss = VarSpace(1, has_time=False)
    gs = SemialgebraicSet(ss, tuple(box_inequalities(
        ss, ((0.0, 1.0),), form="pairs")), box=((0.0, 1.0),))
    m = EstimationModel(ds, (Polynomial.zero(ds),), gs,
                        make_measurement_sets(gs, [[], []]),
                        TimeGrid((0.0, 1.0)), ScalingRecord.identity(1))
    m2 = augment_parameters(m, ((0.5, 2.0),), names=("k",))
    assert m2.n_states == 2 and m2.n_params == 1
    assert m2.dynamics[1].is_zero
    assert m2.names == ("x1", "k")


def test_static_example_truth():
    m = static_example()
    x = np.array([0.2, 0.5, 0.8])
    inside = [m.measurement_sets[1].contains((v,), tol=1e-9) for v in x]
    assert all(inside)
    assert not m.measurement_sets[1].contains((0.15,))
    assert not m.measurement_sets[1].contains((0.85,))


def test_disjoint_example_is_empty():
    m = disjoint_example()
    s0, s1 = m.measurement_sets
    xs = np.linspace(0, 1, 101)
    both = [s0.contains((v,)) and s1.contains((v,)) for v in xs]
    assert not any(both)


def test_timegrid_validation():
    with pytest.raises(ValueError):
        TimeGrid((0.0,))
    with pytest.raises(ValueError):
        TimeGrid((0.0, 0.5, 0.5))
    g = TimeGrid((0.0, 0.3, 1.0))
    assert g.arcs == [(0.0, 0.3), (0.3, 1.0)]

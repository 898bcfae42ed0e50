"""Acceptance suite: the end-to-end guarantees the package promises.

Each test checks one headline property against an independent oracle
(numerical integration, Monte-Carlo volume, closed-form optima) with the
stated runtime budget measured inside the test.  The heavy order-4/5
enzyme computations are marked ``slow``.
"""

import json
import multiprocessing as mp
import time
from pathlib import Path

import numpy as np
import pytest

import conset.cli as cli
from conset import kernels, oracle, relax, sdp, sos
from conset.model import disjoint_example, enzyme_example, static_example
from conset.poly import (Polynomial, VarSpace, liouville_apply,
                         monomial_basis)

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------------------
# shared session-scoped computations
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def enzyme():
    return enzyme_example()


@pytest.fixture(scope="session")
def static():
    return static_example()


@pytest.fixture(scope="session")
def enzyme_outer_d3(enzyme):
    t0 = time.time()
    approx = relax.solve_outer(enzyme, 3, tol=1e-5)
    return approx, time.time() - t0


@pytest.fixture(scope="session")
def enzyme_samples(enzyme):
    t0 = time.time()
    pts = oracle.expand_consistent(enzyme, 1000, seed=11)
    return pts, time.time() - t0


@pytest.fixture(scope="session")
def static_outers(static):
    t0 = time.time()
    approxes = {d: relax.solve_outer(static, d) for d in (2, 4, 6)}
    return approxes, time.time() - t0


@pytest.fixture(scope="session")
def disjoint_certificate():
    model = disjoint_example()
    for d in (1, 2, 3):
        cert = relax.solve_certificate(model, d)
        if cert is not None:
            return d, cert
    return None, None


# ---------------------------------------------------------------------------
# 1. outer soundness on the enzyme model at order 3
# ---------------------------------------------------------------------------

def test_outer_soundness_enzyme_d3(enzyme_outer_d3, enzyme_samples):
    approx, solve_wall = enzyme_outer_d3
    pts, sample_wall = enzyme_samples
    assert solve_wall <= 60.0, f"solve took {solve_wall:.1f} s"
    assert sample_wall <= 120.0, f"sampling took {sample_wall:.1f} s"
    assert approx.verification.ok
    assert len(pts) >= 1000
    values = approx.v0.eval_many(pts)
    assert float(values.min()) >= 1.0 - 1e-6


# ---------------------------------------------------------------------------
# 2. hierarchy convergence on the static benchmark (true volume 0.6)
# ---------------------------------------------------------------------------

def test_static_hierarchy_volume(static_outers):
    approxes, wall = static_outers
    t0 = time.time()
    vols = {}
    for d, approx in approxes.items():
        vols[d] = oracle.mc_volume(approx.contains, [(0.0, 1.0)],
                                   n=200_000, seed=100 + d)
    wall += time.time() - t0
    assert wall <= 60.0, f"took {wall:.1f} s"
    for lo, hi in ((2, 4), (4, 6)):
        v_lo, se_lo = vols[lo]
        v_hi, se_hi = vols[hi]
        two_sigma = 2.0 * float(np.hypot(se_lo, se_hi))
        assert v_hi <= v_lo + two_sigma, (vols[lo], vols[hi])
    assert abs(vols[6][0] - 0.6) <= 0.05, vols[6]


# ---------------------------------------------------------------------------
# 3. inner soundness on the enzyme model at order 4
# ---------------------------------------------------------------------------

def _enzyme_violation_job(pair):
    kappa, eta = pair
    model = enzyme_example()
    approx = relax.solve_violation(model, relax.ViolationIndex(kappa, eta),
                                   4, tol=1e-5, backend="scs",
                                   max_iter=2000)
    return None if approx is None else approx.to_dict()


@pytest.mark.slow
def test_inner_soundness_enzyme_d4(enzyme):
    budget = 30.0 * 60.0
    indices = relax.violation_indices(enzyme)
    assert len(indices) == 12
    t0 = time.time()
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=4) as pool:
        handle = pool.map_async(_enzyme_violation_job,
                                [(i.kappa, i.eta) for i in indices])
        try:
            raw = handle.get(timeout=budget)
        except mp.TimeoutError:
            pool.terminate()
            raw = None
    wall = time.time() - t0
    assert raw is not None, \
        f"violation programs incomplete after {wall / 60:.1f} min budget"
    covers = [None if r is None else relax.SetApproximation.from_dict(r)
              for r in raw]
    inner = relax.inner_from_outers(enzyme, covers, 4)
    assert inner.complete, "some violation programs failed verification"

    rng = np.random.default_rng(4)
    boxes = [g for g in enzyme.initial_set.box]
    lo = np.array([b[0] for b in boxes])
    hi = np.array([b[1] for b in boxes])
    pts = rng.uniform(lo, hi, size=(200_000, enzyme.n_states))
    member = inner.contains(pts)
    picked = pts[member][:1000]
    assert len(picked) >= 500, \
        f"inner approximation too small: {int(member.sum())} hits"
    for p in picked[:500]:
        verdict = oracle.is_consistent(enzyme, p)
        assert verdict.consistent, (p, verdict)


# ---------------------------------------------------------------------------
# 4. violation enumeration: exactly 12 programs scheduled
# ---------------------------------------------------------------------------

def test_violation_schedule_count(monkeypatch, tmp_path, capsys):
    monkeypatch.setattr(cli, "_solve_violation_worker",
                        lambda packed: (packed[1], None))
    cli.main(["--model", "enzyme", "--task", "inner", "--order", "4",
              "--grid", "3", "--project", "x1,x2",
              "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert "scheduling 12 violation programs" in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["n_violation_programs"] == 12


# ---------------------------------------------------------------------------
# 5. inconsistency certificates: found on disjoint, absent on enzyme
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_certificates(disjoint_certificate, tmp_path):
    t0 = time.time()
    d_found, cert = disjoint_certificate
    assert cert is not None, "no certificate found on disjoint model at d<=3"
    assert d_found <= 3
    assert cert.verification.ok
    assert cert.verification.max_coeff_residual <= 1e-6
    assert cert.verification.min_gram_eigenvalue >= -1e-7

    for d in (1, 2, 3):
        rc = cli.main(["--model", "enzyme", "--task", "certify",
                       "--order", str(d), "--solver-tol", "1e-5",
                       "--out", str(tmp_path / f"e{d}")])
        assert rc == cli.EXIT_OK
        man = json.loads((tmp_path / f"e{d}" / "manifest.json").read_text())
        assert man["certificate"] is None
    rc = cli.main(["--model", "enzyme", "--task", "certify", "--order",
                   "4", "--solver-tol", "1e-4", "--backend", "scs",
                   "--max-iter", "250", "--out", str(tmp_path / "e4")])
    assert rc == cli.EXIT_OK
    man = json.loads((tmp_path / "e4" / "manifest.json").read_text())
    assert man["certificate"] is None
    wall = time.time() - t0
    assert wall <= 60.0, f"took {wall:.1f} s"


# ---------------------------------------------------------------------------
# 6. Liouville identity along RK4 trajectories
# ---------------------------------------------------------------------------

def test_liouville_identity(enzyme):
    t0 = time.time()
    rng = np.random.default_rng(6)
    n = enzyme.n_states
    pf = kernels.PackedFamily(list(enzyme.dynamics))
    n_steps = 10_000                         # step 1e-4 on [0, 1]
    x0 = rng.uniform(0.25, 0.75, size=(20, n))
    path = np.empty((n_steps + 1, 20, n))
    path[0] = x0
    state = np.ascontiguousarray(x0)
    for i in range(n_steps):
        state, ok, _ = kernels.rk4_propagate(
            pf, state, i / n_steps, (i + 1) / n_steps, 1)
        assert ok.all()
        path[i + 1] = state
    ts = np.linspace(0.0, 1.0, n_steps + 1)

    monos = monomial_basis(enzyme.varspace, 4)
    for k in range(20):
        coeffs = rng.normal(size=len(monos))
        coeffs /= np.linalg.norm(coeffs)     # random direction, unit norm
        v = Polynomial(enzyme.varspace, dict(zip(monos, coeffs)))
        lv = liouville_apply(v, enzyme.dynamics)
        traj_k = path[:, k, :]
        pts = np.column_stack([ts, traj_k])
        integral = np.trapezoid(lv.eval_many(pts), dx=1.0 / n_steps)
        jump = (v.eval_many(pts[-1:])[0] - v.eval_many(pts[:1])[0])
        assert abs(integral - jump) <= 1e-6, (k, integral, jump)
    wall = time.time() - t0
    assert wall <= 30.0, f"took {wall:.1f} s"


# ---------------------------------------------------------------------------
# 7. SDP regression battery with analytic optima
# ---------------------------------------------------------------------------

def test_sdp_regression_battery():
    import scipy.sparse as sp
    from test_sdp import ANALYTIC_PROBLEMS

    assert len(ANALYTIC_PROBLEMS) >= 10
    for name, factory in ANALYTIC_PROBLEMS:
        prob, opt = factory()
        sol = sdp.solve(prob)
        assert sol.status == "optimal", name
        assert abs(sol.objective - opt) < 1e-7, name

    # constructed infeasible with a Farkas ray
    prob = sdp.ConicProblem(c=np.array([1.0, 1.0]),
                            A=sp.csr_matrix(np.ones((1, 2))),
                            b=np.array([-1.0]), cones=[("nonneg", 2)])
    sol = sdp.solve(prob)
    assert sol.status == "primal_infeasible"
    assert abs(prob.b @ sol.ray - 1.0) < 1e-9
    assert np.all(prob.A.T @ sol.ray <= 1e-9)

    # determinism: byte-identical solutions across two runs
    prob, _ = ANALYTIC_PROBLEMS[1][1]()
    a, b = sdp.solve(prob), sdp.solve(prob)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.y.tobytes() == b.y.tobytes()
    assert a.s.tobytes() == b.s.tobytes()


# ---------------------------------------------------------------------------
# 8. Lebesgue moments: closed form vs Monte-Carlo at n = 1e6
# ---------------------------------------------------------------------------

def test_lebesgue_moments_monte_carlo():
    rng = np.random.default_rng(8)
    for n_vars in (2, 3):
        vs = VarSpace(n_vars, has_time=False)
        lo = rng.uniform(-1.5, 0.0, size=n_vars)
        hi = lo + rng.uniform(0.5, 2.0, size=n_vars)
        box = tuple((lo[i], hi[i]) for i in range(n_vars))
        moments = sos.lebesgue_moments(vs, 6, box)
        N = 1_000_000
        pts = rng.uniform(lo, hi, size=(N, n_vars))
        volume = float(np.prod(hi - lo))
        for mono, exact in moments.items():
            samples = np.prod(pts ** np.array(mono), axis=1) * volume
            est = float(samples.mean())
            se = float(samples.std(ddof=1)) / np.sqrt(N)
            assert abs(exact - est) <= 3.0 * se + 1e-12, (mono, exact, est)


# ---------------------------------------------------------------------------
# 9. Putinar identity verification on every solver-accepted program
# ---------------------------------------------------------------------------

def test_putinar_pointwise_verification(enzyme_outer_d3, static_outers,
                                        disjoint_certificate, static):
    accepted = []
    approx, _ = enzyme_outer_d3
    accepted.append(("enzyme outer d=3", approx.verification))
    for d, a in static_outers[0].items():
        accepted.append((f"static outer d={d}", a.verification))
    _, cert = disjoint_certificate
    if cert is not None:
        accepted.append(("disjoint certificate", cert.verification))
    cover = relax.solve_violation(static, relax.violation_indices(static)[0],
                                  3)
    assert cover is not None
    accepted.append(("static violation d=3", cover.verification))

    # reports are computed at 50 random domain points with the relative
    # residual |LHS - RHS| / (1 + |LHS|)
    for name, report in accepted:
        assert report.ok, name
        assert report.max_pointwise_residual <= 1e-6, (
            name, report.max_pointwise_residual)


# ---------------------------------------------------------------------------
# 10. shrinking outer approximations on the enzyme model (d = 3 vs d = 5)
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_outer_hierarchy_enzyme_grids(tmp_path):
    common = ["--model", "enzyme", "--task", "outer", "--grid", "21",
              "--project", "x1,x2"]
    assert cli.main(common + ["--order", "3", "--solver-tol", "1e-5",
                              "--out", str(tmp_path / "d3")]) == cli.EXIT_OK
    assert cli.main(common + ["--order", "5", "--solver-tol", "1e-4",
                              "--backend", "scs", "--max-iter", "4000",
                              "--out", str(tmp_path / "d5")]) == cli.EXIT_OK

    def read_inside(path):
        lines = Path(path).read_text().splitlines()
        idx = lines[0].split(",").index("inside")
        return np.array([float(r.split(",")[idx]) > 0.5
                         for r in lines[1:]])

    in3 = read_inside(tmp_path / "d3" / "outer_d3_grid.csv")
    in5 = read_inside(tmp_path / "d5" / "outer_d5_grid.csv")
    assert len(in3) == len(in5) == 441
    agreement = float(np.mean(~in5 | in3))   # d5 set inside d3 set
    assert agreement >= 0.99, f"inclusion holds on {agreement:.1%} of grid"

"""Interior-point solver regression suite on problems with analytic optima.

Every optimum below is derived by hand (eigenvalue formulas, LP vertex
enumeration, AM-GM equality cases) so the solver is checked against
closed forms, not against itself.  ``ANALYTIC_PROBLEMS`` is the shared
registry: (name, problem factory, analytic optimum).
"""

import numpy as np
import pytest
import scipy.sparse as sp

from conset.sdp import (ConicProblem, polish, smat, solve, svec, svec_dim,
                        svec_indices)

TOL = 1e-7


def _eye_svec(n):
    return svec(np.eye(n))


def _lambda_max_problem(M):
    """min t  s.t.  t I - M  is PSD;  optimum lambda_max(M)."""
    n = M.shape[0]
    d = svec_dim(n)
    # variables: t (free), Z (psd);  rows: svec(Z) - t svec(I) = -svec(M)
    A = sp.hstack([sp.csr_matrix(-_eye_svec(n).reshape(-1, 1)),
                   sp.identity(d, format="csr")])
    return ConicProblem(
        c=np.concatenate([[1.0], np.zeros(d)]),
        A=A, b=-svec(M),
        cones=[("free", 1), ("psd", n)])


def _lambda_min_problem(C):
    """min <C, X>  s.t.  trace X = 1,  X psd;  optimum lambda_min(C)."""
    n = C.shape[0]
    A = sp.csr_matrix(_eye_svec(n).reshape(1, -1))
    return ConicProblem(c=svec(C), A=A, b=np.array([1.0]),
                        cones=[("psd", n)])


def _sym(rng, n):
    M = rng.standard_normal((n, n))
    return M + M.T


def _p_lambda_max_fixed():
    rng = np.random.default_rng(7)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    M = Q @ np.diag([3.0, 1.0, -2.0, 0.5]) @ Q.T
    return _lambda_max_problem(M), 3.0


def _p_lambda_max_random():
    M = _sym(np.random.default_rng(11), 5)
    return _lambda_max_problem(M), float(np.linalg.eigvalsh(M)[-1])


def _p_lambda_min():
    C = _sym(np.random.default_rng(13), 4)
    return _lambda_min_problem(C), float(np.linalg.eigvalsh(C)[0])


def _p_det_boundary():
    # max t s.t. [[1, t], [t, 1]] psd: optimum t = 1, at det = 0
    rows = sp.csr_matrix(np.array(
        [[0.0, 1.0, 0.0, 0.0],
         [0.0, 0.0, 0.0, 1.0],
         [-np.sqrt(2.0), 0.0, 1.0, 0.0]]))
    prob = ConicProblem(c=np.array([-1.0, 0, 0, 0]), A=rows,
                        b=np.array([1.0, 1.0, 0.0]),
                        cones=[("free", 1), ("psd", 2)])
    return prob, -1.0


def _p_lp_simplex():
    c = np.array([0.7, -0.3, 1.2, 0.1])
    prob = ConicProblem(c=c, A=sp.csr_matrix(np.ones((1, 4))),
                        b=np.array([1.0]), cones=[("nonneg", 4)])
    return prob, -0.3


def _p_lp_vertex():
    # min -x1 - 2 x2  s.t.  x1 + x2 <= 3, x2 <= 2, x >= 0 -> vertex (1, 2)
    A = sp.csr_matrix(np.array([[1.0, 1.0, 1.0, 0.0],
                                [0.0, 1.0, 0.0, 1.0]]))
    prob = ConicProblem(c=np.array([-1.0, -2.0, 0.0, 0.0]), A=A,
                        b=np.array([3.0, 2.0]), cones=[("nonneg", 4)])
    return prob, -5.0


def _p_lp_degenerate():
    A = sp.csr_matrix(np.array([[1.0, 1.0, 0.0],
                                [1.0, 0.0, -1.0]]))
    prob = ConicProblem(c=np.array([1.0, 0.0, 0.0]), A=A,
                        b=np.array([1.0, 0.25]), cones=[("nonneg", 3)])
    return prob, 0.25


def _p_max_of_two():
    # min t  s.t.  t >= 0.3, t >= 1.1 with t free and slack variables
    A = sp.csr_matrix(np.array([[1.0, -1.0, 0.0],
                                [1.0, 0.0, -1.0]]))
    prob = ConicProblem(c=np.array([1.0, 0.0, 0.0]), A=A,
                        b=np.array([0.3, 1.1]),
                        cones=[("free", 1), ("nonneg", 2)])
    return prob, 1.1


def _p_am_gm():
    # min x11 + x22  s.t.  x12 = 1, X psd  ->  x11 = x22 = 1, optimum 2
    row = np.zeros((1, svec_dim(2)))
    row[0, 1] = 1.0 / np.sqrt(2.0)      # svec stores sqrt(2) * x12
    prob = ConicProblem(c=np.array([1.0, 0.0, 1.0]),
                        A=sp.csr_matrix(row), b=np.array([1.0]),
                        cones=[("psd", 2)])
    return prob, 2.0


def _p_block_pair():
    rng = np.random.default_rng(17)
    C1, C2 = _sym(rng, 3), _sym(rng, 2)
    d1, d2 = svec_dim(3), svec_dim(2)
    A = sp.csr_matrix(np.block(
        [[_eye_svec(3), np.zeros(d2)],
         [np.zeros(d1), _eye_svec(2)]]))
    prob = ConicProblem(c=np.concatenate([svec(C1), svec(C2)]),
                        A=A, b=np.array([1.0, 1.0]),
                        cones=[("psd", 3), ("psd", 2)])
    return prob, float(np.linalg.eigvalsh(C1)[0]
                       + np.linalg.eigvalsh(C2)[0])


ANALYTIC_PROBLEMS = [
    ("lambda_max_fixed_spectrum", _p_lambda_max_fixed),
    ("lambda_max_random", _p_lambda_max_random),
    ("lambda_min_trace_one", _p_lambda_min),
    ("determinant_boundary", _p_det_boundary),
    ("lp_simplex_vertex", _p_lp_simplex),
    ("lp_two_constraints", _p_lp_vertex),
    ("lp_degenerate_box", _p_lp_degenerate),
    ("mixed_free_lp_max_of_two", _p_max_of_two),
    ("psd_am_gm_corner", _p_am_gm),
    ("block_diagonal_psd_pair", _p_block_pair),
]


def test_svec_smat_roundtrip():
    rng = np.random.default_rng(1)
    for n in (1, 2, 5, 9):
        X = _sym(rng, n)
        Y = _sym(rng, n)
        assert np.allclose(smat(svec(X)), X, atol=1e-14)
        assert abs(svec(X) @ svec(Y) - np.tensordot(X, Y)) < 1e-12


@pytest.mark.parametrize("name,factory", ANALYTIC_PROBLEMS,
                         ids=[n for n, _ in ANALYTIC_PROBLEMS])
def test_analytic_optimum(name, factory):
    prob, opt = factory()
    sol = solve(prob)
    assert sol.status == "optimal"
    assert abs(sol.objective - opt) < TOL


def test_determinant_boundary_is_singular():
    prob, _ = _p_det_boundary()
    sol = solve(prob)
    Z = smat(sol.x[1:])
    assert abs(np.linalg.det(Z)) < 1e-5


def test_lp_vertex_attained():
    prob, _ = _p_lp_vertex()
    sol = solve(prob)
    assert np.allclose(sol.x[:2], [1.0, 2.0], atol=1e-6)


def test_primal_infeasible_farkas_ray():
    # x1 + x2 = -1 with x >= 0 is infeasible; ray y satisfies
    # b'y = 1 and A'y <= 0 componentwise on the nonneg cone.
    prob = ConicProblem(c=np.array([1.0, 1.0]),
                        A=sp.csr_matrix(np.ones((1, 2))),
                        b=np.array([-1.0]), cones=[("nonneg", 2)])
    sol = solve(prob)
    assert sol.status == "primal_infeasible"
    y = sol.ray
    assert abs(prob.b @ y - 1.0) < 1e-9
    assert np.all(prob.A.T @ y <= 1e-9)


def test_primal_infeasible_psd_farkas():
    # trace X = -1, X psd is infeasible; smat(A'y) must be negative
    # semidefinite while b'y = 1
    prob = ConicProblem(c=np.zeros(svec_dim(2)),
                        A=sp.csr_matrix(_eye_svec(2).reshape(1, -1)),
                        b=np.array([-1.0]), cones=[("psd", 2)])
    sol = solve(prob)
    assert sol.status == "primal_infeasible"
    y = sol.ray
    assert abs(prob.b @ y - 1.0) < 1e-9
    w = np.linalg.eigvalsh(smat(np.asarray((prob.A.T @ y)).ravel()))
    assert w.max() <= 1e-9


def test_dual_infeasible_unbounded_ray():
    # min -x1 s.t. x1 - x2 = 0, x >= 0: unbounded below.
    prob = ConicProblem(c=np.array([-1.0, 0.0]),
                        A=sp.csr_matrix(np.array([[1.0, -1.0]])),
                        b=np.array([0.0]), cones=[("nonneg", 2)])
    sol = solve(prob)
    assert sol.status == "dual_infeasible"
    x = sol.ray
    assert abs(prob.c @ x + 1.0) < 1e-9
    assert np.linalg.norm(prob.A @ x) < 1e-9
    assert np.all(x >= -1e-12)


def test_dual_optimality_kkt():
    M = _sym(np.random.default_rng(19), 4)
    prob = _lambda_max_problem(M)
    sol = solve(prob)
    assert sol.status == "optimal"
    # stationarity, primal feasibility, complementarity
    assert np.linalg.norm(prob.c - prob.A.T @ sol.y - sol.s) < 1e-6
    assert np.linalg.norm(prob.A @ sol.x - prob.b) < 1e-6
    assert abs(sol.x @ sol.s) < 1e-5
    assert abs(sol.s[0]) < 1e-9          # free block: zero dual slack


def test_determinism_byte_identical():
    M = _sym(np.random.default_rng(23), 5)
    prob = _lambda_max_problem(M)
    a = solve(prob)
    b = solve(prob)
    assert a.status == b.status
    assert a.iterations == b.iterations
    assert a.x.tobytes() == b.x.tobytes()
    assert a.y.tobytes() == b.y.tobytes()
    assert a.s.tobytes() == b.s.tobytes()
    assert np.float64(a.objective).tobytes() == \
        np.float64(b.objective).tobytes()


def test_polish_restores_exact_feasibility():
    rng = np.random.default_rng(29)
    M = _sym(rng, 4)
    prob = _lambda_max_problem(M)
    sol = solve(prob, tol=1e-4)          # deliberately loose
    x = sol.x + rng.normal(scale=1e-5, size=prob.n_vars)
    xp = polish(prob, x)
    assert np.linalg.norm(prob.A @ xp - prob.b) < 1e-10
    Z = smat(xp[1:])
    assert np.linalg.eigvalsh(Z)[0] > -1e-9
    # polishing a near-solution must not wander from it
    assert np.linalg.norm(xp - sol.x) < 1e-2

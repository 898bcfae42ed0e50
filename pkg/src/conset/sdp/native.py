"""Native interior-point solver for the standard-form conic problem.

Implements a Mehrotra predictor-corrector method on the simplified
homogeneous self-dual embedding

    A x - b tau           = 0
    -A'y + c tau - s      = 0        (s = 0 on free blocks)
    b'y - c'x - kappa     = 0
    x in K, s in K*, tau >= 0, kappa >= 0,

with Nesterov-Todd scaling on the PSD and nonnegative blocks.  The
embedding either converges to a complementary solution (tau > 0: optimal
point after division by tau) or produces an improving ray certifying
primal or dual infeasibility (kappa > 0).

Free variables are eliminated from the Schur complement through a second
Cholesky factorization; PSD Schur contributions are formed row-wise
against the sparse constraint matrix so only matching sparsity is paid
for.  All arithmetic is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from conset.sdp.problem import (ConicProblem, Solution, SQRT2, cone_dims,
                                smat, svec, svec_dim, svec_indices)

_FTB = 0.99          # fraction to boundary
_REG = 1e-12         # base Schur regularization (relative)


@dataclass
class _PsdBlock:
    n: int
    sl: slice               # slice into the cone-part vector
    rows: np.ndarray        # svec row indices (upper triangle)
    cols: np.ndarray
    offdiag: np.ndarray     # boolean mask
    Asub: sp.csr_matrix     # constraint rows restricted to this block
    arows: np.ndarray       # global row indices with support here


@dataclass
class _NonnegBlock:
    sl: slice
    Asub: sp.csr_matrix
    arows: np.ndarray


class _Structure:
    """Sparsity and cone layout, computed once per problem."""

    def __init__(self, prob: ConicProblem):
        slices = prob.block_slices()
        A = prob.A.tocsc()
        free_idx: List[np.ndarray] = []
        self.psd: List[_PsdBlock] = []
        self.nonneg: List[_NonnegBlock] = []
        cone_start = []
        at = 0
        for (kind, n), sl in zip(prob.cones, slices):
            if kind == "free":
                free_idx.append(np.arange(sl.start, sl.stop))
                continue
            d = sl.stop - sl.start
            cone_sl = slice(at, at + d)
            at += d
            cone_start.append(sl.start)
            Ablk = A[:, sl.start:sl.stop].tocsr()
            arows = np.unique(Ablk.nonzero()[0])
            if kind == "psd":
                r, c = svec_indices(n)
                self.psd.append(_PsdBlock(n, cone_sl, r, c, r != c,
                                          Ablk[arows], arows))
            else:
                self.nonneg.append(_NonnegBlock(cone_sl, Ablk[arows], arows))
        self.free_idx = (np.concatenate(free_idx) if free_idx
                         else np.zeros(0, dtype=int))
        cone_idx = []
        for (kind, n), sl in zip(prob.cones, slices):
            if kind != "free":
                cone_idx.append(np.arange(sl.start, sl.stop))
        self.cone_idx = (np.concatenate(cone_idx) if cone_idx
                         else np.zeros(0, dtype=int))
        self.A_f = A[:, self.free_idx].tocsr()
        self.A_c = A[:, self.cone_idx].tocsr()
        self.A_c_csc = self.A_c.tocsc()
        self.degree = (sum(b.sl.stop - b.sl.start for b in self.nonneg)
                       + sum(b.n for b in self.psd))
        self.n_cone = at
        self.n_free = len(self.free_idx)
        self.m = prob.n_rows


class _Scaling:
    """NT scaling state for one iterate."""

    def __init__(self, st: _Structure, x: np.ndarray, s: np.ndarray):
        self.w2: List[np.ndarray] = []
        self.W: List[np.ndarray] = []
        self.Q: List[np.ndarray] = []
        self.sigma: List[np.ndarray] = []
        self.Lx: List[np.ndarray] = []
        self.Ls: List[np.ndarray] = []
        for blk in st.nonneg:
            self.w2.append(x[blk.sl] / s[blk.sl])
        for blk in st.psd:
            X = smat(x[blk.sl])
            S = smat(s[blk.sl])
            Lx = np.linalg.cholesky(X)
            Ls = np.linalg.cholesky(S)
            U, sig, Vt = np.linalg.svd(Ls.T @ Lx)
            W = sla.solve_triangular(Ls, U, lower=True, trans='T', check_finite=False) \
                * np.sqrt(sig)
            self.W.append(W)
            self.Q.append(W @ W.T)
            self.sigma.append(sig)
            self.Lx.append(Lx)
            self.Ls.append(Ls)

    def apply_P(self, st: _Structure, u: np.ndarray) -> np.ndarray:
        """Apply the scaling operator P = W W' (congruence on PSD blocks)."""
        out = np.empty_like(u)
        for blk, w2 in zip(st.nonneg, self.w2):
            out[blk.sl] = w2 * u[blk.sl]
        for blk, Q in zip(st.psd, self.Q):
            out[blk.sl] = svec(Q @ smat(u[blk.sl]) @ Q)
        return out


def _init_point(st: _Structure) -> Tuple[np.ndarray, np.ndarray]:
    x = np.zeros(st.n_cone)
    for blk in st.nonneg:
        x[blk.sl] = 1.0
    for blk in st.psd:
        e = np.zeros(svec_dim(blk.n))
        e[np.cumsum(np.arange(1, blk.n + 1)) - 1] = 1.0
        x[blk.sl] = e
    return x, x.copy()


def _max_step(st: _Structure, x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with x + alpha dx on the cone boundary (inf if none)."""
    alpha = np.inf
    for blk in st.nonneg:
        d = dx[blk.sl]
        neg = d < 0
        if neg.any():
            alpha = min(alpha, float(np.min(-x[blk.sl][neg] / d[neg])))
    for blk in st.psd:
        X = smat(x[blk.sl])
        D = smat(dx[blk.sl])
        L = np.linalg.cholesky(X)
        Y = sla.solve_triangular(L, D, lower=True, check_finite=False)
        Y = sla.solve_triangular(L, Y.T, lower=True, check_finite=False)
        lam = np.linalg.eigvalsh(0.5 * (Y + Y.T)).min()
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def _schur(st: _Structure, sc: _Scaling, reg: float) -> np.ndarray:
    """Dense Schur complement M = A_c P A_c' + reg I."""
    m = st.m
    M = np.zeros((m, m))
    for blk, w2 in zip(st.nonneg, sc.w2):
        B = blk.Asub
        S = (B.multiply(w2) @ B.T).toarray()
        M[np.ix_(blk.arows, blk.arows)] += S
    for blk, Q in zip(st.psd, sc.Q):
        B = blk.Asub
        n = blk.n
        k = B.shape[0]
        if k == 0:
            continue
        rows, cols, off = blk.rows, blk.cols, blk.offdiag
        V = np.empty((k, svec_dim(n)))
        indptr, indices, data = B.indptr, B.indices, B.data
        # smat halves: U_j = sum v_k (E_rc + E_cr); with T = Q (sum v E_rc) Q
        # the symmetrization T + T' restores U_j exactly when diagonal
        # entries carry half weight
        scale = np.where(off, 1.0 / SQRT2, 0.5)
        for j in range(k):
            lo, hi = indptr[j], indptr[j + 1]
            idx = indices[lo:hi]
            vals = data[lo:hi] * scale[idx]
            r, c = rows[idx], cols[idx]
            # U_j = smat of row j; Q U_j Q via two skinny products
            left = Q[:, r] * vals
            T = left @ Q[c, :]
            G = T + T.T
            # svec(G) but G already symmetric with both triangles summed
            v = G[rows, cols]
            v[off] *= SQRT2
            V[j] = v
        M[np.ix_(blk.arows, blk.arows)] += B @ V.T
    M[np.diag_indices_from(M)] += reg
    return M


class _KKT:
    """Factorization of [[M, A_f], [A_f', 0]] via free-block elimination."""

    def __init__(self, st: _Structure, M: np.ndarray, reg: float):
        self.st = st
        self.M = M
        self.L = np.linalg.cholesky(M)
        if st.n_free:
            Af = st.A_f.toarray()
            Z = sla.solve_triangular(self.L, Af, lower=True, check_finite=False)
            F = Z.T @ Z
            F[np.diag_indices_from(F)] += reg
            self.Lf = np.linalg.cholesky(F)
            self.Z = Z
        else:
            self.Lf = None

    def _solve_once(self, r1: np.ndarray, r2: np.ndarray):
        if self.Lf is None:
            z = sla.solve_triangular(self.L, r1, lower=True, check_finite=False)
            return (sla.solve_triangular(self.L.T, z, lower=False, check_finite=False),
                    np.zeros(0))
        t = sla.solve_triangular(self.L, r1, lower=True, check_finite=False)
        rhs = self.Z.T @ t - r2
        xf = sla.solve_triangular(self.Lf, rhs, lower=True, check_finite=False)
        xf = sla.solve_triangular(self.Lf.T, xf, lower=False, check_finite=False)
        y = sla.solve_triangular(self.L.T, t - self.Z @ xf, lower=False, check_finite=False)
        return y, xf

    def solve(self, r1: np.ndarray, r2: np.ndarray, refine: int = 2):
        """Solve M y + A_f xf = r1, A_f' y = r2 with iterative refinement."""
        y, xf = self._solve_once(r1, r2)
        Af = self.st.A_f
        for _ in range(refine):
            e1 = r1 - self.M @ y - (Af @ xf if self.Lf is not None else 0.0)
            e2 = (r2 - Af.T @ y) if self.Lf is not None else np.zeros(0)
            dy, dxf = self._solve_once(e1, e2)
            y = y + dy
            xf = xf + dxf
        return y, xf


def solve_native(prob: ConicProblem, tol: float = 1e-8,
                 max_iter: int = 100, verbose: bool = False) -> Solution:
    """Solve a conic problem with the built-in homogeneous IPM.

    The problem is Ruiz-equilibrated before solving (alternating row and
    column scaling; PSD blocks get a single scalar per block so the cone
    is preserved) and the solution is mapped back afterwards.  When
    progress stalls before the tolerance is met the best iterate found is
    returned with status "max_iter" and its achieved residuals.
    """
    A = prob.A.tocsr(copy=True)
    n_rows, n_vars = A.shape
    row_scale = np.ones(n_rows)
    col_scale = np.ones(n_vars)
    psd_slices = [sl for (kind, _), sl in zip(prob.cones,
                                              prob.block_slices())
                  if kind == "psd"]
    for _ in range(8):
        Aabs = abs(A)
        rn = Aabs.max(axis=1).toarray().ravel()
        r = 1.0 / np.sqrt(np.maximum(rn, 1e-12))
        A = sp.diags(r) @ A
        row_scale *= r
        cn = abs(A).max(axis=0).toarray().ravel()
        for sl in psd_slices:
            cn[sl] = cn[sl].max()
        d = 1.0 / np.sqrt(np.maximum(cn, 1e-12))
        A = A @ sp.diags(d)
        col_scale *= d
    prob = ConicProblem(col_scale * prob.c, A,
                        row_scale * prob.b, prob.cones)

    st = _Structure(prob)
    m, nf = st.m, st.n_free
    c = prob.c
    b = prob.b
    c_f = c[st.free_idx]
    c_c = c[st.cone_idx]
    A_f, A_c = st.A_f, st.A_c
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)

    x_c, s = _init_point(st)
    x_f = np.zeros(nf)
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    deg = st.degree + 1

    def full_x(xc, xf):
        out = np.empty(prob.n_vars)
        out[st.cone_idx] = xc
        out[st.free_idx] = xf
        return out

    status = "max_iter"
    it = 0
    best = None           # (score, x_c, x_f, y, s, tau, pres, dres, gap)
    stall = 0
    for it in range(1, max_iter + 1):
        # residuals of the embedding
        r_p = A_c @ x_c + A_f @ x_f - b * tau
        Aty = A_c.T @ y
        r_d = c_c * tau - Aty - s
        r_df = c_f * tau - A_f.T @ y
        r_g = b @ y - c_c @ x_c - c_f @ x_f - kappa
        mu = (x_c @ s + tau * kappa) / deg

        # convergence / infeasibility tests on the scaled-back iterate
        cx = (c_c @ x_c + c_f @ x_f)
        by = b @ y
        pres = np.linalg.norm(r_p) / tau / norm_b
        dres = np.linalg.norm(np.concatenate([r_d, r_df])) / tau / norm_c
        gap = abs(cx - by) / tau / (1.0 + abs(cx / tau) + abs(by / tau))
        if verbose:
            print(f"  it {it:3d}  mu {mu:9.2e}  pres {pres:9.2e} "
                  f"dres {dres:9.2e}  gap {gap:9.2e}  tau {tau:8.2e} "
                  f"kappa {kappa:8.2e}")
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, x_c.copy(), x_f.copy(), y.copy(), s.copy(),
                    tau, pres, dres, gap)
            stall = 0
        else:
            stall += 1
        if pres <= tol and dres <= tol and gap <= tol:
            status = "optimal"
            break
        if stall >= 8:
            break   # no progress; return the best iterate found
        if mu <= tol * 1e-2 or tau <= 1e-10 * max(1.0, kappa):
            # complementarity reached with tau -> 0: infeasibility ray
            inf_p = by > 0 and np.linalg.norm(Aty + s) + np.linalg.norm(
                A_f.T @ y) <= tol * norm_c * by
            inf_d = cx < 0 and np.linalg.norm(
                A_c @ x_c + A_f @ x_f) <= tol * norm_b * (-cx)
            if inf_p:
                status = "primal_infeasible"
                break
            if inf_d:
                status = "dual_infeasible"
                break
            if tau <= 1e-10 * max(1.0, kappa):
                status = "ill_posed"
                break

        sc = _Scaling(st, x_c, s)
        reg = _REG * (1.0 + float(np.abs(b).max(initial=0.0)))
        kkt = None
        for attempt in range(6):
            try:
                M = _schur(st, sc, reg)
                kkt = _KKT(st, M, reg)
                break
            except np.linalg.LinAlgError:
                reg *= 100.0
        if kkt is None:
            status = "numerical_error"
            break

        u = A_c @ sc.apply_P(st, c_c)
        z2 = kkt.solve(b + u, c_f.copy())

        def newton(sigma, dxa=None, dsa=None, dta=0.0, dka=0.0):
            eta = 1.0 - sigma
            # complementarity right-hand side r_c
            r_c = np.empty(st.n_cone)
            for blk, w2 in zip(st.nonneg, sc.w2):
                xc_b, s_b = x_c[blk.sl], s[blk.sl]
                corr = (dxa[blk.sl] * dsa[blk.sl]) if dxa is not None else 0.0
                r_c[blk.sl] = (sigma * mu - xc_b * s_b - corr) / s_b
            for blk, W, sig in zip(st.psd, sc.W, sc.sigma):
                n = blk.n
                R = np.diag(sigma * mu - sig ** 2)
                if dxa is not None:
                    Wi = np.linalg.inv(W)
                    dZ = Wi @ smat(dxa[blk.sl]) @ Wi.T
                    dZb = W.T @ smat(dsa[blk.sl]) @ W
                    C = 0.5 * (dZ @ dZb + dZb @ dZ)
                    R = R - 0.5 * (C + C.T)
                D = 2.0 * R / np.add.outer(sig, sig)
                r_c[blk.sl] = svec(W @ D @ W.T)
            r_tk = sigma * mu - tau * kappa - dta * dka

            P_rd = sc.apply_P(st, r_d)
            q1 = -eta * r_p - A_c @ r_c + eta * (A_c @ P_rd)
            q2 = eta * r_df
            z1 = kkt.solve(q1, q2)
            Pc = sc.apply_P(st, c_c)
            cPc = c_c @ Pc
            num = (-eta * r_g + c_c @ r_c - eta * (c_c @ P_rd)
                   + r_tk / tau
                   - (b - u) @ z1[0] + c_f @ z1[1])
            den = (b - u) @ z2[0] - c_f @ z2[1] + cPc + kappa / tau
            dtau = num / den
            dy = z1[0] + dtau * z2[0]
            dxf = z1[1] + dtau * z2[1]
            ds = c_c * dtau - A_c.T @ dy + eta * r_d
            dxc = r_c - sc.apply_P(st, ds)
            dkappa = (r_tk - kappa * dtau) / tau
            return dxc, dxf, dy, ds, dtau, dkappa

        # predictor
        dxc, dxf, dy, ds, dtau, dkappa = newton(0.0)
        alpha_x = _max_step(st, x_c, dxc)
        alpha_s = _max_step(st, s, ds)
        alpha_t = -tau / dtau if dtau < 0 else np.inf
        alpha_k = -kappa / dkappa if dkappa < 0 else np.inf
        a_aff = min(1.0, alpha_x, alpha_s, alpha_t, alpha_k)
        mu_aff = ((x_c + a_aff * dxc) @ (s + a_aff * ds)
                  + (tau + a_aff * dtau) * (kappa + a_aff * dkappa)) / deg
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        dxc, dxf, dy, ds, dtau, dkappa = newton(sigma, dxc, ds, dtau, dkappa)
        alpha_x = _max_step(st, x_c, dxc)
        alpha_s = _max_step(st, s, ds)
        alpha_t = -tau / dtau if dtau < 0 else np.inf
        alpha_k = -kappa / dkappa if dkappa < 0 else np.inf
        alpha = _FTB * min(alpha_x, alpha_s, alpha_t, alpha_k)
        alpha = min(1.0, alpha)

        x_c = x_c + alpha * dxc
        x_f = x_f + alpha * dxf
        y = y + alpha * dy
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

    if status == "optimal":
        x_bar = full_x(x_c, x_f) / tau
        x_sol = col_scale * x_bar
        y_sol = row_scale * y / tau
        s_sol = (s / tau)
        s_full = np.zeros(prob.n_vars)
        s_full[st.cone_idx] = s_sol
        return Solution("optimal", x_sol, y_sol, s_full / col_scale,
                        objective=float(c @ x_bar), iterations=it,
                        primal_residual=pres, dual_residual=dres, gap=gap,
                        backend="native")
    if status == "primal_infeasible":
        ray = row_scale * y / (b @ y)
        return Solution("primal_infeasible", ray=ray, iterations=it,
                        backend="native")
    if status == "dual_infeasible":
        x = full_x(x_c, x_f)
        return Solution("dual_infeasible",
                        ray=col_scale * x / (-(c @ x)),
                        iterations=it, backend="native")
    # stalled or out of iterations: report the best iterate seen
    if best is not None:
        _, x_c, x_f, y, s, tau, pres, dres, gap = best
    tau = max(tau, 1e-300)
    x_bar = full_x(x_c, x_f) / tau
    s_full = np.zeros(prob.n_vars)
    s_full[st.cone_idx] = s / tau
    return Solution("max_iter", x=col_scale * x_bar,
                    y=row_scale * y / tau,
                    s=s_full / col_scale,
                    objective=float(c @ x_bar), iterations=it,
                    primal_residual=pres, dual_residual=dres, gap=gap,
                    backend="native", info={"raw_status": status})


def polish(prob: ConicProblem, x: np.ndarray, rounds: int = 200,
           tol: float = 1e-12) -> np.ndarray:
    """Refine an approximate solution by alternating projections.

    Projects x alternately onto the affine subspace {Ax = b} and onto the
    cone until both are satisfied to roughly machine precision (or the
    round budget runs out).  The result ends with an affine projection, so
    the equality constraints hold essentially exactly while any remaining
    cone violation is of the order of the final correction step.  The
    projections are minimal-norm, so a nearly feasible point moves only by
    about its own infeasibility and the objective value is preserved up to
    that distance.
    """
    A = prob.A.tocsr()
    b = prob.b
    AAt = (A @ A.T).tocsc()
    AAt = AAt + sp.identity(A.shape[0], format="csc") * (
        1e-14 * (1.0 + abs(AAt.diagonal()).max()))
    aff_solve = sp.linalg.factorized(AAt)
    slices = prob.block_slices()
    x = x.copy()
    for _ in range(rounds):
        # cone projection
        moved = 0.0
        for (kind, n), sl in zip(prob.cones, slices):
            if kind == "free":
                continue
            if kind == "nonneg":
                neg = x[sl] < 0.0
                if neg.any():
                    moved = max(moved, -x[sl][neg].min())
                    x[sl][neg] = 0.0
            else:
                M = smat(x[sl])
                w, V = np.linalg.eigh(M)
                if w[0] < 0.0:
                    moved = max(moved, -w[0])
                    w = np.maximum(w, 0.0)
                    x[sl] = svec((V * w) @ V.T)
        # affine projection
        r = b - A @ x
        x += A.T @ aff_solve(r)
        if moved <= tol and np.abs(r).max() <= tol * (1.0 + np.abs(b).max()):
            break
    return x

"""Optional SCS backend for the standard-form conic problem.

SCS solves  min c'x  s.t.  b - Ax in K  with x free; our equality-form
problem maps to it by keeping Ax = b as a zero cone and adding membership
rows -x + s = 0, s in K for the cone-constrained variables.  SCS uses the
same scaled-upper-triangle vectorization for PSD variables.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from conset.sdp.problem import ConicProblem, Solution

try:
    import scs
    AVAILABLE = True
except ImportError:  # pragma: no cover
    AVAILABLE = False


def solve_scs(prob: ConicProblem, tol: float = 1e-8,
              max_iter: int = 100_000, verbose: bool = False) -> Solution:
    if not AVAILABLE:  # pragma: no cover
        raise RuntimeError("scs is not installed")
    slices = prob.block_slices()
    rows = [prob.A]
    nonneg = 0
    psd = []
    sel = []
    for (kind, n), sl in zip(prob.cones, slices):
        if kind == "free":
            continue
        if kind == "nonneg":
            sel.append(np.arange(sl.start, sl.stop))
            nonneg += n
        else:
            # our svec is upper-triangular column-major; SCS expects
            # lower-triangular column-major, so permute entry order
            perm = np.array([i * (i + 1) // 2 + j
                             for j in range(n) for i in range(j, n)])
            sel.append(sl.start + perm)
            psd.append(n)
    # membership rows must appear grouped: all nonneg first, then psd
    order = [i for i, (k, _) in enumerate(
        [c for c in prob.cones if c[0] != "free"]) if k == "nonneg"]
    order += [i for i, (k, _) in enumerate(
        [c for c in prob.cones if c[0] != "free"]) if k == "psd"]
    sel = [sel[i] for i in order]
    if sel:
        idx = np.concatenate(sel)
        E = sp.identity(prob.n_vars, format="csr")[idx]
        rows.append(-E)
    A = sp.vstack(rows).tocsc()
    b = np.concatenate([prob.b, np.zeros(A.shape[0] - prob.n_rows)])
    cone = {"z": prob.n_rows, "l": nonneg, "s": psd}
    solver = scs.SCS(dict(A=A, b=b, c=prob.c), cone, eps_abs=tol,
                     eps_rel=tol, eps_infeas=tol, max_iters=max_iter,
                     verbose=verbose)
    out = solver.solve()
    status = out["info"]["status"].lower()
    x = out["x"]
    y = out["y"][:prob.n_rows]
    if "solved" in status and "inaccurate" not in status:
        s = np.zeros(prob.n_vars)
        if sel:
            s[idx] = out["s"][prob.n_rows:]
        return Solution("optimal", x, y, s,
                        objective=float(prob.c @ x),
                        iterations=out["info"]["iter"], backend="scs")
    if "infeasible" in status:
        by = prob.b @ y
        if by > 0:
            return Solution("primal_infeasible", ray=y / by,
                            iterations=out["info"]["iter"], backend="scs")
    if "unbounded" in status:
        cx = prob.c @ x
        return Solution("dual_infeasible", ray=x / (-cx),
                        iterations=out["info"]["iter"], backend="scs")
    return Solution("max_iter", x=x, y=y, iterations=out["info"]["iter"],
                    backend="scs", info={"raw_status": status})

"""Pure-numpy fallback for the compiled kernels.

Same call signatures as the Cython module ``conset._kernels``; batch
operations are vectorized across samples so the fallback stays usable,
just slower (see benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import numpy as np

AVAILABLE = True


def eval_many(exps, coefs, offsets, points):
    """Evaluate a packed polynomial family at an (N, nv) point array."""
    points = np.asarray(points, dtype=float)
    n_polys = len(offsets) - 1
    out = np.zeros((points.shape[0], n_polys))
    for p in range(n_polys):
        acc = out[:, p]
        for t in range(offsets[p], offsets[p + 1]):
            term = np.full(points.shape[0], coefs[t])
            for j, e in enumerate(exps[t]):
                if e:
                    term *= points[:, j] ** int(e)
            acc += term
    return out


def _eval_family(exps, coefs, offsets, t, states):
    """Evaluate polynomials over (t, x) at scalar t and an (N, nx) batch."""
    n_polys = len(offsets) - 1
    n = states.shape[0]
    out = np.zeros((n, n_polys))
    for p in range(n_polys):
        acc = out[:, p]
        for k in range(offsets[p], offsets[p + 1]):
            e = exps[k]
            term = np.full(n, coefs[k])
            if e[0]:
                term *= t ** int(e[0])
            for j in range(states.shape[1]):
                if e[j + 1]:
                    term *= states[:, j] ** int(e[j + 1])
            acc += term
    return out


def rk4_propagate(f_exps, f_coefs, f_offsets, x0, t0, t1, n_steps,
                  g_exps, g_coefs, g_offsets, tol, diverge_norm):
    """Fixed-step RK4 over [t0, t1] for a batch, checking g(x) >= -tol.

    Returns (final_states, ok_mask, min_margin); diverged rows get margin
    -inf and are marked failed.
    """
    x = np.array(x0, dtype=float, copy=True)
    n = x.shape[0]
    h = (t1 - t0) / n_steps
    ok = np.ones(n, dtype=bool)
    margin = np.full(n, np.inf)
    ng = len(g_offsets) - 1

    def check(states, live):
        if not ng:
            return
        vals = eval_many(g_exps, g_coefs, g_offsets, states[live])
        m = vals.min(axis=1)
        margin[live] = np.minimum(margin[live], m)

    live = ok.copy()
    check(x, live)
    t = t0
    for step in range(n_steps):
        xs = x[live]
        k1 = _eval_family(f_exps, f_coefs, f_offsets, t, xs)
        k2 = _eval_family(f_exps, f_coefs, f_offsets, t + 0.5 * h,
                          xs + 0.5 * h * k1)
        k3 = _eval_family(f_exps, f_coefs, f_offsets, t + 0.5 * h,
                          xs + 0.5 * h * k2)
        k4 = _eval_family(f_exps, f_coefs, f_offsets, t + h, xs + h * k3)
        xs = xs + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        x[live] = xs
        t = t0 + (step + 1) * h
        blown = np.zeros(n, dtype=bool)
        blown[live] = np.abs(xs).max(axis=1) > diverge_norm
        if blown.any():
            ok[blown] = False
            margin[blown] = -np.inf
            live = live & ~blown
            if not live.any():
                break
        check(x, live)
    ok &= margin >= -tol
    return x, ok, margin

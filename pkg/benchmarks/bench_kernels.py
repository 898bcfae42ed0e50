"""Benchmark the compiled kernels against the pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Both backends are loaded side by side (the fallback is always importable),
timed on polynomial batch evaluation and RK4 propagation for the built-in
enzyme model, and cross-checked for agreement.
"""

import importlib
import time

import numpy as np

from conset import kernels
from conset import _kernels_py as pure
from conset.model import enzyme_example
from conset.poly import VarSpace, monomial_basis, Polynomial

try:
    from conset import _kernels as compiled
except ImportError:
    compiled = None


def _time(fn, *args, repeat=5):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_eval(n_points: int = 20000, degree: int = 6):
    vs = VarSpace(5, has_time=False)
    rng = np.random.default_rng(0)
    monos = monomial_basis(vs, degree)
    polys = [Polynomial(vs, {m: rng.standard_normal() for m in monos})
             for _ in range(8)]
    fam = kernels.PackedFamily(polys)
    pts = np.ascontiguousarray(rng.uniform(0, 1, size=(n_points, 5)))
    rows = []
    t_pure, ref = _time(pure.eval_many, fam.exps, fam.coefs, fam.offsets,
                        pts)
    rows.append(("pure", t_pure))
    if compiled is not None:
        t_c, got = _time(compiled.eval_many, fam.exps, fam.coefs,
                         fam.offsets, pts)
        rows.append(("compiled", t_c))
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)
    return f"eval_many ({n_points} pts, 8 polys, deg {degree})", rows


def bench_rk4(n_traj: int = 2000, n_steps: int = 500):
    model = enzyme_example()
    fam = kernels.PackedFamily(list(model.dynamics))
    rng = np.random.default_rng(1)
    x0 = np.ascontiguousarray(
        rng.uniform(0.05, 0.95, size=(n_traj, model.n_states)))
    g = (np.zeros((0, model.n_states), dtype=np.int64), np.zeros(0),
         np.zeros(1, dtype=np.int64))
    args = (fam.exps, fam.coefs, fam.offsets, x0, 0.0, 1.0, n_steps,
            *g, 0.0, 1e6)
    rows = []
    t_pure, ref = _time(pure.rk4_propagate, *args, repeat=3)
    rows.append(("pure", t_pure))
    if compiled is not None:
        t_c, got = _time(compiled.rk4_propagate, *args, repeat=3)
        rows.append(("compiled", t_c))
        assert np.allclose(got[0], ref[0], rtol=1e-10, atol=1e-12)
    return f"rk4_propagate ({n_traj} trajectories, {n_steps} steps)", rows


def main():
    print(f"active backend: {kernels.BACKEND}")
    if compiled is None:
        print("compiled extension not available; timing the fallback only")
    for title, rows in (bench_eval(), bench_rk4()):
        print(f"\n{title}")
        base = dict(rows).get("pure")
        for name, t in rows:
            speed = f"  ({base / t:.1f}x vs pure)" if name != "pure" else ""
            print(f"  {name:9s} {t * 1e3:9.2f} ms{speed}")


if __name__ == "__main__":
    main()

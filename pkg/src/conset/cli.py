"""Command-line front end.

Loads a model file (or a named built-in example), runs the outer / inner /
certify / sample pipelines at a given relaxation order, and writes static
JSON/CSV artifacts suitable for offline plotting.  No plotting dependency:
the grid CSVs carry both scaled and original coordinates so any tool can
reproduce the overlay figures.

Exit codes: 0 success, 2 parse error, 3 solver failure,
4 certificate-verification failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from conset import model as mod
from conset import oracle, relax
from conset.parse import ParseError, load_model

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4

BUILTINS = {
    "enzyme": mod.enzyme_example,
    "static": mod.static_example,
    "disjoint": mod.disjoint_example,
}


def _config_dict(args: argparse.Namespace) -> dict:
    return {
        "model": str(args.model),
        "task": args.task,
        "order": args.order,
        "epsilon": args.epsilon,
        "localize_arcs": args.localize_arcs,
        "seed": args.seed,
        "grid": args.grid,
        "project": args.project,
        "solver_tol": args.solver_tol,
        "workers": args.workers,
        "samples": args.samples,
        "backend": args.backend,
        "max_iter": args.max_iter,
    }


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _load(name_or_path: str) -> mod.EstimationModel:
    if name_or_path in BUILTINS:
        return BUILTINS[name_or_path]()
    return load_model(name_or_path)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _projection(model: mod.EstimationModel,
                project: Optional[str]) -> Tuple[int, ...]:
    """Indices of the plotted variables (all when n <= 3)."""
    names = list(model.names)
    if project:
        parts = [p.strip() for p in project.split(",")]
        if len(parts) != len(set(parts)):
            raise ValueError("projection variables must be distinct")
        idx = []
        for p in parts:
            if p not in names:
                raise ValueError(f"unknown projection variable {p!r}; "
                                 f"model variables: {', '.join(names)}")
            idx.append(names.index(p))
        return tuple(idx)
    n = model.n_states
    if n <= 3:
        return tuple(range(n))
    raise ValueError("model has more than 3 variables; "
                     "use --project v1,v2 to choose a slice")


def _grid_points(model: mod.EstimationModel, proj: Tuple[int, ...],
                 resolution: int,
                 slice_values: Optional[Sequence[float]] = None):
    """A regular grid over the projected X_0 box (scaled coordinates).

    Non-projected variables sit at the supplied slice values, or at the
    midpoint of their box interval by default.
    """
    box = model.initial_set.box or model.global_set.box
    if box is None:
        raise ValueError("model has no bounding box for grid evaluation")
    axes = [np.linspace(box[i][0], box[i][1], resolution) for i in proj]
    mesh = np.meshgrid(*axes, indexing="ij")
    n = model.n_states
    pts = np.empty((mesh[0].size, n))
    for j in range(n):
        if j in proj:
            pts[:, j] = mesh[proj.index(j)].ravel()
        elif slice_values is not None:
            pts[:, j] = slice_values[j]
        else:
            pts[:, j] = 0.5 * (box[j][0] + box[j][1])
    return pts


def _grid_csv(path: Path, model: mod.EstimationModel, pts: np.ndarray,
              columns: List[Tuple[str, np.ndarray]]) -> None:
    orig = model.scaling.to_original(pts)
    names = list(model.names)
    header = ([f"{n}_scaled" for n in names] + names
              + [name for name, _ in columns])
    rows = np.column_stack([pts, orig] + [c for _, c in columns])
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _manifest(out: Path, config: dict, extra: dict) -> None:
    data = {"config": config, "config_hash": _config_hash(config)}
    data.update(extra)
    _write_json(out / "manifest.json", data)


def cmd_outer(model: mod.EstimationModel, args: argparse.Namespace) -> int:
    config = _config_dict(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        approx = relax.solve_outer(model, args.order, tol=args.solver_tol,
                                   localize_arcs=args.localize_arcs,
                                   backend=args.backend,
                                   max_iter=args.max_iter)
    except relax.ExtractionError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    wall = time.time() - t0
    data = approx.to_dict()
    data["config_hash"] = _config_hash(config)
    data["seed"] = args.seed
    _write_json(out / f"outer_d{args.order}.json", data)

    proj = _projection(model, args.project)
    pts = _grid_points(model, proj, args.grid)
    v0 = approx.v0.eval_many(pts)
    inside = approx.contains(pts)
    _grid_csv(out / f"outer_d{args.order}_grid.csv", model, pts,
              [("v0", v0), ("inside", inside.astype(float))])
    _manifest(out, config, {"task": "outer", "objective": approx.objective,
                            "wall_time_s": wall})
    print(f"outer approximation at d={args.order}: objective "
          f"{approx.objective:.6f}, {int(inside.sum())}/{len(pts)} grid "
          f"points inside")
    return EXIT_OK


def _solve_violation_worker(packed):
    model, idx, order, epsilon, tol, localize, backend, max_iter = packed
    approx = relax.solve_violation(model, idx, order, epsilon=epsilon,
                                   tol=tol, localize_arcs=localize,
                                   backend=backend, max_iter=max_iter)
    return idx, approx


def cmd_inner(model: mod.EstimationModel, args: argparse.Namespace) -> int:
    config = _config_dict(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    indices = relax.violation_indices(model)
    print(f"scheduling {len(indices)} violation programs at d={args.order}")
    jobs = [(model, idx, args.order, args.epsilon, args.solver_tol,
             args.localize_arcs, args.backend, args.max_iter)
            for idx in indices]
    t0 = time.time()
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_solve_violation_worker, jobs))
    else:
        results = [_solve_violation_worker(j) for j in jobs]
    wall = time.time() - t0

    covers = []
    empties = []
    failures = []
    for idx, approx in results:
        tag = f"k{idx.kappa}_g{idx.eta}"
        covers.append(approx)
        if approx is None:
            failures.append(tag)
            continue
        data = approx.to_dict()
        data["config_hash"] = _config_hash(config)
        data["seed"] = args.seed
        _write_json(out / f"violation_{tag}.json", data)
    inner = relax.inner_from_outers(model, covers, args.order)

    proj = _projection(model, args.project)
    pts = _grid_points(model, proj, args.grid)
    inside = inner.contains(pts)
    cols = [("inner", inside.astype(float))]
    for idx, approx in results:
        if approx is not None:
            covered = approx.contains(pts)
            if not covered.any():
                empties.append(f"k{idx.kappa}_g{idx.eta}")
            cols.append((f"cover_k{idx.kappa}_g{idx.eta}",
                         covered.astype(float)))
    _grid_csv(out / f"inner_d{args.order}_grid.csv", model, pts, cols)
    _manifest(out, config, {
        "task": "inner", "n_violation_programs": len(indices),
        "complete": inner.complete, "failed_programs": failures,
        "empty_violation_sets": empties, "wall_time_s": wall})
    print(f"inner approximation at d={args.order}: complete={inner.complete},"
          f" {int(inside.sum())}/{len(pts)} grid points inside"
          + (f", empty violation sets: {', '.join(empties)}" if empties
             else ""))
    return EXIT_OK if inner.complete else EXIT_SOLVER


def cmd_certify(model: mod.EstimationModel, args: argparse.Namespace) -> int:
    config = _config_dict(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    cert = relax.solve_certificate(model, args.order, tol=args.solver_tol,
                                   localize_arcs=args.localize_arcs,
                                   backend=args.backend,
                                   max_iter=args.max_iter)
    wall = time.time() - t0
    if cert is None:
        _manifest(out, config, {"task": "certify", "certificate": None,
                                "wall_time_s": wall})
        print(f"no certificate at order {args.order}")
        return EXIT_OK
    if not cert.verification.ok:
        print("certificate failed verification", file=sys.stderr)
        return EXIT_VERIFY
    data = cert.to_dict()
    data["config_hash"] = _config_hash(config)
    data["seed"] = args.seed
    _write_json(out / f"certificate_d{args.order}.json", data)
    _manifest(out, config, {"task": "certify", "certificate": True,
                            "wall_time_s": wall})
    print(f"inconsistency certificate found at order {args.order} "
          f"(moment value {cert.moment_value:.6f})")
    return EXIT_OK


def cmd_sample(model: mod.EstimationModel, args: argparse.Namespace) -> int:
    config = _config_dict(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    pts = oracle.expand_consistent(model, args.samples, args.seed)
    wall = time.time() - t0
    path = out / "consistent_samples.csv"
    names = list(model.names)
    orig = model.scaling.to_original(pts) if len(pts) else pts
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([f"{n}_scaled" for n in names] + names) + "\n")
        for srow, orow in zip(pts, orig):
            fh.write(",".join(repr(float(v))
                              for v in list(srow) + list(orow)) + "\n")
    _manifest(out, config, {"task": "sample", "n_samples": len(pts),
                            "wall_time_s": wall})
    print(f"wrote {len(pts)} consistent samples")
    return EXIT_OK


def cmd_grid(model: mod.EstimationModel, args: argparse.Namespace) -> int:
    """Evaluate a previously computed set JSON over a fresh grid."""
    config = _config_dict(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.set_json:
        print("--set-json required for the grid task", file=sys.stderr)
        return EXIT_PARSE
    data = json.loads(Path(args.set_json).read_text(encoding="utf-8"))
    approx = relax.SetApproximation.from_dict(data)
    proj = _projection(model, args.project)
    pts = _grid_points(model, proj, args.grid)
    _grid_csv(out / "set_grid.csv", model, pts,
              [("v0", approx.v0.eval_many(pts)),
               ("inside", approx.contains(pts).astype(float))])
    _manifest(out, config, {"task": "grid"})
    print(f"evaluated set on {len(pts)} grid points")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="conset",
        description="Guaranteed set approximations for the initial "
                    "conditions and parameters of polynomial ODEs "
                    "consistent with bounded measurements.")
    p.add_argument("--model", required=True,
                   help="model JSON file, or a built-in name: "
                        + ", ".join(BUILTINS))
    p.add_argument("--task", required=True,
                   choices=["outer", "inner", "certify", "sample", "grid"])
    p.add_argument("--order", type=int, default=3,
                   help="relaxation order d (default 3)")
    p.add_argument("--epsilon", type=float, default=1e-4,
                   help="strict-violation margin for inner programs")
    p.add_argument("--localize-arcs", action="store_true",
                   help="use per-arc time localizers instead of t(1-t)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=51,
                   help="grid resolution per projected axis (>= 2)")
    p.add_argument("--project", default=None,
                   help="comma-separated variable names to grid over")
    p.add_argument("--out", default="conset_out", help="output directory")
    p.add_argument("--solver-tol", type=float, default=1e-8)
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for the inner task")
    p.add_argument("--samples", type=int, default=1000,
                   help="number of consistent samples for the sample task")
    p.add_argument("--max-iter", type=int, default=None,
                   help="solver iteration cap (default: backend-specific)")
    p.add_argument("--backend", default="native",
                   choices=["native", "scs"], help="SDP solver backend")
    p.add_argument("--set-json", default=None,
                   help="set JSON to evaluate (grid task)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.order < 1:
        print("order must be >= 1", file=sys.stderr)
        return EXIT_PARSE
    if args.grid < 2:
        print("grid resolution must be >= 2", file=sys.stderr)
        return EXIT_PARSE
    try:
        model = _load(args.model)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"cannot load model: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        handler = {"outer": cmd_outer, "inner": cmd_inner,
                   "certify": cmd_certify, "sample": cmd_sample,
                   "grid": cmd_grid}[args.task]
        return handler(model, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

"""Conic (linear / semidefinite) programming layer."""

from __future__ import annotations

from conset.sdp.problem import (ConicProblem, Solution, cone_dims, smat,
                                svec, svec_dim, svec_indices)
from conset.sdp.native import polish, solve_native

__all__ = ["ConicProblem", "Solution", "svec", "smat", "svec_dim",
           "svec_indices", "cone_dims", "polish", "solve", "solve_native"]


def solve(prob: ConicProblem, tol: float = 1e-8, max_iter: int = None,
          backend: str = "native", verbose: bool = False) -> Solution:
    """Solve a conic problem with the requested backend.

    backend "native" uses the built-in interior-point method; "scs" uses
    the first-order SCS solver when installed (useful for problems whose
    dense Schur complement does not fit in memory).  ``max_iter`` defaults
    to 200 for the interior-point method and 100000 for SCS; a lower cap
    on large programs trades optimality (never soundness, which rests on
    the independent certificate verification) for runtime.
    """
    if backend == "native":
        return solve_native(prob, tol=tol, max_iter=max_iter or 200,
                            verbose=verbose)
    if backend == "scs":
        from conset.sdp.scs_backend import solve_scs
        return solve_scs(prob, tol=tol, max_iter=max_iter or 100_000,
                         verbose=verbose)
    raise ValueError(f"unknown backend {backend!r}")

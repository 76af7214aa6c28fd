"""Preconditioned conjugate gradients on flattened real fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve misses its tolerance."""


@dataclass(frozen=True)
class SolveOptions:
    """Krylov settings.

    Parameters
    ----------
    tol : float
        Relative residual target.
    maxiter : int or None
        Iteration cap; ``None`` means ``10 * n`` for an ``n``-point grid axis.
    """

    tol: float = 1e-10
    maxiter: int | None = None

    def cap(self, n: int) -> int:
        return int(self.maxiter) if self.maxiter is not None else 10 * int(n)


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual: float


def pcg(apply, rhs, precond, *, tol, maxiter, x0=None) -> KrylovResult:
    """Solve ``apply(x) = rhs`` for a symmetric positive (semi)definite map.

    ``apply`` and ``precond`` act on arrays shaped like ``rhs``.
    """
    shape = rhs.shape
    size = rhs.size
    count = [0]

    def mv(v):
        return apply(v.reshape(shape)).ravel()

    def pv(v):
        return precond(v.reshape(shape)).ravel()

    def cb(_):
        count[0] += 1

    A = LinearOperator((size, size), matvec=mv, dtype=float)
    M = LinearOperator((size, size), matvec=pv, dtype=float)
    b = rhs.ravel()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return KrylovResult(np.zeros(shape), 0, 0.0)
    x, info = cg(A, b, x0=None if x0 is None else x0.ravel(), rtol=tol, atol=0.0,
                 maxiter=maxiter, M=M, callback=cb)
    res = float(np.linalg.norm(b - mv(x))) / bnorm
    # the unpreconditioned residual may sit slightly above the preconditioned one
    if info != 0 or res > 10 * tol:
        raise ConvergenceError(
            f"CG stopped after {count[0]} iterations with relative residual {res:.3e} (target {tol:.1e})"
        )
    return KrylovResult(x.reshape(shape), count[0], res)

"""Unit-cell problems and the effective and corrector objects built from them.

Conventions: matrix fields have shape ``(3, 3, n, n, n)`` with column ``j``
at ``[:, j]``.  ``Lambda`` is purely imaginary; ``CellData.Lambda`` keeps the
factor ``1j`` explicitly while ``CellData.Lambda_real`` stores ``-1j * Lambda``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import CoefficientSet, Grid, GridError, SpectralOps, build_grid, sample_coefficient_set
from .krylov import ConvergenceError, SolveOptions, pcg

SPECIAL_CASE_TOL = 1e-8


def _mat_field_inv(m):
    a = np.moveaxis(m, (0, 1), (-2, -1))
    return np.moveaxis(np.linalg.inv(a), (-2, -1), (0, 1))


def _matvec(m, v):
    return np.einsum("ij...,j...->i...", m, v)


def _matmul(a, b):
    """Product of matrix fields or of a matrix field with a constant matrix."""
    if a.ndim == 2:
        return np.einsum("ij,jk...->ik...", a, b)
    if b.ndim == 2:
        return np.einsum("ij...,jk->ik...", a, b)
    return np.einsum("ij...,jk...->ik...", a, b)


def _mean(a):
    return a.mean(axis=(-3, -2, -1))


@dataclass(frozen=True, eq=False)
class CellData:
    """All cell-problem solutions and the objects assembled from them."""

    grid: Grid
    mu0: np.ndarray
    Y: np.ndarray
    Xi: np.ndarray
    eta0: np.ndarray
    etaBar: np.ndarray
    etaUnder: np.ndarray
    Sigma: np.ndarray
    Phi: np.ndarray
    p: np.ndarray
    Psi: np.ndarray
    rho: np.ndarray
    gradRho: np.ndarray
    nuUnder: float
    Lambda_real: np.ndarray
    g0: np.ndarray
    gTilde: np.ndarray
    etaTilde: np.ndarray
    Upsilon: np.ndarray
    cj: np.ndarray
    nu_mean: float = 0.0
    iterations: tuple = ()
    flags: dict = field(default_factory=dict)

    @property
    def Lambda(self) -> np.ndarray:
        return 1j * self.Lambda_real

    @property
    def eta0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.eta0)

    # serialization -------------------------------------------------------

    _ARRAYS = ("mu0", "Y", "Xi", "eta0", "etaBar", "etaUnder", "Sigma", "Phi", "p", "Psi", "rho",
               "gradRho", "Lambda_real", "g0", "gTilde", "etaTilde", "Upsilon", "cj")

    def save(self, path) -> Path:
        """Write a self-describing ``.npz`` (arrays) or ``.json`` (arrays as nested lists)."""
        path = Path(path)
        meta = {"n": self.grid.n, "period": self.grid.period, "offset": self.grid.offset,
                "nuUnder": self.nuUnder, "nu_mean": self.nu_mean, "flags": self.flags,
                "iterations": list(self.iterations)}
        arrays = {k: getattr(self, k) for k in self._ARRAYS}
        if path.suffix == ".json":
            doc = {"meta": meta, "arrays": {k: v.tolist() for k, v in arrays.items()}}
            path.write_text(json.dumps(doc))
        else:
            np.savez_compressed(path, meta=json.dumps(meta), **arrays)
            if path.suffix != ".npz":
                path = path.with_suffix(path.suffix + ".npz")
        return path

    @classmethod
    def load(cls, path) -> "CellData":
        path = Path(path)
        if path.suffix == ".json":
            doc = json.loads(path.read_text())
            meta = doc["meta"]
            arrays = {k: np.asarray(v) for k, v in doc["arrays"].items()}
        else:
            with np.load(path) as z:
                meta = json.loads(str(z["meta"]))
                arrays = {k: z[k] for k in cls._ARRAYS}
        grid = build_grid(meta["n"], meta["period"], meta["offset"])
        return cls(grid=grid, nuUnder=meta["nuUnder"], nu_mean=meta["nu_mean"], flags=meta["flags"],
                   iterations=tuple(meta["iterations"]), **arrays)

    def summary(self) -> dict:
        return {
            "eta0": self.eta0.tolist(),
            "etaBar": self.etaBar.tolist(),
            "etaUnder": self.etaUnder.tolist(),
            "nuUnder": self.nuUnder,
            "max_abs_Phi": float(np.abs(self.Phi).max()),
            "Lambda_L2": float(np.sqrt(np.mean(np.sum(self.Lambda_real**2, axis=(0, 1))))),
            "flags": self.flags,
            "iterations": list(self.iterations),
        }


# ---------------------------------------------------------------------------
# Y problem
# ---------------------------------------------------------------------------


def solve_cell_Y(coeff: CoefficientSet, grid: Grid | None = None, opts: SolveOptions | None = None,
                 mode_cutoff: int | None = None):
    """Solve ``div eta (grad Y_j + e_j) = 0`` for the three zero-mean correctors.

    Parameters
    ----------
    coeff : CoefficientSet
        Coefficients sampled on ``grid``.
    grid : Grid, optional
        Defaults to ``coeff.grid``.
    opts : SolveOptions, optional
    mode_cutoff : int, optional
        Restrict unknowns to Fourier modes with ``|k|_inf <= mode_cutoff``
        (Galerkin truncation).  Used to compare against a dense solve.

    Returns
    -------
    Y : ndarray, shape (3, n, n, n)
    Xi : ndarray, shape (3, 3, n, n, n)
        Column ``j`` is ``grad Y_j``.
    eta0, etaBar, etaUnder : ndarray, shape (3, 3)
    iterations : tuple of int
    """
    grid = coeff.grid if grid is None else grid
    if grid != coeff.grid:
        raise GridError("coefficients were sampled on a different grid")
    opts = opts or SolveOptions()
    ops = SpectralOps(grid)
    eta = coeff.eta
    etaBar = _mean(eta)
    etaUnder = np.linalg.inv(_mean(coeff.eta_inv))
    mask = None if mode_cutoff is None else ops.mode_mask(mode_cutoff)

    kx, ky, kz = ops.kvec
    quad = sum(etaBar[a, b] * ka * kb for a, ka in enumerate(ops.kvec) for b, kb in enumerate(ops.kvec))
    with np.errstate(divide="ignore"):
        pre_sym = np.where(quad > 1e-14, 1.0 / np.where(quad > 1e-14, quad, 1.0), 0.0)
    if mask is not None:
        pre_sym = pre_sym * mask

    def project(a):
        return a if mask is None else ops.multiplier(a, mask)

    def apply(y):
        # -div(eta grad y)
        g = ops.grad(project(y))
        return project(-ops.div(_matvec(eta, g)))

    def precond(r):
        return ops.multiplier(r, pre_sym)

    Y = np.zeros((3,) + grid.shape)
    its = []
    for j in range(3):
        rhs = project(ops.div(eta[:, j]))
        res = pcg(apply, rhs, precond, tol=opts.tol, maxiter=opts.cap(grid.n))
        Y[j] = res.x - res.x.mean()
        its.append(res.iterations)
    Y = project(Y) if mask is not None else Y
    Xi = np.moveaxis(ops.jacobian(Y), 0, 1)  # Xi[i, j] = d_i Y_j
    flux = _matmul(eta, Xi + np.eye(3)[:, :, None, None, None])
    eta0 = _mean(flux)
    if np.abs(eta0 - eta0.T).max() > 1e-10 * np.abs(eta0).max():
        raise ConvergenceError("effective tensor is not symmetric to 1e-10; tighten the tolerance")
    eta0 = 0.5 * (eta0 + eta0.T)
    return Y, Xi, eta0, etaBar, etaUnder, tuple(its)


def galerkin_cell_Y(eta_fourier: dict, n: int, cutoff: int = 2):
    """Dense Fourier-Galerkin solve of the ``Y`` problem (independent oracle).

    Parameters
    ----------
    eta_fourier : dict
        Exact Fourier coefficients ``{k: eta_hat(k)}`` of a band-limited ``eta``.
    n : int
        Output grid size.
    cutoff : int
        Modes ``|k|_inf <= cutoff`` are retained.

    Returns
    -------
    Y : ndarray, shape (3, n, n, n)
    eta0 : ndarray, shape (3, 3)
    """
    rng = range(-cutoff, cutoff + 1)
    modes = [(a, b, c) for a in rng for b in rng for c in rng if (a, b, c) != (0, 0, 0)]
    K = np.array(modes, dtype=float) * 2 * np.pi
    zero = np.zeros((3, 3), dtype=complex)
    m = len(modes)
    A = np.zeros((m, m), dtype=complex)
    for r, k in enumerate(modes):
        for c, l in enumerate(modes):
            e = eta_fourier.get((k[0] - l[0], k[1] - l[1], k[2] - l[2]), zero)
            A[r, c] = K[r] @ e @ K[c]
    rhs = np.zeros((m, 3), dtype=complex)
    for r, k in enumerate(modes):
        e = eta_fourier.get(tuple(k), zero)
        rhs[r] = 1j * (K[r] @ e)
    # A yhat = i k.eta_hat(k) e_j  <=>  -div(eta grad Y) = div(eta e_j)
    yhat = np.linalg.solve(A, rhs)
    x = np.arange(n) / n
    Y = np.zeros((3, n, n, n), dtype=complex)
    for r, k in enumerate(modes):
        ph = np.exp(2j * np.pi * (k[0] * x[:, None, None] + k[1] * x[None, :, None] + k[2] * x[None, None, :]))
        Y += yhat[r][:, None, None, None] * ph
    eta0 = eta_fourier.get((0, 0, 0), zero).copy()
    for r, k in enumerate(modes):
        e = eta_fourier.get((-k[0], -k[1], -k[2]), zero)
        eta0 += (e @ (1j * K[r]))[:, None] * yhat[r][None, :]
    return Y.real, eta0.real


# ---------------------------------------------------------------------------
# p and rho problems (constant-coefficient, solved per Fourier mode)
# ---------------------------------------------------------------------------


def solve_cell_p(coeff: CoefficientSet, Phi: np.ndarray, cj: np.ndarray, opts: SolveOptions | None = None):
    """Solve ``curl(mu0^{-1} curl p_j) = eta (grad Phi_j + c_j) - e_j`` with ``div p_j = 0``.

    The operator has constant coefficients, so the divergence-free solution
    is obtained exactly mode by mode after projecting the right-hand side
    onto divergence-free fields.

    Returns
    -------
    p : ndarray, shape (3, 3, n, n, n)
        ``p[:, j]`` is ``p_j``.
    Psi : ndarray, shape (3, 3, n, n, n)
        Column ``j`` is ``curl p_j``.
    """
    opts = opts or SolveOptions()
    grid = coeff.grid
    ops = SpectralOps(grid)
    mu_inv = np.linalg.inv(coeff.mu0)
    gradPhi = np.moveaxis(ops.jacobian(Phi), 0, 1)
    h = _matmul(coeff.eta, gradPhi + cj[:, :, None, None, None]) - np.eye(3)[:, :, None, None, None]
    hm = np.abs(_mean(h)).max()
    if hm > 1e-9:
        raise ConvergenceError(f"cell right-hand side has mean {hm:.2e}; effective tensor is inconsistent")

    kv = np.stack(np.broadcast_arrays(*ops.kvec))  # (3, n, n, m)
    R = np.moveaxis(np.stack([[np.zeros_like(kv[0]), -kv[2], kv[1]],
                              [kv[2], np.zeros_like(kv[0]), -kv[0]],
                              [-kv[1], kv[0], np.zeros_like(kv[0])]]), (0, 1), (-2, -1))
    kk = np.moveaxis(kv, 0, -1)
    k2 = np.sum(kk**2, axis=-1)
    live = k2 > 1e-14
    # R^T mu^-1 R is the symbol of curl mu^-1 curl; adding k k^T removes its kernel
    M = np.swapaxes(R, -1, -2) @ mu_inv @ R + kk[..., :, None] * kk[..., None, :]
    M[~live] = np.eye(3)
    Minv = np.linalg.inv(M)

    p = np.zeros((3, 3) + grid.shape)
    for j in range(3):
        hh = np.moveaxis(ops.fwd(h[:, j]), 0, -1)
        kh = np.sum(kk * hh, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            hh = hh - np.where(live, kh / np.where(live, k2, 1.0), 0.0)[..., None] * kk
        ph = np.einsum("...ij,...j->...i", Minv, hh)
        ph[~live] = 0.0
        p[:, j] = ops.inv(np.moveaxis(ph, -1, 0))
    Psi = np.stack([ops.curl(p[:, j]) for j in range(3)], axis=1)
    return p, Psi


def solve_cell_rho(coeff: CoefficientSet, opts: SolveOptions | None = None):
    """Solve ``-div(mu0 grad rho) = 1 - nuUnder / nu`` for zero-mean ``rho``.

    Returns
    -------
    rho : ndarray, shape (n, n, n)
    gradRho : ndarray, shape (3, n, n, n)
    nuUnder : float
        Harmonic mean of ``nu``.
    """
    grid = coeff.grid
    ops = SpectralOps(grid)
    nu = coeff.nu
    nuUnder = 1.0 / float(np.mean(1.0 / nu))
    rhs = 1.0 - nuUnder / nu
    mu = coeff.mu0
    quad = sum(mu[a, b] * ka * kb for a, ka in enumerate(ops.kvec) for b, kb in enumerate(ops.kvec))
    sym = np.where(quad > 1e-14, 1.0 / np.where(quad > 1e-14, quad, 1.0), 0.0)
    rho = ops.multiplier(rhs, sym)
    return rho, ops.grad(rho), nuUnder


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def assemble_cell_data(coeff: CoefficientSet, Y, Xi, eta0, etaBar, etaUnder, p, Psi, rho, gradRho,
                       nuUnder, iterations=()) -> CellData:
    """Build the effective matrices, correctors and special-case flags."""
    grid = coeff.grid
    if Y.shape[-3:] != grid.shape or Psi.shape[-3:] != grid.shape or rho.shape != grid.shape:
        raise GridError("cell fields live on inconsistent grids")
    e0inv = np.linalg.inv(eta0)
    I3 = np.eye(3)[:, :, None, None, None]
    Sigma = _matmul(Xi, e0inv)
    Phi = np.einsum("k...,kj->j...", Y, e0inv)
    mm = np.linalg.inv(coeff.mu0_sqrt)
    Lambda_real = np.concatenate(
        [_matmul(mm, Psi), np.einsum("ij,j...->i...", coeff.mu0_sqrt, gradRho)[:, None]], axis=1
    )
    g0 = np.zeros((4, 4))
    g0[:3, :3] = e0inv
    g0[3, 3] = nuUnder
    gTilde = np.zeros((4, 4) + grid.shape)
    gTilde[:3, :3] = Sigma + e0inv[:, :, None, None, None]
    gTilde[3, 3] = nuUnder
    etaTilde = _matmul(coeff.eta, Xi + I3)
    Upsilon = _matmul(etaTilde, e0inv) - I3
    flags = {
        "eta0_is_arithmetic_mean": bool(np.linalg.norm(eta0 - etaBar, 2) <= SPECIAL_CASE_TOL),
        "eta0_is_harmonic_mean": bool(np.linalg.norm(eta0 - etaUnder, 2) <= SPECIAL_CASE_TOL),
        "nu_constant": coeff.nu_constant,
    }
    flags["Lambda_vanishes"] = flags["eta0_is_harmonic_mean"] and flags["nu_constant"]
    return CellData(
        grid=grid, mu0=coeff.mu0, Y=Y, Xi=Xi, eta0=eta0, etaBar=etaBar, etaUnder=etaUnder, Sigma=Sigma,
        Phi=Phi, p=p, Psi=Psi, rho=rho, gradRho=gradRho, nuUnder=nuUnder, Lambda_real=Lambda_real,
        g0=g0, gTilde=gTilde, etaTilde=etaTilde, Upsilon=Upsilon, cj=e0inv,
        nu_mean=float(coeff.nu.mean()), iterations=tuple(iterations), flags=flags,
    )


def solve_cell(coeff: CoefficientSet, opts: SolveOptions | None = None) -> CellData:
    """Run the ``Y``, ``p`` and ``rho`` solves and assemble ``CellData``."""
    Y, Xi, eta0, etaBar, etaUnder, its = solve_cell_Y(coeff, opts=opts)
    e0inv = np.linalg.inv(eta0)
    Phi = np.einsum("k...,kj->j...", Y, e0inv)
    p, Psi = solve_cell_p(coeff, Phi, e0inv, opts)
    rho, gradRho, nuUnder = solve_cell_rho(coeff, opts)
    return assemble_cell_data(coeff, Y, Xi, eta0, etaBar, etaUnder, p, Psi, rho, gradRho, nuUnder, its)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def phi_sup_under_refinement(spec, ns=(32, 64), opts: SolveOptions | None = None) -> dict:
    """``max |Phi_j|`` on successively finer cell grids and the largest relative change."""
    sups = []
    for n in ns:
        coeff = sample_coefficient_set(spec, build_grid(n))
        Y, _, eta0, *_ = solve_cell_Y(coeff, opts=opts)
        Phi = np.einsum("k...,kj->j...", Y, np.linalg.inv(eta0))
        sups.append(float(np.abs(Phi).max()))
    ref = max(sups[-1], 1e-300)
    change = max(abs(a - sups[-1]) / ref for a in sups[:-1]) if sups[-1] > 0 else 0.0
    return {"n": list(ns), "sup": sups, "relative_change": change}


def weighted_gradient_ratio(cell: CellData, m: int, u: np.ndarray) -> float:
    """``max_j int |(grad Phi_j)^eps|^2 |u|^2 / (||u||^2 + eps^2 max|Phi_j|^2 ||Du||^2)`` with ``eps = 1/m``.

    ``u`` is a scalar field on the unit torus sampled with ``m`` times the
    cell resolution per axis.
    """
    n = cell.grid.n * m
    if u.shape != (n, n, n):
        raise GridError("u must be sampled on the fine grid of this eps")
    eps = 1.0 / m
    ops = SpectralOps(cell.grid)
    fine = SpectralOps(build_grid(n, 1.0, cell.grid.offset))
    w = 1.0 / n**3
    u2 = u**2
    du2 = float(np.sum(fine.grad(u) ** 2) * w)
    uu = float(np.sum(u2) * w)
    worst = 0.0
    for j in range(3):
        g2 = np.sum(ops.grad(cell.Phi[j]) ** 2, axis=0)
        num = float(np.sum(np.tile(g2, (m, m, m)) * u2) * w)
        den = uu + eps**2 * float(np.abs(cell.Phi[j]).max()) ** 2 * du2
        worst = max(worst, num / den)
    return worst


def lambda_h1_norm(cell: CellData) -> float:
    """Measured ``||Lambda||_{H1(Omega)}``."""
    ops = SpectralOps(cell.grid)
    L = cell.Lambda_real.reshape((12,) + cell.grid.shape)
    return float(np.sqrt(sum(ops.h1_norm(c) ** 2 for c in L)))

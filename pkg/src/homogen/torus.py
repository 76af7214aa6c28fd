"""Fine-scale and effective solvers for ``L_eps + I`` on the unit torus.

The fine operator is ``K^T g^eps K`` with ``K f = (curl mu0^{-1/2} f, div mu0^{1/2} f)``
and ``g = blockdiag(eta^{-1}, nu)``.  The complex symbol is
``b(D) = -i K``; all real-valued quantities below are invariant under that
phase.  ``eps = 1/m`` and the fine grid has ``m * res`` points per axis, so
``eta(x / eps)`` is sampled exactly from the cell grid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cell import CellData, solve_cell
from .fields import CoefficientSet, Grid, GridError, SpectralOps, build_grid, cross_matrix, sym_sqrt
from .krylov import ConvergenceError, SolveOptions, pcg
from .report import ConfigError, ConvergenceReport
from .smoothing import SteklovKernel

MIN_RESOLUTION = 8


@dataclass(frozen=True)
class EpsScale:
    """``eps = 1/m`` with ``resolution_per_cell`` grid points per period cell."""

    m: int
    resolution_per_cell: int = MIN_RESOLUTION

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError("m must be a positive integer")
        if self.resolution_per_cell < MIN_RESOLUTION:
            raise GridError(f"resolution per cell {self.resolution_per_cell} < {MIN_RESOLUTION} risks aliasing")

    @property
    def eps(self) -> float:
        return 1.0 / self.m

    @property
    def n(self) -> int:
        return self.m * self.resolution_per_cell

    @classmethod
    def from_eps(cls, eps: float, resolution_per_cell: int = MIN_RESOLUTION) -> "EpsScale":
        m = round(1.0 / eps)
        if abs(m * eps - 1.0) > 1e-9:
            raise ConfigError(f"eps = {eps} is not the reciprocal of an integer")
        return cls(m, resolution_per_cell)


def tile(a: np.ndarray, m: int) -> np.ndarray:
    """Repeat a cell array ``m`` times along each of its trailing three axes."""
    return np.tile(a, (1,) * (a.ndim - 3) + (m, m, m))


def _mv(m, v):
    return np.einsum("ij...,j...->i...", m, v)


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigSource:
    """Band-limited vector field ``sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x)``."""

    modes: tuple  # of (k, a, b) with k integer triple, a, b 3-vectors

    @classmethod
    def random(cls, seed: int = 0, n_modes: int = 4, kmax: int = 1) -> "TrigSource":
        rng = np.random.default_rng(seed)
        modes = [((0, 0, 0), tuple(rng.standard_normal(3)), (0.0, 0.0, 0.0))]
        for _ in range(n_modes):
            k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=3))
            modes.append((k, tuple(rng.standard_normal(3)), tuple(rng.standard_normal(3))))
        return cls(tuple(modes))

    def __call__(self, x1, x2, x3) -> np.ndarray:
        shape = np.broadcast(x1, x2, x3).shape
        out = np.zeros((3,) + shape)
        for k, a, b in self.modes:
            ph = 2 * np.pi * (k[0] * x1 + k[1] * x2 + k[2] * x3)
            c, s = np.cos(ph), np.sin(ph)
            for i in range(3):
                out[i] += a[i] * c + b[i] * s
        return out

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self(*grid.mesh())

    def to_dict(self) -> dict:
        return {"modes": [[list(k), list(a), list(b)] for k, a, b in self.modes]}


def leray_project(ops: SpectralOps, v: np.ndarray) -> np.ndarray:
    """Remove the gradient part of a periodic vector field (and keep its mean)."""
    vh = ops.fwd(v)
    kv = ops.kvec
    k2 = ops.k2
    kd = kv[0] * vh[0] + kv[1] * vh[1] + kv[2] * vh[2]
    coef = np.where(k2 > 0, kd / np.where(k2 > 0, k2, 1.0), 0.0)
    return ops.inv(np.stack([vh[i] - coef * kv[i] for i in range(3)]))


# ---------------------------------------------------------------------------
# constant-coefficient symbols
# ---------------------------------------------------------------------------


def effective_symbol(xi, eta0_inv, nu_under, mu0) -> np.ndarray:
    """``a(xi) = mu^{-1/2} r(xi)^T (eta0)^{-1} r(xi) mu^{-1/2} + mu^{1/2} xi nu xi^T mu^{1/2}``."""
    xi = np.asarray(xi, dtype=float)
    mm, mp = sym_sqrt(mu0, True), sym_sqrt(mu0)
    r = cross_matrix(xi)
    return mm @ r.T @ eta0_inv @ r @ mm + nu_under * (mp @ np.outer(xi, xi) @ mp)


class ConstantResolvent:
    """Exact per-mode inverse of ``K^T blockdiag(A, c) K + I`` for constant ``A, c``."""

    def __init__(self, ops: SpectralOps, mu0, A, c):
        mm, mp = sym_sqrt(mu0, True), sym_sqrt(mu0)
        kv = np.stack(np.broadcast_arrays(*ops.kvec))
        kk = np.moveaxis(kv, 0, -1)
        z = np.zeros_like(kv[0])
        R = np.moveaxis(np.stack([[z, -kv[2], kv[1]], [kv[2], z, -kv[0]], [-kv[1], kv[0], z]]), (0, 1), (-2, -1))
        Rm = R @ mm
        kp = kk @ mp
        P = np.swapaxes(Rm, -1, -2) @ np.asarray(A, dtype=float) @ Rm
        P += float(c) * kp[..., :, None] * kp[..., None, :]
        P += np.eye(3)
        self.inverse = np.linalg.inv(P)
        self.ops = ops

    def solve_hat(self, fh):
        return np.moveaxis(np.einsum("...ij,j...->...i", self.inverse, fh), -1, 0)

    def __call__(self, f):
        return self.ops.inv(self.solve_hat(self.ops.fwd(f)))


# ---------------------------------------------------------------------------
# fine operator
# ---------------------------------------------------------------------------


class FineOperator:
    """Matrix-free ``L_eps + I`` on the fine torus grid."""

    def __init__(self, coeff: CoefficientSet, scale: EpsScale):
        if coeff.grid.n != scale.resolution_per_cell or coeff.grid.period != 1.0:
            raise GridError("coefficients must be sampled on the unit cell grid with resolution_per_cell points")
        self.scale = scale
        self.grid = build_grid(scale.n, 1.0, coeff.grid.offset)
        self.ops = SpectralOps(self.grid)
        self.mm = coeff.mu0_isqrt
        self.mp = coeff.mu0_sqrt
        self.mu0 = coeff.mu0
        self.eta_inv = tile(coeff.eta_inv, scale.m)
        self.nu = tile(coeff.nu, scale.m)
        self.coeff = coeff
        A = coeff.eta_inv.mean(axis=(-3, -2, -1))
        self.precond = ConstantResolvent(self.ops, coeff.mu0, A, coeff.nu.mean())

    def K_hat(self, fh):
        ops = self.ops
        return ops.curl_hat(_mv(self.mm, fh)), ops.div_hat(_mv(self.mp, fh))

    def K(self, f):
        """``(curl mu0^{-1/2} f, div mu0^{1/2} f)`` as a 4-component array."""
        c, d = self.K_hat(self.ops.fwd(f))
        return np.concatenate([self.ops.inv(c), self.ops.inv(d)[None]])

    def flux(self, f):
        kf = self.K(f)
        return np.concatenate([_mv(self.eta_inv, kf[:3]), (self.nu * kf[3])[None]])

    def apply(self, f):
        ops = self.ops
        fh = ops.fwd(f)
        c, d = self.K_hat(fh)
        gc = ops.fwd(_mv(self.eta_inv, ops.inv(c)))
        gd = ops.fwd(self.nu * ops.inv(d))
        out = _mv(self.mm, ops.curl_hat(gc)) - _mv(self.mp, ops.grad_hat(gd)) + fh
        return ops.inv(out)

    def form(self, f, h=None) -> float:
        """``l_eps[f, h]`` (real inner product)."""
        kf = self.K(f)
        kh = kf if h is None else self.K(h)
        g = np.concatenate([_mv(self.eta_inv, kf[:3]), (self.nu * kf[3])[None]])
        return float(np.sum(g * kh) * self.grid.cell_weight)

    def solve(self, F, opts: SolveOptions | None = None):
        opts = opts or SolveOptions()
        return pcg(self.apply, F, self.precond, tol=opts.tol, maxiter=opts.cap(self.grid.n))


@dataclass
class SolveResult:
    fEps: np.ndarray
    f0: np.ndarray
    psiEps: np.ndarray
    fluxFine: np.ndarray
    fluxEff: np.ndarray
    residual: float
    iterations: int


def solve_L_eps_torus(coeff: CoefficientSet, scale: EpsScale, F: np.ndarray, opts: SolveOptions | None = None):
    """Solve ``(L_eps + I) f = F`` by preconditioned CG.

    Returns
    -------
    f : ndarray, shape (3, n, n, n)
    info : KrylovResult
    """
    op = FineOperator(coeff, scale)
    if F.shape != (3,) + op.grid.shape:
        raise GridError("right-hand side does not live on the fine grid")
    res = op.solve(F, opts)
    return res.x, res


def solve_L0_torus(cell: CellData, F: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Exact per-mode solve of ``(L0 + I) f0 = F``."""
    n = F.shape[-1]
    grid = grid or build_grid(n)
    ops = SpectralOps(grid)
    return ConstantResolvent(ops, cell.mu0, cell.g0[:3, :3], cell.g0[3, 3])(F)


# ---------------------------------------------------------------------------
# corrector and fluxes
# ---------------------------------------------------------------------------


def oscillating_term(M: np.ndarray, cell_grid: Grid, reps: int, eps: float, s: np.ndarray, ds=None):
    """``eps M(x / eps) s(x)`` and, when ``ds[j] = d_j s`` is given, its Jacobian.

    The Jacobian uses the product rule ``(d_y M)(x / eps) s + eps M(x / eps) d_j s``
    so that the oscillating factor is differentiated on the cell grid.
    ``M`` has shape ``(p, q) + cell shape`` and is tiled ``reps`` times per axis.
    """
    Mt = tile(M, reps)
    val = eps * _mv(Mt, s)
    if ds is None:
        return val
    cops = SpectralOps(cell_grid)
    Mh = cops.fwd(M)
    J = np.empty((M.shape[0], 3) + s.shape[1:])
    for j in range(3):
        dM = tile(cops.inv(1j * cops.kvec[j] * Mh), reps)
        J[:, j] = _mv(dM, s) + eps * _mv(Mt, ds[j])
    return val, J


def first_order_approx(cell: CellData, scale: EpsScale, f0: np.ndarray, smooth: bool = True,
                       with_gradient: bool = False):
    """``psi_eps = f0 + eps M^eps S_eps K f0`` where ``Lambda = i M`` and ``b(D) = -i K``.

    Parameters
    ----------
    smooth : bool
        Insert the Steklov smoothing between ``M^eps`` and ``K f0``.
    with_gradient : bool
        Also return ``J[i, j] = d_j psi_i``.
    """
    grid = build_grid(scale.n, 1.0, cell.grid.offset)
    if f0.shape != (3,) + grid.shape:
        raise GridError("f0 does not live on the fine grid of this scale")
    ops = SpectralOps(grid)
    mm, mp = sym_sqrt(cell.mu0, True), sym_sqrt(cell.mu0)
    fh = ops.fwd(f0)
    s_hat = np.concatenate([ops.curl_hat(_mv(mm, fh)), ops.div_hat(_mv(mp, fh))[None]])
    if smooth:
        s_hat = SteklovKernel(scale.eps, grid).rmultiplier * s_hat
    s = ops.inv(s_hat)
    M = cell.Lambda_real
    if not with_gradient:
        return f0 + oscillating_term(M, cell.grid, scale.m, scale.eps, s)
    ds = [ops.inv(1j * k * s_hat) for k in ops.kvec]
    corr, Jc = oscillating_term(M, cell.grid, scale.m, scale.eps, s, ds)
    return f0 + corr, ops.jacobian(f0) + Jc


def flux_pair(coeff: CoefficientSet, cell: CellData, scale: EpsScale, f_eps: np.ndarray, f0: np.ndarray):
    """Fine flux ``g^eps K f_eps`` and effective flux ``g_tilde^eps K f0`` (no smoothing)."""
    op = FineOperator(coeff, scale)
    fine = op.flux(f_eps)
    k0 = op.K(f0)
    gt = tile(cell.gTilde[:3, :3], scale.m)
    eff = np.concatenate([_mv(gt, k0[:3]), (cell.nuUnder * k0[3])[None]])
    return fine, eff


# ---------------------------------------------------------------------------
# norms and the rate study
# ---------------------------------------------------------------------------


def l2(a: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(a**2) * grid.cell_weight))


def h1_from_parts(e: np.ndarray, de: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt((np.sum(e**2) + np.sum(de**2)) * grid.cell_weight))


def torus_level(coeff: CoefficientSet, cell: CellData, scale: EpsScale, source, opts=None, smooth=True):
    """Solve one ``eps`` level and return the three error norms and solve data."""
    op = FineOperator(coeff, scale)
    F = source.on_grid(op.grid) if callable(getattr(source, "on_grid", None)) else source
    res = op.solve(F, opts)
    f = res.x
    f0 = solve_L0_torus(cell, F, op.grid)
    psi, Jpsi = first_order_approx(cell, scale, f0, smooth=smooth, with_gradient=True)
    Jf = op.ops.jacobian(f)
    fine, eff = flux_pair(coeff, cell, scale, f, f0)
    g = op.grid
    errs = {
        "err_l2": l2(f - f0, g),
        "err_h1_corr": h1_from_parts(f - psi, Jf - Jpsi, g),
        "err_flux": l2(fine - eff, g),
    }
    energy = op.form(f) + float(np.sum(f * f) * g.cell_weight)
    work = float(np.sum(F * f) * g.cell_weight)
    info = {
        "iterations": res.iterations,
        "residual": res.residual,
        "energy_identity_gap": abs(energy - work) / max(abs(work), 1e-300),
        "norm_F": l2(F, g),
    }
    return errs, info, SolveResult(f, f0, psi, fine, eff, res.residual, res.iterations)


def torus_rate_study(coeff: CoefficientSet, source, scales, opts: SolveOptions | None = None,
                     cell: CellData | None = None) -> ConvergenceReport:
    """Errors ``||f_eps - f0||``, ``||f_eps - psi_eps||_H1`` and the flux error per level."""
    scales = list(scales)
    if len(scales) < 3:
        raise ConfigError("a rate study needs at least three eps levels")
    cell = cell or solve_cell(coeff, opts)
    cols = {"err_l2": [], "err_h1_corr": [], "err_flux": []}
    levels = []
    for sc in scales:
        t0 = time.perf_counter()
        try:
            errs, info, _ = torus_level(coeff, cell, sc, source, opts)
        except ConvergenceError as exc:
            raise ConvergenceError(f"level eps={sc.eps:.6g}: {exc}") from exc
        for k in cols:
            cols[k].append(errs[k])
        info["seconds"] = round(time.perf_counter() - t0, 3)
        levels.append(info)
    return ConvergenceReport([s.eps for s in scales], cols,
                             {"setting": "torus", "levels": levels, "eta0": cell.eta0.tolist()})

"""The mixed boundary-value problem for ``L_eps + I`` on the unit cube.

Unknowns are the coefficients of ``f`` in the ``V`` layout of ``cube.CubeOps``.
Its normal component is a sine series across each face, so
``(mu0^{1/2} f)_n = 0`` holds exactly for diagonal ``mu0``; the tangential
condition is natural and is never imposed.  The quadratic form is evaluated
with the coefficient products taken pointwise at the midpoints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cell import CellData, solve_cell
from .cube import E_TYPES, Q_TYPE, V_TYPES, CubeOps, flip
from .fields import CoefficientSet, GridError, Lattice, SpectralOps, build_grid
from .krylov import ConvergenceError, SolveOptions, pcg
from .report import ConfigError, ConvergenceReport
from .smoothing import SteklovKernel, random_smooth_field
from .torus import EpsScale, oscillating_term, tile

R1 = Lattice().r1


def _mv(m, v):
    return np.einsum("ij...,j...->i...", m, v)


@dataclass(frozen=True)
class DomainConfig:
    """Cube geometry and admissibility thresholds.

    Parameters
    ----------
    eps0 : float
        Width below which the boundary strip is a collar of the faces.
    kappa : float
        Bound on ``eps |grad theta_eps|`` for the boundary cut-off.
    require_diagonal_mu0 : bool
        Reject non-diagonal ``mu0`` (the face condition decouples only then).
    """

    eps0: float = 0.25
    kappa: float = 1.5
    require_diagonal_mu0: bool = True
    box: float = 1.0

    def __post_init__(self):
        if self.box != 1.0:
            raise ConfigError("only the unit cube is supported")
        if not 0 < self.eps0 <= 0.5:
            raise ConfigError("eps0 must lie in (0, 1/2]")

    @property
    def eps1(self) -> float:
        return self.eps0 / (1.0 + R1)

    def check_eps(self, eps: float, limit: str = "eps1"):
        lim = self.eps1 if limit == "eps1" else self.eps0
        if not 0 < eps <= lim + 1e-12:
            raise ConfigError(f"eps = {eps} exceeds {limit} = {lim:.4f}")


def _check_mu0(mu0, cfg: DomainConfig):
    mu0 = np.asarray(mu0)
    if cfg.require_diagonal_mu0 and np.abs(mu0 - np.diag(np.diag(mu0))).max() > 0:
        raise ConfigError("the cube solver requires a diagonal mu0")
    return np.sqrt(np.diag(mu0))


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


class CubeResolvent:
    """Exact per-mode inverse of ``K^T blockdiag(A, c) K + I`` for diagonal ``A`` and ``mu0``."""

    def __init__(self, ops: CubeOps, mu_sqrt, A_diag, c):
        d = np.stack(np.broadcast_arrays(*ops.d))
        dd = np.moveaxis(d, 0, -1)
        z = np.zeros_like(d[0])
        R = np.moveaxis(np.stack([[z, -d[2], d[1]], [d[2], z, -d[0]], [-d[1], d[0], z]]), (0, 1), (-2, -1))
        mm = np.diag(1.0 / mu_sqrt)
        mp = np.diag(mu_sqrt)
        Rm = R @ mm
        dp = dd @ mp
        P = np.swapaxes(Rm, -1, -2) @ np.diag(A_diag) @ Rm + c * dp[..., :, None] * dp[..., None, :]
        valid = np.stack([ops.mask(t) for t in V_TYPES], axis=-1).astype(float)
        P = valid[..., :, None] * P * valid[..., None, :]
        P += np.eye(3)
        self.inverse = np.linalg.inv(P)
        self.valid = np.moveaxis(valid, -1, 0)

    def __call__(self, fc):
        return self.valid * np.moveaxis(np.einsum("...ij,j...->...i", self.inverse, fc), -1, 0)


class CubeOperator:
    """Matrix-free ``L + I`` on the cube for sampled or constant coefficients.

    Parameters
    ----------
    ops : CubeOps
    mu_sqrt : ndarray, shape (3,)
        Square roots of the diagonal of ``mu0``.
    eta_inv : ndarray, shape (3, 3) or (3, 3, N, N, N)
    nu : float or ndarray, shape (N, N, N)
    """

    def __init__(self, ops: CubeOps, mu_sqrt, eta_inv, nu):
        self.ops = ops
        self.mu_sqrt = np.asarray(mu_sqrt, dtype=float)
        self.eta_inv = np.asarray(eta_inv, dtype=float)
        self.nu = nu
        self.const = self.eta_inv.ndim == 2 and np.ndim(nu) == 0
        A = self.eta_inv if self.eta_inv.ndim == 2 else self.eta_inv.mean(axis=(-3, -2, -1))
        c = float(np.mean(nu))
        self.diagonal = bool(np.abs(A - np.diag(np.diag(A))).max() == 0)
        self.precond = CubeResolvent(ops, self.mu_sqrt, np.diag(A), c)
        self.valid = self.precond.valid
        self._ms = self.mu_sqrt[:, None, None, None]

    def K(self, fc):
        """``(curl mu0^{-1/2} f, div mu0^{1/2} f)`` in ``E`` and ``Q`` coefficients."""
        return self.ops.curl_V(fc / self._ms), self.ops.div_V(fc * self._ms)

    def K_phys(self, fc):
        w, s = self.K(fc)
        return self.ops.vec_to_phys(w, E_TYPES), self.ops.to_phys(s, Q_TYPE)

    def g_phys(self, w, s):
        gw = _mv(self.eta_inv, w) if self.eta_inv.ndim > 2 else np.einsum("ij,j...->i...", self.eta_inv, w)
        return gw, self.nu * s

    def apply(self, fc):
        ops = self.ops
        if self.const and self.diagonal:
            w, s = self.K(fc)
            gw = np.diag(self.eta_inv)[:, None, None, None] * w
            gs = float(self.nu) * s
        else:
            w, s = self.K_phys(fc)
            gw, gs = self.g_phys(w, s)
            gw = ops.vec_to_coef(gw, E_TYPES)
            gs = ops.to_coef(gs, Q_TYPE)
        return ops.curl_E(gw) / self._ms + ops.div_T(gs) * self._ms + fc

    def form(self, fc) -> float:
        w, s = self.K_phys(fc)
        gw, gs = self.g_phys(w, s)
        return float((np.sum(gw * w) + np.sum(gs * s)) / self.ops.N**3)

    def solve(self, Fc, opts: SolveOptions | None = None):
        opts = opts or SolveOptions()
        if self.const and self.diagonal:
            x = self.precond(Fc)
            r = np.linalg.norm(Fc - self.apply(x)) / max(np.linalg.norm(Fc), 1e-300)
            from .krylov import KrylovResult

            return KrylovResult(x, 0, float(r))
        return pcg(self.apply, Fc, self.precond, tol=opts.tol, maxiter=opts.cap(self.ops.N))


def fine_operator(coeff: CoefficientSet, scale: EpsScale, cfg: DomainConfig) -> CubeOperator:
    """Operator with ``eta(x / eps)`` sampled at the cube midpoints."""
    if coeff.grid.n != scale.resolution_per_cell or abs(coeff.grid.offset - 0.5) > 1e-15:
        raise GridError("cube coefficients must be sampled on the cell grid with offset 1/2")
    ms = _check_mu0(coeff.mu0, cfg)
    ops = CubeOps(scale.n)
    return CubeOperator(ops, ms, tile(coeff.eta_inv, scale.m), tile(coeff.nu, scale.m))


def effective_operator(cell: CellData, N: int, cfg: DomainConfig) -> CubeOperator:
    ms = _check_mu0(cell.mu0, cfg)
    return CubeOperator(CubeOps(N), ms, cell.g0[:3, :3], float(cell.g0[3, 3]))


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubeSource:
    """Smooth right-hand side built from low modes of the ``V`` layout.

    Component ``i`` is a combination of ``prod_j b_j(pi q_j x_j)`` where
    ``b_j`` is ``sin`` along ``j == i`` and ``cos`` otherwise.
    """

    modes: tuple  # of (component, (q1, q2, q3), amplitude)

    @classmethod
    def random(cls, seed: int = 0, n_modes: int = 6, qmax: int = 2) -> "CubeSource":
        rng = np.random.default_rng(seed)
        modes = []
        for _ in range(n_modes):
            i = int(rng.integers(0, 3))
            q = [int(v) for v in rng.integers(0, qmax + 1, size=3)]
            q[i] = max(q[i], 1)
            modes.append((i, tuple(q), float(rng.standard_normal())))
        return cls(tuple(modes))

    def __call__(self, x1, x2, x3) -> np.ndarray:
        xs = (x1, x2, x3)
        out = np.zeros((3,) + np.broadcast(x1, x2, x3).shape)
        for i, q, a in self.modes:
            term = a
            for j in range(3):
                f = np.sin if j == i else np.cos
                term = term * f(np.pi * q[j] * xs[j])
            out[i] += term
        return out

    def on_cube(self, ops: CubeOps) -> np.ndarray:
        x = ops.points
        return self(x[:, None, None], x[None, :, None], x[None, None, :])

    def to_dict(self) -> dict:
        return {"modes": [[i, list(q), a] for i, q, a in self.modes]}


def _source_coef(source, ops: CubeOps) -> np.ndarray:
    F = source.on_cube(ops) if hasattr(source, "on_cube") else np.asarray(source)
    if F.shape != (3,) + (ops.N,) * 3:
        raise GridError("right-hand side does not match the cube grid")
    return ops.vec_to_coef(F, V_TYPES)


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------


def solve_L_eps_domain(coeff: CoefficientSet, scale: EpsScale, F, cfg: DomainConfig | None = None,
                       opts: SolveOptions | None = None):
    """Minimize ``l_eps[f, f] + ||f||^2 - 2 (F, f)`` over ``V``; returns ``(coefficients, info)``."""
    cfg = cfg or DomainConfig()
    op = fine_operator(coeff, scale, cfg)
    res = op.solve(_source_coef(F, op.ops), opts)
    return res.x, res


def solve_L0_domain(cell: CellData, F, N: int, cfg: DomainConfig | None = None, opts: SolveOptions | None = None):
    """Effective solve; returns ``(f0 coefficients, f0_tilde samples on the period-2 torus)``."""
    cfg = cfg or DomainConfig()
    op = effective_operator(cell, N, cfg)
    res = op.solve(_source_coef(F, op.ops), opts)
    return res.x, extend_to_torus(op.ops, res.x, V_TYPES)


def extend_to_torus(ops: CubeOps, c: np.ndarray, types) -> np.ndarray:
    """Samples of the odd/even reflection on the period-2 torus.

    The torus grid has ``2N`` points ``(i + 1/2) / N``; the first ``N`` per
    axis are the cube midpoints.
    """
    out = []
    for ci, t in zip(c, types):
        a = ops.to_phys(ci, t)
        for ax, kind in enumerate(t):
            mirror = np.flip(a, axis=ax)
            a = np.concatenate([a, -mirror if kind == "S" else mirror], axis=ax)
        out.append(a)
    return np.stack(out)


# ---------------------------------------------------------------------------
# corrector, fluxes, errors
# ---------------------------------------------------------------------------


def _corrector_source(op: CubeOperator, f0c, eps, smooth=True):
    """``S_eps K f0_tilde`` in ``E``/``Q`` coefficients (the reflection is implicit in the basis)."""
    w, s = op.K(f0c)
    if smooth:
        mult = op.ops.steklov(eps)
        w, s = w * mult, s * mult
    return w, s


def domain_first_order_approx(cell: CellData, scale: EpsScale, f0c, cfg: DomainConfig | None = None,
                              smooth: bool = True, with_gradient: bool = False):
    """``psi_eps`` restricted to the cube, at the midpoints.

    Returns ``psi`` of shape ``(3, N, N, N)`` and, if requested, its Jacobian
    computed with the product rule.
    """
    cfg = cfg or DomainConfig()
    op = effective_operator(cell, scale.n, cfg)
    ops = op.ops
    w, s = _corrector_source(op, f0c, scale.eps, smooth)
    sv = np.concatenate([ops.vec_to_phys(w, E_TYPES), ops.to_phys(s, Q_TYPE)[None]])
    f0 = ops.vec_to_phys(f0c, V_TYPES)
    if not with_gradient:
        return f0 + oscillating_term(cell.Lambda_real, cell.grid, scale.m, scale.eps, sv)
    types = E_TYPES + (Q_TYPE,)
    comps = list(w) + [s]
    ds = [np.stack([ops.to_phys(*ops.partial(c, t, j)) for c, t in zip(comps, types)]) for j in range(3)]
    corr, Jc = oscillating_term(cell.Lambda_real, cell.grid, scale.m, scale.eps, sv, ds)
    return f0 + corr, ops.jacobian_phys(f0c, V_TYPES) + Jc


def domain_fluxes(fine: CubeOperator, eff: CubeOperator, cell: CellData, scale: EpsScale, fc, f0c):
    """``(eta^eps)^{-1} curl mu0^{-1/2} f_eps`` against ``(Sigma^eps + eta0^{-1}) curl mu0^{-1/2} f0``
    and ``nu^eps div mu0^{1/2} f_eps`` against ``nu_under div mu0^{1/2} f0``."""
    w, s = fine.K_phys(fc)
    gw, gs = fine.g_phys(w, s)
    w0, s0 = eff.K_phys(f0c)
    gt = tile(cell.gTilde[:3, :3], scale.m)
    return (gw, _mv(gt, w0)), (gs, cell.nuUnder * s0)


def domain_level(coeff: CoefficientSet, cell: CellData, scale: EpsScale, source, cfg=None, opts=None):
    cfg = cfg or DomainConfig()
    fine = fine_operator(coeff, scale, cfg)
    eff = effective_operator(cell, scale.n, cfg)
    ops = fine.ops
    Fc = _source_coef(source, ops)
    res = fine.solve(Fc, opts)
    fc = res.x
    f0c = eff.solve(Fc, opts).x
    psi, Jpsi = domain_first_order_approx(cell, scale, f0c, cfg, with_gradient=True)
    f = ops.vec_to_phys(fc, V_TYPES)
    Jf = ops.jacobian_phys(fc, V_TYPES)
    (u, u0), (d, d0) = domain_fluxes(fine, eff, cell, scale, fc, f0c)
    errs = {
        "err_l2": ops.l2_coef(fc - f0c),
        "err_h1_corr": float(np.sqrt(ops.l2_phys(f - psi) ** 2 + ops.l2_phys(Jf - Jpsi) ** 2)),
        "err_flux_eta": ops.l2_phys(u - u0),
        "err_flux_nu": ops.l2_phys(d - d0),
    }
    energy = fine.form(fc) + float(np.sum(fc**2) / ops.N**3)
    work = float(np.sum(Fc * fc) / ops.N**3)
    info = {
        "iterations": res.iterations,
        "residual": res.residual,
        "energy_identity_gap": abs(energy - work) / max(abs(work), 1e-300),
        "norm_F": ops.l2_coef(Fc),
    }
    return errs, info, (fc, f0c, psi)


def domain_rate_study(coeff: CoefficientSet, source, scales, cfg: DomainConfig | None = None,
                      opts: SolveOptions | None = None, cell: CellData | None = None) -> ConvergenceReport:
    """Errors of the zero-order, first-order and flux approximations on the cube."""
    cfg = cfg or DomainConfig()
    scales = list(scales)
    if len(scales) < 3:
        raise ConfigError("a rate study needs at least three eps levels")
    for sc in scales:
        cfg.check_eps(sc.eps)
    cell = cell or solve_cell(coeff, opts)
    cols = {"err_l2": [], "err_h1_corr": [], "err_flux_eta": [], "err_flux_nu": []}
    levels = []
    for sc in scales:
        t0 = time.perf_counter()
        try:
            errs, info, _ = domain_level(coeff, cell, sc, source, cfg, opts)
        except ConvergenceError as exc:
            raise ConvergenceError(f"level eps={sc.eps:.6g}: {exc}") from exc
        for k in cols:
            cols[k].append(errs[k])
        info["seconds"] = round(time.perf_counter() - t0, 3)
        levels.append(info)
    return ConvergenceReport([s.eps for s in scales], cols,
                             {"setting": "cube", "levels": levels, "eta0": cell.eta0.tolist()})


@dataclass
class DomainSolveResult:
    """Fine and effective cube solutions for one ``eps`` level (coefficients in the ``V`` layout)."""

    fEps: np.ndarray
    f0: np.ndarray
    f0Tilde: np.ndarray
    psiEps: np.ndarray
    fluxes: tuple
    normal_trace: float
    iterations: int


def normal_trace_max(ops: CubeOps, fc: np.ndarray) -> float:
    """Largest normal component of ``f`` on the faces, evaluated from its series."""
    N = ops.N
    q = np.arange(N + 1)
    worst = 0.0
    for i, t in enumerate(V_TYPES):
        norm_scale = np.where(q == N, np.sqrt(1.0 / N), np.sqrt(2.0 / N))
        for x in (0.0, 1.0):
            basis = np.sin(np.pi * q * x) * norm_scale  # the normal axis carries the sine series
            val = np.tensordot(basis, fc[i], axes=([0], [i]))
            worst = max(worst, float(np.abs(val).max()))
    return worst


def project_normal_trace(ops: CubeOps, fc: np.ndarray) -> np.ndarray:
    """Zero every coefficient slot that would give ``f`` a nonzero normal trace."""
    return fc * np.stack([ops.mask(t) for t in V_TYPES])


def solve_domain_pair(coeff: CoefficientSet, cell: CellData, scale: EpsScale, source,
                      cfg: DomainConfig | None = None, opts: SolveOptions | None = None) -> DomainSolveResult:
    cfg = cfg or DomainConfig()
    fine = fine_operator(coeff, scale, cfg)
    eff = effective_operator(cell, scale.n, cfg)
    Fc = _source_coef(source, fine.ops)
    res = fine.solve(Fc, opts)
    f0c = eff.solve(Fc, opts).x
    psi = domain_first_order_approx(cell, scale, f0c, cfg)
    fl = domain_fluxes(fine, eff, cell, scale, res.x, f0c)
    return DomainSolveResult(res.x, f0c, extend_to_torus(fine.ops, f0c, V_TYPES), psi, fl,
                             normal_trace_max(fine.ops, res.x), res.iterations)


# ---------------------------------------------------------------------------
# boundary-layer diagnostics
# ---------------------------------------------------------------------------


def _face_distance(ops: CubeOps) -> np.ndarray:
    x = ops.points
    d1 = np.minimum(x, 1.0 - x)
    return np.minimum(np.minimum(d1[:, None, None], d1[None, :, None]), d1[None, None, :])


def boundary_strip_norm(u: np.ndarray, eps: float, cfg: DomainConfig | None = None) -> float:
    """``int_{B_eps} |u|^2`` over the inner collar ``B_eps`` of the unit cube (midpoint rule)."""
    cfg = cfg or DomainConfig()
    cfg.check_eps(eps, "eps0")
    u = np.asarray(u, dtype=float)
    N = u.shape[-1]
    ops = CubeOps(N)
    strip = _face_distance(ops) < eps
    return float(np.sum(np.reshape(u**2, (-1, N, N, N)).sum(axis=0)[strip]) / N**3)


def random_cube_function(ops: CubeOps, rng: np.random.Generator, qmax: int = 6, decay: float = 0.15) -> np.ndarray:
    """Coefficients (cosine layout) of a smooth random scalar function on the cube."""
    N = ops.N
    q = np.arange(N + 1)
    env = np.exp(-decay * (q[:, None, None] ** 2 + q[None, :, None] ** 2 + q[None, None, :] ** 2))
    keep = (q[:, None, None] <= qmax) & (q[None, :, None] <= qmax) & (q[None, None, :] <= qmax)
    c = rng.standard_normal((N + 1,) * 3) * env * keep * ops.mask(Q_TYPE)
    return c * N**1.5 / np.sqrt(np.sum(c**2))


def strip_ratio(ops: CubeOps, uc: np.ndarray, eps: float, cfg: DomainConfig | None = None) -> float:
    """``int_{B_eps}|u|^2 / (eps ||u||_H1 ||u||_L2)`` for a cosine-layout scalar ``u``."""
    u = ops.to_phys(uc, Q_TYPE)
    strip = boundary_strip_norm(u, eps, cfg)
    return strip / (eps * ops.h1_coef(uc[None], (Q_TYPE,)) * ops.l2_coef(uc))


def _torus_distance(n: int, lo: float, hi: float):
    """Distance to the boundary of ``[lo, hi]^3`` for midpoints of a period-2 grid, and its gradient."""
    x = (np.arange(n) + 0.5) * 2.0 / n
    x = np.where(x < 0.5 * (lo + hi) + 1.0, x, x - 2.0)
    X = np.meshgrid(x, x, x, indexing="ij", sparse=True)
    inside = np.ones((n, n, n), dtype=bool)
    for xi in X:
        inside = inside & (xi >= lo) & (xi <= hi)
    # outside: euclidean distance to the box
    gap = [np.maximum(np.maximum(lo - xi, xi - hi), 0.0) for xi in X]
    d_out = np.sqrt(gap[0] ** 2 + gap[1] ** 2 + gap[2] ** 2)
    face = [np.minimum(xi - lo, hi - xi) for xi in X]
    d_in = np.minimum(np.minimum(face[0], face[1]), face[2])
    return np.where(inside, d_in, d_out), X, inside


def lemma_strip_smoothing_ratio(cell: CellData, eps: float, rng: np.random.Generator, n_fields: int = 10,
                                cfg: DomainConfig | None = None) -> float:
    """Largest ``int_{(dO)_eps} |h^eps|^2 |S_eps u|^2 / (eps ||h||^2 ||u||_H1 ||u||)``.

    Computed on the period-2 torus containing the cube ``[1/2, 3/2]^3``; ``h``
    ranges over the nonzero entries of ``Lambda`` and ``u`` over random smooth
    periodic fields.
    """
    cfg = cfg or DomainConfig()
    cfg.check_eps(eps)
    scale = EpsScale.from_eps(eps, cell.grid.n)
    n = 2 * scale.n
    grid = build_grid(n, 2.0, cell.grid.offset)
    dist, _, _ = _torus_distance(n, 0.5, 1.5)
    strip = np.nonzero(dist < eps)
    res = cell.grid.n
    cell_idx = tuple(i % res for i in strip)
    ops = SpectralOps(grid)
    kern = SteklovKernel(eps, grid)
    H = cell.Lambda_real.reshape((12,) + cell.grid.shape)
    h_l2 = np.sqrt(np.mean(H**2, axis=(-3, -2, -1)))
    live = h_l2 > 1e-12 * max(h_l2.max(), 1e-300)
    if not np.any(live):
        return 0.0
    h2 = H[live][:, cell_idx[0], cell_idx[1], cell_idx[2]] ** 2
    worst = 0.0
    w = grid.cell_weight
    for _ in range(n_fields):
        u = random_smooth_field(grid, rng, decay=0.05, cutoff=8)
        su2 = kern.apply_array(u)[strip] ** 2
        num = (h2 * su2).sum(axis=1) * w
        u_l2 = np.sqrt(np.sum(u**2) * w)
        u_h1 = ops.h1_norm(u)
        ratio = num / (eps * h_l2[live] ** 2 * u_h1 * u_l2)
        worst = max(worst, float(ratio.max()))
    return worst


def _chi(t):
    return 1.0 - 3.0 * t**2 + 2.0 * t**3


def _dchi(t):
    return -6.0 * t + 6.0 * t**2


def _gather_reflected(ops: CubeOps, a: np.ndarray, t: str, idx) -> np.ndarray:
    """Values of the reflection of a cube field (layout ``t``) at period-2 torus indices."""
    N = ops.N
    ci, sign = [], 1.0
    for ax, i in enumerate(idx):
        mirrored = i >= N
        ci.append(np.where(mirrored, 2 * N - 1 - i, i))
        if t[ax] == "S":
            sign = sign * np.where(mirrored, -1.0, 1.0)
    return sign * a[ci[0], ci[1], ci[2]]


def cutoff_and_phi_diagnostic(cell: CellData, scale: EpsScale, f0c: np.ndarray, cfg: DomainConfig | None = None,
                              norm_F: float = 1.0) -> dict:
    """Build the boundary cut-off ``theta_eps`` and ``phi_eps = eps theta_eps M^eps S_eps K f0_tilde``.

    Everything is evaluated on the period-2 torus that carries the reflected
    ``f0_tilde`` (the cube is ``[0, 1]^3``, its mirror image fills the rest).
    Returns the norms of ``phi_eps`` and the ratios against ``eps ||F||`` and
    ``sqrt(eps) ||F||``, plus cut-off checks.
    """
    cfg = cfg or DomainConfig()
    cfg.check_eps(scale.eps)
    eps = scale.eps
    eff = effective_operator(cell, scale.n, cfg)
    ops = eff.ops
    N = ops.N
    w, s = _corrector_source(eff, f0c, eps, smooth=True)
    comps = list(w) + [s]
    types = E_TYPES + (Q_TYPE,)
    cube_vals = [ops.to_phys(c, t) for c, t in zip(comps, types)]
    cube_d = [[ops.to_phys(*ops.partial(c, t, j)) for c, t in zip(comps, types)] for j in range(3)]
    dtypes = [[flip(t, j) for t in types] for j in range(3)]

    dist, X, inside = _torus_distance(2 * N, 0.0, 1.0)
    strip = np.nonzero(dist < eps)
    d = dist[strip]
    theta = _chi(d / eps)
    # gradient of the distance: axis normal inside, radial direction outside
    xs = [np.broadcast_to(xi, dist.shape)[strip] for xi in X]
    ins = inside[strip]
    grad_d = np.zeros((3, d.size))
    face = np.stack([np.minimum(xi, 1.0 - xi) for xi in xs])
    near = np.argmin(face, axis=0)
    for ax in range(3):
        sgn = np.where(xs[ax] < 0.5, 1.0, -1.0)
        grad_d[ax] = np.where(ins & (near == ax), sgn, 0.0)
        gap = np.where(xs[ax] < 0.0, xs[ax], np.where(xs[ax] > 1.0, xs[ax] - 1.0, 0.0))
        grad_d[ax] = np.where(ins, grad_d[ax], gap / np.maximum(d, 1e-300))
    dtheta = _dchi(d / eps) / eps * grad_d

    sv = np.stack([_gather_reflected(ops, a, t, strip) for a, t in zip(cube_vals, types)])
    dsv = [np.stack([_gather_reflected(ops, a, t, strip) for a, t in zip(cube_d[j], dtypes[j])]) for j in range(3)]
    res = cell.grid.n
    cidx = tuple(i % res for i in strip)
    M = cell.Lambda_real[:, :, cidx[0], cidx[1], cidx[2]]
    cops = SpectralOps(cell.grid)
    Mh = cops.fwd(cell.Lambda_real)
    Ms = _mv(M, sv)
    phi = eps * theta * Ms
    grad = np.empty((3, 3, d.size))
    for j in range(3):
        dM = cops.inv(1j * cops.kvec[j] * Mh)[:, :, cidx[0], cidx[1], cidx[2]]
        grad[:, j] = eps * dtheta[j] * Ms + theta * _mv(dM, sv) + eps * theta * _mv(M, dsv[j])
    wgt = ops.h**3
    l2 = float(np.sqrt(np.sum(phi**2) * wgt))
    h1 = float(np.sqrt((np.sum(phi**2) + np.sum(grad**2)) * wgt))
    return {
        "eps": eps,
        "phi_l2": l2,
        "phi_h1": h1,
        "ratio_l2": l2 / (eps * norm_F),
        "ratio_h1": h1 / (np.sqrt(eps) * norm_F),
        "theta_min": float(theta.min()),
        "theta_max": float(theta.max()),
        "theta_on_boundary": float(_chi(0.0)),
        "kappa_measured": float(eps * np.sqrt(np.sum(dtheta**2, axis=0)).max()),
        "kappa": cfg.kappa,
    }

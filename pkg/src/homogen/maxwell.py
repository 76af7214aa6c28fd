"""Stationary Maxwell system with a solenoidal current and no charge term.

With ``nu = 1`` and ``F = mu0^{-1/2} r`` the second-order problem for
``f_eps`` reproduces the Maxwell fields

    z = mu0^{1/2} f,  v = mu0^{-1/2} f,  w = curl v,  u = eta^{-1} w.

The factor ``i`` that relates ``f_eps`` to the complex Maxwell solution is
dropped; every reported error is the norm of a difference, so nothing changes.
"""

from __future__ import annotations

import time
from math import comb
from dataclasses import dataclass, field

import numpy as np

from .cell import CellData, solve_cell
from .cube import E_TYPES, V_TYPES, CubeOps
from .domain import DomainConfig, _check_mu0, effective_operator, fine_operator, normal_trace_max
from .fields import CoefficientSet, GridError, SpectralOps, build_grid, sym_sqrt
from .krylov import ConvergenceError, SolveOptions
from .report import ConfigError, ConvergenceReport, fit_order
from .smoothing import SteklovKernel
from .torus import EpsScale, FineOperator, leray_project, oscillating_term, solve_L0_torus, tile

SETTINGS = ("torus", "cube")
COLUMNS = ("err_v_l2", "err_z_l2", "err_v_h1c", "err_z_h1c", "err_u_l2c", "err_w_l2c")


def _mv(m, v):
    return np.einsum("ij...,j...->i...", m, v)


def _cmv(m, v):
    return np.einsum("ij,j...->i...", m, v)


@dataclass
class MaxwellFields:
    """Electric intensity ``u``, displacement ``w``, magnetic intensity ``v`` and displacement ``z``.

    All fields are sampled at the grid points of the setting, shape ``(3, n, n, n)``.
    """

    u: np.ndarray
    w: np.ndarray
    v: np.ndarray
    z: np.ndarray
    level: str
    div_w: float = 0.0
    div_z: float = 0.0
    normal_trace_z: float = 0.0
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------


def smoothstep(s, order: int):
    """``s^order sum_{k<order} C(order-1+k, k) (1-s)^k``, rising from 0 to 1 on ``[0, 1]``."""
    return s**order * sum(comb(order - 1 + k, k) * (1 - s) ** k for k in range(order))


@dataclass(frozen=True)
class PotentialSpec:
    """Vector potential ``A = prod_j g(sin(pi x_j)^2) sum a cos(2 pi k.x + phase)``.

    ``g`` is the smoothstep polynomial of order ``power``: ``g(s) ~ s^power``
    near zero and ``g(1) = 1`` with vanishing derivatives there. The profile is
    flat in the interior and vanishes to order ``2 power`` on every face, so
    ``r = curl A`` is negligible within a cell of the boundary. The torus uses
    the trigonometric part only.
    """

    modes: tuple  # of ((a1, a2, a3), (k1, k2, k3), phase)
    power: int = 4
    seed: int | None = None

    @classmethod
    def random(cls, seed: int = 0, n_modes: int = 3, kmax: int = 1, power: int = 4) -> "PotentialSpec":
        rng = np.random.default_rng(seed)
        modes = []
        for _ in range(n_modes):
            a = tuple(float(x) for x in rng.standard_normal(3))
            k = tuple(int(x) for x in rng.integers(-kmax, kmax + 1, size=3))
            modes.append((a, k, float(rng.uniform(0, 2 * np.pi))))
        return cls(tuple(modes), power, seed)

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls(())

    def trig(self, x1, x2, x3) -> np.ndarray:
        out = np.zeros((3,) + np.broadcast(x1, x2, x3).shape)
        for a, k, ph in self.modes:
            c = np.cos(2 * np.pi * (k[0] * x1 + k[1] * x2 + k[2] * x3) + ph)
            for i in range(3):
                out[i] += a[i] * c
        return out

    def on_cube(self, ops: CubeOps) -> np.ndarray:
        if self.power < 1:
            raise ConfigError("the potential must vanish on the boundary (power >= 1)")
        x = ops.points
        X = (x[:, None, None], x[None, :, None], x[None, None, :])
        prof = 1.0
        for xi in X:
            prof = prof * smoothstep(np.sin(np.pi * xi) ** 2, self.power)
        return prof * self.trig(*X)

    def to_dict(self) -> dict:
        return {"modes": [[list(a), list(k), ph] for a, k, ph in self.modes], "power": self.power,
                "seed": self.seed}


@dataclass
class SolenoidalSource:
    """Divergence-free current ``r`` with zero normal trace.

    On the cube ``r`` holds ``V``-layout coefficients; on the torus it holds samples.
    """

    r: np.ndarray
    setting: str
    provenance: str
    div_norm: float
    boundary_max: float = 0.0

    def physical(self, ops=None) -> np.ndarray:
        if self.setting == "cube":
            ops = ops or CubeOps(self.r.shape[-1] - 1)
            return ops.vec_to_phys(self.r, V_TYPES)
        return self.r


def make_solenoidal_source(spec: PotentialSpec, setting: str, n: int) -> SolenoidalSource:
    """``r = curl A`` for a bump potential on the cube, or a Leray-projected field on the torus.

    Parameters
    ----------
    spec : PotentialSpec
    setting : {"torus", "cube"}
    n : int
        Grid points per axis.
    """
    if setting == "cube":
        ops = CubeOps(n)
        Ac = ops.vec_to_coef(spec.on_cube(ops), E_TYPES)
        rc = ops.curl_E(Ac)
        div = ops.l2_coef(ops.div_V(rc))
        r = ops.vec_to_phys(rc, V_TYPES)
        collar = np.zeros((n,) * 3, dtype=bool)
        collar[[0, -1], :, :] = collar[:, [0, -1], :] = collar[:, :, [0, -1]] = True
        return SolenoidalSource(rc, "cube", "curl-of-potential", div, float(np.abs(r[:, collar]).max()))
    if setting == "torus":
        grid = build_grid(n)
        ops = SpectralOps(grid)
        x1, x2, x3 = grid.mesh()
        r = leray_project(ops, spec.trig(x1, x2, x3))
        div = float(np.sqrt(np.mean(ops.div(r) ** 2)))
        return SolenoidalSource(r, "torus", "leray-projected", div)
    raise ConfigError(f"unknown setting {setting!r}; expected one of {SETTINGS}")


def unit_nu(coeff: CoefficientSet) -> CoefficientSet:
    """The same ``mu0`` and ``eta`` with ``nu`` replaced by one."""
    spec = coeff.spec.with_nu("constant", value=1.0) if coeff.spec is not None else None
    return CoefficientSet(coeff.grid, coeff.mu0, coeff.eta, np.ones_like(coeff.nu), spec)


def _check_cell(cell: CellData):
    if not cell.flags.get("nu_constant") or abs(cell.nu_mean - 1.0) > 1e-12:
        raise ConfigError("the Maxwell reduction needs cell data computed with nu = 1")


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------


def _torus_fields(ops: SpectralOps, f, mu0, eta_inv, level) -> MaxwellFields:
    mm, mp = sym_sqrt(mu0, True), sym_sqrt(mu0)
    v = _cmv(mm, f)
    z = _cmv(mp, f)
    w = ops.curl(v)
    u = _mv(eta_inv, w) if eta_inv.ndim > 2 else _cmv(eta_inv, w)
    return MaxwellFields(u, w, v, z, level, float(np.sqrt(np.mean(ops.div(w) ** 2))),
                         float(np.sqrt(np.mean(ops.div(z) ** 2))))


def _cube_fields(ops: CubeOps, fc, ms, eta_inv, level) -> MaxwellFields:
    m4 = ms[:, None, None, None]
    vc, zc = fc / m4, fc * m4
    wc = ops.curl_V(vc)
    v = ops.vec_to_phys(vc, V_TYPES)
    z = ops.vec_to_phys(zc, V_TYPES)
    w = ops.vec_to_phys(wc, E_TYPES)
    u = _mv(eta_inv, w) if eta_inv.ndim > 2 else _cmv(eta_inv, w)
    # div of an E-layout field lands in the all-sine layout
    d1, d2, d3 = ops.d
    div_w = ops.l2_coef(d1 * wc[0] + d2 * wc[1] + d3 * wc[2])
    out = MaxwellFields(u, w, v, z, level, div_w, ops.l2_coef(ops.div_V(zc)),
                        normal_trace_max(ops, zc))
    out.meta["coef"] = fc
    return out


def solve_maxwell_pair(coeff: CoefficientSet, cell: CellData, scale: EpsScale, r: SolenoidalSource,
                       setting: str, opts: SolveOptions | None = None, cfg: DomainConfig | None = None):
    """Fine and effective Maxwell fields for one ``eps`` level.

    ``nu`` is set to one regardless of ``coeff``. Returns ``(fine, eff)``.
    """
    _check_cell(cell)
    coeff = unit_nu(coeff)
    if r.setting != setting:
        raise ConfigError("source and setting disagree")
    if r.div_norm > 1e-8 * max(1.0, float(np.abs(r.r).max())):
        raise ConfigError("the source is not solenoidal")
    if setting == "torus":
        op = FineOperator(coeff, scale)
        if r.r.shape != (3,) + op.grid.shape:
            raise GridError("source does not live on the fine grid")
        F = _cmv(coeff.mu0_isqrt, r.r)
        res = op.solve(F, opts)
        f0 = solve_L0_torus(cell, F, op.grid)
        fine = _torus_fields(op.ops, res.x, coeff.mu0, op.eta_inv, "fine")
        eff = _torus_fields(op.ops, f0, cell.mu0, np.linalg.inv(cell.eta0), "effective")
    elif setting == "cube":
        cfg = cfg or DomainConfig()
        fop = fine_operator(coeff, scale, cfg)
        eop = effective_operator(cell, scale.n, cfg)
        if r.r.shape != (3,) + (scale.n + 1,) * 3:
            raise GridError("source does not match the cube grid")
        ms = _check_mu0(coeff.mu0, cfg)
        Fc = r.r / ms[:, None, None, None]
        res = fop.solve(Fc, opts)
        f0c = eop.solve(Fc, opts).x
        fine = _cube_fields(fop.ops, res.x, ms, fop.eta_inv, "fine")
        eff = _cube_fields(eop.ops, f0c, ms, np.linalg.inv(cell.eta0), "effective")
    else:
        raise ConfigError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    fine.meta.update(iterations=res.iterations, residual=res.residual)
    return fine, eff


# ---------------------------------------------------------------------------
# correctors and the rate study
# ---------------------------------------------------------------------------


def maxwell_correctors(cell: CellData, scale: EpsScale, eff: MaxwellFields, w0_smooth, dw0_smooth=None):
    """Correctors ``eps mu0^{-1} Psi^eps S w0``, ``eps Psi^eps S w0``, ``Xi^eps u0`` and ``Upsilon^eps w0``.

    ``w0_smooth`` is ``S_eps`` applied to the (extended) effective displacement.
    When ``dw0_smooth`` (its partial derivatives) is given, the Jacobians of the
    two magnetic correctors are returned as well.
    """
    m, eps = scale.m, scale.eps
    Psi_v = np.einsum("ij,jk...->ik...", np.linalg.inv(cell.mu0), cell.Psi)
    out = {}
    for name, M in (("v", Psi_v), ("z", cell.Psi)):
        if dw0_smooth is None:
            out[name] = oscillating_term(M, cell.grid, m, eps, w0_smooth)
        else:
            out[name] = oscillating_term(M, cell.grid, m, eps, w0_smooth, dw0_smooth)
    out["u"] = _mv(tile(cell.Xi, m), eff.u)
    out["w"] = _mv(tile(cell.Upsilon, m), eff.w)
    return out


def _h1(e, J, weight):
    return float(np.sqrt((np.sum(e**2) + np.sum(J**2)) * weight))


def _l2(e, weight):
    return float(np.sqrt(np.sum(e**2) * weight))


def maxwell_level(coeff: CoefficientSet, cell: CellData, scale: EpsScale, potential: PotentialSpec, setting: str,
                  opts: SolveOptions | None = None, cfg: DomainConfig | None = None):
    """Errors of Maxwell approximations at one level plus invariant checks."""
    r = make_solenoidal_source(potential, setting, scale.n)
    fine, eff = solve_maxwell_pair(coeff, cell, scale, r, setting, opts, cfg)
    if setting == "torus":
        grid = build_grid(scale.n, 1.0, cell.grid.offset)
        ops = SpectralOps(grid)
        weight = grid.cell_weight
        sh = SteklovKernel(scale.eps, grid).rmultiplier * ops.fwd(eff.w)
        s, ds = ops.inv(sh), [ops.inv(1j * k * sh) for k in ops.kvec]
    else:
        ops = CubeOps(scale.n)
        weight = ops.h**3
        wc = ops.curl_V(eff.meta["coef"] / np.sqrt(np.diag(cell.mu0))[:, None, None, None]) * ops.steklov(scale.eps)
        s = ops.vec_to_phys(wc, E_TYPES)
        ds = [np.stack([ops.to_phys(*ops.partial(c, t, j)) for c, t in zip(wc, E_TYPES)]) for j in range(3)]

    corr = maxwell_correctors(cell, scale, eff, s, ds)
    if setting == "torus":
        Jv, Jz = ops.jacobian(fine.v - eff.v), ops.jacobian(fine.z - eff.z)
    else:
        ms = np.sqrt(np.diag(cell.mu0))[:, None, None, None]
        dc = fine.meta["coef"] - eff.meta["coef"]
        Jv = ops.jacobian_phys(dc / ms, V_TYPES)
        Jz = ops.jacobian_phys(dc * ms, V_TYPES)
    (cv, Jcv), (cz, Jcz) = corr["v"], corr["z"]
    errs = {
        "err_v_l2": _l2(fine.v - eff.v, weight),
        "err_z_l2": _l2(fine.z - eff.z, weight),
        "err_v_h1c": _h1(fine.v - eff.v - cv, Jv - Jcv, weight),
        "err_z_h1c": _h1(fine.z - eff.z - cz, Jz - Jcz, weight),
        "err_u_l2c": _l2(fine.u - eff.u - corr["u"], weight),
        "err_w_l2c": _l2(fine.w - eff.w - corr["w"], weight),
    }
    mu0 = cell.mu0
    norm_r = _l2(r.physical(ops if setting == "cube" else None), weight) or 1.0
    info = {
        "iterations": int(fine.meta["iterations"]),
        "residual": float(fine.meta["residual"]),
        "err_u_l2": _l2(fine.u - eff.u, weight),
        "err_w_l2": _l2(fine.w - eff.w, weight),
        "div_w": max(fine.div_w, eff.div_w) / norm_r,
        "div_z": max(fine.div_z, eff.div_z) / norm_r,
        "div_r": r.div_norm,
        "source_boundary_max": r.boundary_max,
        "normal_trace_z": max(fine.normal_trace_z, eff.normal_trace_z),
        "constitutive_gap": float(np.abs(_cmv(mu0, fine.v) - fine.z).max()),
        "mean_xi_u0": float(np.abs(corr["u"].mean(axis=(-3, -2, -1))).max()),
        "norm_r": norm_r,
    }
    return errs, info, (fine, eff, corr)


def maxwell_rate_study(coeff: CoefficientSet, cell: CellData | None, potential: PotentialSpec, scales,
                       setting: str, opts: SolveOptions | None = None,
                       cfg: DomainConfig | None = None) -> ConvergenceReport:
    """Maxwell error norms per level, with the uncorrected electric errors kept in the metadata."""
    scales = list(scales)
    if len(scales) < 3:
        raise ConfigError("a rate study needs at least three eps levels")
    if setting not in SETTINGS:
        raise ConfigError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    coeff = unit_nu(coeff)
    if setting == "cube":
        cfg = cfg or DomainConfig()
        for sc in scales:
            cfg.check_eps(sc.eps)
    cell = cell or solve_cell(coeff, opts)
    cols = {k: [] for k in COLUMNS}
    levels = []
    for sc in scales:
        t0 = time.perf_counter()
        try:
            errs, info, _ = maxwell_level(coeff, cell, sc, potential, setting, opts, cfg)
        except ConvergenceError as exc:
            raise ConvergenceError(f"level eps={sc.eps:.6g}: {exc}") from exc
        for k in cols:
            cols[k].append(errs[k])
        info["seconds"] = round(time.perf_counter() - t0, 3)
        levels.append(info)
    eps = [s.eps for s in scales]
    report = ConvergenceReport(eps, cols, {"setting": f"maxwell-{setting}", "levels": levels,
                                           "eta0": cell.eta0.tolist()})
    report.meta["asymmetry"] = asymmetry_check(report)
    return report


def asymmetry_check(report: ConvergenceReport) -> dict:
    """Compare the magnetic L2 orders with the uncorrected electric L2 orders."""
    levels = report.meta["levels"]
    out = {}
    for name in ("err_u_l2", "err_w_l2"):
        vals = [lv[name] for lv in levels]
        out[name] = fit_order(list(zip(report.eps, vals)))[0] if min(vals) > 0 else float("nan")
    mag = min(report.order("err_v_l2"), report.order("err_z_l2"))
    ele = max(out["err_u_l2"], out["err_w_l2"])
    out["holds"] = bool(mag > ele)
    return out

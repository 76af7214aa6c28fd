"""Fast invariant suite behind ``homogen verify``.

Each check returns a :class:`Check` with the measured quantity and the bound
it is held to.  The suite is a quick desk-scale version of the full test
battery: small grids, short ladders, a handful of random fields.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cell import galerkin_cell_Y, solve_cell, solve_cell_Y
from .coefficients import CoefficientSpec, shipped_presets
from .domain import CubeSource, DomainConfig, domain_rate_study
from .fields import build_grid, sample_coefficient_set
from .krylov import SolveOptions
from .maxwell import PotentialSpec, maxwell_rate_study, unit_nu
from .report import fit_order
from .smoothing import SteklovKernel, multiplier_bound_ratio, random_smooth_field, smoothing_error_ratio
from .torus import EpsScale, FineOperator, TrigSource, torus_rate_study


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    seconds: float = 0.0
    relation: str = "<="

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag}  {self.name:<38s} {self.value:.3e} {self.relation} {self.bound:.1e}"
                f"  ({self.seconds:.1f}s)")


def _below(name, value, bound, t0):
    value = float(value)
    return Check(name, bool(value <= bound), value, bound, time.perf_counter() - t0)


def _above(name, value, bound, t0):
    value = float(value)
    return Check(name, bool(value >= bound), value, bound, time.perf_counter() - t0, ">=")


def check_laminate_oracle() -> Check:
    t0 = time.perf_counter()
    spec = CoefficientSpec.laminate(mean=2.0, amplitude=1.0).with_nu("laminate", mean=2.0, amplitude=1.0)
    cell = solve_cell(sample_coefficient_set(spec, build_grid(32)))
    err = max(np.abs(cell.eta0 - np.diag([np.sqrt(3.0), 2.0, 2.0])).max(), abs(cell.nuUnder - np.sqrt(3.0)))
    return _below("laminate closed forms", err, 1e-6, t0)


def check_voigt_reuss(seeds=(0, 1, 2)) -> Check:
    t0 = time.perf_counter()
    worst = np.inf
    for s in seeds:
        coeff = sample_coefficient_set(CoefficientSpec.trigonometric(seed=s), build_grid(16))
        _, _, eta0, bar, under, _ = solve_cell_Y(coeff)
        worst = min(worst, np.linalg.eigvalsh(eta0 - under).min(), np.linalg.eigvalsh(bar - eta0).min())
    return _above("Voigt-Reuss bounds (min eigenvalue)", worst, -1e-9, t0)


def check_special_cases() -> Check:
    t0 = time.perf_counter()
    a = solve_cell(sample_coefficient_set(CoefficientSpec.diagonal_shifted(), build_grid(16)))
    b = solve_cell(sample_coefficient_set(CoefficientSpec.potential(), build_grid(16)))
    err = max(np.linalg.norm(a.eta0 - a.etaBar, 2), np.abs(a.Sigma).max(), np.abs(b.Lambda_real).max())
    return _below("special-case degenerations", err, 1e-8, t0)


def check_structural_identities() -> Check:
    t0 = time.perf_counter()
    worst = 0.0
    for spec in shipped_presets():
        cell = solve_cell(sample_coefficient_set(spec, build_grid(8)))
        sigma = np.einsum("ik...,kj->ij...", cell.Xi, np.linalg.inv(cell.eta0))
        worst = max(
            worst,
            np.abs(cell.Sigma - sigma).max(),
            np.abs(cell.gTilde.mean(axis=(-3, -2, -1)) - cell.g0).max(),
            np.abs(cell.Lambda_real.mean(axis=(-3, -2, -1))).max(),
            np.abs(cell.Upsilon.mean(axis=(-3, -2, -1))).max(),
        )
    return _below("structural identities", worst, 1e-10, t0)


def check_galerkin() -> Check:
    t0 = time.perf_counter()
    spec = CoefficientSpec.trigonometric(seed=3)
    coeff = sample_coefficient_set(spec, build_grid(8))
    Y, _, eta0, *_ = solve_cell_Y(coeff, opts=SolveOptions(1e-13), mode_cutoff=2)
    Yg, eta0g = galerkin_cell_Y(spec.eta_fourier(), 8, cutoff=2)
    return _below("dense Galerkin agreement", max(np.abs(Y - Yg).max(), np.abs(eta0 - eta0g).max()), 1e-8, t0)


def check_steklov(n_fields: int = 5) -> Check:
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    grid = build_grid(64)
    x1, x2, x3 = grid.mesh()
    worst = 0.0
    for m in (4, 8, 16):
        ker = SteklovKernel(1.0 / m, grid)
        k = np.array([2.0, -1.0, 3.0]) * 2 * np.pi
        wave = np.cos(k[0] * x1 + k[1] * x2 + k[2] * x3)
        sinc = np.prod(np.sinc(0.5 * k / m / np.pi))
        worst = max(worst, np.abs(ker.apply_array(wave) - sinc * wave).max() / 1e-12)
        for _ in range(n_fields):
            u = random_smooth_field(grid, rng, components=3)
            worst = max(worst,
                        np.linalg.norm(ker.apply_array(u)) / np.linalg.norm(u),
                        smoothing_error_ratio(u, ker),
                        multiplier_bound_ratio(lambda a, b, c: 2 + np.sin(2 * np.pi * a) * np.cos(2 * np.pi * c),
                                               u, ker))
    return _below("Steklov estimates (largest ratio)", worst, 1.0, t0)


def check_fit_sanity() -> Check:
    t0 = time.perf_counter()
    eps = np.array([0.25, 0.125, 0.0625])
    s1, _, r1 = fit_order(list(zip(eps, eps)))
    s2, _, _ = fit_order(list(zip(eps, np.sqrt(eps))))
    return _below("order fit on exact power laws", max(abs(s1 - 1), abs(s2 - 0.5), abs(r1 - 1)), 1e-12, t0)


def check_energy_identity() -> Check:
    """``<(L_eps + I) f, f> = l_eps[f, f] + ||f||^2`` for a random field."""
    t0 = time.perf_counter()
    coeff = sample_coefficient_set(CoefficientSpec.trigonometric(seed=2).with_nu("laminate", axis=1), build_grid(8))
    op = FineOperator(coeff, EpsScale(2, 8))
    f = random_smooth_field(op.grid, np.random.default_rng(5), components=3)
    lhs = float(np.sum(op.apply(f) * f) * op.grid.cell_weight)
    rhs = op.form(f) + float(np.sum(f**2) * op.grid.cell_weight)
    return _below("energy identity", abs(lhs - rhs) / abs(rhs), 1e-10, t0)


def check_constant_degeneracy() -> Check:
    t0 = time.perf_counter()
    spec = CoefficientSpec.constant(eta=2.0, nu=1.5, mu0=(1.0, 2.0, 0.5))
    opts = SolveOptions(1e-12)
    tor = sample_coefficient_set(spec, build_grid(8))
    worst = 0.0
    r = torus_rate_study(tor, TrigSource.random(0), [EpsScale(m, 8) for m in (1, 2, 3)], opts)
    worst = max(worst, max(max(v) for v in r.columns.values()))
    cube = sample_coefficient_set(spec, build_grid(8, 1.0, 0.5))
    cfg = DomainConfig()
    r = domain_rate_study(cube, CubeSource.random(0), [EpsScale(m, 8) for m in (8, 9, 10)], cfg, opts)
    worst = max(worst, max(max(v) for v in r.columns.values()))
    mx = unit_nu(tor)
    r = maxwell_rate_study(mx, None, PotentialSpec.random(0), [EpsScale(m, 8) for m in (1, 2, 3)], "torus", opts)
    worst = max(worst, max(max(v) for v in r.columns.values()))
    return _below("constant-coefficient exactness", worst, 1e-9, t0)


CHECKS = (
    check_laminate_oracle,
    check_voigt_reuss,
    check_special_cases,
    check_structural_identities,
    check_galerkin,
    check_steklov,
    check_fit_sanity,
    check_energy_identity,
    check_constant_degeneracy,
)


def run_checks(checks=CHECKS) -> list[Check]:
    return [c() for c in checks]

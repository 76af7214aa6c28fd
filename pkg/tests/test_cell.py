import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid

from homogen.cell import (
    CellData,
    galerkin_cell_Y,
    lambda_h1_norm,
    phi_sup_under_refinement,
    solve_cell,
    solve_cell_Y,
    weighted_gradient_ratio,
)
from homogen.coefficients import CoefficientSpec, shipped_presets
from homogen.fields import build_grid, sample_coefficient_set
from homogen.krylov import SolveOptions
from homogen.smoothing import random_smooth_field

from conftest import cell_of

SQRT3 = np.sqrt(3.0)
AXES = (-3, -2, -1)


def assert_cell_invariants(cell: CellData, tol=1e-10):
    e0inv = np.linalg.inv(cell.eta0)
    np.testing.assert_allclose(cell.Sigma, np.einsum("ik...,kj->ij...", cell.Xi, e0inv), atol=tol)
    np.testing.assert_allclose(cell.gTilde.mean(axis=AXES), cell.g0, atol=tol)
    assert np.abs(cell.Lambda_real.mean(axis=AXES)).max() < tol
    assert np.abs(cell.Upsilon.mean(axis=AXES)).max() < tol
    assert np.abs(cell.Y.mean(axis=AXES)).max() < tol
    np.testing.assert_allclose(cell.eta0, cell.eta0.T, atol=tol)


class TestIdentity:
    def test_everything_trivial(self):
        _, cell = cell_of(CoefficientSpec.constant(), n=8)
        assert np.abs(cell.Y).max() == 0
        for m in (cell.eta0, cell.etaBar, cell.etaUnder):
            np.testing.assert_allclose(m, np.eye(3), atol=1e-15)
        assert np.abs(cell.p).max() == 0 and np.abs(cell.Psi).max() == 0
        assert np.abs(cell.rho).max() == 0 and cell.nuUnder == 1.0
        assert np.abs(cell.Lambda_real).max() == 0
        np.testing.assert_allclose(cell.gTilde, np.broadcast_to(np.eye(4)[:, :, None, None, None], cell.gTilde.shape))


class TestClosedForms:
    def test_laminate_eta0(self):
        coeff = sample_coefficient_set(CoefficientSpec.laminate(), build_grid(64))
        _, _, eta0, *_ = solve_cell_Y(coeff)
        np.testing.assert_allclose(eta0, np.diag([SQRT3, 2.0, 2.0]), atol=1e-6)

    def test_laminate_nu_under(self, laminate_cell):
        assert abs(laminate_cell[1].nuUnder - SQRT3) < 1e-8

    def test_oblique_laminate_eta0(self):
        # harmonic mean across the layers, arithmetic mean along them
        amp = 1.3
        _, cell = cell_of(CoefficientSpec.oblique_laminate(direction=(1, 1, 0), amplitude=amp), n=32)
        d = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
        harm = np.sqrt(4.0 - amp**2)
        expect = harm * np.outer(d, d) + 2.0 * (np.eye(3) - np.outer(d, d))
        np.testing.assert_allclose(cell.eta0, expect, atol=1e-8)

    def test_rho_matches_one_dimensional_solve(self):
        _, cell = cell_of(CoefficientSpec.constant().with_nu("laminate", mean=2.0, amplitude=1.0), n=32)
        n = cell.grid.n
        # -rho'' = 1 - sqrt3 / nu(x1), integrated twice on a fine 1D grid
        t = np.linspace(0.0, 1.0, 2**16 + 1)
        G = cumulative_trapezoid(SQRT3 / (2.0 + np.sin(2 * np.pi * t)) - 1.0, t, initial=0.0)
        d = G - np.trapezoid(G, t)
        r = cumulative_trapezoid(d, t, initial=0.0)
        r -= np.trapezoid(r, t)
        ref = np.interp(np.arange(n) / n, t, r)
        np.testing.assert_allclose(cell.rho[:, 0, 0], ref, atol=1e-8)
        assert np.ptp(cell.rho, axis=(1, 2)).max() < 1e-14

    def test_diagonal_shifted_is_arithmetic_mean(self):
        _, cell = cell_of(CoefficientSpec.diagonal_shifted(), n=16)
        np.testing.assert_allclose(cell.eta0, 2.0 * np.eye(3), atol=1e-8)
        assert np.abs(cell.Sigma).max() < 1e-8
        assert cell.flags["eta0_is_arithmetic_mean"]

    def test_potential_columns_give_vanishing_lambda(self):
        _, cell = cell_of(CoefficientSpec.potential(), n=16)
        np.testing.assert_allclose(cell.eta0, SQRT3 * np.eye(3), atol=1e-8)
        assert np.abs(cell.Psi).max() < 1e-8
        assert np.abs(cell.Lambda_real).max() < 1e-8
        assert cell.flags["Lambda_vanishes"]


class TestBounds:
    @pytest.mark.parametrize("seed", range(4))
    def test_voigt_reuss(self, seed):
        coeff = sample_coefficient_set(CoefficientSpec.trigonometric(seed=seed), build_grid(16))
        _, _, eta0, bar, under, _ = solve_cell_Y(coeff)
        assert np.linalg.eigvalsh(eta0 - under).min() >= -1e-9
        assert np.linalg.eigvalsh(bar - eta0).min() >= -1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1.0, 4.0), st.floats(0.0, 0.95), st.integers(0, 2))
    def test_nu_under_below_mean(self, mean, rel_amp, axis):
        spec = CoefficientSpec.constant().with_nu("laminate", mean=mean, amplitude=rel_amp * mean, axis=axis)
        coeff = sample_coefficient_set(spec, build_grid(8))
        _, cell = None, solve_cell(coeff)
        assert cell.nuUnder <= coeff.nu.mean() * (1 + 1e-14)


class TestInvariants:
    @pytest.mark.parametrize("spec", shipped_presets(), ids=lambda s: s.label)
    def test_presets(self, spec):
        assert_cell_invariants(cell_of(spec, n=16)[1])

    @pytest.mark.parametrize("n", [16, 32])
    @pytest.mark.parametrize("seed", range(10))
    def test_random_trigonometric(self, seed, n):
        spec = CoefficientSpec.trigonometric(seed=100 + seed).with_nu("laminate", axis=seed % 3)
        assert_cell_invariants(cell_of(spec, n=n)[1])

    def test_mu0_enters_lambda(self):
        spec = CoefficientSpec.trigonometric(seed=2).with_mu0((1.0, 2.0, 0.5)).with_nu("laminate")
        assert_cell_invariants(cell_of(spec, n=16)[1])


class TestPProblem:
    def test_residual_and_divergence(self, trig_cell):
        from homogen.fields import SpectralOps

        coeff, cell = trig_cell
        ops = SpectralOps(cell.grid)
        mu_inv = np.linalg.inv(coeff.mu0)
        for j in range(3):
            pj = cell.p[:, j]
            lhs = ops.curl(np.einsum("ij,j...->i...", mu_inv, ops.curl(pj)))
            gphi = ops.grad(cell.Phi[j])
            rhs = np.einsum("ij...,j...->i...", coeff.eta, gphi + cell.cj[:, j, None, None, None])
            rhs[j] -= 1.0
            assert np.abs(lhs - rhs).max() <= 1e-8 * max(1.0, np.abs(rhs).max())
            assert np.abs(ops.div(pj)).max() < 1e-10


class TestGalerkin:
    @pytest.mark.parametrize("seed", [0, 3])
    def test_dense_solve_agrees(self, seed):
        spec = CoefficientSpec.trigonometric(seed=seed)
        coeff = sample_coefficient_set(spec, build_grid(8))
        Y, _, eta0, *_ = solve_cell_Y(coeff, opts=SolveOptions(1e-13), mode_cutoff=2)
        Yg, eta0g = galerkin_cell_Y(spec.eta_fourier(), 8, cutoff=2)
        assert np.abs(Y - Yg).max() < 1e-8
        assert np.abs(eta0 - eta0g).max() < 1e-8


class TestPersistence:
    @pytest.mark.parametrize("suffix", [".npz", ".json"])
    def test_round_trip(self, tmp_path, trig_cell, suffix):
        cell = trig_cell[1]
        path = cell.save(tmp_path / f"cell{suffix}")
        back = CellData.load(path)
        for name in CellData._ARRAYS:
            np.testing.assert_array_equal(getattr(back, name), getattr(cell, name))
        assert back.grid == cell.grid and back.flags == cell.flags and back.nuUnder == cell.nuUnder

    def test_summary_is_jsonable(self, trig_cell):
        import json

        json.dumps(trig_cell[1].summary())


class TestDiagnostics:
    @pytest.mark.parametrize("spec", [CoefficientSpec.laminate(), CoefficientSpec.trigonometric(seed=1)],
                             ids=["laminate", "trigonometric"])
    def test_phi_bounded_under_refinement(self, spec):
        out = phi_sup_under_refinement(spec, (32, 64))
        assert np.all(np.isfinite(out["sup"]))
        assert out["relative_change"] < 0.05

    def test_weighted_gradient_ratio_uniform_in_eps(self):
        _, cell = cell_of(CoefficientSpec.trigonometric(seed=1), n=8)
        rng = np.random.default_rng(7)
        worst = {}
        for m in (4, 8, 16):
            grid = build_grid(8 * m)
            worst[m] = max(weighted_gradient_ratio(cell, m, random_smooth_field(grid, rng)) for _ in range(20))
        vals = np.array(list(worst.values()))
        assert np.all(np.isfinite(vals))
        assert vals.max() <= 2.0 * vals.min()

    def test_lambda_h1_norm_recorded(self, trig_cell):
        val = lambda_h1_norm(trig_cell[1])
        assert np.isfinite(val) and val > 0
        assert lambda_h1_norm(cell_of(CoefficientSpec.potential(), n=8)[1]) < 1e-8

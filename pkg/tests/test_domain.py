import numpy as np
import pytest

from homogen.cell import solve_cell
from homogen.coefficients import CoefficientSpec
from homogen.cube import V_TYPES, CubeOps
from homogen.domain import (
    CubeSource,
    DomainConfig,
    boundary_strip_norm,
    cutoff_and_phi_diagnostic,
    domain_first_order_approx,
    domain_level,
    domain_rate_study,
    effective_operator,
    extend_to_torus,
    fine_operator,
    lemma_strip_smoothing_ratio,
    normal_trace_max,
    project_normal_trace,
    random_cube_function,
    solve_L0_domain,
    solve_L_eps_domain,
    solve_domain_pair,
    strip_ratio,
)
from homogen.fields import GridError, build_grid, sample_coefficient_set
from homogen.krylov import SolveOptions
from homogen.report import ConfigError
from homogen.smoothing import random_smooth_field
from homogen.torus import EpsScale

MU0 = (1.0, 2.0, 0.5)


def cube_cell(spec, n=8):
    coeff = sample_coefficient_set(spec, build_grid(n, 1.0, 0.5))
    return coeff, solve_cell(coeff)


@pytest.fixture(scope="module")
def trig_cube():
    return cube_cell(CoefficientSpec.trigonometric(seed=1).with_nu("laminate", axis=1).with_mu0(MU0))


@pytest.fixture(scope="module")
def level8(trig_cube):
    coeff, cell = trig_cube
    return domain_level(coeff, cell, EpsScale(8, 8), CubeSource.random(0))


class TestConfig:
    def test_eps1(self):
        cfg = DomainConfig()
        assert 0.13 < cfg.eps1 < 0.14
        cfg.check_eps(1 / 8)
        with pytest.raises(ConfigError):
            cfg.check_eps(1 / 4)

    def test_unit_cube_only(self):
        with pytest.raises(ConfigError):
            DomainConfig(box=2.0)

    def test_rejects_off_diagonal_mu0(self):
        spec = CoefficientSpec.constant(mu0=[[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 1.0]])
        coeff, cell = cube_cell(spec)
        with pytest.raises(ConfigError):
            fine_operator(coeff, EpsScale(8, 8), DomainConfig())
        fine_operator(coeff, EpsScale(8, 8), DomainConfig(require_diagonal_mu0=False))

    def test_grid_offset_required(self):
        coeff = sample_coefficient_set(CoefficientSpec.constant(), build_grid(8))
        with pytest.raises(GridError):
            fine_operator(coeff, EpsScale(8, 8), DomainConfig())

    def test_short_ladder(self, trig_cube):
        coeff, cell = trig_cube
        with pytest.raises(ConfigError):
            domain_rate_study(coeff, CubeSource.random(0), [EpsScale(8, 8), EpsScale(9, 8)], cell=cell)


class TestSolves:
    def test_zero_source(self, trig_cube):
        coeff, _ = trig_cube
        fc, _ = solve_L_eps_domain(coeff, EpsScale(8, 8), np.zeros((3, 64, 64, 64)))
        assert np.abs(fc).max() == 0

    def test_constant_coefficients_fine_equals_effective(self):
        spec = CoefficientSpec.constant(eta=[[2.0, 0.0, 0.0], [0.0, 1.5, 0.0], [0.0, 0.0, 0.8]], nu=0.7, mu0=MU0)
        coeff, cell = cube_cell(spec)
        sc = EpsScale(8, 8)
        fc, _ = solve_L_eps_domain(coeff, sc, CubeSource.random(3))
        f0c, _ = solve_L0_domain(cell, CubeSource.random(3), sc.n)
        assert np.abs(fc - f0c).max() < 1e-10 * np.abs(f0c).max()

    def test_constant_single_mode_closed_form(self):
        # F = sin(pi x1) e1 is a pure gradient, so only the nu div term acts
        spec = CoefficientSpec.constant(eta=1.0, nu=2.0)
        coeff, cell = cube_cell(spec)
        src = CubeSource(((0, (1, 0, 0), 1.0),))
        N = 32
        f0c, _ = solve_L0_domain(cell, src, N)
        ops = CubeOps(N)
        f0 = ops.vec_to_phys(f0c, V_TYPES)
        # grad div of sin(pi x1) e1 is -pi^2 sin(pi x1) e1; curl vanishes
        expect = src.on_cube(ops) / (1 + 2.0 * np.pi**2)
        np.testing.assert_allclose(f0, expect, atol=1e-12)

    def test_energy_identity(self, level8):
        _, info, _ = level8
        assert info["energy_identity_gap"] < 1e-8

    def test_form_is_coercive(self, trig_cube, rng):
        coeff, _ = trig_cube
        op = fine_operator(coeff, EpsScale(8, 8), DomainConfig())
        for _ in range(3):
            fc = project_normal_trace(op.ops, rng.standard_normal((3,) + (65,) * 3))
            w, s = op.K_phys(fc)
            k2 = float((np.sum(w**2) + np.sum(s**2)) / op.ops.N**3)
            assert coeff.c1 * k2 * (1 - 1e-12) <= op.form(fc) <= coeff.c2 * k2 * (1 + 1e-12)

    def test_self_adjoint(self, trig_cube, rng):
        coeff, _ = trig_cube
        op = fine_operator(coeff, EpsScale(8, 8), DomainConfig())
        u, w = (project_normal_trace(op.ops, rng.standard_normal((3,) + (65,) * 3)) for _ in range(2))
        a, b = np.sum(op.apply(u) * w), np.sum(u * op.apply(w))
        assert abs(a - b) <= 1e-10 * abs(a)


class TestBoundary:
    def test_normal_trace_vanishes(self, trig_cube):
        coeff, cell = trig_cube
        res = solve_domain_pair(coeff, cell, EpsScale(8, 8), CubeSource.random(1))
        assert res.normal_trace < 1e-10 * np.abs(res.fEps).max()

    def test_projection_idempotent(self, rng):
        ops = CubeOps(16)
        c = rng.standard_normal((3,) + (17,) * 3)
        p = project_normal_trace(ops, c)
        np.testing.assert_array_equal(project_normal_trace(ops, p), p)
        assert normal_trace_max(ops, p) < 1e-12

    def test_extension_restricts_to_f0(self, rng):
        ops = CubeOps(16)
        c = project_normal_trace(ops, rng.standard_normal((3,) + (17,) * 3))
        ext = extend_to_torus(ops, c, V_TYPES)
        assert ext.shape == (3, 32, 32, 32)
        np.testing.assert_allclose(ext[:, :16, :16, :16], ops.vec_to_phys(c, V_TYPES), atol=1e-12)

    def test_extension_parity(self, rng):
        ops = CubeOps(8)
        c = project_normal_trace(ops, rng.standard_normal((3,) + (9,) * 3))
        ext = extend_to_torus(ops, c, V_TYPES)
        # the normal component is odd across its face, the tangential ones even
        np.testing.assert_allclose(ext[0, 8:], -ext[0, :8][::-1], atol=1e-12)
        np.testing.assert_allclose(ext[1, 8:], ext[1, :8][::-1], atol=1e-12)


class TestStrip:
    def test_strip_volume(self):
        assert boundary_strip_norm(np.ones((64, 64, 64)), 1 / 8) == pytest.approx(37 / 64, rel=1e-12)

    def test_interior_support_gives_zero(self):
        u = np.zeros((32, 32, 32))
        u[8:24, 8:24, 8:24] = 1.0
        assert boundary_strip_norm(u, 1 / 8) == 0.0

    def test_strip_width_check(self):
        with pytest.raises(ConfigError):
            boundary_strip_norm(np.ones((8, 8, 8)), 0.3)

    @pytest.mark.parametrize("N", [32, 64])
    def test_trace_type_bound(self, N):
        ops = CubeOps(N)
        rng = np.random.default_rng(N)
        worst = max(strip_ratio(ops, random_cube_function(ops, rng), e) for e in (1 / 8, 1 / 16) for _ in range(4))
        assert worst < 3.0

    def test_strip_smoothing_bounded(self, trig_cube):
        _, cell = trig_cube
        r = lemma_strip_smoothing_ratio(cell, 1 / 8, np.random.default_rng(0), n_fields=3)
        assert 0 < r < 1.0

    def test_strip_smoothing_vanishes_without_corrector(self):
        _, cell = cube_cell(CoefficientSpec.constant(eta=2.0))
        assert lemma_strip_smoothing_ratio(cell, 1 / 8, np.random.default_rng(0), n_fields=1) == 0.0


class TestCorrector:
    def test_constant_coefficients(self):
        _, cell = cube_cell(CoefficientSpec.constant(eta=2.0, nu=1.5))
        sc = EpsScale(8, 8)
        f0c, _ = solve_L0_domain(cell, CubeSource.random(0), sc.n)
        psi = domain_first_order_approx(cell, sc, f0c)
        np.testing.assert_allclose(psi, CubeOps(sc.n).vec_to_phys(f0c, V_TYPES), atol=1e-14)

    def test_errors_small(self, level8):
        errs, info, _ = level8
        # errors well below the size of the source
        for k in ("err_l2", "err_flux_nu"):
            assert errs[k] < 0.01 * info["norm_F"]
        assert errs["err_h1_corr"] < 0.05 * info["norm_F"]

    def test_gradient_matches_finite_reference(self, trig_cube):
        _, cell = trig_cube
        sc = EpsScale(8, 8)
        f0c, _ = solve_L0_domain(cell, CubeSource.random(2), sc.n)
        psi, J = domain_first_order_approx(cell, sc, f0c, with_gradient=True)
        assert J.shape == (3, 3) + psi.shape[1:]
        h = 1.0 / sc.n
        fd = (psi[:, 2:] - psi[:, :-2]) / (2 * h)
        inner = np.abs(J[:, 0, 1:-1] - fd).max() / np.abs(J[:, 0]).max()
        assert inner < 0.05

    def test_phi_diagnostic(self, trig_cube):
        _, cell = trig_cube
        sc = EpsScale(8, 8)
        f0c, _ = solve_L0_domain(cell, CubeSource.random(0), sc.n)
        d = cutoff_and_phi_diagnostic(cell, sc, f0c)
        assert d["theta_on_boundary"] == 1.0
        assert 0.0 <= d["theta_min"] <= d["theta_max"] <= 1.0
        assert d["kappa_measured"] <= d["kappa"]
        assert d["phi_l2"] <= d["phi_h1"]
        assert d["ratio_l2"] < 1.0 and d["ratio_h1"] < 1.0

    def test_phi_requires_small_eps(self, trig_cube):
        _, cell = trig_cube
        with pytest.raises(ConfigError):
            cutoff_and_phi_diagnostic(cell, EpsScale(4, 8), np.zeros((3, 33, 33, 33)))


class TestStudy:
    def test_constant_coefficients_are_degenerate(self):
        coeff, _ = cube_cell(CoefficientSpec.constant(eta=2.0, nu=1.5, mu0=MU0))
        r = domain_rate_study(coeff, CubeSource.random(0), [EpsScale(m, 8) for m in (8, 9, 10)],
                              opts=SolveOptions(1e-12))
        assert r.degenerate
        assert max(max(v) for v in r.columns.values()) < 1e-9

    def test_ladder_above_eps1_rejected(self, trig_cube):
        coeff, cell = trig_cube
        with pytest.raises(ConfigError):
            domain_rate_study(coeff, CubeSource.random(0), [EpsScale(m, 8) for m in (4, 8, 9)], cell=cell)

    def test_source_is_deterministic(self):
        assert CubeSource.random(4) == CubeSource.random(4)
        assert CubeSource.random(4).to_dict()["modes"][0][0] in (0, 1, 2)

    def test_random_smooth_field_on_cube_grid_shape(self, rng):
        u = random_smooth_field(build_grid(16), rng, components=3)
        assert u.shape == (3, 16, 16, 16)

    def test_effective_operator_shape(self, trig_cube):
        _, cell = trig_cube
        op = effective_operator(cell, 16, DomainConfig())
        assert op.const and op.ops.N == 16

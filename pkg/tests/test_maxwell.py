import numpy as np
import pytest

from homogen.cell import solve_cell
from homogen.coefficients import CoefficientSpec
from homogen.cube import CubeOps, V_TYPES
from homogen.fields import SpectralOps, build_grid, sample_coefficient_set
from homogen.krylov import SolveOptions
from homogen.maxwell import (
    PotentialSpec,
    _check_cell,
    make_solenoidal_source,
    maxwell_level,
    maxwell_rate_study,
    smoothstep,
    solve_maxwell_pair,
    unit_nu,
)
from homogen.report import ConfigError
from homogen.torus import EpsScale

MU0 = (1.0, 2.0, 0.5)


def maxwell_cell(spec, offset=0.0, n=8):
    coeff = unit_nu(sample_coefficient_set(spec, build_grid(n, 1.0, offset)))
    return coeff, solve_cell(coeff)


@pytest.fixture(scope="module")
def trig_mx():
    return maxwell_cell(CoefficientSpec.trigonometric(seed=2).with_mu0(MU0))


@pytest.fixture(scope="module")
def trig_mx_cube():
    return maxwell_cell(CoefficientSpec.trigonometric(seed=2).with_mu0(MU0), offset=0.5)


class TestSmoothstep:
    def test_endpoints(self):
        for p in (1, 2, 4):
            assert smoothstep(0.0, p) == 0.0
            assert smoothstep(1.0, p) == pytest.approx(1.0)

    def test_monotone(self):
        s = np.linspace(0, 1, 101)
        assert np.all(np.diff(smoothstep(s, 4)) >= 0)

    def test_flat_at_one(self):
        h = 1e-4
        assert abs(smoothstep(1.0, 3) - smoothstep(1.0 - h, 3)) < 1e-9


class TestSources:
    def test_zero_potential(self):
        r = make_solenoidal_source(PotentialSpec.zero(), "torus", 16)
        assert np.abs(r.r).max() == 0

    def test_torus_source_is_solenoidal(self):
        r = make_solenoidal_source(PotentialSpec.random(1), "torus", 16)
        assert r.div_norm < 1e-12 * np.abs(r.r).max()
        assert np.abs(r.r).max() > 0.1

    def test_cube_source_is_solenoidal_and_quiet_near_faces(self):
        r = make_solenoidal_source(PotentialSpec.random(1), "cube", 32)
        phys = r.physical()
        assert r.div_norm < 1e-10 * np.abs(phys).max()
        assert r.boundary_max < 1e-5 * np.abs(phys).max()

    def test_bad_setting(self):
        with pytest.raises(ConfigError):
            make_solenoidal_source(PotentialSpec.random(0), "sphere", 8)

    def test_deterministic(self):
        assert PotentialSpec.random(7) == PotentialSpec.random(7)


class TestReduction:
    def test_requires_unit_nu(self):
        coeff = sample_coefficient_set(CoefficientSpec.laminate().with_nu("laminate"), build_grid(8))
        with pytest.raises(ConfigError):
            _check_cell(solve_cell(coeff))

    def test_unit_nu(self):
        coeff = sample_coefficient_set(CoefficientSpec.laminate().with_nu("laminate"), build_grid(8))
        assert np.all(unit_nu(coeff).nu == 1.0)

    def test_non_solenoidal_source_rejected(self, trig_mx):
        coeff, cell = trig_mx
        r = make_solenoidal_source(PotentialSpec.random(0), "torus", 16)
        r.r = r.r + 1.0 * np.cos(2 * np.pi * build_grid(16).mesh()[0])[None]
        r.div_norm = 1.0
        with pytest.raises(ConfigError):
            solve_maxwell_pair(coeff, cell, EpsScale(2, 8), r, "torus")

    def test_constant_coefficients_fine_equals_effective(self):
        coeff, cell = maxwell_cell(CoefficientSpec.constant(eta=[[2.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0, 0, 1.5]],
                                                            mu0=MU0))
        sc = EpsScale(2, 8)
        r = make_solenoidal_source(PotentialSpec.random(0), "torus", sc.n)
        fine, eff = solve_maxwell_pair(coeff, cell, sc, r, "torus", SolveOptions(1e-12))
        for a, b in ((fine.u, eff.u), (fine.v, eff.v), (fine.w, eff.w), (fine.z, eff.z)):
            assert np.abs(a - b).max() < 1e-9

    def test_zero_source_gives_zero_fields(self, trig_mx):
        coeff, cell = trig_mx
        sc = EpsScale(2, 8)
        fine, eff = solve_maxwell_pair(coeff, cell, sc, make_solenoidal_source(PotentialSpec.zero(), "torus", 16),
                                       "torus")
        assert max(np.abs(x).max() for x in (fine.u, fine.v, eff.w, eff.z)) == 0

    def test_constitutive_relations(self, trig_mx):
        coeff, cell = trig_mx
        sc = EpsScale(2, 8)
        fine, eff = solve_maxwell_pair(coeff, cell, sc, make_solenoidal_source(PotentialSpec.random(0), "torus", 16),
                                       "torus")
        mu0 = np.asarray(cell.mu0)
        np.testing.assert_allclose(np.einsum("ij,j...->i...", mu0, fine.v), fine.z, atol=1e-12)
        ops = SpectralOps(build_grid(16))
        np.testing.assert_allclose(ops.curl(fine.v), fine.w, atol=1e-12)
        np.testing.assert_allclose(np.einsum("ij,j...->i...", np.linalg.inv(cell.eta0), eff.w), eff.u, atol=1e-12)


class TestLevel:
    def test_torus_invariants(self, trig_mx):
        coeff, cell = trig_mx
        errs, info, (fine, eff, corr) = maxwell_level(coeff, cell, EpsScale(2, 8), PotentialSpec.random(0), "torus")
        assert info["div_w"] < 1e-8 and info["div_z"] < 1e-8
        assert info["constitutive_gap"] < 1e-12
        # correctors with zero cell mean
        assert info["mean_xi_u0"] < 0.2 * np.abs(corr["u"]).max()
        assert errs["err_u_l2c"] < info["err_u_l2"]
        assert errs["err_w_l2c"] < info["err_w_l2"]

    def test_cube_invariants(self, trig_mx_cube):
        coeff, cell = trig_mx_cube
        errs, info, (fine, eff, _) = maxwell_level(coeff, cell, EpsScale(8, 8), PotentialSpec.random(0), "cube")
        assert info["div_w"] < 1e-8 and info["div_z"] < 1e-8
        assert info["normal_trace_z"] < 1e-10
        assert info["source_boundary_max"] < 1e-5 * info["norm_r"]
        assert errs["err_u_l2c"] < info["err_u_l2"]

    def test_potential_preset_has_no_magnetic_corrector(self):
        coeff, cell = maxwell_cell(CoefficientSpec.potential().with_mu0(MU0))
        _, _, (_, _, corr) = maxwell_level(coeff, cell, EpsScale(2, 8), PotentialSpec.random(0), "torus")
        assert np.abs(corr["v"][0]).max() < 1e-12 and np.abs(corr["z"][0]).max() < 1e-12

    def test_constant_eta_has_no_electric_corrector(self):
        coeff, cell = maxwell_cell(CoefficientSpec.constant(eta=1.7, mu0=MU0))
        _, _, (_, _, corr) = maxwell_level(coeff, cell, EpsScale(2, 8), PotentialSpec.random(0), "torus")
        assert np.abs(corr["u"]).max() < 1e-14 and np.abs(corr["w"]).max() < 1e-14

    def test_cell_translation_invariance(self, trig_mx):
        # translating the source by one eps-cell commutes with the eps-periodic operator
        coeff, cell = trig_mx
        p = PotentialSpec((((1.0, 0.5, -0.3), (1, 1, 0), 0.3), ((0.5, 0.5, 1.0), (1, -1, 1), 2.0)))

        def shifted(s):
            return PotentialSpec(tuple((a, k, ph - 2 * np.pi * s * k[0]) for a, k, ph in p.modes))

        e1, _, _ = maxwell_level(coeff, cell, EpsScale(2, 8), p, "torus")
        e2, _, _ = maxwell_level(coeff, cell, EpsScale(2, 8), shifted(0.5), "torus")
        e3, _, _ = maxwell_level(coeff, cell, EpsScale(2, 8), shifted(0.25), "torus")
        for k in e1:
            assert e1[k] == pytest.approx(e2[k], rel=1e-9)
        # a shift by half a cell is not a symmetry
        assert abs(e3["err_v_h1c"] - e1["err_v_h1c"]) > 1e-6 * e1["err_v_h1c"]


class TestStudy:
    def test_torus_study(self, trig_mx):
        coeff, cell = trig_mx
        r = maxwell_rate_study(coeff, cell, PotentialSpec.random(0), [EpsScale(m, 8) for m in (2, 4, 8)], "torus")
        assert r.meta["setting"] == "maxwell-torus"
        assert r.meta["asymmetry"]["holds"]
        for k in ("err_v_l2", "err_z_l2", "err_v_h1c", "err_z_h1c"):
            assert r.monotone(k)
        assert r.order("err_v_l2") > 0.8

    def test_mean_electric_corrector_shrinks(self, trig_mx):
        coeff, cell = trig_mx
        r = maxwell_rate_study(coeff, cell, PotentialSpec.random(0), [EpsScale(m, 8) for m in (1, 2, 4)], "torus")
        means = [lv["mean_xi_u0"] for lv in r.meta["levels"]]
        assert means[-1] < means[0]

    def test_constant_coefficients_degenerate(self):
        coeff, cell = maxwell_cell(CoefficientSpec.constant(eta=2.0, mu0=MU0))
        r = maxwell_rate_study(coeff, cell, PotentialSpec.random(0), [EpsScale(m, 8) for m in (1, 2, 3)], "torus",
                               SolveOptions(1e-12))
        assert r.degenerate

    def test_bad_setting(self, trig_mx):
        coeff, cell = trig_mx
        with pytest.raises(ConfigError):
            maxwell_rate_study(coeff, cell, PotentialSpec.random(0), [EpsScale(m, 8) for m in (1, 2, 3)], "ball")

    def test_short_ladder(self, trig_mx):
        coeff, cell = trig_mx
        with pytest.raises(ConfigError):
            maxwell_rate_study(coeff, cell, PotentialSpec.random(0), [EpsScale(1, 8)], "torus")

    def test_cube_eps_checked(self, trig_mx_cube):
        coeff, cell = trig_mx_cube
        with pytest.raises(ConfigError):
            maxwell_rate_study(coeff, cell, PotentialSpec.random(0), [EpsScale(m, 8) for m in (2, 8, 9)], "cube")

    def test_cube_fields_in_v_layout(self, trig_mx_cube):
        coeff, cell = trig_mx_cube
        sc = EpsScale(8, 8)
        r = make_solenoidal_source(PotentialSpec.random(0), "cube", sc.n)
        fine, _ = solve_maxwell_pair(coeff, cell, sc, r, "cube")
        ops = CubeOps(sc.n)
        np.testing.assert_allclose(ops.vec_to_phys(fine.meta["coef"], V_TYPES) * np.sqrt(MU0)[:, None, None, None],
                                   fine.z, atol=1e-12)

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from homogen.coefficients import CoefficientSpec
from homogen.harness import StudyConfig, coefficient_spec_from_config, order_summary, run_cell, run_study
from homogen.report import ConfigError, ConvergenceReport

FAST = dict(eps_ladder=(0.5, 1 / 3, 0.25))


class TestConfig:
    def test_defaults(self):
        c = StudyConfig()
        assert c.study == "torus" and len(c.scales) == 3

    @pytest.mark.parametrize("doc", [
        {"eps_ladder": [0.25, 0.125]},
        {"eps_ladder": [0.125, 0.25, 0.0625]},
        {"eps_ladder": [0.3, 0.2, 0.1]},
        {"resolution_per_cell": 4},
        {"study": "sphere"},
        {"banana": 1},
        {"coefficients": {"preset": "nope"}},
        {"coefficients": {"preset": "laminate", "params": {"bogus": 1}}},
        {"eps_ladder": [0.25, 0.125, 0.0625], "m_ladder": [4, 8, 16]},
        {"study": "domain", "eps_ladder": [0.25, 0.125, 0.0625]},
        {"study": "maxwell", "setting": "ball"},
        {"solver": {"tol": 0}},
        {"mu0": [1.0, -1.0, 1.0]},
    ])
    def test_rejects(self, doc):
        with pytest.raises(ConfigError):
            StudyConfig.from_dict(doc)

    def test_m_ladder(self):
        assert StudyConfig.from_dict({"m_ladder": [2, 4, 8]}).eps_ladder == (0.5, 0.25, 0.125)

    def test_yaml_round_trip(self, tmp_path):
        doc = {"study": "maxwell", "setting": "cube", "coefficients": {"preset": "trigonometric",
               "params": {"seed": 3}}, "mu0": [1.0, 2.0, 0.5], "m_ladder": [8, 12, 16], "seed": 4}
        c = StudyConfig.from_dict(doc)
        c.to_yaml(tmp_path / "c.yaml")
        back = StudyConfig.from_yaml(tmp_path / "c.yaml")
        assert back == c
        assert back.config_hash == c.config_hash

    def test_hash_tracks_content(self):
        a = StudyConfig()
        assert a.config_hash == StudyConfig().config_hash
        assert a.with_seed(1).config_hash != a.config_hash
        assert len(a.config_hash) == 16

    def test_unreadable_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("study: [unclosed")
        with pytest.raises(ConfigError):
            StudyConfig.from_yaml(p)

    def test_coefficients_by_name_and_nu(self):
        spec = coefficient_spec_from_config({"preset": "laminate", "nu": {"kind": "laminate", "axis": 1}})
        assert spec == CoefficientSpec.laminate().with_nu("laminate", axis=1)
        assert coefficient_spec_from_config("oblique-laminate") == CoefficientSpec.oblique_laminate()

    def test_setting_follows_study(self):
        assert StudyConfig(study="domain", eps_ladder=(1 / 8, 1 / 12, 1 / 16)).setting == "cube"


class TestRun:
    def test_constant_coefficients_degenerate(self, tmp_path):
        c = StudyConfig(coefficients=CoefficientSpec.constant(eta=2.0, nu=3.0), tol=1e-12, **FAST)
        r = run_study(c, tmp_path)
        assert r.degenerate
        assert all(v is None for v in order_summary(r).values())

    def test_artifacts(self, tmp_path):
        c = StudyConfig(coefficients=CoefficientSpec.laminate().with_nu("laminate"), **FAST)
        r = run_study(c, tmp_path, plot=True)
        for ext in ("csv", "json", "svg"):
            assert (tmp_path / f"torus.{ext}").exists()
        back = ConvergenceReport.from_csv(tmp_path / "torus.csv")
        assert back.columns == r.columns
        doc = json.loads((tmp_path / "torus.json").read_text())
        assert doc["meta"]["config_hash"] == c.config_hash
        assert (tmp_path / "torus.csv").read_text().startswith(f"# config_hash: {c.config_hash}")

    def test_bit_identical_reruns(self, tmp_path):
        c = StudyConfig(coefficients=CoefficientSpec.trigonometric(seed=2), **FAST)
        run_study(c, tmp_path / "a")
        run_study(c, tmp_path / "b")
        assert (tmp_path / "a" / "torus.csv").read_bytes() == (tmp_path / "b" / "torus.csv").read_bytes()

    def test_maxwell_cell_uses_unit_nu(self):
        c = StudyConfig(study="maxwell", coefficients=CoefficientSpec.laminate().with_nu("laminate"), **FAST)
        r = run_study(c)
        assert r.meta["setting"] == "maxwell-torus"
        assert "asymmetry" in r.meta

    def test_run_cell_writes_files(self, tmp_path):
        cell = run_cell(StudyConfig(coefficients=CoefficientSpec.laminate()), tmp_path)
        doc = json.loads((tmp_path / "cell.json").read_text())
        np.testing.assert_allclose(doc["eta0"], cell.eta0)
        assert (tmp_path / "cell.npz").exists()


CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_shipped_configs_load(path):
    c = StudyConfig.from_yaml(path)
    assert StudyConfig.from_dict(yaml.safe_load(c.to_yaml())) == c

"""Study configuration, orchestration and persistence of reports.

A study is described by a YAML document (or the equivalent dict)::

    study: torus                # torus | domain | maxwell
    setting: torus              # maxwell only: torus | cube
    coefficients:
      preset: laminate          # constant | laminate | oblique-laminate | diagonal-shifted
                                # | potential | trigonometric | expression
      params: {amplitude: 1.0}
      nu: {kind: laminate, axis: 2}
    mu0: [1.0, 1.0, 1.0]        # diagonal or full 3x3
    eps_ladder: [0.25, 0.125, 0.0625]
    resolution_per_cell: 8
    source: {seed: 0, n_modes: 4}
    solver: {tol: 1.0e-10, maxiter: null}
    domain: {eps0: 0.25, kappa: 1.5}

``m_ladder: [4, 8, 16]`` may replace ``eps_ladder``.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .cell import CellData, solve_cell
from .coefficients import CoefficientError, CoefficientSpec
from .domain import CubeSource, DomainConfig, domain_rate_study
from .fields import build_grid, sample_coefficient_set
from .krylov import SolveOptions
from .maxwell import PotentialSpec, maxwell_rate_study, unit_nu
from .report import ConfigError, ConvergenceReport, fit_order
from .torus import MIN_RESOLUTION, EpsScale, TrigSource, torus_rate_study

STUDIES = ("torus", "domain", "maxwell")
PRESETS = {
    "constant": CoefficientSpec.constant,
    "laminate": CoefficientSpec.laminate,
    "oblique-laminate": CoefficientSpec.oblique_laminate,
    "diagonal-shifted": CoefficientSpec.diagonal_shifted,
    "potential": CoefficientSpec.potential,
    "trigonometric": CoefficientSpec.trigonometric,
}
_TOP_KEYS = {"study", "setting", "coefficients", "mu0", "eps_ladder", "m_ladder", "resolution_per_cell",
             "source", "solver", "domain", "seed"}


def coefficient_spec_from_config(doc) -> CoefficientSpec:
    """Build a :class:`CoefficientSpec` from a preset entry or a full spec dict."""
    if isinstance(doc, CoefficientSpec):
        return doc
    if isinstance(doc, str):
        doc = {"preset": doc}
    if not isinstance(doc, dict):
        raise ConfigError("coefficients must be a mapping or a preset name")
    try:
        if "eta_kind" in doc:
            return CoefficientSpec.from_dict(doc)
        name = doc.get("preset", "laminate")
        if name == "expression":
            spec = CoefficientSpec("expression", {"matrix": doc["params"]["matrix"]}, "constant", {"value": 1.0})
        elif name in PRESETS:
            spec = PRESETS[name](**dict(doc.get("params") or {}))
        else:
            raise ConfigError(f"unknown coefficient preset {name!r}")
        nu = doc.get("nu")
        if nu:
            nu = dict(nu)
            spec = spec.with_nu(nu.pop("kind", "constant"), **nu)
        return spec
    except (TypeError, KeyError, CoefficientError) as exc:
        raise ConfigError(f"invalid coefficient specification: {exc}") from exc


def _as_m(eps: float) -> int:
    m = round(1.0 / eps)
    if m < 1 or abs(m * eps - 1.0) > 1e-9:
        raise ConfigError(f"eps = {eps!r} is not the reciprocal of an integer")
    return m


@dataclass(frozen=True)
class StudyConfig:
    """Validated description of one convergence study.

    Invariants: ``eps_ladder`` is strictly decreasing with at least three
    entries of the form ``1/m`` and ``resolution_per_cell >= 8``.
    """

    study: str = "torus"
    coefficients: CoefficientSpec = field(default_factory=CoefficientSpec.laminate)
    setting: str = "torus"
    eps_ladder: tuple = (0.25, 0.125, 0.0625)
    resolution_per_cell: int = MIN_RESOLUTION
    source: dict = field(default_factory=lambda: {"seed": 0})
    tol: float = 1e-10
    maxiter: int | None = None
    eps0: float = 0.25
    kappa: float = 1.5

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        setting = {"torus": "torus", "domain": "cube"}.get(self.study, self.setting)
        if setting not in ("torus", "cube"):
            raise ConfigError(f"unknown setting {self.setting!r}")
        object.__setattr__(self, "setting", setting)
        ladder = tuple(float(e) for e in self.eps_ladder)
        if len(ladder) < 3:
            raise ConfigError("eps_ladder needs at least three levels")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError("eps_ladder must be strictly decreasing")
        for e in ladder:
            _as_m(e)
        object.__setattr__(self, "eps_ladder", ladder)
        if int(self.resolution_per_cell) != self.resolution_per_cell or self.resolution_per_cell < MIN_RESOLUTION:
            raise ConfigError(f"resolution_per_cell must be an integer >= {MIN_RESOLUTION}")
        if not self.tol > 0:
            raise ConfigError("solver tolerance must be positive")
        if not isinstance(self.source, dict):
            raise ConfigError("source must be a mapping")
        if self.setting == "cube":
            cfg = self.domain_config
            for e in ladder:
                try:
                    cfg.check_eps(e)
                except Exception as exc:
                    raise ConfigError(str(exc)) from exc

    @property
    def scales(self) -> list[EpsScale]:
        return [EpsScale(_as_m(e), self.resolution_per_cell) for e in self.eps_ladder]

    @property
    def options(self) -> SolveOptions:
        return SolveOptions(self.tol, self.maxiter)

    @property
    def domain_config(self) -> DomainConfig:
        return DomainConfig(eps0=self.eps0, kappa=self.kappa)

    @property
    def name(self) -> str:
        return self.study if self.study != "maxwell" else f"maxwell-{self.setting}"

    def make_source(self):
        kw = dict(self.source)
        seed = int(kw.pop("seed", 0))
        try:
            if self.study == "torus":
                return TrigSource.random(seed, **kw)
            if self.study == "domain":
                return CubeSource.random(seed, **kw)
            return PotentialSpec.random(seed, **kw)
        except TypeError as exc:
            raise ConfigError(f"invalid source parameters: {exc}") from exc

    def with_seed(self, seed: int) -> "StudyConfig":
        return replace(self, source={**self.source, "seed": int(seed)})

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "setting": self.setting,
            "coefficients": self.coefficients.to_dict(),
            "eps_ladder": list(self.eps_ladder),
            "resolution_per_cell": int(self.resolution_per_cell),
            "source": dict(self.source),
            "solver": {"tol": self.tol, "maxiter": self.maxiter},
            "domain": {"eps0": self.eps0, "kappa": self.kappa},
        }

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        if not isinstance(doc, dict):
            raise ConfigError("a study configuration must be a mapping")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        spec = coefficient_spec_from_config(doc.get("coefficients", "laminate"))
        if "mu0" in doc:
            try:
                spec = spec.with_mu0(doc["mu0"])
            except (ValueError, CoefficientError) as exc:
                raise ConfigError(f"invalid mu0: {exc}") from exc
        if "m_ladder" in doc and "eps_ladder" in doc:
            raise ConfigError("give either eps_ladder or m_ladder, not both")
        if "m_ladder" in doc:
            ladder = [1.0 / int(m) for m in doc["m_ladder"]]
        else:
            ladder = doc.get("eps_ladder", cls.eps_ladder)
        solver = dict(doc.get("solver") or {})
        dom = dict(doc.get("domain") or {})
        source = dict(doc.get("source") or {"seed": 0})
        if "seed" in doc:
            source["seed"] = int(doc["seed"])
        kw = {}
        if "resolution_per_cell" in doc:
            kw["resolution_per_cell"] = doc["resolution_per_cell"]
        try:
            return cls(study=doc.get("study", "torus"), coefficients=spec, setting=doc.get("setting", "torus"),
                       eps_ladder=tuple(ladder), source=source, tol=float(solver.get("tol", 1e-10)),
                       maxiter=solver.get("maxiter"), eps0=float(dom.get("eps0", 0.25)),
                       kappa=float(dom.get("kappa", 1.5)), **kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path) -> "StudyConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(doc or {})

    def to_yaml(self, path=None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def cell_for(config: StudyConfig) -> tuple:
    """Sample the coefficients on the cell grid of ``config`` and solve the cell problems."""
    offset = 0.5 if config.setting == "cube" else 0.0
    coeff = sample_coefficient_set(config.coefficients, build_grid(config.resolution_per_cell, 1.0, offset))
    if config.study == "maxwell":
        coeff = unit_nu(coeff)
    return coeff, solve_cell(coeff, config.options)


def run_study(config: StudyConfig, out_dir=None, plot: bool = False) -> ConvergenceReport:
    """Dispatch to the torus, cube or Maxwell rate study and optionally write its artifacts.

    Writes ``<name>.csv``, ``<name>.json`` and, with ``plot``, ``<name>.svg``
    into ``out_dir``.
    """
    t0 = time.perf_counter()
    coeff, cell = cell_for(config)
    source = config.make_source()
    opts = config.options
    if config.study == "torus":
        report = torus_rate_study(coeff, source, config.scales, opts, cell=cell)
    elif config.study == "domain":
        report = domain_rate_study(coeff, source, config.scales, config.domain_config, opts, cell=cell)
    else:
        report = maxwell_rate_study(coeff, cell, source, config.scales, config.setting, opts,
                                    config.domain_config)
    report.meta["config_hash"] = config.config_hash
    report.meta["config"] = config.to_dict()
    report.meta["coefficients"] = config.coefficients.label
    report.meta["seconds"] = round(time.perf_counter() - t0, 3)
    if out_dir is not None:
        write_report(report, out_dir, config.name, plot)
    return report


def write_report(report: ConvergenceReport, out_dir, name: str, plot: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{name}.csv", "json": out / f"{name}.json"}
    report.to_csv(paths["csv"])
    report.to_json(paths["json"])
    if plot:
        tag = report.meta.get("config_hash", "")
        paths["svg"] = report.plot(out / f"{name}.svg", title=f"{name} [{tag}]")
    return paths


def run_cell(config: StudyConfig, out_dir=None) -> CellData:
    """Effective tensors only; writes ``cell.json`` (summary) and ``cell.npz`` (fields)."""
    _, cell = cell_for(config)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"config_hash": config.config_hash, "coefficients": config.coefficients.label, **cell.summary(),
               "g0": cell.g0.tolist()}
        (out / "cell.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        cell.save(out / "cell.npz")
    return cell


def order_summary(report: ConvergenceReport) -> dict:
    """Fitted order and R^2 per column, ``None`` for degenerate columns."""
    return {k: (None if v is None else (round(v["slope"], 4), round(v["r2"], 5)))
            for k, v in report.fitted_orders.items()}


__all__ = [
    "STUDIES",
    "StudyConfig",
    "ConfigError",
    "ConvergenceReport",
    "coefficient_spec_from_config",
    "fit_order",
    "order_summary",
    "run_cell",
    "run_study",
    "write_report",
]


"""Closed-form coefficient presets for the permittivity ``eta`` and the scalar ``nu``.

Every preset is a smooth, 1-periodic function of the cell coordinates
``x = (x1, x2, x3)``.  Presets are plain data (``CoefficientSpec``) so they
can round-trip through study configuration files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

TWO_PI = 2.0 * np.pi

ETA_KINDS = ("constant", "laminate", "diagonal-shifted", "potential", "trigonometric", "expression")
NU_KINDS = ("constant", "laminate", "expression")

_EXPR_NAMESPACE = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "pi": np.pi,
    "abs": np.abs,
}


class CoefficientError(ValueError):
    """Raised for coefficient specifications that are not admissible."""


def _eval_expression(expr, x1, x2, x3):
    env = dict(_EXPR_NAMESPACE, x1=x1, x2=x2, x3=x3)
    value = eval(str(expr), {"__builtins__": {}}, env)  # noqa: S307 - trusted config input
    return np.broadcast_to(np.asarray(value, dtype=float), np.broadcast(x1, x2, x3).shape)


@dataclass(frozen=True)
class CoefficientSpec:
    """Declarative description of ``(mu0, eta, nu)``.

    Parameters
    ----------
    eta_kind : str
        One of ``ETA_KINDS``.
    eta_params : dict
        Preset parameters, see the ``eta_at`` branches.
    nu_kind : str
        One of ``NU_KINDS``.
    nu_params : dict
        Preset parameters for ``nu``.
    mu0 : 3x3 nested sequence
        Constant symmetric positive definite magnetic permeability.
    seed : int
        Seed used by the random ``trigonometric`` preset.
    """

    eta_kind: str = "constant"
    eta_params: dict = field(default_factory=dict)
    nu_kind: str = "constant"
    nu_params: dict = field(default_factory=dict)
    mu0: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    seed: int = 0

    def __post_init__(self):
        if self.eta_kind not in ETA_KINDS:
            raise CoefficientError(f"unknown eta preset {self.eta_kind!r}")
        if self.nu_kind not in NU_KINDS:
            raise CoefficientError(f"unknown nu preset {self.nu_kind!r}")
        mu0 = np.asarray(self.mu0, dtype=float)
        if mu0.shape != (3, 3):
            raise CoefficientError("mu0 must be a 3x3 matrix")
        if not np.allclose(mu0, mu0.T, atol=1e-14):
            raise CoefficientError("mu0 must be symmetric")
        if np.linalg.eigvalsh(mu0).min() <= 0:
            raise CoefficientError("mu0 must be positive definite")
        object.__setattr__(self, "mu0", tuple(tuple(float(v) for v in row) for row in mu0))

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, eta=1.0, nu=1.0, mu0=None):
        eta = np.asarray(eta, dtype=float)
        if eta.ndim == 0:
            eta = float(eta) * np.eye(3)
        kw = {} if mu0 is None else {"mu0": _as_mu0(mu0)}
        return cls("constant", {"matrix": eta.tolist()}, "constant", {"value": float(nu)}, **kw)

    @classmethod
    def laminate(cls, mean=2.0, amplitude=1.0, axis=0, nu=1.0, mu0=None):
        """``eta = (mean + amplitude sin 2 pi x_axis) I``."""
        kw = {} if mu0 is None else {"mu0": _as_mu0(mu0)}
        return cls("laminate", {"mean": mean, "amplitude": amplitude, "axis": axis},
                   "constant", {"value": float(nu)}, **kw)

    @classmethod
    def oblique_laminate(cls, direction=(1, 1, 0), mean=2.0, amplitude=1.3, nu=1.0, mu0=None):
        """``eta = (mean + amplitude sin 2 pi (d . x)) I`` with an integer direction ``d``.

        Layers that are not parallel to the cube faces make the correctors
        violate the boundary conditions, which exposes the boundary layer.
        """
        d = [int(v) for v in direction]
        if len(d) != 3 or not any(d):
            raise CoefficientError("direction must be a nonzero integer 3-vector")
        kw = {} if mu0 is None else {"mu0": _as_mu0(mu0)}
        return cls("laminate", {"mean": mean, "amplitude": amplitude, "direction": d},
                   "constant", {"value": float(nu)}, **kw)

    @classmethod
    def diagonal_shifted(cls, mean=2.0, amplitude=1.0, nu=1.0, mu0=None):
        """``eta = diag(m + a sin 2pi x2, m + a sin 2pi x3, m + a sin 2pi x1)``.

        Each diagonal entry is independent of its own coordinate, so the
        columns of ``eta`` are divergence free and ``eta0`` equals the
        arithmetic mean.
        """
        kw = {} if mu0 is None else {"mu0": _as_mu0(mu0)}
        return cls("diagonal-shifted", {"mean": mean, "amplitude": amplitude},
                   "constant", {"value": float(nu)}, **kw)

    @classmethod
    def potential(cls, mean=2.0, amplitude=1.0, nu=1.0, mu0=None):
        """``eta = diag(m + a sin 2pi x1, m + a sin 2pi x2, m + a sin 2pi x3)``.

        Entry ``j`` of ``eta^{-1}`` depends on ``x_j`` only: the columns of
        ``eta^{-1}`` are potential and ``eta0`` equals the harmonic mean.
        """
        kw = {} if mu0 is None else {"mu0": _as_mu0(mu0)}
        return cls("potential", {"mean": mean, "amplitude": amplitude},
                   "constant", {"value": float(nu)}, **kw)

    @classmethod
    def trigonometric(cls, seed=0, n_modes=3, mean=2.0, contrast=0.6, max_mode=1, nu=1.0, mu0=None):
        """Random band-limited SPD field ``mean*I + sum_k B_k cos(2pi k.x + phase_k)``."""
        kw = {} if mu0 is None else {"mu0": _as_mu0(mu0)}
        params = {"n_modes": n_modes, "mean": mean, "contrast": contrast, "max_mode": max_mode}
        return cls("trigonometric", params, "constant", {"value": float(nu)}, seed=seed, **kw)

    def with_nu(self, kind="constant", **params):
        d = self.to_dict()
        d["nu_kind"] = kind
        d["nu_params"] = params
        return CoefficientSpec.from_dict(d)

    def with_mu0(self, mu0):
        d = self.to_dict()
        d["mu0"] = _as_mu0(mu0)
        return CoefficientSpec.from_dict(d)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["mu0"] = [list(r) for r in self.mu0]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientSpec":
        d = dict(d)
        if "mu0" in d:
            d["mu0"] = _as_mu0(d["mu0"])
        return cls(**d)

    # -- evaluation -------------------------------------------------------

    @property
    def mu0_matrix(self) -> np.ndarray:
        return np.array(self.mu0)

    def _trig_modes(self):
        p = self.eta_params
        rng = np.random.default_rng(self.seed)
        n_modes = int(p.get("n_modes", 3))
        max_mode = int(p.get("max_mode", 1))
        mean = float(p.get("mean", 2.0))
        contrast = float(p.get("contrast", 0.6))
        if not 0 <= contrast < 1:
            raise CoefficientError("trigonometric contrast must lie in [0, 1)")
        weights = rng.dirichlet(np.ones(n_modes)) * contrast * mean
        modes = []
        for w in weights:
            while True:
                k = rng.integers(-max_mode, max_mode + 1, size=3)
                if np.any(k != 0):
                    break
            b = rng.standard_normal((3, 3))
            b = b + b.T
            b /= np.linalg.norm(b, 2)
            phase = rng.uniform(0, TWO_PI)
            modes.append((k, w * b, phase))
        return mean, modes

    def eta_fourier(self) -> dict[tuple[int, int, int], np.ndarray]:
        """Exact Fourier coefficients of ``eta`` (only for band-limited presets)."""
        if self.eta_kind == "constant":
            return {(0, 0, 0): np.array(self.eta_params.get("matrix", np.eye(3)), dtype=complex)}
        if self.eta_kind != "trigonometric":
            raise CoefficientError("Fourier coefficients are only tabulated for constant/trigonometric presets")
        mean, modes = self._trig_modes()
        coef: dict[tuple[int, int, int], np.ndarray] = {(0, 0, 0): mean * np.eye(3, dtype=complex)}
        for k, b, phase in modes:
            for sign in (1, -1):
                key = tuple(int(v) for v in sign * k)
                coef.setdefault(key, np.zeros((3, 3), dtype=complex))
                coef[key] = coef[key] + 0.5 * b * np.exp(1j * sign * phase)
        return coef

    def eta_at(self, x1, x2, x3) -> np.ndarray:
        """Return ``eta`` at the given coordinates, shape ``(3, 3) + broadcast shape``."""
        shape = np.broadcast(x1, x2, x3).shape
        out = np.zeros((3, 3) + shape)
        p = self.eta_params
        xs = (x1, x2, x3)
        if self.eta_kind == "constant":
            m = np.asarray(p.get("matrix", np.eye(3)), dtype=float)
            out[:] = m.reshape((3, 3) + (1,) * len(shape))
        elif self.eta_kind == "laminate":
            s = p.get("mean", 2.0) + p.get("amplitude", 1.0) * np.sin(TWO_PI * _layer_coordinate(p, xs))
            for i in range(3):
                out[i, i] = s
        elif self.eta_kind == "diagonal-shifted":
            m, a = p.get("mean", 2.0), p.get("amplitude", 1.0)
            for i in range(3):
                out[i, i] = m + a * np.sin(TWO_PI * xs[(i + 1) % 3])
        elif self.eta_kind == "potential":
            m, a = p.get("mean", 2.0), p.get("amplitude", 1.0)
            for i in range(3):
                out[i, i] = m + a * np.sin(TWO_PI * xs[i])
        elif self.eta_kind == "trigonometric":
            mean, modes = self._trig_modes()
            for i in range(3):
                out[i, i] = mean
            for k, b, phase in modes:
                c = np.cos(TWO_PI * (k[0] * x1 + k[1] * x2 + k[2] * x3) + phase)
                out += b.reshape((3, 3) + (1,) * len(shape)) * c
        else:  # expression
            m = p["matrix"]
            if isinstance(m, str):
                s = _eval_expression(m, x1, x2, x3)
                for i in range(3):
                    out[i, i] = s
            else:
                for i in range(3):
                    for j in range(3):
                        out[i, j] = _eval_expression(m[i][j], x1, x2, x3)
        return out

    def nu_at(self, x1, x2, x3) -> np.ndarray:
        shape = np.broadcast(x1, x2, x3).shape
        p = self.nu_params
        if self.nu_kind == "constant":
            return np.full(shape, float(p.get("value", 1.0)))
        if self.nu_kind == "laminate":
            xs = (x1, x2, x3)
            return np.broadcast_to(
                p.get("mean", 2.0) + p.get("amplitude", 1.0) * np.sin(TWO_PI * _layer_coordinate(p, xs)), shape
            ).copy()
        return _eval_expression(p["expr"], x1, x2, x3).copy()

    @property
    def is_constant(self) -> bool:
        return self.eta_kind == "constant" and self.nu_kind == "constant"

    @property
    def label(self) -> str:
        tag = self.eta_kind
        if self.eta_kind == "trigonometric":
            tag += f"[seed={self.seed}]"
        if self.eta_kind == "laminate" and "direction" in self.eta_params:
            tag += "[" + ",".join(str(v) for v in self.eta_params["direction"]) + "]"
        if self.nu_kind != "constant":
            tag += f"+nu:{self.nu_kind}"
        return tag


def _layer_coordinate(p, xs):
    d = p.get("direction")
    if d is None:
        return xs[int(p.get("axis", 0))]
    return d[0] * xs[0] + d[1] * xs[1] + d[2] * xs[2]


def _as_mu0(mu0) -> tuple:
    m = np.asarray(mu0, dtype=float)
    if m.ndim == 1:
        m = np.diag(m)
    return tuple(tuple(float(v) for v in row) for row in m)


def shipped_presets() -> list[CoefficientSpec]:
    """The presets exercised by the rate studies and invariant suites."""
    return [
        CoefficientSpec.laminate(),
        CoefficientSpec.diagonal_shifted(),
        CoefficientSpec.potential(),
        CoefficientSpec.trigonometric(seed=1),
        CoefficientSpec.oblique_laminate(),
    ]

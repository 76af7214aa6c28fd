"""Convergence reports and least-squares order fitting."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# errors below this are treated as exact agreement; no order is fitted then
DEGENERATE_ERROR = 1e-9


class ConfigError(ValueError):
    """Raised for invalid study configurations or fit inputs."""


def fit_order(points) -> tuple[float, float, float]:
    """Fit ``log e = slope * log eps + intercept`` by least squares.

    Parameters
    ----------
    points : sequence of (eps, error)
        At least three pairs with positive entries.

    Returns
    -------
    slope, intercept, r2 : float
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ConfigError("order fitting needs at least three (eps, error) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ConfigError("eps and error values must be positive and finite")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class ConvergenceReport:
    """Error norms per ``eps`` level with fitted orders.

    ``columns`` maps a column name to one error value per entry of ``eps``.
    """

    eps: list[float]
    columns: dict[str, list[float]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.columns.items():
            if len(v) != len(self.eps):
                raise ConfigError(f"column {k!r} has {len(v)} rows, expected {len(self.eps)}")

    @property
    def degenerate(self) -> bool:
        return all(max(v) <= DEGENERATE_ERROR for v in self.columns.values())

    @property
    def fitted_orders(self) -> dict[str, dict | None]:
        out: dict[str, dict | None] = {}
        for name, errs in self.columns.items():
            if max(errs) <= DEGENERATE_ERROR or min(errs) <= 0:
                out[name] = None
                continue
            s, b, r2 = fit_order(list(zip(self.eps, errs)))
            out[name] = {"slope": s, "intercept": b, "r2": r2}
        return out

    def order(self, name: str) -> float:
        fo = self.fitted_orders[name]
        return float("nan") if fo is None else fo["slope"]

    def r2(self, name: str) -> float:
        fo = self.fitted_orders[name]
        return float("nan") if fo is None else fo["r2"]

    def monotone(self, name: str) -> bool:
        """Errors strictly decrease as ``eps`` decreases."""
        pairs = sorted(zip(self.eps, self.columns[name]), reverse=True)
        return all(b[1] < a[1] for a, b in zip(pairs, pairs[1:]))

    # serialization -------------------------------------------------------

    def to_csv(self, path=None) -> str:
        """Rows ``eps, <columns>`` with ``repr`` floats, preceded by a ``# config_hash`` comment if known."""
        buf = io.StringIO()
        if self.meta.get("config_hash"):
            buf.write(f"# config_hash: {self.meta['config_hash']}\n")
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        w.writerow(["eps"] + names)
        for i, e in enumerate(self.eps):
            w.writerow([repr(float(e))] + [repr(float(self.columns[k][i])) for k in names])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        return {
            "eps": [float(e) for e in self.eps],
            "columns": {k: [float(x) for x in v] for k, v in self.columns.items()},
            "fitted_orders": self.fitted_orders,
            "degenerate": self.degenerate,
            "monotone": {k: self.monotone(k) for k in self.columns},
            "meta": self.meta,
        }

    @classmethod
    def from_csv(cls, path) -> "ConvergenceReport":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        names = rows[0][1:]
        eps = [float(r[0]) for r in rows[1:]]
        cols = {k: [float(r[i + 1]) for r in rows[1:]] for i, k in enumerate(names)}
        return cls(eps, cols)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), indent=2, sort_keys=True, default=_jsonable)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def plot(self, path, title: str = "") -> Path:
        """Log-log plot with ``eps`` and ``sqrt(eps)`` reference lines, saved as SVG."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = "homogen"
        eps = np.asarray(self.eps)
        fig, ax = plt.subplots(figsize=(5, 4))
        for name, errs in self.columns.items():
            errs = np.asarray(errs)
            if np.all(errs > 0):
                ax.loglog(eps, errs, "o-", label=name)
        ref = max(max(v) for v in self.columns.values()) or 1.0
        ax.loglog(eps, ref * eps / eps[0], "k--", lw=0.8, label="eps")
        ax.loglog(eps, ref * np.sqrt(eps / eps[0]), "k:", lw=0.8, label="sqrt(eps)")
        ax.set_xlabel("eps")
        ax.set_ylabel("error")
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path

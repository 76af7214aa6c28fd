"""Sine/cosine spectral calculus on the unit cube ``[0, 1]^3``.

Samples sit at cell midpoints ``(i + 1/2) / N``.  Each scalar component is
expanded in a tensor basis where every axis is either a sine (``"S"``) or
cosine (``"C"``) series, transformed with orthonormal DST-II/DCT-II.
Coefficient arrays are padded to ``(N + 1)^3`` and indexed by the mode number
``q = 0..N``: sine modes occupy ``1..N`` and cosine modes ``0..N-1``.  On that
layout ``d/dx`` is the diagonal multiplier ``+pi q`` (sine to cosine) or
``-pi q`` (cosine to sine), restricted to ``1 <= q <= N - 1``.

The three layouts used for vector fields are

* ``V``: ``(SCC, CSC, CCS)``, normal component odd across each face;
* ``E``: ``(CSS, SCS, SSC)``, the image of ``V`` under ``curl``;
* ``Q``: ``CCC``, the image of ``V`` under ``div``.

Viewed on the period-2 torus these are the odd/even reflections of the
field, which is the extension used for smoothing and correctors.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

V_TYPES = ("SCC", "CSC", "CCS")
E_TYPES = ("CSS", "SCS", "SSC")
Q_TYPE = "CCC"


def flip(t: str, axis: int) -> str:
    c = "C" if t[axis] == "S" else "S"
    return t[:axis] + c + t[axis + 1:]


class CubeOps:
    """Transforms and derivatives for an ``N``-point midpoint grid on the unit cube."""

    def __init__(self, N: int):
        if N < 4:
            raise ValueError("cube grid needs N >= 4")
        self.N = N
        q = np.arange(N + 1, dtype=float)
        d = np.pi * q
        d[0] = 0.0
        d[N] = 0.0
        self.d1 = d
        self.h = 1.0 / N
        self.points = (np.arange(N) + 0.5) / N
        self.d = (d[:, None, None], d[None, :, None], d[None, None, :])
        self._masks: dict[str, np.ndarray] = {}

    def mask(self, t: str) -> np.ndarray:
        """Boolean mask of the coefficient slots that a layout ``t`` may occupy."""
        m = self._masks.get(t)
        if m is None:
            m = self._masks[t] = self._make_mask(t)
        return m

    def _make_mask(self, t):
        N = self.N
        m = np.ones((N + 1,) * 3, dtype=bool)
        for ax, c in enumerate(t):
            idx = [slice(None)] * 3
            idx[ax] = 0 if c == "S" else N
            m[tuple(idx)] = False
        return m

    # transforms ------------------------------------------------------------

    def to_coef(self, a: np.ndarray, t: str) -> np.ndarray:
        """Physical samples ``(N, N, N)`` to padded coefficients ``(N+1,)*3``."""
        N = self.N
        c = a
        for ax, kind in enumerate(t):
            f = sfft.dst if kind == "S" else sfft.dct
            c = f(c, type=2, norm="ortho", axis=ax)
        out = np.zeros((N + 1,) * 3)
        out[tuple(slice(1, None) if k == "S" else slice(0, N) for k in t)] = c
        return out

    def to_phys(self, c: np.ndarray, t: str) -> np.ndarray:
        N = self.N
        a = c[tuple(slice(1, None) if k == "S" else slice(0, N) for k in t)]
        for ax, kind in enumerate(t):
            f = sfft.idst if kind == "S" else sfft.idct
            a = f(a, type=2, norm="ortho", axis=ax)
        return a

    def vec_to_coef(self, a, types):
        return np.stack([self.to_coef(a[i], t) for i, t in enumerate(types)])

    def vec_to_phys(self, c, types):
        return np.stack([self.to_phys(c[i], t) for i, t in enumerate(types)])

    # derivatives -------------------------------------------------------------

    def partial(self, c: np.ndarray, t: str, axis: int) -> tuple[np.ndarray, str]:
        """Derivative along ``axis`` in coefficient space; returns the new type."""
        sign = 1.0 if t[axis] == "S" else -1.0
        return sign * self.d[axis] * c, flip(t, axis)

    def curl_V(self, a: np.ndarray) -> np.ndarray:
        """``curl`` from ``V`` to ``E`` coefficients: ``-(d x a)``."""
        d1, d2, d3 = self.d
        return np.stack([-d2 * a[2] + d3 * a[1], -d3 * a[0] + d1 * a[2], -d1 * a[1] + d2 * a[0]])

    def curl_E(self, w: np.ndarray) -> np.ndarray:
        """Transpose of ``curl_V``: ``d x w`` from ``E`` to ``V``."""
        d1, d2, d3 = self.d
        return np.stack([d2 * w[2] - d3 * w[1], d3 * w[0] - d1 * w[2], d1 * w[1] - d2 * w[0]])

    def div_V(self, a: np.ndarray) -> np.ndarray:
        d1, d2, d3 = self.d
        return d1 * a[0] + d2 * a[1] + d3 * a[2]

    def div_T(self, s: np.ndarray) -> np.ndarray:
        """Transpose of ``div_V`` (equals ``-grad`` from ``Q`` to ``V``)."""
        d1, d2, d3 = self.d
        return np.stack([d1 * s, d2 * s, d3 * s])

    def steklov(self, eps: float) -> np.ndarray:
        """Per-mode Steklov multiplier of the reflected field on the period-2 torus."""
        s = np.sinc(0.5 * eps * np.pi * np.arange(self.N + 1) / np.pi)
        return s[:, None, None] * s[None, :, None] * s[None, None, :]

    # norms ---------------------------------------------------------------------

    def l2_coef(self, c) -> float:
        return float(np.sqrt(np.sum(c**2) / self.N**3))

    def l2_phys(self, a) -> float:
        return float(np.sqrt(np.sum(a**2) / self.N**3))

    def jacobian_phys(self, c, types) -> np.ndarray:
        """``J[i, j] = d_j f_i`` at the midpoints for a coefficient vector field."""
        N = self.N
        J = np.zeros((len(types), 3, N, N, N))
        for i, t in enumerate(types):
            for j in range(3):
                dc, dt = self.partial(c[i], t, j)
                J[i, j] = self.to_phys(dc, dt)
        return J

    def h1_coef(self, c, types) -> float:
        tot = np.sum(c**2)
        for i, t in enumerate(types):
            for j in range(3):
                tot += np.sum(self.partial(c[i], t, j)[0] ** 2)
        return float(np.sqrt(tot / self.N**3))

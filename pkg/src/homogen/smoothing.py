"""Steklov smoothing: averaging over an ``eps``-scaled copy of the unit cell.

On a periodic grid the operator is the Fourier multiplier
``prod_j sinc(eps * xi_j / 2)``, the exact cell average of ``exp(i eps xi . z)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .fields import Grid, GridError, Lattice, PeriodicField, SpectralOps

_AXES = (-3, -2, -1)


def _sinc(t):
    # numpy's sinc is sin(pi x) / (pi x)
    return np.sinc(t / np.pi)


@dataclass(frozen=True, eq=False)
class SteklovKernel:
    """Precomputed Steklov multiplier for a given ``eps`` and grid.

    Parameters
    ----------
    eps : float
        Smoothing scale in ``(0, 1]``.
    grid : Grid
        Periodic grid the kernel acts on.
    """

    eps: float
    grid: Grid

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise GridError("eps must lie in (0, 1]")

    def _factors(self):
        k = self.grid.wavenumbers
        return _sinc(0.5 * self.eps * k)

    @cached_property
    def multiplier(self) -> np.ndarray:
        """Full ``(n, n, n)`` multiplier on the ``fftn`` layout."""
        s = self._factors()
        return s[:, None, None] * s[None, :, None] * s[None, None, :]

    @cached_property
    def rmultiplier(self) -> np.ndarray:
        """Multiplier on the ``rfftn`` layout."""
        s = self._factors()
        n = self.grid.n
        # sinc is even, so the sign of the Nyquist entry on the half axis is irrelevant
        sr = _sinc(0.5 * self.eps * np.abs(self.grid.wavenumbers[: n // 2 + 1]))
        return s[:, None, None] * s[None, :, None] * sr[None, None, :]

    def apply_array(self, a: np.ndarray) -> np.ndarray:
        """Smooth a real array over its trailing three axes."""
        n = self.grid.n
        return sfft.irfftn(self.rmultiplier * sfft.rfftn(a, axes=_AXES), s=(n, n, n), axes=_AXES)


def steklov_apply(kernel: SteklovKernel, f: PeriodicField) -> PeriodicField:
    """Apply ``S_eps`` to a sampled field."""
    if f.grid != kernel.grid:
        raise GridError("field and kernel live on different grids")
    v = f.values
    if np.iscomplexobj(v):
        out = sfft.ifftn(kernel.multiplier * sfft.fftn(v, axes=_AXES), axes=_AXES)
    else:
        out = kernel.apply_array(v)
    return PeriodicField(f.grid, out)


# ---------------------------------------------------------------------------
# empirical checks of the smoothing estimates
# ---------------------------------------------------------------------------


def random_smooth_field(grid: Grid, rng: np.random.Generator, components: int = 0, decay: float = 0.35,
                        cutoff: int = 6) -> np.ndarray:
    """Real band-limited random field with Gaussian spectral decay.

    ``components = 0`` gives a scalar field; otherwise the leading axis has
    the given length.
    """
    ops = SpectralOps(grid)
    shape = ((components,) if components else ()) + grid.shape
    white = rng.standard_normal(shape)
    unit = 2 * np.pi / grid.period
    env = np.exp(-decay * ops.k2 / unit**2) * ops.mode_mask(cutoff)
    out = ops.multiplier(white, env)
    return out / np.sqrt(np.mean(out**2))


def smoothing_error_ratio(u: np.ndarray, kernel: SteklovKernel, lattice: Lattice | None = None) -> float:
    """``||S u - u|| / (eps r1 ||D u||)``; the estimate asserts this is at most one."""
    lattice = lattice or Lattice()
    ops = SpectralOps(kernel.grid)
    diff = kernel.apply_array(u) - u
    grads = np.stack([ops.grad(c) for c in np.reshape(u, (-1,) + kernel.grid.shape)])
    num = np.sqrt(np.sum(diff**2))
    den = kernel.eps * lattice.r1 * np.sqrt(np.sum(grads**2))
    return float(num / den)


def multiplier_bound_ratio(f_cell, u: np.ndarray, kernel: SteklovKernel) -> float:
    """``||f^eps S_eps u|| / (|Omega|^{-1/2} ||f||_{L2(Omega)} ||u||)`` on the unit torus.

    ``f_cell`` is a callable ``f(x1, x2, x3)`` that is 1-periodic; it is
    evaluated at ``x / eps``.  ``eps`` must be the reciprocal of an integer.
    """
    grid = kernel.grid
    m = round(1.0 / kernel.eps)
    if abs(m * kernel.eps - 1) > 1e-12 or grid.n % m:
        raise GridError("eps must be 1/m with m dividing the grid size")
    x1, x2, x3 = grid.mesh()
    f_eps = f_cell(x1 / kernel.eps, x2 / kernel.eps, x3 / kernel.eps)
    cell = Grid(grid.n // m, 1.0)
    c1, c2, c3 = cell.mesh()
    f_l2 = np.sqrt(np.mean(f_cell(c1, c2, c3) ** 2))  # |Omega| = 1
    su = kernel.apply_array(u)
    num = np.sqrt(np.mean(np.sum(np.reshape(f_eps * su, (-1,) + grid.shape) ** 2, axis=0)))
    den = f_l2 * np.sqrt(np.mean(np.sum(np.reshape(u, (-1,) + grid.shape) ** 2, axis=0)))
    return float(num / den)

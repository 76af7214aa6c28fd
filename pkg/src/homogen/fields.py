"""Periodic grids, sampled fields and spectral calculus on the 3-torus.

Fields are stored on uniform grids of ``n**3`` points.  Vector fields have
shape ``(3, n, n, n)`` and matrix fields ``(3, 3, n, n, n)``.  All
derivatives are spectral.  For even ``n`` the derivative multiplier of the
Nyquist mode is set to zero so that real fields stay real and the discrete
operators stay exactly skew-adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
import scipy.fft as sfft

from .coefficients import CoefficientSpec

TWO_PI = 2.0 * np.pi
_AXES = (-3, -2, -1)


class GridError(ValueError):
    """Raised for inadmissible grids or mismatched field shapes."""


# ---------------------------------------------------------------------------
# lattice and grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lattice:
    """Periodicity lattice spanned by the rows of ``basis``."""

    basis: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.basis, dtype=float)

    @property
    def cell_volume(self) -> float:
        return abs(float(np.linalg.det(self.matrix)))

    @property
    def dual_matrix(self) -> np.ndarray:
        """Rows ``b_j`` with ``<a_i, b_j> = 2 pi delta_ij``."""
        return TWO_PI * np.linalg.inv(self.matrix).T

    @property
    def r1(self) -> float:
        """Half the diameter of the fundamental cell."""
        a = self.matrix
        diam = max(np.linalg.norm(np.dot(s, a)) for s in product((-1, 1), repeat=3))
        return 0.5 * float(diam)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of ``n`` points per axis on ``[0, period)^3``.

    ``offset`` shifts the sample points by a fraction of the spacing:
    the points are ``(i + offset) * spacing``.
    """

    n: int
    period: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise GridError(f"grid needs n >= 4 points per axis, got {self.n}")
        if not self.period > 0:
            raise GridError("period must be positive")
        object.__setattr__(self, "n", int(self.n))

    @property
    def spacing(self) -> float:
        return self.period / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n,) * 3

    @property
    def volume(self) -> float:
        return self.period**3

    @property
    def cell_weight(self) -> float:
        return self.spacing**3

    @property
    def points(self) -> np.ndarray:
        return (np.arange(self.n) + self.offset) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers ``2 pi fftfreq(n, spacing)``."""
        return TWO_PI * np.fft.fftfreq(self.n, d=self.spacing)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.points
        return np.meshgrid(x, x, x, indexing="ij", sparse=True)

    @property
    def lattice(self) -> Lattice:
        return Lattice(tuple(tuple(self.period * v for v in r) for r in np.eye(3)))


def build_grid(n: int, period: float = 1.0, offset: float = 0.0) -> Grid:
    """Construct a ``Grid`` after validating ``n``."""
    return Grid(n, period, offset)


# ---------------------------------------------------------------------------
# spectral kernels on real arrays
# ---------------------------------------------------------------------------


class SpectralOps:
    """Real-to-complex spectral derivatives on a fixed grid.

    All methods act on the trailing three axes of real arrays.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.n
        k = grid.wavenumbers.copy()
        if n % 2 == 0:
            k[n // 2] = 0.0
        kr = k[: n // 2 + 1].copy()
        self.kx = k[:, None, None]
        self.ky = k[None, :, None]
        self.kz = kr[None, None, :]
        self.kvec = (self.kx, self.ky, self.kz)
        self.k2 = self.kx**2 + self.ky**2 + self.kz**2
        self.full_k = grid.wavenumbers
        self.rshape = (n, n, n // 2 + 1)

    # transforms
    def fwd(self, a):
        return sfft.rfftn(a, axes=_AXES)

    def inv(self, a):
        n = self.grid.n
        return sfft.irfftn(a, s=(n, n, n), axes=_AXES)

    # spectral-space operators
    def grad_hat(self, s_hat):
        return np.stack([1j * k * s_hat for k in self.kvec])

    def div_hat(self, v_hat):
        return 1j * (self.kx * v_hat[0] + self.ky * v_hat[1] + self.kz * v_hat[2])

    def curl_hat(self, v_hat):
        kx, ky, kz = self.kvec
        return 1j * np.stack(
            [ky * v_hat[2] - kz * v_hat[1], kz * v_hat[0] - kx * v_hat[2], kx * v_hat[1] - ky * v_hat[0]]
        )

    # physical-space operators
    def grad(self, s):
        return self.inv(self.grad_hat(self.fwd(s)))

    def div(self, v):
        return self.inv(self.div_hat(self.fwd(v)))

    def curl(self, v):
        return self.inv(self.curl_hat(self.fwd(v)))

    def jacobian(self, v):
        """``J[i, j] = d_j v_i`` for a vector field, or the gradient stacked along a new axis."""
        vh = self.fwd(v)
        return self.inv(np.stack([1j * k * vh for k in self.kvec], axis=1))

    def h1_norm(self, a):
        """Spectral ``H^1`` norm with respect to the normalized cell measure times volume."""
        ah = self.fwd(a)
        w = self._rweights()
        n3 = self.grid.n**3
        mass = (1.0 + self.k2) * np.abs(ah) ** 2
        s = np.sum(w * mass) / n3**2
        return float(np.sqrt(s * self.grid.volume))

    def _rweights(self):
        n = self.grid.n
        w = np.full(self.rshape[-1], 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        return w[None, None, :]

    def multiplier(self, a, m):
        return self.inv(m * self.fwd(a))

    def low_pass(self, a, cutoff):
        """Zero every mode with ``max_j |k_j| / (2 pi / period) > cutoff``."""
        return self.multiplier(a, self.mode_mask(cutoff))

    def mode_mask(self, cutoff):
        # true wavenumbers: the Nyquist mode must not pass as k = 0
        unit = TWO_PI / self.grid.period
        n = self.grid.n
        k = np.abs(self.full_k) / unit <= cutoff + 1e-9
        return k[:, None, None] & k[None, :, None] & k[None, None, : n // 2 + 1]


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Samples of a scalar, vector or matrix field on a periodic grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape[-3:] != self.grid.shape or v.ndim not in (3, 4, 5):
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if v.ndim == 4 and v.shape[0] != 3 or v.ndim == 5 and v.shape[:2] != (3, 3):
            raise GridError(f"unsupported component shape {v.shape[:-3]}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> int:
        return self.values.ndim - 3

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    @cached_property
    def spectral(self) -> np.ndarray:
        """Normalized Fourier coefficients ``u_hat(k) = mean(u * exp(-i k x))``."""
        return sfft.fftn(self.values, axes=_AXES) / self.grid.n**3

    def mean(self):
        return self.values.mean(axis=_AXES)

    def __add__(self, other):
        return PeriodicField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return PeriodicField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return PeriodicField(self.grid, self.values * c)

    __rmul__ = __mul__


def _vals(f):
    return f.values if isinstance(f, PeriodicField) else f


def differential_op(kind: str, field_: PeriodicField) -> PeriodicField:
    """Apply ``grad``, ``div`` or ``curl`` spectrally."""
    ops = SpectralOps(field_.grid)
    v = field_.values
    if kind == "grad":
        if field_.rank != 0:
            raise GridError("grad expects a scalar field")
        parts = [v.real] + ([v.imag] if np.iscomplexobj(v) else [])
        out = [ops.grad(p) for p in parts]
    elif kind == "div":
        if field_.rank != 1:
            raise GridError("div expects a vector field")
        parts = [v.real] + ([v.imag] if np.iscomplexobj(v) else [])
        out = [ops.div(p) for p in parts]
    elif kind == "curl":
        if field_.rank != 1:
            raise GridError("curl expects a vector field")
        parts = [v.real] + ([v.imag] if np.iscomplexobj(v) else [])
        out = [ops.curl(p) for p in parts]
    else:
        raise GridError(f"unknown differential operator {kind!r}")
    res = out[0] if len(out) == 1 else out[0] + 1j * out[1]
    return PeriodicField(field_.grid, res)


def field_norm(field_: PeriodicField, kind: str = "L2") -> float:
    """``L2`` or ``H1`` norm over one period, computed by Parseval."""
    vol = field_.grid.volume
    c = field_.spectral
    mass = np.abs(c) ** 2
    if kind == "L2":
        return float(np.sqrt(vol * mass.sum()))
    if kind == "H1":
        k = field_.grid.wavenumbers
        k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
        return float(np.sqrt(vol * np.sum((1.0 + k2) * mass)))
    raise GridError(f"unknown norm {kind!r}")


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


def cross_matrix(xi) -> np.ndarray:
    """Matrix of ``v -> xi x v``; ``xi`` has shape ``(3, ...)``."""
    xi = np.asarray(xi, dtype=float)
    z = np.zeros_like(xi[0])
    return np.array([[z, -xi[2], xi[1]], [xi[2], z, -xi[0]], [-xi[1], xi[0], z]])


def sym_sqrt(m: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Square root (or inverse square root) of a symmetric positive matrix."""
    w, q = np.linalg.eigh(np.asarray(m, dtype=float))
    p = -0.5 if inverse else 0.5
    return (q * w**p) @ q.T


def b_symbol(xi, mu0) -> np.ndarray:
    """Symbol ``b(xi)`` of shape ``(4, 3)``: curl block over the divergence row."""
    xi = np.asarray(xi, dtype=float)
    return np.vstack([cross_matrix(xi) @ sym_sqrt(mu0, True), xi[None, :] @ sym_sqrt(mu0)])


def apply_symbol(field_: PeriodicField, mu0) -> PeriodicField:
    """Apply ``b(D) = -i (curl mu0^{-1/2}, div mu0^{1/2})`` to a vector field.

    The result is a four-component complex field stored as a ``(4, n, n, n)``
    array wrapped in a plain ``numpy`` array (it is not a ``PeriodicField``
    because of its component count).
    """
    if field_.rank != 1:
        raise GridError("apply_symbol expects a vector field")
    mu0 = np.asarray(mu0, dtype=float)
    mm, mp = sym_sqrt(mu0, True), sym_sqrt(mu0)
    v = field_.values
    a = np.einsum("ij,j...->i...", mm, v)
    b = np.einsum("ij,j...->i...", mp, v)
    curl = differential_op("curl", PeriodicField(field_.grid, a)).values
    div = differential_op("div", PeriodicField(field_.grid, b)).values
    return -1j * np.concatenate([curl, div[None]])


def apply_symbol_adjoint(w: np.ndarray, grid: Grid, mu0) -> np.ndarray:
    """Apply ``b(D)^* = i mu0^{-1/2} curl w' - i mu0^{1/2} grad w_4`` to a four-component field.

    Mode by mode this is the transpose of the real symbol ``b(k)``.
    """
    w = np.asarray(w)
    if w.shape != (4,) + grid.shape:
        raise GridError("apply_symbol_adjoint expects a (4, n, n, n) array")
    mu0 = np.asarray(mu0, dtype=float)
    curl = differential_op("curl", PeriodicField(grid, w[:3])).values
    grad = differential_op("grad", PeriodicField(grid, w[3])).values
    return 1j * (np.einsum("ij,j...->i...", sym_sqrt(mu0, True), curl)
                 - np.einsum("ij,j...->i...", sym_sqrt(mu0), grad))


def inner(u: np.ndarray, v: np.ndarray, grid: Grid) -> complex:
    """``L2`` inner product ``int <u, conj v>`` of sampled arrays."""
    return complex(np.vdot(v, u) * grid.cell_weight)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Sampled coefficients ``(mu0, eta, nu)`` with their ellipticity constants."""

    grid: Grid
    mu0: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    spec: CoefficientSpec | None = field(default=None)

    @cached_property
    def mu0_sqrt(self) -> np.ndarray:
        return sym_sqrt(self.mu0)

    @cached_property
    def mu0_isqrt(self) -> np.ndarray:
        return sym_sqrt(self.mu0, inverse=True)

    @cached_property
    def eta_inv(self) -> np.ndarray:
        e = np.moveaxis(self.eta, (0, 1), (-2, -1))
        return np.moveaxis(np.linalg.inv(e), (-2, -1), (0, 1))

    @cached_property
    def eta_eigs(self) -> tuple[float, float]:
        e = np.moveaxis(self.eta, (0, 1), (-2, -1))
        w = np.linalg.eigvalsh(e)
        return float(w.min()), float(w.max())

    @property
    def alpha0(self) -> float:
        return min(1.0 / np.linalg.norm(self.mu0, 2), 1.0 / np.linalg.norm(np.linalg.inv(self.mu0), 2))

    @property
    def alpha1(self) -> float:
        return float(np.linalg.norm(self.mu0, 2) + np.linalg.norm(np.linalg.inv(self.mu0), 2))

    @property
    def g_norm(self) -> float:
        """``||g||_inf = max(||eta^{-1}||, ||nu||)``."""
        return max(1.0 / self.eta_eigs[0], float(self.nu.max()))

    @property
    def g_inv_norm(self) -> float:
        """``||g^{-1}||_inf = max(||eta||, ||nu^{-1}||)``."""
        return max(self.eta_eigs[1], 1.0 / float(self.nu.min()))

    @property
    def c1(self) -> float:
        return self.alpha0 / self.g_inv_norm

    @property
    def c2(self) -> float:
        return self.alpha1 * self.g_norm

    @property
    def nu_constant(self) -> bool:
        return float(np.ptp(self.nu)) <= 1e-14 * float(np.abs(self.nu).max())


def sample_coefficient_set(spec: CoefficientSpec, grid: Grid) -> CoefficientSet:
    """Sample a coefficient preset on ``grid`` and check ellipticity."""
    x1, x2, x3 = grid.mesh()
    # coefficients are 1-periodic in the cell variable
    eta = spec.eta_at(x1, x2, x3)
    nu = spec.nu_at(x1, x2, x3)
    if not np.allclose(eta, np.swapaxes(eta, 0, 1), atol=1e-12):
        raise GridError("eta must be symmetric")
    cs = CoefficientSet(grid, spec.mu0_matrix, eta, nu, spec)
    if cs.eta_eigs[0] <= 0:
        raise GridError("eta is not uniformly positive definite")
    if nu.min() <= 0:
        raise GridError("nu must be positive")
    return cs

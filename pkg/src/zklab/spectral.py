"""Periodic grids, unitary Fourier transforms and Fourier multipliers.

The plane is approximated by the periodic box ``[-Lx, Lx) x [-Ly, Ly)``.
Coefficients are normalised so that the discrete Parseval identity reads

    sum |c_k|**2 == sum |f_ij|**2 * dx * dy,

i.e. the transform is unitary from the cell-weighted sample space onto
coefficient space. Arrays are stored with shape ``(ny, nx)`` so that each
row holds one value of ``y`` (y-major rows).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
import scipy.fft as sfft
from scipy.special import expit

from .errors import InvalidInputError, PreconditionError, UnsupportedOrderError

DECAY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid on ``[-Lx, Lx) x [-Ly, Ly)``.

    Parameters
    ----------
    nx, ny : int
        Points per axis; even and at least 8.
    half_length_x, half_length_y : float
        Box half-lengths ``Lx`` and ``Ly``.
    """

    nx: int
    ny: int
    half_length_x: float
    half_length_y: float

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if int(n) != n or n < 8 or n % 2:
                raise InvalidInputError(f"grid size must be an even integer >= 8, got {n}")
        for length in (self.half_length_x, self.half_length_y):
            if not (np.isfinite(length) and length > 0):
                raise InvalidInputError(f"half-length must be positive, got {length}")

    @classmethod
    def square(cls, n: int = 256, half_length: float = 20.0) -> "Grid2D":
        return cls(n, n, half_length, half_length)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length_x / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.half_length_y / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_length_x + self.dx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return -self.half_length_y + self.dy * np.arange(self.ny)

    @cached_property
    def xi(self) -> np.ndarray:
        """Wavenumbers ``pi j / Lx`` in FFT order (Nyquist mode negative)."""
        return np.pi * np.fft.fftfreq(self.nx, d=1.0 / self.nx) / self.half_length_x

    @cached_property
    def eta(self) -> np.ndarray:
        return np.pi * np.fft.fftfreq(self.ny, d=1.0 / self.ny) / self.half_length_y

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X, Y)`` of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def wavenumber_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumber arrays ``(XI, ETA)`` of shape ``(ny, nx)`` in FFT order."""
        return np.meshgrid(self.xi, self.eta)

    def radius(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.hypot(X, Y)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Field2D:
    """Real samples of a field on a :class:`Grid2D`.

    ``samples`` has shape ``(ny, nx)``; a flat array of length ``nx*ny`` in
    row-major order is accepted as well. The stored array is read-only.
    """

    grid: Grid2D
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.samples)
        if np.iscomplexobj(a):
            raise InvalidInputError("Field2D samples must be real")
        a = a.astype(float, copy=False)
        if a.size != self.grid.nx * self.grid.ny:
            raise InvalidInputError(
                f"sample count {a.size} does not match grid {self.grid.nx}x{self.grid.ny}"
            )
        if a.ndim == 2 and a.shape != self.grid.shape:
            raise InvalidInputError(f"sample shape {a.shape} does not match grid {self.grid.shape}")
        a = a.reshape(self.grid.shape)
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("Field2D samples must be finite")
        object.__setattr__(self, "samples", _frozen(a))

    def __add__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.samples + other.samples)

    def __sub__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.samples - other.samples)

    def __mul__(self, c: float) -> "Field2D":
        return Field2D(self.grid, c * self.samples)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.samples**2) * self.grid.cell_area))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def mass(self) -> float:
        return float(np.sum(self.samples) * self.grid.cell_area)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field2D":
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True, eq=False)
class Spectrum2D:
    """Unitary Fourier coefficients of a field, shape ``(ny, nx)`` in FFT order."""

    grid: Grid2D
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise InvalidInputError(
                f"coefficient shape {c.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coefficients", _frozen(c))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))


def transform(f: Field2D) -> Spectrum2D:
    """Unitary forward transform of a real field."""
    g = f.grid
    c = sfft.fft2(f.samples, norm="ortho") * np.sqrt(g.cell_area)
    return Spectrum2D(g, c)


def inverse_transform_complex(spec: Spectrum2D) -> np.ndarray:
    """Inverse transform without discarding the imaginary part."""
    g = spec.grid
    return sfft.ifft2(spec.coefficients / np.sqrt(g.cell_area), norm="ortho")


def inverse_transform(spec: Spectrum2D) -> Field2D:
    """Inverse transform, projected onto real fields.

    For coefficient arrays with Hermitian symmetry the discarded imaginary
    part is rounding noise. Odd symbols acting on the unpaired Nyquist row or
    column break that symmetry; the projection keeps the real part, which
    is the field the real-valued dynamics would produce.
    """
    return Field2D(spec.grid, inverse_transform_complex(spec).real)


# ---------------------------------------------------------------------------
# smooth step and dyadic partition


def smooth_step(theta) -> np.ndarray:
    """C-infinity step ``mu`` with ``mu = 0`` on ``(-inf, 0]`` and ``1`` on ``[1, inf)``.

    Built from ``exp(-1/theta)`` and normalised so that
    ``mu(theta) + mu(1 - theta) == 1``; evaluated in closed form as
    ``expit(1/(1-theta) - 1/theta)``, which keeps that identity exact to a
    rounding error.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.where(theta >= 1.0, 1.0, 0.0)
    inside = (theta > 0.0) & (theta < 1.0)
    if np.any(inside):
        t = theta[inside]
        out[inside] = expit(1.0 / (1.0 - t) - 1.0 / t)
    return out if out.ndim else float(out)


def dyadic_partition_value(k: int, xi, eta):
    """Value of the dyadic cutoff ``psi_k`` at ``(xi, eta)``.

    ``psi_0 = mu(2-|xi|) mu(2-|eta|)`` and, for ``k >= 1``,

    ``psi_k = mu(2^{k+1}-|xi|) mu(2^{k+1}-|eta|) mu(|eta|-2^k+1)
    + mu(2^{k+1}-|xi|) mu(|xi|-2^k+1) mu(2^k-|eta|)``.

    The pieces sum to one on ``|xi|, |eta| <= 2^K - 1``.
    """
    if int(k) != k or k < 0:
        raise InvalidInputError(f"dyadic index must be a nonnegative integer, got {k}")
    ax = np.abs(np.asarray(xi, dtype=float))
    ay = np.abs(np.asarray(eta, dtype=float))
    mu = smooth_step
    if k == 0:
        val = mu(2.0 - ax) * mu(2.0 - ay)
    else:
        hi = 2.0 ** (k + 1)
        lo = 2.0**k
        outer = mu(hi - ax)
        val = outer * mu(hi - ay) * mu(ay - lo + 1.0) + outer * mu(ax - lo + 1.0) * mu(lo - ay)
    return val if np.ndim(val) else float(val)


# ---------------------------------------------------------------------------
# multipliers


def _abs_power(a: np.ndarray, s: float) -> np.ndarray:
    """``a**s`` for ``a >= 0`` with the value at ``a == 0`` set to 0 when ``s < 0``."""
    if s == 0:
        return np.ones_like(a)
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = a[nz] ** s
    return out


@dataclass(frozen=True)
class FractionalX:
    """``|xi|**s``."""

    s: float

    def symbol(self, xi, eta):
        return _abs_power(np.abs(xi) + 0.0 * eta, self.s)


@dataclass(frozen=True)
class FractionalY:
    """``|eta|**s``."""

    s: float

    def symbol(self, xi, eta):
        return _abs_power(np.abs(eta) + 0.0 * xi, self.s)


@dataclass(frozen=True)
class Isotropic:
    """``(xi**2 + eta**2)**(s/2)``."""

    s: float

    def symbol(self, xi, eta):
        return _abs_power(np.hypot(xi, eta), self.s)


@dataclass(frozen=True)
class Bessel:
    """``(1 + xi**2 + eta**2)**(s/2)``."""

    s: float

    def symbol(self, xi, eta):
        return (1.0 + xi**2 + eta**2) ** (self.s / 2.0)


SYMBOL_KINDS = ("symmetrized", "original")


def dispersion(kind: str, xi, eta):
    """Phase speed polynomial: ``xi^3 + eta^3`` or ``xi^3 + xi eta^2``."""
    if kind == "symmetrized":
        return xi * xi * xi + eta * eta * eta
    if kind == "original":
        return xi * (xi * xi + eta * eta)
    raise InvalidInputError(f"unknown symbol kind {kind!r}; expected one of {SYMBOL_KINDS}")


@dataclass(frozen=True)
class Propagator:
    """Free group symbol ``exp(i t omega(xi, eta))``."""

    t: float
    kind: str = "symmetrized"

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise InvalidInputError(f"unknown symbol kind {self.kind!r}")

    def symbol(self, xi, eta):
        return np.exp(1j * (self.t * dispersion(self.kind, xi, eta)))


@dataclass(frozen=True)
class Dyadic:
    """Littlewood-Paley piece ``psi_k``."""

    k: int

    def symbol(self, xi, eta):
        return np.asarray(dyadic_partition_value(self.k, xi, eta), dtype=float)


MultiplierSpec = Union[FractionalX, FractionalY, Isotropic, Bessel, Propagator, Dyadic]


def symbol_on(grid: Grid2D, m: MultiplierSpec) -> np.ndarray:
    """Evaluate a multiplier on the wavenumber lattice of ``grid``."""
    # axes broadcast against each other, so separable symbols stay cheap
    return np.broadcast_to(m.symbol(grid.xi[None, :], grid.eta[:, None]), grid.shape)


def apply_multiplier(spec: Spectrum2D, m: MultiplierSpec) -> Spectrum2D:
    """Pointwise product of the coefficients with the symbol of ``m``."""
    return Spectrum2D(spec.grid, spec.coefficients * symbol_on(spec.grid, m))


_KINDS = {"x": FractionalX, "y": FractionalY, "isotropic": Isotropic, "bessel": Bessel}


def derivative_spec(kind: str, order: float) -> MultiplierSpec:
    """Multiplier for a fractional derivative of the given kind and order."""
    if kind not in _KINDS:
        raise InvalidInputError(f"unknown derivative kind {kind!r}")
    if order < -1:
        raise UnsupportedOrderError(f"order {order} < -1 is not supported")
    if order < 0 and kind not in ("x", "y"):
        raise UnsupportedOrderError(f"negative order only supported for kinds 'x' and 'y', got {kind!r}")
    return _KINDS[kind](order)


def fractional_derivative(f: Field2D, kind: str, order: float) -> Field2D:
    """Apply ``D_x^s``, ``D_y^s``, ``D^s`` or ``J^s`` to a field.

    Parameters
    ----------
    f : Field2D
    kind : {'x', 'y', 'isotropic', 'bessel'}
    order : float
        Must be ``>= -1``; negative only for the axis kinds, whose symbol is
        set to zero on the line ``xi = 0`` (resp. ``eta = 0``).
    """
    m = derivative_spec(kind, order)
    return inverse_transform(apply_multiplier(transform(f), m))


def partial(f: Field2D, axis: str, order: int = 1) -> Field2D:
    """Spectral partial derivative of integer order along ``'x'`` or ``'y'``.

    The unpaired Nyquist mode carries no real odd derivative and is dropped
    by the real inverse transform.
    """
    return Field2D(f.grid, partial_array(f.grid, f.samples, axis, order))


def partial_array(grid: Grid2D, a: np.ndarray, axis: str, order: int = 1) -> np.ndarray:
    """Array version of :func:`partial`; ``a`` may carry leading batch axes."""
    if axis == "x":
        ax, n, length = -1, grid.nx, grid.half_length_x
    elif axis == "y":
        ax, n, length = -2, grid.ny, grid.half_length_y
    else:
        raise InvalidInputError(f"axis must be 'x' or 'y', got {axis!r}")
    k = np.pi * np.arange(n // 2 + 1) / length
    shape = [1] * a.ndim
    shape[ax] = k.size
    c = sfft.rfft(a, axis=ax) * ((1j * k) ** order).reshape(shape)
    return sfft.irfft(c, n=n, axis=ax)


# ---------------------------------------------------------------------------
# boundary decay


def decay_margin(f: Field2D, radius: float | None = None) -> float:
    """Largest ``|f|`` at distance ``>= radius`` from the origin, relative to ``max |f|``.

    ``radius`` defaults to half the smaller box half-length.
    """
    g = f.grid
    if radius is None:
        radius = 0.5 * min(g.half_length_x, g.half_length_y)
    peak = f.sup_norm()
    if peak == 0.0:
        return 0.0
    outside = g.radius() >= radius
    if not np.any(outside):
        return 0.0
    return float(np.max(np.abs(f.samples[outside])) / peak)


def require_decay(f: Field2D, tol: float = DECAY_TOLERANCE, what: str = "field") -> None:
    """Raise :class:`PreconditionError` unless ``f`` decays below ``tol`` at ``L/2``."""
    m = decay_margin(f)
    if m > tol:
        raise PreconditionError(
            f"{what} is {m:.2e} (relative) at distance L/2 from the origin; "
            f"data must decay below {tol:.0e} there"
        )

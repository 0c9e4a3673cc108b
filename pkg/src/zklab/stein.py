"""Stein square-function derivative and the bounds built on it.

For ``0 < b < 1`` the Stein derivative of ``f`` on the plane is

    Df(x) = ( int |f(x) - f(y)|^2 / |x - y|^{2+2b} dy )^{1/2}.

The kernel is split smoothly at a radius ``rho`` into a near part, handled
by polar quadrature around every grid point with spectrally shifted copies
of the field, and a far part, handled as a zero-padded lattice convolution
that covers every pair of points in the box. The field is taken to vanish
outside the box (boundary-decay precondition), so the far integral beyond
the box only contributes ``f(x)^2`` times the exact kernel mass there.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad
from scipy.special import gamma, roots_jacobi

from .errors import InvalidInputError, ResolutionError, TruncationError
from .propagator import adaptive_panels, oscillation_edges
from .spectral import Bessel, Field2D, Grid2D, apply_multiplier, decay_margin, require_decay, smooth_step, transform


@dataclass(frozen=True)
class SteinQuadratureConfig:
    """Quadrature knobs for :func:`stein_derivative`.

    Parameters
    ----------
    near_radius : float, optional
        Radius ``rho`` of the polar patch, in grid cells (default 20). The
        kernel is split with the smooth weight ``mu(|w|/rho)`` so both
        parts are smooth.
    far_radius : float, optional
        Truncation radius of the far kernel. ``None`` (default) keeps every
        pair of points in the box, leaving no truncation error.
    radial_nodes, angular_nodes : int
        Gauss-Jacobi nodes in ``|w|`` and trapezoid nodes in angle.
    nyquist_tolerance : float
        Largest admissible energy fraction in the outer half of the band.
    tail_tolerance : float
        Largest admissible truncation bound when ``far_radius`` is set.
    """

    near_radius: float = 20.0
    far_radius: float | None = None
    radial_nodes: int = 24
    angular_nodes: int = 48
    nyquist_tolerance: float = 1e-6
    tail_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.near_radius > 0:
            raise InvalidInputError("near radius must be positive")
        if self.far_radius is not None and not self.far_radius > 0:
            raise InvalidInputError("far radius must be positive")
        if self.radial_nodes < 2 or self.angular_nodes < 4 or self.angular_nodes % 2:
            raise InvalidInputError("need >= 2 radial nodes and an even count >= 4 of angular nodes")


def nyquist_fraction(f: Field2D) -> float:
    """Energy fraction carried by modes in the outer half of the band."""
    g = f.grid
    c = np.abs(sfft.fft2(f.samples)) ** 2
    total = c.sum()
    if total == 0:
        return 0.0
    XI, ETA = g.wavenumber_mesh()
    outer = (np.abs(XI) > 0.5 * np.pi / g.dx) | (np.abs(ETA) > 0.5 * np.pi / g.dy)
    return float(c[outer].sum() / total)


@lru_cache(maxsize=64)
def _near_rule(rho: float, b: float, n_r: int, n_a: int):
    """Polar nodes and weights for ``int_{|w|<rho} G(w) (1-mu(|w|/rho)) |w|^{-2b} d|w| dtheta / |w|``.

    The Jacobi weight absorbs ``|w|^{1-2b}`` left after dividing the
    squared difference by ``|w|^2``.
    """
    beta = 1.0 - 2.0 * b
    x, w = roots_jacobi(n_r, 0.0, beta)
    r = 0.5 * rho * (1.0 + x)
    # r^beta dr = (rho/2)^(beta+1) (1+x)^beta dx, and (1+x)^beta is the Jacobi weight
    wr = w * (0.5 * rho) ** (beta + 1.0) * (1.0 - smooth_step(r / rho)) / r**2
    theta = 2.0 * np.pi * np.arange(n_a) / n_a
    return r, wr * (2.0 * np.pi / n_a), theta


def _far_mass(rho: float, b: float) -> float:
    """``int_{R^2} mu(|w|/rho) |w|^{-2-2b} dw``."""
    inner, _ = quad(lambda r: smooth_step(r / rho) * r ** (-1.0 - 2.0 * b), 0.0, rho, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 2.0 * np.pi * (inner + rho ** (-2.0 * b) / (2.0 * b))


def _linear_convolve(kernel: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Aperiodic lattice convolution of ``a`` (shape ``(ny, nx)``) with an offset kernel.

    ``kernel`` has shape ``(2ny, 2nx)`` and holds offsets in FFT order.
    """
    ny, nx = a.shape
    pad = np.zeros((2 * ny, 2 * nx))
    pad[:ny, :nx] = a
    out = sfft.irfft2(sfft.rfft2(pad) * sfft.rfft2(kernel), s=pad.shape)
    return out[:ny, :nx]


def stein_derivative_details(f: Field2D, b: float, cfg: SteinQuadratureConfig | None = None) -> tuple[Field2D, dict]:
    """:func:`stein_derivative` plus a record of the quadrature diagnostics."""
    cfg = cfg or SteinQuadratureConfig()
    if not 0.0 < b < 1.0:
        raise InvalidInputError(f"b must lie in (0, 1), got {b}")
    g = f.grid
    frac = nyquist_fraction(f)
    if frac > cfg.nyquist_tolerance:
        raise ResolutionError(f"Nyquist energy fraction {frac:.2e} exceeds {cfg.nyquist_tolerance:.0e}")
    require_decay(f, what="Stein derivative input")
    u = f.samples
    h = min(g.dx, g.dy)
    rho = cfg.near_radius * h

    # near field: polar patch with spectral shifts
    r, wr, theta = _near_rule(rho, b, cfg.radial_nodes, cfg.angular_nodes)
    spec = sfft.rfft2(u)
    xi = np.pi * np.arange(g.nx // 2 + 1) / g.half_length_x
    eta = g.eta
    near = np.zeros(g.shape)
    for ri, wi in zip(r, wr):
        for ct, st in zip(np.cos(theta), np.sin(theta)):
            phase = np.exp(1j * ri * (ct * xi[None, :] + st * eta[:, None]))
            shifted = sfft.irfft2(spec * phase, s=g.shape)
            near += wi * (u - shifted) ** 2

    # far field: lattice convolution over all pairs in the box
    oy = g.dy * np.fft.fftfreq(2 * g.ny, d=1.0 / (2 * g.ny))
    ox = g.dx * np.fft.fftfreq(2 * g.nx, d=1.0 / (2 * g.nx))
    OX, OY = np.meshgrid(ox, oy)
    rad = np.hypot(OX, OY)
    safe = np.where(rad > 0, rad, 1.0)
    kern = np.where(rad > 0, smooth_step(rad / rho) * safe ** (-2.0 - 2.0 * b), 0.0)
    mass = _far_mass(rho, b)
    tail = 0.0
    if cfg.far_radius is not None:
        R = cfg.far_radius
        kern = np.where(rad <= R, kern, 0.0)
        tail = 2.0 * f.sup_norm() ** 2 * (2.0 * np.pi / (2.0 * b)) * R ** (-2.0 * b)
        if tail > cfg.tail_tolerance:
            raise TruncationError("far-field truncation too coarse", tail)
        mass -= 2.0 * np.pi * R ** (-2.0 * b) / (2.0 * b)
    kern = kern * g.cell_area
    far = u * u * mass - 2.0 * u * _linear_convolve(kern, u) + _linear_convolve(kern, u * u)

    total = np.maximum(near + far, 0.0)
    diag = {
        "nyquist_fraction": frac,
        "near_radius": rho,
        "far_radius": cfg.far_radius,
        "tail_bound": tail if cfg.far_radius is not None else decay_margin(f) * f.sup_norm() ** 2 * mass,
    }
    return Field2D(g, np.sqrt(total)), diag


def stein_derivative(f: Field2D, b: float, cfg: SteinQuadratureConfig | None = None) -> Field2D:
    """Pointwise Stein derivative on the grid.

    Raises
    ------
    ResolutionError
        If the field has too much energy near the Nyquist band.
    TruncationError
        If a finite ``far_radius`` leaves a tail bound above tolerance.
    PreconditionError
        If the field does not decay at ``L/2``.
    """
    return stein_derivative_details(f, b, cfg)[0]


# ---------------------------------------------------------------------------
# the phase field exp(i t x1^3)


def _check_b(b: float) -> None:
    if not 0.0 < b <= 0.5:
        raise InvalidInputError(f"b must lie in (0, 1/2], got {b}")


def _transverse_constant(b: float) -> float:
    """``int_R (1 + s^2)^{-1-b} ds``."""
    return float(np.sqrt(np.pi) * gamma(b + 0.5) / gamma(b + 1.0))


def _phase_half(t: float, x1: float, b: float, atol: float) -> float:
    """``int_0^inf 4 sin^2(dphi(w)/2) w^{-1-2b} dw`` with ``dphi = t((x1+w)^3 - x1^3)``."""

    def f(w):
        dphi = t * w * (3.0 * x1 * x1 + 3.0 * x1 * w + w * w)
        return 4.0 * np.sin(0.5 * dphi) ** 2 * w ** (-1.0 - 2.0 * b)

    R = 2.0 * abs(x1) + 4.0
    edges = oscillation_edges(lambda s, h: 3.0 * t * (abs(x1) + s + h) ** 2, R, graded=True)
    val, _ = adaptive_panels(f, edges[1:], atol=atol)
    # 4 sin^2 = 2 - 2 cos; past R the phase is monotone, so the cosine part is a
    # Fourier integral in tau = dphi(w)
    const = R ** (-2.0 * b) / b

    def g(tau):
        w = np.cbrt(tau / t + x1**3) - x1
        return w ** (-1.0 - 2.0 * b) / (3.0 * t * (x1 + w) ** 2)

    tau_R = t * ((x1 + R) ** 3 - x1**3)
    osc, _ = quad(g, tau_R, np.inf, weight="cos", wvar=1.0, epsabs=atol, limlst=200)
    return float(val.real) + const - 2.0 * osc


def stein_phase_derivative(t: float, x1: float, b: float, atol: float = 1e-11) -> float:
    """Stein derivative of ``exp(i t x1^3)`` (a function on the plane, constant in ``x2``).

    Integrating the kernel over the transverse variable in closed form
    leaves ``c_b int_R 4 sin^2(dphi/2) |w|^{-1-2b} dw``, where ``dphi`` is
    the phase difference; the sine form avoids the cancellation in
    ``2 - 2 cos``.
    """
    if not t > 0:
        raise InvalidInputError(f"t must be positive, got {t}")
    if not 0.0 < b < 1.0:
        raise InvalidInputError(f"b must lie in (0, 1), got {b}")
    total = _phase_half(t, x1, b, atol) + _phase_half(t, -x1, b, atol)
    return float(np.sqrt(_transverse_constant(b) * total))


def stein_phase_bound(t: float, x1: float, b: float) -> float:
    """``t^{b/3} + t^{(b+1)/3} + t^{b/3}|x1|^b + (t^{1/3+2b/3} + t^{2b/3})|x1|^{2b}``."""
    if not t > 0:
        raise InvalidInputError(f"t must be positive, got {t}")
    _check_b(b)
    a = abs(x1)
    return float(
        t ** (b / 3) + t ** ((b + 1) / 3) + t ** (b / 3) * a**b + (t ** (1 / 3 + 2 * b / 3) + t ** (2 * b / 3)) * a ** (2 * b)
    )


def weighted_group_bound_rhs(l2: float, d2b: float, wnorm: float, t: float, b: float) -> float:
    """``(1+t^{b/3}+t^{(b+1)/3}) l2 + (t^{b/3}+t^{1/3+2b/3}+t^{2b/3}) d2b + wnorm``.

    ``l2``, ``d2b`` and ``wnorm`` are ``||f||_2``, ``||D^{2b} f||_2`` and
    ``||(|x|+|y|)^b f||_2`` of one field.
    """
    if min(l2, d2b, wnorm) < 0:
        raise InvalidInputError("norms must be nonnegative")
    if t < 0:
        raise InvalidInputError(f"t must be nonnegative, got {t}")
    _check_b(b)
    a = 1.0 + t ** (b / 3) + t ** ((b + 1) / 3)
    c = t ** (b / 3) + t ** (1 / 3 + 2 * b / 3) + t ** (2 * b / 3)
    return float(a * l2 + c * d2b + wnorm)


def norm_equivalence_check(f: Field2D, b: float, cfg: SteinQuadratureConfig | None = None) -> tuple[float, float]:
    """``(||J^b f||_2, ||f||_2 + ||D f||_2)`` with ``D`` the Stein derivative of order ``b``."""
    jb = apply_multiplier(transform(f), Bessel(b)).l2_norm()
    if f.sup_norm() == 0:
        return 0.0, 0.0
    d = stein_derivative(f, b, cfg)
    return float(jb), float(f.l2_norm() + d.l2_norm())


def stein_l2_constant(b: float) -> float:
    """``c_b`` with ``||Df||_2^2 = c_b ||D^b f||_2^2`` on the plane.

    ``c_b = int |1 - e^{i w_1}|^2 |w|^{-2-2b} dw = 2 pi Gamma(1-b) / (4^b b Gamma(1+b))``.
    """
    if not 0.0 < b < 1.0:
        raise InvalidInputError(f"b must lie in (0, 1), got {b}")
    return float(2.0 * np.pi * gamma(1.0 - b) / (4.0**b * b * gamma(1.0 + b)))


def exterior_kernel_mass(grid: Grid2D, center: tuple[float, float], b: float) -> float:
    """``int |x - c|^{-2-2b} dx`` over the plane outside the box.

    Far from a field concentrated near ``c`` the Stein derivative behaves
    like ``||f||_2 |x - c|^{-1-b}``, so ``||f||_2^2`` times this mass is the
    leading part of ``||Df||_2^2`` that a box computation misses.
    """
    if not 0.0 < b < 1.0:
        raise InvalidInputError(f"b must lie in (0, 1), got {b}")
    cx, cy = center
    Lx, Ly = grid.half_length_x, grid.half_length_y
    if not (abs(cx) < Lx and abs(cy) < Ly):
        raise InvalidInputError("center must lie inside the box")

    def exit_radius(th):
        c, s = np.cos(th), np.sin(th)
        hits = [q / p for p, q in ((c, Lx - cx), (-c, Lx + cx), (s, Ly - cy), (-s, Ly + cy)) if p > 1e-15]
        return min(hits)

    # split at the corner directions, where the exit radius has kinks
    corners = sorted(
        np.arctan2(py - cy, px - cx) % (2 * np.pi) for px in (-Lx, Lx) for py in (-Ly, Ly)
    )
    edges = [0.0] + corners + [2 * np.pi]
    total = 0.0
    for a, e in zip(edges[:-1], edges[1:]):
        if e > a:
            total += quad(lambda th: exit_radius(th) ** (-2 * b), a, e, epsabs=1e-13, epsrel=1e-12)[0]
    return float(total / (2 * b))

"""Free linear group, band-limited oscillatory integrals and decay fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.polynomial.legendre import leggauss

from .errors import InvalidInputError, QuadratureError
from .spectral import (
    Field2D,
    Propagator,
    apply_multiplier,
    dispersion,
    inverse_transform,
    require_decay,
    smooth_step,
    transform,
)


def free_evolve(f: Field2D, t: float, symbol_kind: str = "symmetrized", check_decay: bool = True) -> Field2D:
    """Apply the free group ``V(t)`` as an exact Fourier multiplier.

    ``symbol_kind='symmetrized'`` uses ``exp(i t (xi^3 + eta^3))``, the
    group of ``v_t + v_xxx + v_yyy = 0``; ``'original'`` uses
    ``exp(i t (xi^3 + xi eta^2))``, the group of ``u_t + u_xxx + u_xyy = 0``.

    ``check_decay=False`` skips the boundary-decay precondition, which is
    needed when the input is itself an evolved (spread out) field.
    """
    if check_decay:
        require_decay(f)
    if t == 0:
        return Field2D(f.grid, f.samples)
    return inverse_transform(apply_multiplier(transform(f), Propagator(t, symbol_kind)))


def evolve_series(f: Field2D, times: Iterable[float], symbol_kind: str = "symmetrized") -> np.ndarray:
    """Samples of ``V(t) f`` for each ``t`` in ``times``, stacked as ``(nt, ny, nx)``.

    Uses one forward real transform and one inverse per time.
    """
    g = f.grid
    c = sfft.rfft2(f.samples)
    xi = np.pi * np.arange(g.nx // 2 + 1) / g.half_length_x
    omega = dispersion(symbol_kind, xi[None, :], g.eta[:, None])
    times = np.asarray(list(times), dtype=float)
    out = np.empty((times.size,) + g.shape)
    for i, t in enumerate(times):
        out[i] = sfft.irfft2(c * np.exp(1j * t * omega), s=g.shape)
    return out


# ---------------------------------------------------------------------------
# oscillatory integrals


@dataclass(frozen=True)
class OscillatoryIntegralSpec:
    """Parameters of a band-limited oscillatory integral.

    ``kind='I'`` places the weight ``|xi|^eps`` on the first frequency and
    ``kind='J'`` on the second. The band limit is the smooth cutoff
    ``chi_K(s) = mu(K - |s|)``, equal to 1 on ``|s| <= K - 1`` and 0 beyond ``K``.
    """

    t: float
    eps: float = 0.0
    kind: str = "I"
    x: float = 0.0
    y: float = 0.0
    cutoff_radius: float = 8.0

    def __post_init__(self):
        if not self.t > 0:
            raise InvalidInputError(f"time must be positive, got {self.t}")
        if not 0.0 <= self.eps <= 0.5:
            raise InvalidInputError(f"eps must lie in [0, 1/2], got {self.eps}")
        if self.kind not in ("I", "J"):
            raise InvalidInputError(f"kind must be 'I' or 'J', got {self.kind!r}")
        if not self.cutoff_radius > 0:
            raise InvalidInputError("cutoff radius must be positive")


_NODES = {n: leggauss(n) for n in (10, 20)}


def _gauss_pair(f: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray):
    """10- and 20-point Gauss-Legendre values on each panel ``[a_i, b_i]``."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    out = []
    for n in (10, 20):
        x, w = _NODES[n]
        pts = mid[:, None] + half[:, None] * x[None, :]
        out.append(half * (f(pts) @ w))
    return out


def adaptive_panels(
    f: Callable[[np.ndarray], np.ndarray],
    edges: np.ndarray,
    atol: float = 1e-9,
    max_rounds: int = 40,
) -> tuple[complex, float]:
    """Integrate ``f`` over consecutive panels, bisecting those that miss tolerance.

    Each panel receives a share of ``atol`` proportional to its width. The
    error estimate of a panel is the difference of the nested Gauss pair.

    Returns
    -------
    value, error_estimate

    Raises
    ------
    QuadratureError
        If some panel still misses its share after ``max_rounds`` bisections.
    """
    a, b = np.asarray(edges[:-1], float), np.asarray(edges[1:], float)
    span = b[-1] - a[0]
    value = 0.0
    error = 0.0
    for _ in range(max_rounds):
        coarse, fine = _gauss_pair(f, a, b)
        err = np.abs(fine - coarse)
        ok = err <= atol * (b - a) / span
        value += fine[ok].sum()
        error += err[ok].sum()
        if ok.all():
            return complex(value), float(error)
        a, b = a[~ok], b[~ok]
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
    error += float(np.sum(np.abs(fine[~ok] - coarse[~ok])))
    raise QuadratureError("oscillatory quadrature did not converge", error)


def oscillation_edges(
    speed_bound: Callable[[float, float], float],
    length: float,
    graded: bool = False,
    hmax: float = 0.25,
) -> np.ndarray:
    """Panel edges on ``[0, length]`` no wider than a quarter period of the phase.

    ``speed_bound(s, h)`` must bound ``|phase'|`` on ``[s, s + h]``. With
    ``graded=True`` the first panel is further split geometrically towards
    0 to absorb an algebraic endpoint singularity.
    """
    edges = [0.0]
    s = 0.0
    while s < length:
        h = hmax
        for _ in range(3):
            h = min(hmax, 0.5 * np.pi / max(speed_bound(s, h), 1e-300))
        s = min(s + h, length)
        edges.append(s)
    edges = np.array(edges)
    if graded:
        grade = edges[1] * 2.0 ** -np.arange(60, 0, -1)
        edges = np.concatenate([[0.0], grade, edges[1:]])
    return edges


def _half_line_edges(t: float, x: float, K: float, eps: float) -> np.ndarray:
    return oscillation_edges(lambda s, h: abs(x) + 3.0 * abs(t) * (s + h) ** 2, K, graded=eps > 0)


def half_line_integral(t: float, x: float, eps: float, K: float, atol: float = 1e-9) -> tuple[complex, float]:
    """``int_0^K s^eps exp(i (t s^3 + x s)) mu(K - s) ds`` and its error estimate."""

    def f(s):
        return s**eps * np.exp(1j * (t * s**3 + x * s)) * smooth_step(K - s)

    edges = _half_line_edges(t, x, K, eps)
    # the dropped sliver [0, edges[1]] contributes about edges[1]^(1+eps)/(1+eps)
    sliver = edges[1] ** (1 + eps) / (1 + eps) if eps > 0 else 0.0
    val, err = adaptive_panels(f, edges[1:] if eps > 0 else edges, atol=atol)
    return val + sliver, err + sliver * 1e-3


def line_integral(t: float, x: float, eps: float, K: float, atol: float = 1e-9) -> tuple[complex, float]:
    """``int_R |s|^eps exp(i (t s^3 + x s)) chi_K(s) ds``; the negative half is reflected."""
    v1, e1 = half_line_integral(t, x, eps, K, atol / 2)
    v2, e2 = half_line_integral(-t, -x, eps, K, atol / 2)
    return v1 + v2, e1 + e2


def oscillatory_integral(spec: OscillatoryIntegralSpec, atol: float = 1e-9) -> complex:
    """Band-limited ``I_t`` or ``J_t`` as a product of two 1D quadratures.

    The integrand ``|xi|^eps exp(i[t(xi^3+eta^3) + x xi + y eta]) chi_K(xi) chi_K(eta)``
    factorises, so the value is ``A_eps(x) A_0(y)`` for kind ``I`` and
    ``A_0(x) A_eps(y)`` for kind ``J``.

    Raises
    ------
    InvalidInputError
        For ``t <= 0`` (raised when building the spec).
    QuadratureError
        If the combined error estimate exceeds ``atol``.
    """
    K = spec.cutoff_radius
    ex, ey = (spec.eps, 0.0) if spec.kind == "I" else (0.0, spec.eps)
    ax, erx = line_integral(spec.t, spec.x, ex, K, atol / 4)
    ay, ery = line_integral(spec.t, spec.y, ey, K, atol / 4)
    err = abs(ax) * ery + abs(ay) * erx + erx * ery
    if err > atol * max(1.0, abs(ax * ay)):
        raise QuadratureError("oscillatory integral above tolerance", err)
    return ax * ay


def decay_exponent_fit(samples: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of ``log(magnitude)`` against ``log(t)``.

    Returns
    -------
    slope : float
    r2 : float
        Coefficient of determination; 1 when the residual vanishes.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 4 or arr.shape[1] != 2:
        raise InvalidInputError("decay fit needs at least 4 (t, magnitude) samples")
    if np.any(arr <= 0):
        raise InvalidInputError("decay fit needs positive times and magnitudes")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_res <= 1e-30 * max(1.0, ss_tot) else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(r2)


# ---------------------------------------------------------------------------
# weighted norms of evolved Gaussians on the whole plane


def _evolved_gaussian_1d(t: float, width: float, refine: int) -> tuple[np.ndarray, np.ndarray]:
    """Point masses of ``|W(t) g|^2 dx`` on a 1D line, ``g = exp(-x^2/(2 width^2))``.

    ``W(t)`` has symbol ``exp(i t xi^3)``. The band is cut where
    ``|g_hat|^2 < e^{-92}`` and the grid spans the distance ``3 K^2 t``
    travelled by the fastest retained frequency, so no periodic image
    overlaps the result. Samples on the grid (weight 1/3) and on the
    half-shifted grid (weight 2/3) are merged: the trapezoid and midpoint
    errors at the kink of ``|x|`` then cancel at order ``dx^2``.
    """
    K = np.sqrt(92.0) / width
    reach = 3.0 * K * K * abs(t) + 12.0 * width + 10.0
    dx = np.pi / (refine * K)
    n = 1 << int(np.ceil(np.log2(2.0 * reach / dx)))
    x = (np.arange(n) - n // 2) * dx
    k = 2.0 * np.pi * sfft.fftfreq(n, dx)
    c = sfft.fft(np.exp(-0.5 * (x / width) ** 2)) * np.exp(1j * t * k**3)
    on = np.abs(sfft.ifft(c)) ** 2
    half = np.abs(sfft.ifft(c * np.exp(0.5j * k * dx))) ** 2
    pos = np.concatenate([x, x + 0.5 * dx])
    mass = np.concatenate([on * dx / 3.0, half * 2.0 * dx / 3.0])
    return pos, mass


def gaussian_weighted_group_norm(t: float, b: float, width: float = 1.0, amplitude: float = 1.0, refine: int = 4) -> float:
    """``||(|x|+|y|)^b V(t) f||_2`` on the plane for a centred Gaussian ``f``.

    The symmetrized group factorises into two 1D groups and the Gaussian
    is a product, so ``|V(t)f|^2 = m(x) m(y)`` with ``m`` from a single 1D
    transform. The law of ``|x| + |y|`` under ``m dx m dy`` is the
    convolution of the two laws of ``|x|``, deposited linearly on bins of
    width ``dx / (2 refine)``. This reaches times (e.g. ``t = 64``) whose
    dispersive tails no 2D box could hold.
    """
    if b < 0:
        raise InvalidInputError(f"b must be nonnegative, got {b}")
    if width <= 0 or refine < 1:
        raise InvalidInputError("width must be positive and refine >= 1")
    x, mass = _evolved_gaussian_1d(t, width, refine)
    h = np.pi * width / (2.0 * refine * np.sqrt(92.0))
    pos = np.abs(x) / h
    i = np.floor(pos).astype(int)
    fr = pos - i
    size = int(i.max()) + 2
    law = np.bincount(i, mass * (1.0 - fr), size) + np.bincount(i + 1, mass * fr, size)
    n = 2 * size
    total = sfft.irfft(sfft.rfft(law, n) ** 2, n)[: 2 * size - 1]
    total = np.maximum(total, 0.0)
    r = np.arange(total.size) * h
    weight = r ** (2.0 * b) if b > 0 else np.ones_like(r)
    return float(abs(amplitude) * np.sqrt(np.sum(weight * total)))

"""Weighted and Sobolev norms, mixed space-time norms and inequality evaluators."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .errors import InvalidInputError, PreconditionError, UnsupportedOrderError
from .spectral import (
    Bessel,
    Field2D,
    Grid2D,
    apply_multiplier,
    decay_margin,
    partial_array,
    smooth_step,
    transform,
    DECAY_TOLERANCE,
)

# ---------------------------------------------------------------------------
# truncated weight


_GL_X, _GL_W = leggauss(24)
_PANELS = 4


def _transition_integral(N: float, kappa: float, u) -> np.ndarray:
    """``kappa N int_0^u (s/<s>) (1 - mu(v)) dv`` with ``s = N + kappa N v``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.zeros_like(u)
    # composite Gauss-Legendre on [0, u], vectorised over u
    edges = np.linspace(0.0, 1.0, _PANELS + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        a = lo * u
        b = hi * u
        half = 0.5 * (b - a)
        v = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
        s = N + kappa * N * v
        g = s / np.sqrt(1.0 + s * s) * (1.0 - smooth_step(v))
        out += half * (g @ _GL_W)
    return kappa * N * out


def _tail_integral(N: float, kappa: float, u) -> np.ndarray:
    """``kappa N int_u^1 (s/<s>) (1 - mu(v)) dv``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.zeros_like(u)
    edges = np.linspace(0.0, 1.0, _PANELS + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        a = u + lo * (1.0 - u)
        b = u + hi * (1.0 - u)
        half = 0.5 * (b - a)
        v = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
        s = N + kappa * N * v
        g = s / np.sqrt(1.0 + s * s) * (1.0 - smooth_step(v))
        out += half * (g @ _GL_W)
    return kappa * N * out


@lru_cache(maxsize=None)
def transition_width(N: float) -> float:
    """Relative width ``kappa`` of the transition region ``[N, N + kappa N]``.

    Chosen so that the weight reaches exactly ``2N`` at its end; ``kappa < 2``
    for every ``N >= 1``, so the plateau starts before ``3N``.
    """
    target = 2.0 * N - np.sqrt(1.0 + N * N)
    return brentq(lambda k: _transition_integral(N, k, 1.0)[0] - target, 1e-3, 2.0, xtol=1e-15, rtol=1e-15)


def truncated_weight_value(N: float, r) -> np.ndarray | float:
    """Truncated bracket ``w_N(r)``.

    ``w_N(r) = (1 + r^2)^{1/2}`` for ``|r| <= N`` and ``2N`` for large
    ``|r|``. In between, ``w_N' = (r/<r>) (1 - mu((|r|-N)/(kappa N)))``, which
    is smooth, nonnegative and vanishes before ``3N``; ``kappa`` is fixed by
    :func:`transition_width`. Derivatives obey ``|w^{(j)}| <= c_j / w^{j-1}``
    with ``N``-independent ``c_j``.
    """
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    N = float(N)
    r_arr = np.abs(np.asarray(r, dtype=float))
    out = np.atleast_1d(np.sqrt(1.0 + r_arr * r_arr))
    r_arr = np.atleast_1d(r_arr)
    kappa = transition_width(N)
    mid = (r_arr > N) & (r_arr < N + kappa * N)
    if np.any(mid):
        u = (r_arr[mid] - N) / (kappa * N)
        lower = u <= 0.5
        vals = np.empty_like(u)
        vals[lower] = np.sqrt(1.0 + N * N) + _transition_integral(N, kappa, u[lower])
        # near the plateau integrate backwards from 2N so that rounding cannot overshoot
        vals[~lower] = 2.0 * N - _tail_integral(N, kappa, u[~lower])
        out[mid] = np.minimum(vals, 2.0 * N)
    out[r_arr >= N + kappa * N] = 2.0 * N
    return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class Polynomial:
    """``(1 + x^2 + y^2)^r``."""

    r: float

    def values(self, X, Y):
        return (1.0 + X * X + Y * Y) ** self.r

    @property
    def grows(self) -> bool:
        return self.r > 0


@dataclass(frozen=True)
class AbsoluteSum:
    """``(|x| + |y|)^{2b}``."""

    b: float

    def values(self, X, Y):
        base = np.abs(X) + np.abs(Y)
        if self.b == 0:
            return np.ones_like(base)
        return base ** (2.0 * self.b)

    @property
    def grows(self) -> bool:
        return self.b > 0


@dataclass(frozen=True)
class Truncated:
    """``w_N(sqrt(x^2 + y^2))^{2s}``; bounded by ``(2N)^{2s}``."""

    N: float
    s: float

    def values(self, X, Y):
        return truncated_weight_value(self.N, np.hypot(X, Y)) ** (2.0 * self.s)

    @property
    def grows(self) -> bool:
        return self.s > 0


WeightSpec = Union[Polynomial, AbsoluteSum, Truncated]


def weighted_l2_norm(f: Field2D, w: WeightSpec, check_decay: bool = True) -> float:
    """``sqrt(sum w |u|^2 dx dy)`` over the periodic grid.

    Raises
    ------
    PreconditionError
        If ``w`` grows and ``f`` does not decay at distance ``L/2``.
    """
    if check_decay and w.grows:
        m = decay_margin(f)
        if m > DECAY_TOLERANCE:
            raise PreconditionError(f"growing weight on a field that is {m:.2e} at L/2")
    if isinstance(w, AbsoluteSum) and w.b != 0:
        return _kinked_weight_norm(f, w)
    X, Y = f.grid.mesh()
    return float(np.sqrt(np.sum(w.values(X, Y) * f.samples**2) * f.grid.cell_area))


def _interpolate(a: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolant of ``a`` on a grid ``factor`` times finer."""
    ny, nx = a.shape
    c = sfft.fft2(a)
    big = np.zeros((factor * ny, factor * nx), dtype=complex)
    hy, hx = ny // 2, nx // 2
    big[:hy, :hx] = c[:hy, :hx]
    big[:hy, -hx:] = c[:hy, -hx:]
    big[-hy:, :hx] = c[-hy:, :hx]
    big[-hy:, -hx:] = c[-hy:, -hx:]
    # the real part splits the Nyquist modes evenly between +/- frequencies
    return sfft.ifft2(big).real * factor * factor


def _kinked_weight_norm(f: Field2D, w: WeightSpec, refine: int = 2) -> float:
    # (|x|+|y|)^{2b} has a derivative jump on both axes, so the plain grid
    # sum is only second order. On a grid `refine` times finer, nodes get
    # weight 1/3 and half-nodes 2/3 per axis, which cancels the kink term.
    g = f.grid
    fine = _interpolate(f.samples, 2 * refine)
    ny, nx = fine.shape
    hx, hy = g.dx / refine, g.dy / refine
    x = -g.half_length_x + 0.5 * hx * np.arange(nx)
    y = -g.half_length_y + 0.5 * hy * np.arange(ny)
    qx = np.where(np.arange(nx) % 2 == 0, 1.0 / 3.0, 2.0 / 3.0) * hx
    qy = np.where(np.arange(ny) % 2 == 0, 1.0 / 3.0, 2.0 / 3.0) * hy
    vals = w.values(x[None, :], y[:, None]) * fine**2
    return float(np.sqrt(qy @ vals @ qx))


def sobolev_norm(f: Field2D, s: float) -> float:
    """``||(1 + xi^2 + eta^2)^{s/2} f_hat||_2``."""
    if s < 0:
        raise UnsupportedOrderError(f"Sobolev order must be >= 0, got {s}")
    if s == 0:
        return transform(f).l2_norm()
    return apply_multiplier(transform(f), Bessel(s)).l2_norm()


# ---------------------------------------------------------------------------
# trajectories and mixed norms


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of a field at strictly increasing times starting at 0.

    ``samples`` has shape ``(nt, ny, nx)`` and is stored read-only.
    """

    grid: Grid2D
    times: np.ndarray
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        a = np.asarray(self.samples, dtype=float)
        if t.size == 0:
            raise InvalidInputError("trajectory must hold at least one snapshot")
        if t[0] != 0.0:
            raise InvalidInputError(f"trajectory must start at t = 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("trajectory times must be strictly increasing")
        if a.shape != (t.size,) + self.grid.shape:
            raise InvalidInputError(f"snapshot array shape {a.shape} does not match {t.size} x {self.grid.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("trajectory samples must be finite")
        t.setflags(write=False)
        a = np.array(a, copy=True)
        a.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "samples", a)

    @classmethod
    def from_fields(cls, times: Sequence[float], fields: Sequence[Field2D]) -> "Trajectory":
        if not fields:
            raise InvalidInputError("trajectory must hold at least one snapshot")
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise InvalidInputError("all snapshots must share one grid")
        return cls(grid, np.asarray(times, float), np.stack([f.samples for f in fields]))

    def __len__(self) -> int:
        return self.times.size

    def snapshot(self, i: int) -> Field2D:
        return Field2D(self.grid, self.samples[i])

    @property
    def fields(self) -> list[Field2D]:
        return [self.snapshot(i) for i in range(len(self))]

    @property
    def final(self) -> Field2D:
        return self.snapshot(len(self) - 1)


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights on (possibly uneven) nodes."""
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    if times.size > 1:
        h = np.diff(times)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
    return w


_AXES = ("t", "y", "x")


def _parse_spec(spec) -> list[tuple[str, float]]:
    if isinstance(spec, str):
        items = []
        for tok in spec.replace(",", " ").split():
            axis, _, p = tok.partition(":")
            items.append((axis.strip(), p.strip()))
        spec = items
    out = []
    for item in spec:
        try:
            axis, p = item
        except (TypeError, ValueError):
            raise InvalidInputError(f"malformed mixed-norm entry {item!r}") from None
        if isinstance(p, str):
            p = np.inf if p.lower() in ("inf", "infinity", "oo") else float(p) if p else None
        if axis not in _AXES or p not in (2, 2.0, np.inf):
            raise InvalidInputError(f"mixed-norm entry {item!r}: axis must be x, y or t and exponent 2 or inf")
        out.append((axis, float(p)))
    if sorted(a for a, _ in out) != sorted(_AXES):
        raise InvalidInputError(f"mixed-norm spec must name each of x, y, t exactly once, got {spec!r}")
    return out


def mixed_norm_array(values: np.ndarray, grid: Grid2D, times: np.ndarray, spec) -> float:
    """Nested discrete norm of ``values`` (shape ``(nt, ny, nx)``).

    ``spec`` lists ``(axis, p)`` pairs from the outermost norm to the
    innermost, e.g. ``[('x', inf), ('y', 2), ('t', 2)]`` for
    ``L^inf_x L^2_{yT}``; the string form ``"x:inf y:2 t:2"`` is accepted.
    ``L^2`` uses cell sums in space and the trapezoid rule in time;
    ``L^inf`` is a sample maximum.
    """
    entries = _parse_spec(spec)
    v = np.abs(np.asarray(values, dtype=float))
    axes = list(_AXES)
    weights = {"t": trapezoid_weights(times), "y": np.full(grid.ny, grid.dy), "x": np.full(grid.nx, grid.dx)}
    for axis, p in reversed(entries):
        k = axes.index(axis)
        if p == 2:
            shape = [1] * v.ndim
            shape[k] = -1
            v = np.sqrt(np.sum(v * v * weights[axis].reshape(shape), axis=k))
        else:
            v = np.max(v, axis=k)
        axes.pop(k)
    return float(v)


def mixed_norm(traj: Trajectory, spec) -> float:
    """Mixed space-time norm of a trajectory; see :func:`mixed_norm_array`."""
    return mixed_norm_array(traj.samples, traj.grid, traj.times, spec)


# ---------------------------------------------------------------------------
# the ten-component solution norm


@dataclass(frozen=True)
class NormReport:
    """Components ``n1 .. n10`` of the contraction-space norm and their sum."""

    components: tuple[float, ...]

    @property
    def total(self) -> float:
        return float(sum(self.components))

    def as_dict(self) -> dict:
        d = {f"n{i + 1}": float(c) for i, c in enumerate(self.components)}
        d["total"] = self.total
        return d


def _axis_fractional(grid: Grid2D, a: np.ndarray, axis: str, s: float) -> np.ndarray:
    """``D_x^s`` or ``D_y^s`` on a batch of snapshots; ``s = 1`` means ``d/dx``."""
    if s == 1:
        return partial_array(grid, a, axis, 1)
    ax, n, length = (-1, grid.nx, grid.half_length_x) if axis == "x" else (-2, grid.ny, grid.half_length_y)
    k = np.pi * np.arange(n // 2 + 1) / length
    shape = [1] * a.ndim
    shape[ax] = k.size
    return sfft.irfft(sfft.rfft(a, axis=ax) * (k**s).reshape(shape), n=n, axis=ax)


def triple_norm(traj: Trajectory, s: float) -> NormReport:
    """The ten norms of the contraction space on the stored time window.

    ``n1 = L^inf_T H^s``; ``n2, n3 = ||D_x^s v_x||, ||D_y^s v_x||`` in
    ``L^inf_x L^2_{yT}``; ``n4 = ||v_x||_{L^2_T L^inf_xy}``;
    ``n5 = ||v||_{L^2_x L^inf_{yT}}``; ``n6 .. n9`` are the same with the
    roles of ``x`` and ``y`` exchanged; ``n10 = L^inf_T L^2((|x|+|y|)^s)``.
    With ``s = 1`` the fractional derivatives become ``d/dx`` and ``d/dy``.
    """
    if not s > 0.75:
        raise InvalidInputError(f"triple norm needs s > 3/4, got {s}")
    g, t, v = traj.grid, traj.times, traj.samples
    if decay_margin(traj.snapshot(0)) > DECAY_TOLERANCE:
        raise PreconditionError("initial snapshot does not decay at L/2")
    vx = partial_array(g, v, "x")
    vy = partial_array(g, v, "y")
    fields = traj.fields
    n1 = max(sobolev_norm(f, s) for f in fields)
    X, Y = g.mesh()
    wt = AbsoluteSum(s / 2.0)
    n10 = max(weighted_l2_norm(f, wt, check_decay=False) for f in fields)
    comps = (
        n1,
        mixed_norm_array(_axis_fractional(g, vx, "x", s), g, t, "x:inf y:2 t:2"),
        mixed_norm_array(_axis_fractional(g, vx, "y", s), g, t, "x:inf y:2 t:2"),
        mixed_norm_array(vx, g, t, "t:2 x:inf y:inf"),
        mixed_norm_array(v, g, t, "x:2 y:inf t:inf"),
        mixed_norm_array(_axis_fractional(g, vy, "x", s), g, t, "y:inf x:2 t:2"),
        mixed_norm_array(_axis_fractional(g, vy, "y", s), g, t, "y:inf x:2 t:2"),
        mixed_norm_array(vy, g, t, "t:2 x:inf y:inf"),
        mixed_norm_array(v, g, t, "y:2 x:inf t:inf"),
        n10,
    )
    return NormReport(tuple(float(c) for c in comps))


# ---------------------------------------------------------------------------
# interpolation and Leibniz evaluators


def _radial_weight(grid: Grid2D, weight_kind) -> np.ndarray:
    r = grid.radius()
    if weight_kind == "bracket":
        return np.sqrt(1.0 + r * r)
    if isinstance(weight_kind, tuple) and weight_kind[0] == "truncated":
        return truncated_weight_value(weight_kind[1], r)
    raise InvalidInputError(f"weight kind must be 'bracket' or ('truncated', N), got {weight_kind!r}")


def _bessel_array(f: Field2D, s: float) -> np.ndarray:
    XI, ETA = f.grid.wavenumber_mesh()
    c = sfft.fft2(f.samples)
    return sfft.ifft2(c * (1.0 + XI**2 + ETA**2) ** (s / 2.0)).real


def interpolation_check(f: Field2D, a: float, b: float, theta: float, weight_kind="bracket") -> tuple[float, float]:
    """Both sides of the weighted interpolation inequality.

    Returns
    -------
    lhs : float
        ``||w^{theta b} J^{(1-theta) a} f||_2``
    rhs_product : float
        ``||w^b f||_2^theta ||J^a f||_2^{1-theta}``

    ``w`` is ``<|x|>`` for ``'bracket'`` or ``w_N(|x|)`` for ``('truncated', N)``.
    """
    if not 0.0 < theta < 1.0:
        raise InvalidInputError(f"theta must lie in (0, 1), got {theta}")
    if not (a > 0 and b > 0):
        raise InvalidInputError("a and b must be positive")
    if decay_margin(f) > DECAY_TOLERANCE:
        raise PreconditionError("interpolation check needs a field that decays at L/2")
    w = _radial_weight(f.grid, weight_kind)
    da = f.grid.cell_area
    lhs = np.sqrt(np.sum((w ** (theta * b) * _bessel_array(f, (1 - theta) * a)) ** 2) * da)
    wb = np.sqrt(np.sum((w**b * f.samples) ** 2) * da)
    ja = np.sqrt(np.sum(_bessel_array(f, a) ** 2) * da)
    return float(lhs), float(wb**theta * ja ** (1 - theta))


def fractional_1d(f: np.ndarray, alpha: float, half_length: float) -> np.ndarray:
    """``D^alpha`` on a periodic 1D grid over ``[-L, L)``."""
    n = f.shape[-1]
    k = np.pi * np.arange(n // 2 + 1) / half_length
    return sfft.irfft(sfft.rfft(f) * k**alpha, n=n)


def leibniz_defect(f, g, alpha: float, half_length: float, p: int = 2) -> tuple[float, float]:
    """Fractional Leibniz defect on a periodic 1D grid.

    Returns
    -------
    defect : float
        ``||D^a(fg) - f D^a g - g D^a f||_2``
    bound_factor : float
        ``||g||_inf ||D^a f||_2``, the right-hand side without its constant.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    if p != 2:
        raise InvalidInputError("only p = 2 is supported")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise InvalidInputError("f and g must be 1D arrays on a common grid")
    h = 2.0 * half_length / f.size
    d = fractional_1d(f * g, alpha, half_length) - f * fractional_1d(g, alpha, half_length) - g * fractional_1d(
        f, alpha, half_length
    )
    defect = np.sqrt(np.sum(d * d) * h)
    bound = np.max(np.abs(g)) * np.sqrt(np.sum(fractional_1d(f, alpha, half_length) ** 2) * h)
    return float(defect), float(bound)

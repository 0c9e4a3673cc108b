"""Smooth, decaying test fields: Gaussians, wave packets and random suites."""
from __future__ import annotations

import numpy as np

from .spectral import Field2D, Grid2D

# exp(-r^2 / (2 sigma^2)) < 1e-13 once r > DECAY_SIGMAS * sigma
DECAY_SIGMAS = 7.75


def gaussian(
    grid: Grid2D,
    amplitude: float = 1.0,
    center: tuple[float, float] = (0.0, 0.0),
    width: float = 1.0,
) -> Field2D:
    """``amplitude * exp(-|x - center|^2 / (2 width^2))``."""
    X, Y = grid.mesh()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    return Field2D(grid, amplitude * np.exp(-r2 / (2.0 * width**2)))


def wave_packet(
    grid: Grid2D,
    amplitude: float = 1.0,
    center: tuple[float, float] = (0.0, 0.0),
    width: float | tuple[float, float] = 1.0,
    carrier: tuple[float, float] = (0.0, 0.0),
    phase: float = 0.0,
) -> Field2D:
    """Gaussian envelope times ``cos(k . (x - center) + phase)``.

    ``width`` may be a pair ``(wx, wy)`` for an anisotropic envelope.
    """
    wx, wy = (width, width) if np.isscalar(width) else width
    X, Y = grid.mesh()
    dx, dy = X - center[0], Y - center[1]
    env = np.exp(-0.5 * ((dx / wx) ** 2 + (dy / wy) ** 2))
    return Field2D(grid, amplitude * env * np.cos(carrier[0] * dx + carrier[1] * dy + phase))


def plane_wave(grid: Grid2D, jx: int, jy: int, kind: str = "cos") -> Field2D:
    """``cos`` or ``sin`` of ``xi_jx x + eta_jy y`` on the lattice."""
    X, Y = grid.mesh()
    arg = np.pi * jx / grid.half_length_x * X + np.pi * jy / grid.half_length_y * Y
    return Field2D(grid, np.cos(arg) if kind == "cos" else np.sin(arg))


def random_field(
    grid: Grid2D,
    rng: np.random.Generator,
    n_packets: int = 3,
    width_range: tuple[float, float] = (0.7, 1.2),
    max_wavenumber: float = 2.0,
) -> Field2D:
    """Sum of a few random wave packets that decay well inside the box.

    Widths are drawn from ``width_range``; carriers have modulus at most
    ``max_wavenumber``. Centres are placed so that every packet is below
    ``1e-13`` of its peak at distance ``L/2`` from the origin.
    """
    half = 0.5 * min(grid.half_length_x, grid.half_length_y)
    out = np.zeros(grid.shape)
    for _ in range(n_packets):
        w = rng.uniform(*width_range)
        room = max(half - DECAY_SIGMAS * w, 0.0)
        rad = room * np.sqrt(rng.uniform())
        ang = rng.uniform(0, 2 * np.pi)
        kr = max_wavenumber * np.sqrt(rng.uniform())
        ka = rng.uniform(0, 2 * np.pi)
        out += wave_packet(
            grid,
            amplitude=rng.normal(),
            center=(rad * np.cos(ang), rad * np.sin(ang)),
            width=w,
            carrier=(kr * np.cos(ka), kr * np.sin(ka)),
            phase=rng.uniform(0, 2 * np.pi),
        ).samples
    return Field2D(grid, out)


def random_suite(grid: Grid2D, count: int, seed: int = 0, **kwargs) -> list[Field2D]:
    """``count`` independent :func:`random_field` draws from one seeded generator."""
    rng = np.random.default_rng(seed)
    return [random_field(grid, rng, **kwargs) for _ in range(count)]

import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zklab.errors import DomainOverflowError, InvalidInputError, PreconditionError
from zklab.fields import gaussian, plane_wave, random_field
from zklab.norms import Polynomial, Trajectory, weighted_l2_norm
from zklab.propagator import evolve_series, free_evolve
from zklab.solver import (
    LAM,
    MU,
    SYMMETRIZING_MATRIX,
    SimulationConfig,
    duhamel_apply,
    evolve,
    gronwall_envelope,
    nonlinear_term,
    pde_residual,
    picard_solve,
    symmetrize_map,
    weighted_energy_audit,
)
from zklab.spectral import Field2D, Grid2D, partial

G = Grid2D.square(128, 16.0)
G256 = Grid2D.square(256, 20.0)


def _cfg(**kw):
    base = dict(nx=G.nx, ny=G.ny, half_length_x=G.half_length_x, half_length_y=G.half_length_y)
    base.update(kw)
    return SimulationConfig(**base)


# --- change of variables ------------------------------------------------------------


def test_map_constants_and_point_image():
    assert MU == pytest.approx(0.6300, abs=1e-4)
    assert LAM == pytest.approx(1.0911, abs=1e-4)
    assert MU**3 == pytest.approx(0.25, rel=1e-15)
    assert LAM**2 == pytest.approx(3 * MU**2, rel=1e-15)
    x, y = SYMMETRIZING_MATRIX @ np.array([1.0, 1.0])
    assert (x, y) == (pytest.approx(1.7211, abs=1e-4), pytest.approx(-0.4611, abs=1e-4))


def test_forward_map_of_offset_gaussian_is_closed_form():
    c = np.array([0.8, -0.5])
    v = symmetrize_map(gaussian(G256, center=tuple(c)))
    X, Y = G256.mesh()
    q = np.stack([X, Y], axis=-1) @ np.linalg.inv(SYMMETRIZING_MATRIX).T
    exact = np.exp(-0.5 * ((q[..., 0] - c[0]) ** 2 + (q[..., 1] - c[1]) ** 2))
    assert np.max(np.abs(v.samples - exact)) < 1e-12


def test_map_roundtrip():
    u = random_field(G256, np.random.default_rng(0), n_packets=3, width_range=(0.8, 1.0), max_wavenumber=1.5)
    v = symmetrize_map(u)
    assert np.max(np.abs(symmetrize_map(v, "inverse", check_decay=False).samples - u.samples)) < 1e-8
    w = symmetrize_map(u, "inverse")
    assert np.max(np.abs(symmetrize_map(w, "forward", check_decay=False).samples - u.samples)) < 1e-8


def test_map_jacobian():
    u = gaussian(G256)
    assert symmetrize_map(u).l2_norm() / u.l2_norm() == pytest.approx(np.sqrt(2 * MU * LAM), rel=1e-6)
    assert np.sqrt(2 * MU * LAM) == pytest.approx(1.1725, abs=1e-4)


def test_linear_operator_becomes_symmetric():
    u = gaussian(G256)
    Lu = partial(u, "x", 3) + partial(partial(u, "x"), "y", 2)
    v = symmetrize_map(u)
    lhs = symmetrize_map(Lu, check_decay=False)
    rhs = partial(v, "x", 3) + partial(v, "y", 3)
    assert (lhs - rhs).l2_norm() < 1e-6 * rhs.l2_norm()


def test_map_overflow_and_precondition():
    with pytest.raises(DomainOverflowError):
        symmetrize_map(gaussian(G256, width=3.0), check_decay=False)
    with pytest.raises(PreconditionError):
        symmetrize_map(gaussian(G256, width=3.0))
    with pytest.raises(InvalidInputError):
        symmetrize_map(gaussian(G256), "sideways")


# --- configuration -------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw", [dict(T=0.0), dict(dt=-1.0), dict(substeps=3), dict(scheme="euler"), dict(form="other"), dict(nx=7)]
)
def test_config_validation(kw):
    with pytest.raises(InvalidInputError):
        _cfg(**kw)


# --- Duhamel operator and Picard ---------------------------------------------------------


def test_duhamel_of_zero_is_free_evolution():
    v0 = gaussian(G, amplitude=0.3)
    times = np.linspace(0, 0.5, 9)
    zero = Trajectory(G, times, np.zeros((9,) + G.shape))
    out = duhamel_apply(zero, v0)
    for t, row in zip(out.times, out.samples):
        np.testing.assert_allclose(row, free_evolve(v0, t).samples, atol=1e-14)
    blank = duhamel_apply(zero, Field2D.zeros(G))
    assert np.all(blank.samples == 0.0)


def test_duhamel_needs_covering_trajectory():
    times = np.linspace(0, 0.5, 9)
    zero = Trajectory(G, times, np.zeros((9,) + G.shape))
    with pytest.raises(InvalidInputError):
        duhamel_apply(zero, Field2D.zeros(G), T=1.0, M=8)
    with pytest.raises(InvalidInputError):
        duhamel_apply(zero, Field2D.zeros(G), T=0.5, M=3)


def test_duhamel_trapezoid_is_second_order():
    v0 = gaussian(G, amplitude=0.5)
    T = 0.25
    traj = evolve(v0, _cfg(form="symmetrized", T=T, snapshots=64, dt=T / 256))
    ends = [duhamel_apply(traj, v0, T, M, "symmetrized").final for M in (16, 32, 64)]
    ratio = (ends[1] - ends[0]).l2_norm() / (ends[2] - ends[1]).l2_norm()
    assert ratio == pytest.approx(4.0, abs=0.3)


def test_picard_zero_data():
    traj, diag = picard_solve(Field2D.zeros(G), 0.25)
    assert diag.iterations == 1 and diag.converged
    assert np.all(traj.samples == 0.0)


def test_picard_small_gaussian_contracts_and_solves_the_equation():
    v0 = gaussian(G, amplitude=0.1)
    cfg = _cfg(form="symmetrized", scheme="picard", T=0.25, substeps=64)
    traj, diag = picard_solve(v0, 0.25, cfg)
    assert diag.converged
    assert all(r < 0.5 for r in diag.ratios)
    l2 = max(f.l2_norm() for f in traj.fields)
    assert diag.final_residual < 10 * cfg.tolerance * l2
    # the centred difference at dt = T/64 dominates the residual
    assert pde_residual(traj, "symmetrized") < 1e-4


# --- exponential integrator --------------------------------------------------------


def test_evolve_zero_data():
    traj = evolve(Field2D.zeros(G), _cfg(T=0.1, snapshots=4))
    assert np.all(traj.samples == 0.0)
    assert len(traj) == 5


@pytest.mark.parametrize("form", ["original", "symmetrized"])
def test_linear_run_matches_free_evolution(form):
    u0 = random_field(G, np.random.default_rng(3), n_packets=2, width_range=(0.7, 0.9), max_wavenumber=1.5)
    traj = evolve(u0, _cfg(form=form, nonlinear=False, T=1.0, snapshots=5))
    for t, f in zip(traj.times, traj.fields):
        assert np.max(np.abs(f.samples - free_evolve(u0, t, form).samples)) < 1e-12


def test_evolve_conserves_mass_and_l2():
    u0 = gaussian(G, amplitude=0.5)
    traj = evolve(u0, _cfg(T=1.0, dt=0.01, snapshots=10))
    mass = np.array([f.mass() for f in traj.fields])
    l2 = np.array([f.l2_norm() for f in traj.fields])
    assert np.max(np.abs(mass - mass[0])) < 1e-10 * abs(mass[0])
    assert np.max(np.abs(l2 - l2[0])) < 1e-8 * l2[0]


def test_nonlinear_term_of_symmetrized_form():
    u = gaussian(G, amplitude=0.5)
    n = nonlinear_term(u, "symmetrized", dealias=False)
    expect = MU * u.samples * (partial(u, "x").samples + partial(u, "y").samples)
    np.testing.assert_allclose(n.samples, expect, atol=1e-12)


# --- residuals ------------------------------------------------------------------------


def test_residual_of_zero_trajectory():
    tr = Trajectory(G, [0.0, 0.1, 0.2], np.zeros((3,) + G.shape))
    assert pde_residual(tr) == 0.0


def test_residual_needs_three_snapshots():
    tr = Trajectory(G, [0.0, 0.1], np.zeros((2,) + G.shape))
    with pytest.raises(InvalidInputError):
        pde_residual(tr)


def test_residual_of_single_mode_is_second_order_in_dt():
    g = Grid2D.square(16, np.pi)
    f = plane_wave(g, 2, 1)

    def residual(dt):
        times = dt * np.arange(5)
        tr = Trajectory(g, times, evolve_series(f, times, "symmetrized"))
        return pde_residual(tr, "symmetrized", frame="lab", nonlinear=False)

    r1, r2 = residual(0.01), residual(0.005)
    assert r1 / r2 == pytest.approx(4.0, rel=0.01)
    # centred differences of exp(i w t) miss w by w^3 dt^2 / 6, relative to |u| = 1
    assert r1 == pytest.approx(9.0**3 * 0.01**2 / 6.0, rel=0.01)


# --- weighted energy audit ---------------------------------------------------------------


def test_gronwall_envelope_closed_form():
    # a + C t + C int_0^t (a + C s) e^{C (t - s)} ds
    a, C, t = 0.7, 1.3, 0.9
    s = np.linspace(0, t, 20001)
    integral = np.trapezoid((a + C * s) * np.exp(C * (t - s)), s)
    assert gronwall_envelope(a, C, t) == pytest.approx(a + C * t + C * integral, rel=1e-7)


def test_audit_with_unit_weight_is_l2_conservation():
    u0 = gaussian(G, amplitude=0.5, width=1.0)
    traj = evolve(u0, _cfg(T=0.5, dt=0.005, snapshots=20))
    rec = weighted_energy_audit(traj, 0.0, 8)
    assert all(np.all(v == 0.0) for v in rec.terms.values())
    assert rec.relative_defect < 1e-8
    np.testing.assert_allclose(rec.weighted, [f.l2_norm() ** 2 for f in traj.fields], rtol=1e-14)


def test_audit_of_zero_solution():
    tr = Trajectory(G, [0.0, 0.1, 0.2], np.zeros((3,) + G.shape))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = weighted_energy_audit(tr, 2.0, 8)
    assert rec.defect == 0.0 and np.all(rec.weighted == 0.0)
    assert all(np.all(v == 0.0) for v in rec.terms.values())


def test_audit_identity_and_envelope_for_gaussian():
    u0 = gaussian(G256, amplitude=0.5, width=1.3)
    traj = evolve(u0, SimulationConfig(T=0.5, dt=0.005, snapshots=50))
    rec = weighted_energy_audit(traj, 2.0, 8)
    assert rec.relative_defect < 1e-4
    assert rec.envelope_holds
    assert rec.initial_weighted_norm == pytest.approx(weighted_l2_norm(u0, Polynomial(1.0)) ** 2)


@given(st.floats(0, 5), st.floats(0, 3), st.floats(0, 2))
def test_gronwall_envelope_dominates_its_start(a, C, t):
    assert gronwall_envelope(a, C, t) >= a * (1 - 1e-15)

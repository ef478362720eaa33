from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from pairsource import phaselock as pl
from pairsource.errors import ValidationError
from pairsource.polarization import bell_state, dephase_by_phase_jitter, fidelity

QUIET = pl.PhasePlant(temperature_noise=0.0, temperature_ramp=0.0)


def test_detector_intensity_values():
    assert pl.detector_intensity(0.0) == pytest.approx(0.0)
    assert pl.detector_intensity(math.pi) == pytest.approx(1.0)
    assert pl.detector_intensity(0.3, math.pi / 2 - 0.3) == pytest.approx(0.5)
    grid = np.linspace(-10, 10, 5001)
    np.testing.assert_allclose(pl.detector_intensity(grid + 2 * math.pi), pl.detector_intensity(grid), atol=1e-12)


def _demodulated(theta, d=0.3, f=50e3, tau=2e-4, dt=2e-6, T=5e-3):
    t = np.arange(int(T / dt)) * dt
    intensity = pl.detector_intensity(theta + d * np.sin(2 * math.pi * f * t))
    return pl.lockin_error(intensity, t, f, tau)[-1]


@pytest.mark.parametrize("theta", [0.0, 0.2, 1.0, math.pi / 2, 2.5, math.pi])
def test_demodulator_matches_bessel_law(theta):
    assert _demodulated(theta) == pytest.approx(float(pl.lockin_error_analytic(theta, 0.3)), abs=2e-3)


def test_error_slope_near_lock_point():
    eps = 1e-3
    slope = (_demodulated(eps) - _demodulated(-eps)) / (2 * eps)
    assert slope == pytest.approx(special.j1(0.3), rel=0.05)


def test_error_is_maximal_at_quadrature():
    grid = np.linspace(0, math.pi, 721)
    err = np.abs(pl.lockin_error_analytic(grid, 0.3))
    assert grid[np.argmax(err)] == pytest.approx(math.pi / 2, abs=grid[1])


@given(st.floats(0.0, 1.0), st.sampled_from([0.0, math.pi]))
def test_error_is_odd_about_setpoints(eps, sp):
    e_plus = pl.lockin_error_analytic(sp + eps, 0.3)
    e_minus = pl.lockin_error_analytic(sp - eps, 0.3)
    assert e_plus == pytest.approx(-e_minus, abs=1e-12)


def test_default_gains_are_ziegler_nichols():
    kp, ki, ku, tu = pl.ziegler_nichols_gains()
    assert pl.DEFAULT_KP == pytest.approx(kp, rel=1e-3)
    assert pl.DEFAULT_KI == pytest.approx(ki, rel=1e-3)
    # phase crossover of two demodulator poles and the PZT pole
    w = 2 * math.pi / tu
    assert 2 * math.atan(w * 2e-4) + math.atan(w * 1e-3) == pytest.approx(math.pi)


def test_config_validation():
    with pytest.raises(ValidationError):
        pl.LockConfig(setpoint=1.0)
    with pytest.raises(ValidationError):
        pl.PhasePlant(dphi_dT=0)
    with pytest.warns(UserWarning):
        pl.LockConfig(dither_frequency=1e3)
    with pytest.raises(ValidationError):
        pl.run_lock(QUIET, pl.LockConfig(), 1e-3, dt=1e-5)


def test_ramp_open_loop_is_linear_in_temperature():
    plant = pl.PhasePlant(temperature_noise=0.0, temperature_ramp=30e-6)
    trace = pl.run_lock(plant, pl.LockConfig().opened(), 1.0)
    assert trace.phi_r[-1] - trace.phi_r[0] == pytest.approx(1e3 * 30e-6 * (1.0 - 2e-6), rel=1e-9)


def test_quiet_lock_has_no_residual():
    trace = pl.run_lock(QUIET, pl.LockConfig(), 0.02)
    # demodulator start-up transient, then only the residual dither ripple
    assert trace.rms < 1e-3
    assert np.max(np.abs(trace.residual[trace.t > 0.01])) < 1e-4


def test_closed_loop_beats_open_loop():
    plant = pl.PhasePlant(seed=0)
    open_ = pl.run_lock(plant, pl.LockConfig().opened(), 0.3)
    closed = pl.run_lock(plant, pl.LockConfig(), 0.3)
    assert closed.rms < open_.rms
    assert closed.rms < math.pi / 100


def test_lock_is_deterministic_and_step_converged():
    plant = pl.PhasePlant(seed=4)
    a = pl.run_lock(plant, pl.LockConfig(), 0.2)
    b = pl.run_lock(plant, pl.LockConfig(), 0.2)
    assert np.array_equal(a.residual, b.residual)
    c = pl.run_lock(plant, pl.LockConfig(), 0.2, dt=1e-6)
    assert c.rms == pytest.approx(a.rms, rel=0.05)


def test_lock_at_pi_setpoint():
    trace = pl.run_lock(pl.PhasePlant(seed=2, phi_r=math.pi - 0.3), pl.LockConfig(setpoint=math.pi), 0.1)
    tail = trace.residual[trace.t > 0.05]
    assert np.sqrt(np.mean(tail**2)) < math.pi / 100


def test_pzt_unwinds_under_steady_drift():
    plant = pl.PhasePlant(temperature_noise=0.0, temperature_ramp=20e-3, pzt_range=2.5 * math.pi)
    trace = pl.run_lock(plant, pl.LockConfig(), 0.5)
    # 10 rad of drift through a 2.5 pi range needs at least one hop
    assert len(trace.unwind_times) >= 1
    tail = trace.residual[trace.t > 0.1]
    assert np.median(np.abs(tail)) < math.pi / 100


def test_set_phase_to_pi():
    sim = pl.LockSimulator(pl.PhasePlant(seed=1), pl.LockConfig(), 2e-6, 0.05)
    sim.advance(5e-3)
    rep = pl.set_phase(sim, math.pi)
    assert rep.settled
    assert rep.settle_time <= 10e-3
    assert abs(rep.final_error) < math.pi / 100


def test_set_phase_to_current_value_is_immediate():
    sim = pl.LockSimulator(QUIET, pl.LockConfig(), 2e-6, 0.05)
    sim.advance(5e-3)
    rep = pl.set_phase(sim, 0.0)
    assert rep.settle_time == 0.0 and rep.settled


def test_fidelity_under_lock():
    assert pl.fidelity_under_lock(np.zeros(100)) == 1.0
    sigma = 2 * math.pi / 50
    resid = np.random.default_rng(0).normal(0, sigma, 400000)
    f = pl.fidelity_under_lock(resid)
    assert f == pytest.approx(0.5 * (1 + math.exp(-sigma**2 / 2)), rel=1e-3)
    rho = dephase_by_phase_jitter(bell_state("phi-"), float(np.std(resid)))
    assert f == pytest.approx(fidelity(rho, bell_state("phi-")), rel=1e-3)
    with pytest.raises(ValidationError):
        pl.fidelity_under_lock([])


def test_locked_fidelity_is_high():
    trace = pl.run_lock(pl.PhasePlant(seed=0), pl.LockConfig(), 0.2)
    assert pl.fidelity_under_lock(trace.residual) > 0.9999


def test_wrap():
    np.testing.assert_allclose(pl.wrap([0.0, 2 * math.pi + 0.1, -math.pi - 0.1]), [0.0, 0.1, math.pi - 0.1])

"""Interferometer phase stabilization: thermal drift plant, dither lock-in, PI loop.

The lock detector sees ``theta = phi_r + phi_e`` where ``phi_r`` is the
interferometer phase (thermal drift plus PZT) and ``phi_e`` an electronic
offset. The loop drives ``theta`` to the setpoint, so the interferometer
phase settles at ``setpoint - phi_e``; stepping ``phi_e`` sets the phase.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, special

from .errors import ValidationError

DEFAULT_TEMPERATURE_NOISE = 0.75e-3  # K / sqrt(s)
DEFAULT_TEMPERATURE_RAMP = 1e-3  # K / s
NOISE_GRID_STEP = 1e-4  # s


@dataclass(frozen=True)
class PhasePlant:
    """Drifting interferometer with a PZT actuator.

    ``temperature_noise`` is the random-walk strength in K/sqrt(s); the path
    is drawn on a fixed grid of ``noise_grid_step`` and interpolated, so the
    integration step does not change the realization.
    """

    phi_r: float = 0.0
    dphi_dT: float = 1e3  # rad/K
    temperature_noise: float = DEFAULT_TEMPERATURE_NOISE
    temperature_ramp: float = DEFAULT_TEMPERATURE_RAMP  # K/s
    pzt_range: float = 4 * math.pi
    pzt_response_time: float = 1e-3
    noise_grid_step: float = NOISE_GRID_STEP
    seed: int = 0

    def __post_init__(self):
        if self.dphi_dT <= 0:
            raise ValidationError("dphi_dT must be positive")
        if self.temperature_noise < 0 or self.pzt_response_time <= 0 or self.noise_grid_step <= 0:
            raise ValidationError("noise, response time and grid step must be non-negative / positive")
        if self.pzt_range <= 2 * math.pi:
            raise ValidationError("pzt_range must exceed 2 pi to allow unwinding")

    def temperature_path(self, duration: float) -> tuple[np.ndarray, np.ndarray]:
        """Temperature offset (K) on the noise grid, starting at zero."""
        n = int(math.ceil(duration / self.noise_grid_step)) + 2
        t = np.arange(n) * self.noise_grid_step
        rng = np.random.default_rng(self.seed)
        steps = rng.normal(0.0, self.temperature_noise * math.sqrt(self.noise_grid_step), n - 1)
        walk = np.concatenate([[0.0], np.cumsum(steps)])
        return t, walk + self.temperature_ramp * t

    def drift_phase(self, t: np.ndarray) -> np.ndarray:
        """Open-loop interferometer phase at times ``t``."""
        grid, temp = self.temperature_path(float(np.max(t)) if np.size(t) else 0.0)
        return self.phi_r + self.dphi_dT * np.interp(t, grid, temp)


def ziegler_nichols_gains(
    dither_amplitude: float = 0.3,
    demod_time_constant: float = 2e-4,
    pzt_response_time: float = 1e-3,
) -> tuple[float, float, float, float]:
    """Classic PI tuning for the loop ``J1(d) / ((1 + s tau_d)^2 (1 + s tau_p))``.

    Returns ``(kp, ki, Ku, Tu)``.
    """
    td, tp = demod_time_constant, pzt_response_time
    w = optimize.brentq(lambda w: 2 * math.atan(w * td) + math.atan(w * tp) - math.pi, 1e-3 / tp, 1e3 / td)
    mag = special.j1(dither_amplitude) / ((1 + (w * td) ** 2) * math.sqrt(1 + (w * tp) ** 2))
    ku = 1 / mag
    tu = 2 * math.pi / w
    kp = 0.45 * ku
    return kp, kp * 1.2 / tu, ku, tu


# frozen output of ziegler_nichols_gains() for the default loop
DEFAULT_KP = 43.69
DEFAULT_KI = 4.936e4


@dataclass(frozen=True)
class LockConfig:
    dither_amplitude: float = 0.3  # rad
    dither_frequency: float = 50e3  # Hz
    demod_time_constant: float = 2e-4  # s, per pole of a two-pole low-pass
    kp: float = DEFAULT_KP
    ki: float = DEFAULT_KI  # 1/s
    kd: float = 0.0  # s
    setpoint: float = 0.0
    phi_e_offset: float = 0.0
    slew_rate: float = 1e3  # rad/s, for offset changes

    def __post_init__(self):
        if self.setpoint not in (0.0, math.pi):
            raise ValidationError("setpoint must be 0 or pi")
        if self.dither_amplitude <= 0 or self.dither_frequency <= 0 or self.demod_time_constant <= 0:
            raise ValidationError("dither and demodulation parameters must be positive")
        if self.slew_rate <= 0:
            raise ValidationError("slew rate must be positive")
        if self.dither_frequency * self.demod_time_constant < 5:
            warnings.warn("dither period is not well separated from the demodulation time constant", stacklevel=2)

    @property
    def open(self) -> bool:
        return self.kp == 0 and self.ki == 0 and self.kd == 0

    def opened(self) -> "LockConfig":
        return replace(self, kp=0.0, ki=0.0, kd=0.0)


def detector_intensity(phi_r, phi_e=0.0):
    """Normalized intensity at the reference detector."""
    return np.sin((np.asarray(phi_r) + phi_e) / 2) ** 2


def lockin_error_analytic(theta, dither_amplitude: float):
    """First-harmonic demodulated error for a sinusoidal dither of the given depth."""
    return special.j1(dither_amplitude) * np.sin(theta)


def lockin_error(intensity, t, dither_frequency: float, demod_time_constant: float):
    """Multiply by ``2 sin(wt)`` and pass through a two-pole low-pass."""
    intensity = np.asarray(intensity, dtype=float)
    t = np.asarray(t, dtype=float)
    mixed = 2 * intensity * np.sin(2 * math.pi * dither_frequency * t)
    out = np.empty_like(mixed)
    y1 = y2 = 0.0
    for k in range(mixed.size):
        a = (t[k] - t[k - 1]) / demod_time_constant if k else 0.0
        y1 += (mixed[k] - y1) * a
        y2 += (y1 - y2) * a
        out[k] = y2
    return out


def wrap(x):
    return (np.asarray(x) + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True, eq=False)
class LockTrace:
    t: np.ndarray
    phi_r: np.ndarray  # interferometer phase, unwrapped
    error: np.ndarray
    actuation: np.ndarray  # PZT phase
    residual: np.ndarray  # wrapped phi_r + phi_e - setpoint, dither excluded
    unwind_times: tuple

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residual**2)))

    @property
    def max_excursion(self) -> float:
        return float(np.max(np.abs(self.residual)))


class LockSimulator:
    """Stepped closed-loop simulation; state persists across ``advance`` calls."""

    def __init__(self, plant: PhasePlant, lock: LockConfig, dt: float, horizon: float):
        if dt > 1 / (10 * lock.dither_frequency) * (1 + 1e-9):
            raise ValidationError("dt must be at most a tenth of the dither period")
        self.plant, self.lock, self.dt = plant, lock, dt
        self._grid, self._temp = plant.temperature_path(horizon + 10 * dt)
        self.horizon = self._grid[-1]
        self.t = 0.0
        self.pzt = 0.0
        self.command = 0.0
        self.integral = 0.0
        self.prev_error = 0.0
        self.y1 = self.y2 = 0.0
        self.phi_e = lock.phi_e_offset
        self.unwinds: list[float] = []
        self._sign = -math.cos(lock.setpoint)

    def drift(self, t: float) -> float:
        return self.plant.phi_r + self.plant.dphi_dT * float(np.interp(t, self._grid, self._temp))

    def advance(self, duration: float, phi_e_target: float | None = None) -> LockTrace:
        n = int(round(duration / self.dt))
        if self.t + n * self.dt > self.horizon:
            raise ValidationError("simulation ran past the prepared noise horizon")
        lk, pl, dt = self.lock, self.plant, self.dt
        target = self.phi_e if phi_e_target is None else phi_e_target
        max_step = lk.slew_rate * dt
        w = 2 * math.pi * lk.dither_frequency
        a_lp = dt / lk.demod_time_constant
        a_pzt = dt / pl.pzt_response_time
        half_range = pl.pzt_range / 2
        closed = not lk.open
        sign = self._sign
        times = self.t + dt * np.arange(1, n + 1)
        drift = pl.phi_r + pl.dphi_dT * np.interp(times, self._grid, self._temp)
        dither = lk.dither_amplitude * np.sin(w * times)
        ref = 2 * np.sin(w * times)
        out_phi = np.empty(n)
        out_err = np.empty(n)
        out_act = np.empty(n)
        out_res = np.empty(n)
        phi_e, pzt, command, integral, prev = self.phi_e, self.pzt, self.command, self.integral, self.prev_error
        y1, y2 = self.y1, self.y2
        sp = lk.setpoint
        for k in range(n):
            if phi_e != target:
                d = target - phi_e
                phi_e = target if abs(d) <= max_step else phi_e + math.copysign(max_step, d)
            pzt += (command - pzt) * a_pzt
            phi = drift[k] + pzt
            s = math.sin((phi + phi_e + dither[k]) / 2)
            y1 += (s * s * ref[k] - y1) * a_lp
            y2 += (y1 - y2) * a_lp
            if closed:
                integral += y2 * dt
                command = sign * (lk.kp * y2 + lk.ki * integral + lk.kd * (y2 - prev) / dt)
                prev = y2
                if abs(command) > half_range:
                    hop = math.copysign(2 * math.pi, command)
                    command -= hop
                    pzt -= hop
                    integral -= sign * hop / lk.ki if lk.ki else 0.0
                    self.unwinds.append(float(times[k]))
                    phi = drift[k] + pzt
            out_phi[k] = phi
            out_err[k] = y2
            out_act[k] = pzt
            out_res[k] = phi + phi_e - sp
        self.phi_e, self.pzt, self.command, self.integral, self.prev_error = phi_e, pzt, command, integral, prev
        self.y1, self.y2 = y1, y2
        self.t = float(times[-1]) if n else self.t
        return LockTrace(times, out_phi, out_err, out_act, wrap(out_res), tuple(self.unwinds))


def run_lock(plant: PhasePlant, lock: LockConfig, duration: float, dt: float = 2e-6) -> LockTrace:
    """Closed-loop run from rest; residual statistics are over the whole run."""
    sim = LockSimulator(plant, lock, dt, duration)
    return sim.advance(duration)


@dataclass(frozen=True)
class SettleReport:
    target: float
    settle_time: float  # s; inf if never settled
    final_error: float  # mean wrapped error over the hold window, rad
    hold_rms: float
    settled: bool
    trace: LockTrace = field(repr=False, compare=False)


def set_phase(
    sim: LockSimulator,
    target: float,
    tolerance: float = math.pi / 100,
    max_time: float | None = None,
    hold: float = 2e-3,
) -> SettleReport:
    """Step the offset so the interferometer phase moves to ``target``.

    Settle time runs from the start of the step to the first sample within
    ``tolerance`` of the target. The point counts as settled when that happens
    inside ``max_time`` and the mean error over the trailing ``hold`` window
    is below ``tolerance``; the RMS over that window is reported alongside.
    """
    max_time = 10 * sim.plant.pzt_response_time if max_time is None else max_time
    trace = sim.advance(max_time + hold, sim.lock.setpoint - target)
    err = wrap(trace.phi_r - target)
    inside = np.nonzero(np.abs(err) <= tolerance)[0]
    settle = float(trace.t[inside[0]] - trace.t[0]) if inside.size else math.inf
    window = trace.t > trace.t[-1] - hold
    hold_rms = float(np.sqrt(np.mean(err[window] ** 2)))
    final = float(np.mean(err[window]))
    ok = settle <= max_time and abs(final) < tolerance
    return SettleReport(target, settle, final, hold_rms, ok, trace)


def fidelity_under_lock(residual) -> float:
    """Mean of ``cos^2(delta/2)`` over the residual phase samples."""
    r = np.asarray(residual, dtype=float)
    if r.size == 0:
        raise ValidationError("empty residual")
    return float(np.mean(np.cos(r / 2) ** 2))


@dataclass(frozen=True, eq=False)
class SweepPoint:
    target: float
    report: SettleReport
    mean_fringe_rate: float


def phase_sweep(
    plant: PhasePlant,
    lock: LockConfig,
    targets,
    dt: float = 2e-6,
    visibility: float = 1.0,
    settle_budget: float | None = None,
    hold: float = 2e-3,
) -> list[SweepPoint]:
    """Locked sweep; each point reports the fringe rate averaged over its hold window."""
    from .polarization import fringe_rate

    settle_budget = 10 * plant.pzt_response_time if settle_budget is None else settle_budget
    targets = [float(x) for x in targets]
    horizon = 5e-3 + len(targets) * (settle_budget + hold) + 10 * dt
    sim = LockSimulator(plant, replace(lock, phi_e_offset=lock.setpoint - targets[0]), dt, horizon)
    sim.advance(5e-3)
    out = []
    for x in targets:
        rep = set_phase(sim, x, max_time=settle_budget, hold=hold)
        window = rep.trace.t >= rep.trace.t[-1] - hold
        rate = float(np.mean(fringe_rate(rep.trace.phi_r[window], visibility)))
        out.append(SweepPoint(x, rep, rate))
    return out

"""Frequency-domain models: SPDC emission, fiber filters, biphoton timing."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import ResolutionError, ValidationError

PUMP_WAVELENGTH = 780.24e-9
PUMP_FREQUENCY = SPEED_OF_LIGHT / PUMP_WAVELENGTH
DEGENERATE_FREQUENCY = PUMP_FREQUENCY / 2
DEGENERATE_WAVELENGTH = 2 * PUMP_WAVELENGTH

FWHM_PER_SIGMA = 2 * math.sqrt(2 * math.log(2))


@lru_cache(maxsize=None)
def sinc2_half_max_argument() -> float:
    """Positive root of ``sin(x)^2 / x^2 = 1/2`` (about 1.39156)."""
    return optimize.brentq(lambda x: (math.sin(x) / x) ** 2 - 0.5, 1.0, 2.0, xtol=1e-15)


# --------------------------------------------------------------------------
# SPDC emission
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpdcConfig:
    """Parameterized type-0 phase-matching model.

    ``tuning_span`` is the wavelength shift of each photon per kelvin of
    detuning below the degeneracy temperature; above it the two branches
    have merged and the degenerate peak dims instead.
    """

    pump_wavelength: float = PUMP_WAVELENGTH
    degeneracy_temperature: float = 387.0
    fwhm_at_degeneracy: float = 4e12
    tuning_span: float = 17.5e-9
    crystal_length_proxy: float = 1.0

    def __post_init__(self):
        if self.fwhm_at_degeneracy <= 0 or self.crystal_length_proxy <= 0:
            raise ValidationError("fwhm and crystal length proxy must be positive")
        if self.pump_wavelength <= 0:
            raise ValidationError("pump wavelength must be positive")

    @property
    def pump_frequency(self) -> float:
        return SPEED_OF_LIGHT / self.pump_wavelength

    @property
    def degenerate_frequency(self) -> float:
        return self.pump_frequency / 2

    @property
    def tuning_rate(self) -> float:
        """Per-photon frequency shift per kelvin (Hz/K)."""
        lam0 = 2 * self.pump_wavelength
        return SPEED_OF_LIGHT * self.tuning_span / lam0**2

    @property
    def mismatch_scale(self) -> float:
        """Conversion from detuning (Hz) to the sinc argument."""
        return self.crystal_length_proxy * 2 * sinc2_half_max_argument() / self.fwhm_at_degeneracy

    def branch_offset(self, temperature: float) -> float:
        """Signed offset of the phase-matching branches from degeneracy (Hz)."""
        return self.tuning_rate * (self.degeneracy_temperature - temperature)

    def branch_centers(self, temperature: float) -> tuple[float, float]:
        """Signal and idler emission peaks; they always sum to the pump frequency."""
        off = max(self.branch_offset(temperature), 0.0)
        nu0 = self.degenerate_frequency
        return nu0 + off, nu0 - off


def spdc_spectral_density(cfg: SpdcConfig, temperature: float, nu):
    """Relative emission density, 1 at the phase-matching peak."""
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise ValidationError("frequencies must be positive")
    x = cfg.mismatch_scale * (np.abs(nu - cfg.degenerate_frequency) - cfg.branch_offset(temperature))
    return np.sinc(x / np.pi) ** 2


# --------------------------------------------------------------------------
# Filters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterSpec:
    shape: str
    center_V: float
    fwhm_V: float
    center_H: float | None = None
    fwhm_H: float | None = None
    temperature_tuning: float = 0.0  # Hz/K
    temperature: float | None = None
    reference_temperature: float = 298.15
    edge_width: float = 0.0  # raised-cosine roll-off, flat-top only

    def __post_init__(self):
        if self.shape not in ("flat_top", "lorentzian"):
            raise ValidationError(f"unknown filter shape {self.shape!r}")
        if self.center_H is None:
            object.__setattr__(self, "center_H", self.center_V)
        if self.fwhm_H is None:
            object.__setattr__(self, "fwhm_H", self.fwhm_V)
        if self.fwhm_V <= 0 or self.fwhm_H <= 0:
            raise ValidationError("filter FWHM must be positive")
        if self.shape == "flat_top" and (self.center_H != self.center_V or self.fwhm_H != self.fwhm_V):
            raise ValidationError("flat-top filters are polarization independent")
        if self.edge_width < 0 or self.edge_width > self.fwhm_V:
            raise ValidationError("edge width must lie in [0, fwhm]")

    def center(self, pol: str) -> float:
        base = {"V": self.center_V, "H": self.center_H}[_pol(pol)]
        if self.temperature is None:
            return base
        return base + self.temperature_tuning * (self.temperature - self.reference_temperature)

    def fwhm(self, pol: str) -> float:
        return {"V": self.fwhm_V, "H": self.fwhm_H}[_pol(pol)]

    def at_temperature(self, temperature: float) -> "FilterSpec":
        return replace(self, temperature=temperature)


def _pol(pol: str) -> str:
    if pol not in ("H", "V"):
        raise ValidationError(f"polarization must be 'H' or 'V', got {pol!r}")
    return pol


def filter_transmission(f: FilterSpec, nu, pol: str = "V"):
    """Power transmission in [0, 1]."""
    d = np.asarray(nu, dtype=float) - f.center(pol)
    w = f.fwhm(pol)
    if f.shape == "lorentzian":
        return 1.0 / (1.0 + (2 * d / w) ** 2)
    a = np.abs(d)
    if f.edge_width == 0:
        return np.where(a <= w / 2, 1.0, 0.0)
    inner = w / 2 - f.edge_width / 2
    ramp = 0.5 * (1 + np.cos(np.pi * np.clip((a - inner) / f.edge_width, 0, 1)))
    return np.where(a <= inner, 1.0, ramp)


def field_response(f: FilterSpec, nu, pol: str = "V"):
    """Complex field transfer function whose modulus squared is the transmission.

    Lorentzian lines carry the single-pole phase of a resonant filter; the
    flat-top passband is taken as phase-flat.
    """
    if f.shape == "lorentzian":
        d = np.asarray(nu, dtype=float) - f.center(pol)
        return 1.0 / (1.0 - 2j * d / f.fwhm(pol))
    return np.sqrt(filter_transmission(f, nu, pol)).astype(complex)


# --------------------------------------------------------------------------
# Biphoton timing
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TemporalCorrelation:
    tau_grid: np.ndarray
    g2_profile: np.ndarray
    fwhm: float

    @property
    def step(self) -> float:
        return float(self.tau_grid[1] - self.tau_grid[0])

    def asymmetry(self) -> float:
        g = self.g2_profile[1:]
        return float(np.max(np.abs(g - g[::-1])))


def fwhm(x, y) -> float:
    """Full width at half maximum of a single-peaked sampled curve.

    Walks outward from the maximum to the first half-max crossings and
    interpolates linearly between the bracketing samples.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i = int(np.argmax(y))
    half = y[i] / 2
    below = np.nonzero(y[i:] < half)[0]
    above_l = np.nonzero(y[: i + 1] < half)[0]
    if below.size == 0 or above_l.size == 0:
        raise ResolutionError("curve does not fall below half maximum inside the grid")
    r = i + int(below[0])
    l = int(above_l[-1])
    xr = x[r - 1] + (half - y[r - 1]) * (x[r] - x[r - 1]) / (y[r] - y[r - 1])
    xl = x[l] + (half - y[l]) * (x[l + 1] - x[l]) / (y[l + 1] - y[l])
    return float(xr - xl)


def _intrinsic_width_estimate(f: FilterSpec, pol: str) -> float:
    # Lorentzian: ln2/(pi w); flat-top: 0.886/w
    w = f.fwhm(pol)
    return (math.log(2) / math.pi if f.shape == "lorentzian" else 0.886) / w


def default_grid(f: FilterSpec, pol: str, jitter_fwhms: Sequence[float] = ()) -> tuple[int, float]:
    """Power-of-two FFT size and time step; the span covers >= 40x the peak width.

    Lorentzian peaks have a cusp at zero delay whose sampled height is set by
    the frequency span, so they get a finer step (width/1000) than flat-tops
    (width/200).
    """
    w_f = _intrinsic_width_estimate(f, pol)
    w_tot = math.hypot(w_f, math.sqrt(sum(j * j for j in jitter_fwhms)))
    step = w_f / (1000 if f.shape == "lorentzian" else 200)
    n = 1 << max(10, math.ceil(math.log2(40 * w_tot / step)))
    return n, step


def biphoton_amplitude(
    f: FilterSpec,
    pol: str = "V",
    n_points: int | None = None,
    step: float | None = None,
    degenerate_frequency: float = DEGENERATE_FREQUENCY,
):
    """Biphoton time-difference amplitude under CW energy anti-correlation.

    Both photons cross the same filter at mirrored detunings ``+/- delta``
    about degeneracy. Returns ``(tau, psi, delta, A)`` where ``psi`` is the
    continuous Fourier transform of ``A(delta) = t(nu0 + delta) t(nu0 - delta)``.
    """
    n0, s0 = default_grid(f, pol)
    n = n_points or n0
    dt = step or s0
    idx = np.arange(n) - n // 2
    tau = idx * dt
    d_delta = 1.0 / (n * dt)
    delta = idx * d_delta
    nu0 = degenerate_frequency
    A = field_response(f, nu0 + delta, pol) * field_response(f, nu0 - delta, pol)
    psi = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(A))) * d_delta
    return tau, psi, delta, A


def biphoton_temporal_correlation(
    f: FilterSpec,
    pol: str = "V",
    jitter_fwhms: Sequence[float] = (),
    n_points: int | None = None,
    step: float | None = None,
    degenerate_frequency: float = DEGENERATE_FREQUENCY,
) -> TemporalCorrelation:
    """Coincidence-peak shape ``|psi(tau)|^2`` convolved with detector jitter.

    Each jitter is a Gaussian given by its FWHM. The profile is normalized
    to unit peak.
    """
    n0, s0 = default_grid(f, pol, jitter_fwhms)
    n = n_points or n0
    dt = step or s0
    tau, psi, _, _ = biphoton_amplitude(f, pol, n, dt, degenerate_frequency)
    g = np.abs(psi) ** 2
    var = sum((j / FWHM_PER_SIGMA) ** 2 for j in jitter_fwhms)
    if var > 0:
        freqs = np.fft.fftfreq(n, dt)
        kernel = np.exp(-2 * np.pi**2 * var * freqs**2)
        # profile is centered at index n//2; the Gaussian kernel is real and even
        g = np.fft.fftshift(np.real(np.fft.ifft(np.fft.fft(np.fft.ifftshift(g)) * kernel)))
        g = np.clip(g, 0.0, None)
    g = g / g.max()
    width = fwhm(tau, g)
    if width < 5 * dt:
        raise ResolutionError(f"FWHM {width:.3g} s spans fewer than 5 grid steps of {dt:.3g} s")
    return TemporalCorrelation(tau, g, width)


def coherence_time(f: FilterSpec, pol: str = "V", **grid) -> float:
    """Zero-jitter FWHM of the biphoton coincidence peak."""
    return biphoton_temporal_correlation(f, pol, (), **grid).fwhm


def pair_vs_single_filter_loss(
    f: FilterSpec, pol: str = "V", degenerate_frequency: float = DEGENERATE_FREQUENCY
) -> float:
    """Extra loss (dB) for energy-correlated pairs relative to single photons.

    ``-10 log10[ int T(nu0+d) T(nu0-d) dd / int T(nu0+d) dd ]``.
    """
    nu0 = degenerate_frequency
    w = f.fwhm(pol)
    # integrate in units of the filter width
    pair = lambda u: filter_transmission(f, nu0 + u * w, pol) * filter_transmission(f, nu0 - u * w, pol)
    single = lambda u: filter_transmission(f, nu0 + u * w, pol)
    if f.shape == "lorentzian":
        lim = dict(a=-np.inf, b=np.inf)
        num = integrate.quad(pair, **lim, epsabs=0, epsrel=1e-10, limit=500)[0]
        den = integrate.quad(single, **lim, epsabs=0, epsrel=1e-10, limit=500)[0]
    else:
        off = (f.center(pol) - nu0) / w
        half = 0.5 + f.edge_width / (2 * w)
        bounds = sorted({-half - abs(off), half + abs(off)})
        pts = sorted({off - half, off + half, -off - half, -off + half, off - 0.5, off + 0.5})
        num = integrate.quad(pair, bounds[0], bounds[-1], points=pts, limit=500)[0]
        den = integrate.quad(single, bounds[0], bounds[-1], points=pts, limit=500)[0]
    if num <= 0:
        return math.inf
    return -10 * math.log10(num / den)


def pump_coherence_time(linewidth: float, convention: str = "pi") -> float:
    """Coherence time of a Lorentzian line: ``1/(pi dnu)`` or ``1/(2 pi dnu)``."""
    if linewidth < 0:
        raise ValidationError("linewidth must be non-negative")
    factor = {"pi": math.pi, "2pi": 2 * math.pi}[convention]
    if linewidth == 0:
        return math.inf
    return 1.0 / (factor * linewidth)


def frequency_to_wavelength(nu):
    return SPEED_OF_LIGHT / np.asarray(nu, dtype=float)


def wavelength_to_frequency(lam):
    return SPEED_OF_LIGHT / np.asarray(lam, dtype=float)

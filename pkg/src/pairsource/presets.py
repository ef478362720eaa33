"""Named hardware presets (filters, detectors) and source constants."""

from __future__ import annotations

from .errors import ConfigError
from .spectral import DEGENERATE_FREQUENCY, FilterSpec

PUMP_LINEWIDTH = 150e3  # Hz, upper bound for the stabilized pump
MZI_DELAY = 76e-9  # s, 18 m of fiber path difference
DETECTOR_JITTER = 230e-12  # s FWHM, per InGaAs detector

FILTERS = {
    "dwdm100ghz": FilterSpec(
        shape="flat_top",
        center_V=DEGENERATE_FREQUENCY,
        fwhm_V=80e9,
    ),
    "psfbg540mhz": FilterSpec(
        shape="lorentzian",
        center_V=DEGENERATE_FREQUENCY,
        fwhm_V=540e6,
        center_H=DEGENERATE_FREQUENCY + 480e6,
        fwhm_H=580e6,
        temperature_tuning=1e9,
    ),
    "psfbg25mhz": FilterSpec(
        shape="lorentzian",
        center_V=DEGENERATE_FREQUENCY,
        fwhm_V=25e6,
        center_H=DEGENERATE_FREQUENCY + 80e6,
        fwhm_H=28e6,
        temperature_tuning=200e6,
    ),
}

# Single-photon propagation loss crystal -> splitter, per filter (dB)
SINGLE_PHOTON_LOSS_DB = {"dwdm100ghz": 4.5, "psfbg540mhz": 5.2, "psfbg25mhz": 5.7}

# efficiency, jitter FWHM (s), dark rate (Hz), dead time (s)
DETECTORS = {
    # 1e-6 dark counts per ns; dead time is not quoted, 10 us is a typical free-running setting
    "ingaas": dict(efficiency=0.20, jitter_fwhm=DETECTOR_JITTER, dark_rate=1e3, dead_time=10e-6),
    # 7 % efficiency, < 10 dark counts/s; jitter and dead time not quoted
    "snspd": dict(efficiency=0.07, jitter_fwhm=100e-12, dark_rate=10.0, dead_time=50e-9),
}


def filter_preset(name: str) -> FilterSpec:
    try:
        return FILTERS[name]
    except KeyError:
        raise ConfigError(f"unknown filter preset {name!r}; choose from {sorted(FILTERS)}") from None


def detector_preset(name: str) -> dict:
    try:
        return dict(DETECTORS[name])
    except KeyError:
        raise ConfigError(f"unknown detector preset {name!r}; choose from {sorted(DETECTORS)}") from None

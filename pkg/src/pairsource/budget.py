"""Brightness, loss-chain and multi-pair arithmetic."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace

from scipy.constants import c, h

from .errors import ValidationError
from .spectral import PUMP_WAVELENGTH


@dataclass(frozen=True)
class LossBudget:
    single_photon_loss_dB: float
    lorentzian_pair_penalty_dB: float = 0.0
    postselection_dB: float = 3.0
    splitting_dB: float = 3.0
    extra_channel_dB: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValidationError(f"{f.name} must be non-negative")

    def items(self) -> list[tuple[str, float]]:
        """Itemized pair-level contributions in chain order."""
        return [
            ("single-photon propagation (x2)", 2 * self.single_photon_loss_dB),
            ("lorentzian pair penalty", self.lorentzian_pair_penalty_dB),
            ("time-bin post-selection", self.postselection_dB),
            ("non-deterministic splitting", self.splitting_dB),
            ("extra channel", self.extra_channel_dB),
        ]


@dataclass(frozen=True)
class BrightnessSpec:
    internal_probability: float = 4.8e-6  # pairs per pump photon
    b_full: float = 2400.0  # pairs / (s mW MHz)
    b_top: float = 3600.0
    full_bandwidth: float = 4e12  # Hz

    def __post_init__(self):
        if not self.b_top >= self.b_full > 0:
            raise ValidationError("need b_top >= b_full > 0")


def total_pair_loss(budget: LossBudget) -> float:
    return sum(v for _, v in budget.items())


def budget_table(budget: LossBudget) -> list[tuple[str, float, float]]:
    """Rows of (item, dB, running total)."""
    rows, running = [], 0.0
    for name, value in budget.items():
        running += value
        rows.append((name, value, running))
    return rows


def available_pair_rate(spec: BrightnessSpec, filter_bw_mhz: float, pump_mw: float, budget: LossBudget) -> float:
    """Pairs/s at the source output; the Lorentzian penalty lives in ``budget``."""
    return spec.b_top * filter_bw_mhz * pump_mw * 10 ** (-total_pair_loss(budget) / 10)


def mean_pairs_per_window(spec: BrightnessSpec, filter_bw_mhz: float, pump_mw: float, window: float) -> float:
    """Mean number of pairs created per detection window, before losses."""
    return spec.b_top * filter_bw_mhz * pump_mw * window


def fidelity_penalty_from_multipair(mu: float, k: float = 1.0) -> float:
    """Relative fidelity drop, linear in the pair number per window (1 % at mu=0.01)."""
    if mu < 0:
        raise ValidationError("mu must be non-negative")
    return k * mu


IMPROVEMENTS = {
    # flag: (field, pair-level dB removed)
    "flat_top_filter": ("lorentzian_pair_penalty_dB", 3.0),
    "spliced_fibers": ("single_photon_loss_dB", 2.0),
    "tapered_waveguide": ("single_photon_loss_dB", 1.0),
    "cavity_splitting": ("splitting_dB", 3.0),
}


def apply_improvements(budget: LossBudget, flags) -> LossBudget:
    """Subtract the pair-loss reduction of each enabled improvement.

    Reductions on the single-photon item are split over both photons. Items
    are floored at zero with a warning.
    """
    values = {f.name: getattr(budget, f.name) for f in fields(budget)}
    for flag in flags:
        if flag not in IMPROVEMENTS:
            raise ValidationError(f"unknown improvement {flag!r}")
        name, pair_db = IMPROVEMENTS[flag]
        cut = pair_db / 2 if name == "single_photon_loss_dB" else pair_db
        if cut > values[name] + 1e-12:
            warnings.warn(f"{flag}: reduction exceeds {name} = {values[name]:g} dB; clamped to 0", stacklevel=2)
        values[name] = max(values[name] - cut, 0.0)
    return replace(budget, **values)


def pump_photon_flux(pump_mw: float, wavelength: float = PUMP_WAVELENGTH) -> float:
    return pump_mw * 1e-3 / (h * c / wavelength)


@dataclass(frozen=True)
class SourceRateReport:
    from_internal_probability: float  # pairs/s
    from_b_full: float  # pairs/s
    ratio: float
    flagged: bool

    def __str__(self):
        flag = "  [FLAG: routes disagree]" if self.flagged else ""
        return (
            f"pairs/s via internal probability = {self.from_internal_probability:.4g}\n"
            f"pairs/s via b_full x bandwidth   = {self.from_b_full:.4g}\n"
            f"ratio = {self.ratio:.3f}{flag}"
        )


def rate_from_internal_probability(
    spec: BrightnessSpec, pump_mw: float, wavelength: float = PUMP_WAVELENGTH, tolerance: float = 0.2
) -> SourceRateReport:
    """Pair rate at the source from the per-photon conversion probability,
    compared with the ``b_full`` brightness route."""
    direct = spec.internal_probability * pump_photon_flux(pump_mw, wavelength)
    via_b = spec.b_full * (spec.full_bandwidth / 1e6) * pump_mw
    ratio = direct / via_b if via_b > 0 else math.nan
    flagged = bool(via_b > 0 and abs(ratio - 1) > tolerance)
    return SourceRateReport(direct, via_b, ratio, flagged)


def preset_budget(filter_name: str) -> LossBudget:
    """Loss chain of a named filter preset; narrowband gratings pay the pair penalty."""
    from .presets import SINGLE_PHOTON_LOSS_DB, filter_preset

    f = filter_preset(filter_name)
    penalty = 3.0 if f.shape == "lorentzian" else 0.0
    return LossBudget(SINGLE_PHOTON_LOSS_DB[filter_name], lorentzian_pair_penalty_dB=penalty)

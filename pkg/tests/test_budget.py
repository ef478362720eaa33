from __future__ import annotations

import math
import warnings

import pytest

from pairsource import budget as bud
from pairsource.errors import ValidationError
from pairsource.presets import FILTERS


@pytest.mark.parametrize("name,total", [("dwdm100ghz", 15.0), ("psfbg540mhz", 19.4), ("psfbg25mhz", 20.4)])
def test_preset_totals(name, total):
    assert bud.total_pair_loss(bud.preset_budget(name)) == pytest.approx(total, abs=1e-12)


@pytest.mark.parametrize("name,expected", [("dwdm100ghz", 9.106e6), ("psfbg540mhz", 2.232e4), ("psfbg25mhz", 820.8)])
def test_available_rates(name, expected):
    # 3600 pairs/(s mW MHz) x bandwidth x 10^(-L/10)
    rate = bud.available_pair_rate(bud.BrightnessSpec(), FILTERS[name].fwhm_V / 1e6, 1.0, bud.preset_budget(name))
    assert rate == pytest.approx(expected, rel=1e-3)


def test_budget_table_running_total():
    rows = bud.budget_table(bud.preset_budget("psfbg25mhz"))
    assert [r[0] for r in rows][0].startswith("single-photon")
    assert rows[-1][2] == pytest.approx(20.4)
    running = 0.0
    for _, db, total in rows:
        running += db
        assert total == pytest.approx(running)


def test_mean_pairs_per_window():
    mu = bud.mean_pairs_per_window(bud.BrightnessSpec(), 25, 7, 15.6e-9)
    assert mu == pytest.approx(3600 * 25 * 7 * 15.6e-9, rel=1e-12)
    assert mu == pytest.approx(0.0098, abs=5e-5)


def test_multipair_penalty_is_linear():
    assert bud.fidelity_penalty_from_multipair(0.01) == pytest.approx(0.01)
    assert bud.fidelity_penalty_from_multipair(0.0) == 0.0
    with pytest.raises(ValidationError):
        bud.fidelity_penalty_from_multipair(-1)


def test_improvements_on_narrow_filter():
    b = bud.apply_improvements(bud.preset_budget("psfbg25mhz"), bud.IMPROVEMENTS)
    # 20.4 - 3 (flat-top) - 2 (splices) - 1 (taper) - 3 (cavity)
    assert bud.total_pair_loss(b) == pytest.approx(11.4)
    assert b.single_photon_loss_dB == pytest.approx(4.2)


def test_improvement_clamps_with_warning():
    with pytest.warns(UserWarning):
        b = bud.apply_improvements(bud.preset_budget("dwdm100ghz"), ["flat_top_filter"])
    assert b.lorentzian_pair_penalty_dB == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bud.apply_improvements(bud.preset_budget("psfbg540mhz"), ["flat_top_filter"])


def test_unknown_improvement():
    with pytest.raises(ValidationError):
        bud.apply_improvements(bud.preset_budget("dwdm100ghz"), ["magic"])


def test_negative_loss_rejected():
    with pytest.raises(ValidationError):
        bud.LossBudget(-1.0)
    with pytest.raises(ValidationError):
        bud.BrightnessSpec(b_full=5000)


def test_internal_probability_route_is_flagged():
    rep = bud.rate_from_internal_probability(bud.BrightnessSpec(), 1.0)
    # 1 mW at 780.24 nm carries 3.93e15 photons/s
    assert bud.pump_photon_flux(1.0) == pytest.approx(3.928e15, rel=1e-3)
    assert rep.from_internal_probability == pytest.approx(1.885e10, rel=1e-3)
    assert rep.from_b_full == pytest.approx(9.6e9)
    assert rep.flagged and rep.ratio == pytest.approx(1.964, abs=1e-3)
    assert "FLAG" in str(rep)


def test_consistent_routes_not_flagged():
    spec = bud.BrightnessSpec(internal_probability=9.6e9 / bud.pump_photon_flux(1.0))
    assert not bud.rate_from_internal_probability(spec, 1.0).flagged

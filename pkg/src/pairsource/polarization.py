"""Exact algebra of two-photon polarization states.

Basis ordering throughout is ``HH, HV, VH, VV`` (signal first, idler second),
i.e. index ``2 * pol_s + pol_i`` with ``H = 0`` and ``V = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .errors import EmptyPostSelectionError, ValidationError

NORM_TOL = 1e-12
PSD_TOL = 1e-10

BASIS = ("HH", "HV", "VH", "VV")
_N_V = np.array([0, 1, 1, 2])  # number of V photons per basis element


def _check_norm(value: float, what: str) -> None:
    if abs(value - 1.0) > NORM_TOL:
        raise ValidationError(f"{what} is not normalized (norm^2 = {value!r})")


@dataclass(frozen=True)
class SinglePhotonPol:
    """``alpha|H> + beta|V>``."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        _check_norm(abs(self.alpha) ** 2 + abs(self.beta) ** 2, "single-photon state")

    @classmethod
    def linear(cls, angle: float) -> "SinglePhotonPol":
        return cls(complex(math.cos(angle)), complex(math.sin(angle)))

    @classmethod
    def H(cls) -> "SinglePhotonPol":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def V(cls) -> "SinglePhotonPol":
        return cls(0j, 1.0 + 0j)

    @classmethod
    def D(cls) -> "SinglePhotonPol":
        return cls.linear(math.pi / 4)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        _check_norm(float(np.vdot(amps, amps).real), "two-photon state")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def __getitem__(self, label: str) -> complex:
        return complex(self.amplitudes[BASIS.index(label)])

    def density(self) -> "TwoPhotonDensity":
        return TwoPhotonDensity(np.outer(self.amplitudes, self.amplitudes.conj()))

    @classmethod
    def product(cls, s: SinglePhotonPol, i: SinglePhotonPol) -> "TwoPhotonState":
        return cls(np.kron(s.vector, i.vector))


@dataclass(frozen=True, eq=False)
class TwoPhotonDensity:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex).reshape(4, 4)
        _check_norm(float(np.trace(rho).real), "density matrix trace")
        if np.max(np.abs(rho - rho.conj().T)) > NORM_TOL:
            raise ValidationError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(rho).min() < -PSD_TOL:
            raise ValidationError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def maximally_mixed(cls) -> "TwoPhotonDensity":
        return cls(np.eye(4) / 4)


State = Union[TwoPhotonState, TwoPhotonDensity]


def as_density(state: State) -> TwoPhotonDensity:
    if isinstance(state, TwoPhotonDensity):
        return state
    return state.density()


def phi_state(phase: float) -> TwoPhotonState:
    """``(|HH> + e^{i phase}|VV>)/sqrt(2)``."""
    return TwoPhotonState(np.array([1, 0, 0, np.exp(1j * phase)]) / math.sqrt(2))


def bell_state(name: str) -> TwoPhotonState:
    s = 1 / math.sqrt(2)
    table = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    try:
        return TwoPhotonState(np.array(table[name.lower()], dtype=complex))
    except KeyError:
        raise ValidationError(f"unknown Bell state {name!r}") from None


def werner(visibility: float, target: TwoPhotonState | None = None) -> TwoPhotonDensity:
    """``V |target><target| + (1 - V) I/4``; target defaults to Phi-."""
    if not 0.0 <= visibility <= 1.0:
        raise ValidationError(f"visibility must lie in [0, 1], got {visibility}")
    target = bell_state("phi-") if target is None else target
    pure = np.outer(target.amplitudes, target.amplitudes.conj())
    return TwoPhotonDensity(visibility * pure + (1 - visibility) * np.eye(4) / 4)


# --------------------------------------------------------------------------
# Interferometric preparation
# --------------------------------------------------------------------------

BinKey = tuple  # (pol_s, bin_s, pol_i, bin_i)


@dataclass(frozen=True, eq=False)
class TimeBinnedTwoPhotonState:
    """Amplitudes over (pol_s, bin_s, pol_i, bin_i) with bins ``e``/``l``."""

    amplitudes: Mapping[BinKey, complex]
    bin_delay: float

    def __post_init__(self):
        for key in self.amplitudes:
            ps, bs, pi, bi = key
            if ps not in "HV" or pi not in "HV" or bs not in "el" or bi not in "el":
                raise ValidationError(f"bad time-bin key {key!r}")
        norm = sum(abs(a) ** 2 for a in self.amplitudes.values())
        _check_norm(norm, "time-binned state")

    def amplitude(self, pol_s, bin_s, pol_i, bin_i) -> complex:
        return complex(self.amplitudes.get((pol_s, bin_s, pol_i, bin_i), 0j))


def mzi_transform(
    signal: SinglePhotonPol,
    idler: SinglePhotonPol,
    phase_half: float,
    bin_delay: float,
) -> TimeBinnedTwoPhotonState:
    """Route both photons through the polarizing unbalanced interferometer.

    H takes the short arm (early bin); V takes the long arm (late bin) and
    picks up ``exp(i * phase_half)``.
    """
    routes = {
        "H": ("e", 1.0 + 0j),
        "V": ("l", complex(np.exp(1j * phase_half))),
    }
    amps = {}
    for ps, a_s in (("H", signal.alpha), ("V", signal.beta)):
        bs, f_s = routes[ps]
        for pi, a_i in (("H", idler.alpha), ("V", idler.beta)):
            bi, f_i = routes[pi]
            amp = a_s * f_s * a_i * f_i
            if amp != 0:
                amps[(ps, bs, pi, bi)] = amp
    return TimeBinnedTwoPhotonState(amps, bin_delay)


def postselect_zero_delay(state: TimeBinnedTwoPhotonState) -> tuple[TwoPhotonState, float]:
    """Keep same-bin coincidences, drop the bin labels, renormalize.

    Returns the post-selected polarization state and the kept probability.
    """
    kept = np.zeros(4, dtype=complex)
    for (ps, bs, pi, bi), amp in state.amplitudes.items():
        if bs == bi:
            kept[2 * (ps == "V") + (pi == "V")] += amp
    survival = float(np.vdot(kept, kept).real)
    if survival <= NORM_TOL:
        raise EmptyPostSelectionError("no amplitude survives zero-delay post-selection")
    return TwoPhotonState(kept / math.sqrt(survival)), survival


@dataclass(frozen=True)
class TimescaleReport:
    passed: bool
    coherence_ratio: float  # tau_L / delta_t
    separation_ratio: float  # delta_t / (tau_p + tau_d)
    margin: float
    failed_condition: str | None = None

    def __str__(self):
        status = "PASS" if self.passed else f"FAIL ({self.failed_condition})"
        return (
            f"timescale ordering: {status}\n"
            f"  tau_L/delta_t = {self.coherence_ratio:.4g} (need >= {self.margin:g})\n"
            f"  delta_t/(tau_p+tau_d) = {self.separation_ratio:.4g} (need >= {self.margin:g})"
        )


def check_timescale_ordering(tau_L, delta_t, tau_p, tau_d, margin=2.0) -> TimescaleReport:
    """Check ``tau_L >> delta_t >> tau_p + tau_d`` with a finite margin."""
    if min(tau_L, delta_t, tau_p + tau_d, margin) <= 0:
        raise ValidationError("all timescales and the margin must be positive")
    coherence_ratio = tau_L / delta_t
    separation_ratio = delta_t / (tau_p + tau_d)
    failed = None
    if coherence_ratio < margin:
        failed = "pump coherence time vs interferometer delay"
    elif separation_ratio < margin:
        failed = "interferometer delay vs photon coherence time + jitter"
    return TimescaleReport(failed is None, coherence_ratio, separation_ratio, margin, failed)


# --------------------------------------------------------------------------
# Analyzers and correlations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyzerSetting:
    """Polarization analyzer: ``t`` is the transmitted port at ``angle``,
    ``r`` the reflected port (``angle + pi/2``)."""

    angle: float
    port: str = "t"

    def __post_init__(self):
        if self.port not in ("t", "r"):
            raise ValidationError(f"port must be 't' or 'r', got {self.port!r}")
        object.__setattr__(self, "angle", float(self.angle) % math.pi)

    @property
    def vector(self) -> np.ndarray:
        theta = self.angle + (math.pi / 2 if self.port == "r" else 0.0)
        return np.array([math.cos(theta), math.sin(theta)])

    def flipped(self) -> "AnalyzerSetting":
        return AnalyzerSetting(self.angle, "r" if self.port == "t" else "t")


def _setting(a) -> AnalyzerSetting:
    return a if isinstance(a, AnalyzerSetting) else AnalyzerSetting(a)


def project(state: State, a, b) -> float:
    """Probability that the signal exits ``a`` and the idler exits ``b``."""
    v = np.kron(_setting(a).vector, _setting(b).vector)
    if isinstance(state, TwoPhotonState):
        return float(abs(v @ state.amplitudes) ** 2)
    return float((v @ state.rho @ v).real)


def port_probabilities(state: State, a, b) -> np.ndarray:
    """Joint port probabilities ordered ``tt, tr, rt, rr``."""
    a, b = _setting(a), _setting(b)
    a = AnalyzerSetting(a.angle)
    b = AnalyzerSetting(b.angle)
    return np.array([
        project(state, a, b),
        project(state, a, b.flipped()),
        project(state, a.flipped(), b),
        project(state, a.flipped(), b.flipped()),
    ])


def correlation_E(state: State, a, b) -> float:
    """``P(++) + P(--) - P(+-) - P(-+)``."""
    p = port_probabilities(state, a, b)
    return float(p[0] + p[3] - p[1] - p[2])


def chsh_S(state: State, a, a2, b, b2) -> float:
    """``|E(a,b) - E(a,b') + E(a',b) + E(a',b')|``."""
    return abs(
        correlation_E(state, a, b)
        - correlation_E(state, a, b2)
        + correlation_E(state, a2, b)
        + correlation_E(state, a2, b2)
    )


# Settings maximizing the combination above for Phi-, whose correlation is
# cos 2(a + b); Bob's angles are mirrored relative to the Phi+ optimum.
CHSH_PHI_MINUS = (0.0, math.pi / 4, -math.pi / 8, -3 * math.pi / 8)
CHSH_PHI_PLUS = (0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)


def fringe_rate(phi, visibility):
    """Normalized two-photon fringe ``(1 - V cos phi) / 2``."""
    if np.any(np.asarray(visibility) < 0) or np.any(np.asarray(visibility) > 1):
        raise ValidationError("visibility must lie in [0, 1]")
    return 0.5 * (1 - visibility * np.cos(phi))


def fringe_probability(phi, visibility):
    """Raw joint probability behind :func:`fringe_rate`.

    Equals ``project(werner(V, phi_state(phi)), 45deg t, 45deg r)``, i.e.
    Alice on D and Bob on A; the orthogonal-port pairing carries the minus
    sign of the fringe law. ``fringe_rate == 2 * fringe_probability``.
    """
    return 0.5 * fringe_rate(phi, visibility)


# --------------------------------------------------------------------------
# Fidelity and noise channels
# --------------------------------------------------------------------------


def fidelity(state: State, target: TwoPhotonState) -> float:
    t = target.amplitudes
    if isinstance(state, TwoPhotonState):
        return float(abs(np.vdot(t, state.amplitudes)) ** 2)
    return float((t.conj() @ state.rho @ t).real)


def dephase_by_phase_jitter(state: State, sigma: float) -> TwoPhotonDensity:
    """Average over a Gaussian jitter of the interferometer phase.

    A jitter ``delta`` of the two-photon phase multiplies each amplitude by
    ``exp(i n_V delta / 2)``, so coherence between components differing by
    ``dn`` V photons decays by ``exp(-dn^2 sigma^2 / 8)``; HH-VV coherence
    decays by ``exp(-sigma^2 / 2)``.
    """
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    rho = as_density(state).rho
    dn = _N_V[:, None] - _N_V[None, :]
    return TwoPhotonDensity(rho * np.exp(-(dn**2) * sigma**2 / 8))


def admix_accidentals(state: State, p_acc: float) -> TwoPhotonDensity:
    """White-noise admixture ``(1 - p) rho + p I/4``."""
    if not 0.0 <= p_acc <= 1.0:
        raise ValidationError("p_acc must lie in [0, 1]")
    rho = as_density(state).rho
    return TwoPhotonDensity((1 - p_acc) * rho + p_acc * np.eye(4) / 4)


def accidental_fraction_for_fidelity_drop(drop: float) -> float:
    """White-noise weight that lowers Bell-state fidelity by ``drop``."""
    return 4.0 * drop / 3.0

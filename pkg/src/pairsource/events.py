"""Seeded Monte Carlo of pair emission, interferometric routing and detection.

All randomness flows from ``SourceRunConfig.rng_seed`` through
:class:`numpy.random.SeedSequence` children, so a run is a pure function of
its configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from . import polarization as pol
from .analysis import BellResult, bell_from_fringes, correlation_from_counts
from .errors import ResourceLimitError, ValidationError
from .presets import MZI_DELAY, detector_preset
from .spectral import FWHM_PER_SIGMA, FilterSpec, TemporalCorrelation, biphoton_temporal_correlation

SIGNAL, IDLER, DARK = 0, 1, 2
TRUTH_NAMES = {SIGNAL: "signal", IDLER: "idler", DARK: "dark"}
ALICE, BOB = "alice", "bob"

# child-stream indices of a point's SeedSequence
_PAIRS, _ROUTE, _TIMING, _POL, _DET_A, _DET_B = range(6)


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float
    jitter_fwhm: float = 0.0
    dark_rate: float = 0.0
    dead_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValidationError("efficiency must lie in [0, 1]")
        if min(self.jitter_fwhm, self.dark_rate, self.dead_time) < 0:
            raise ValidationError("detector times and rates must be non-negative")

    @classmethod
    def preset(cls, name: str, **overrides) -> "DetectorModel":
        params = detector_preset(name)
        params.update(overrides)
        return cls(**params)

    @classmethod
    def ideal(cls) -> "DetectorModel":
        return cls(1.0)


@dataclass(frozen=True)
class SourceRunConfig:
    """One Monte Carlo run.

    ``pair_rate`` counts pairs emitted into the filter band; filter insertion
    loss and any propagation loss belong in ``channel_loss_dB`` (Alice, Bob).
    """

    pump_power: float  # mW
    filter: FilterSpec
    duration: float  # s
    rng_seed: int
    brightness_peak: float = 3600.0  # pairs / (s mW MHz)
    mzi_delay: float = MZI_DELAY
    mzi_phase: float = 0.0
    channel_loss_dB: tuple[float, float] = (0.0, 0.0)
    max_events: int = 20_000_000

    def __post_init__(self):
        if self.rng_seed is None:
            raise ValidationError("rng_seed is mandatory")
        if self.pump_power < 0 or self.duration <= 0 or self.brightness_peak <= 0 or self.mzi_delay < 0:
            raise ValidationError("pump power, duration, brightness and delay must be non-negative")
        if min(self.channel_loss_dB) < 0:
            raise ValidationError("channel losses must be non-negative")
        object.__setattr__(self, "rng_seed", int(self.rng_seed) & 0xFFFFFFFFFFFFFFFF)
        object.__setattr__(self, "channel_loss_dB", tuple(float(x) for x in self.channel_loss_dB))

    @property
    def pair_rate(self) -> float:
        return self.brightness_peak * (self.filter.fwhm_V / 1e6) * self.pump_power

    def seed_sequence(self, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.rng_seed, spawn_key=tuple(key))


def _rngs(seq: np.random.SeedSequence, n: int = 6) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in seq.spawn(n)]


# --------------------------------------------------------------------------
# Emission and routing
# --------------------------------------------------------------------------


def generate_pair_times(cfg: SourceRunConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Sorted creation times of a homogeneous Poisson process over ``[0, duration)``."""
    mean = cfg.pair_rate * cfg.duration
    if mean > cfg.max_events:
        raise ResourceLimitError(f"expected {mean:.3g} pairs exceeds the cap of {cfg.max_events}")
    rng = rng or np.random.default_rng(cfg.rng_seed)
    n = int(rng.poisson(mean)) if mean > 0 else 0
    return np.sort(rng.uniform(0.0, cfg.duration, n))


@dataclass(frozen=True, eq=False)
class MziEmission:
    pair_times: np.ndarray
    bin_s: np.ndarray  # 0 early (H, short arm), 1 late (V, long arm)
    bin_i: np.ndarray
    delay: float
    phase: float

    @property
    def signal_times(self) -> np.ndarray:
        return self.pair_times + self.bin_s * self.delay

    @property
    def idler_times(self) -> np.ndarray:
        return self.pair_times + self.bin_i * self.delay

    def bin_fractions(self) -> dict:
        n = max(len(self.pair_times), 1)
        ee = np.count_nonzero((self.bin_s == 0) & (self.bin_i == 0))
        ll = np.count_nonzero((self.bin_s == 1) & (self.bin_i == 1))
        el = np.count_nonzero((self.bin_s == 0) & (self.bin_i == 1))
        le = np.count_nonzero((self.bin_s == 1) & (self.bin_i == 0))
        return {"ee": ee / n, "el": el / n, "le": le / n, "ll": ll / n}


def route_through_mzi(pair_times, mzi_delay: float, mzi_phase: float, rng: np.random.Generator) -> MziEmission:
    """Send each photon of a diagonal pair independently down the short (H)
    or long (V) arm with probability 1/2; the phase rides along as metadata."""
    t = np.asarray(pair_times, dtype=float)
    bins = rng.integers(0, 2, size=(2, t.size), dtype=np.int8)
    return MziEmission(t, bins[0], bins[1], mzi_delay, mzi_phase)


def sample_biphoton_offsets(corr: TemporalCorrelation, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw signal-minus-idler delays from a tabulated coincidence profile."""
    if n == 0:
        return np.zeros(0)
    cdf = np.cumsum(corr.g2_profile)
    cdf = cdf / cdf[-1]
    return np.interp(rng.random(n), cdf, corr.tau_grid)


# --------------------------------------------------------------------------
# Detection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionRecord:
    timestamp: float
    channel: str
    truth_tag: str


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Photons arriving at one detector (before detection)."""

    times: np.ndarray
    pair_id: np.ndarray
    truth: np.ndarray

    @classmethod
    def empty(cls) -> "PhotonStream":
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8))


@dataclass(frozen=True, eq=False)
class DetectionStream:
    channel: str
    timestamps: np.ndarray
    pair_id: np.ndarray  # -1 for dark counts
    truth: np.ndarray

    def __len__(self):
        return len(self.timestamps)

    def records(self) -> Iterator[DetectionRecord]:
        for t, tag in zip(self.timestamps, self.truth):
            yield DetectionRecord(float(t), self.channel, TRUTH_NAMES[int(tag)])

    def count(self, tag: int) -> int:
        return int(np.count_nonzero(self.truth == tag))


def apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Indices surviving a non-paralyzable dead time; ``times`` must be sorted."""
    if dead_time <= 0 or times.size < 2 or np.min(np.diff(times)) >= dead_time:
        return np.arange(times.size)
    keep = []
    last = -math.inf
    for i, t in enumerate(times.tolist()):
        if t - last >= dead_time:
            keep.append(i)
            last = t
    return np.asarray(keep, dtype=np.int64)


def detect(
    stream: PhotonStream,
    det: DetectorModel,
    channel: str,
    duration: float,
    rng: np.random.Generator,
    loss_dB: float = 0.0,
) -> DetectionStream:
    """Thin by efficiency and loss, add Gaussian jitter and Poisson dark
    counts, then remove hits inside the dead time of an earlier hit."""
    p = det.efficiency * 10 ** (-loss_dB / 10)
    kept = rng.random(stream.times.size) < p
    times = stream.times[kept]
    if det.jitter_fwhm > 0:
        times = times + rng.normal(0.0, det.jitter_fwhm / FWHM_PER_SIGMA, times.size)
    n_dark = int(rng.poisson(det.dark_rate * duration)) if det.dark_rate > 0 else 0
    times = np.concatenate([times, rng.uniform(0.0, duration, n_dark)])
    pair_id = np.concatenate([stream.pair_id[kept], np.full(n_dark, -1, dtype=np.int64)])
    truth = np.concatenate([stream.truth[kept], np.full(n_dark, DARK, dtype=np.int8)])
    order = np.argsort(times, kind="stable")
    times, pair_id, truth = times[order], pair_id[order], truth[order]
    idx = apply_dead_time(times, det.dead_time)
    return DetectionStream(channel, times[idx], pair_id[idx], truth[idx])


# --------------------------------------------------------------------------
# Coincidences
# --------------------------------------------------------------------------


def coincidence_pairs(ta: np.ndarray, tb: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """All index pairs with ``lo <= ta[i] - tb[j] <= hi`` (both inputs sorted)."""
    start = np.searchsorted(tb, ta - hi, side="left")
    stop = np.searchsorted(tb, ta - lo, side="right")
    n = stop - start
    total = int(n.sum())
    ia = np.repeat(np.arange(ta.size), n)
    offsets = np.cumsum(n) - n
    ib = start[ia] + (np.arange(total) - offsets[ia])
    return ia, ib


def _true_pair(a: DetectionStream, b: DetectionStream, ia, ib) -> np.ndarray:
    return (a.pair_id[ia] == b.pair_id[ib]) & (a.pair_id[ia] >= 0)


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    window_span: float
    accidental_counts: np.ndarray | None = None

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])


def histogram_coincidences(alice: DetectionStream, bob: DetectionStream, bin_width: float, span: float) -> CoincidenceHistogram:
    """Histogram of ``t_A - t_B`` over ``[-span, span]`` with a bin centered on zero."""
    if bin_width <= 0 or span <= 0:
        raise ValidationError("bin width and span must be positive")
    half_bins = math.ceil(span / bin_width - 0.5)
    n_bins = 2 * half_bins + 1
    edge = n_bins * bin_width / 2
    edges = (np.arange(n_bins + 1) - n_bins / 2) * bin_width
    ia, ib = coincidence_pairs(alice.timestamps, bob.timestamps, -edge, edge)
    diffs = alice.timestamps[ia] - bob.timestamps[ib]
    counts, _ = np.histogram(diffs, bins=edges)
    acc, _ = np.histogram(diffs[~_true_pair(alice, bob, ia, ib)], bins=edges)
    return CoincidenceHistogram(edges, counts.astype(np.int64), float(edge), acc.astype(np.int64))


@dataclass(frozen=True)
class PeakStats:
    center: float  # nominal
    position: float  # histogram mode
    raw_area: int
    area: float  # floor-subtracted
    sigma_area: float
    fwhm: float


@dataclass(frozen=True)
class PeakReport:
    peaks: tuple[PeakStats, PeakStats, PeakStats]  # -delay, 0, +delay
    floor_per_bin: float
    central_to_side: float
    sigma_ratio: float

    def __str__(self):
        lines = [f"peak {p.center * 1e9:+.1f} ns: position={p.position * 1e9:+.3f} ns area={p.area:.1f} "
                 f"(raw {p.raw_area}) fwhm={p.fwhm * 1e12:.1f} ps" for p in self.peaks]
        lines.append(f"accidental floor = {self.floor_per_bin:.4g} counts/bin")
        lines.append(f"central/side area ratio = {self.central_to_side:.4f} +/- {self.sigma_ratio:.4f}")
        return "\n".join(lines)


def peak_report(hist: CoincidenceHistogram, delay: float) -> PeakReport:
    """Positions, floor-subtracted areas and widths of the three time-bin peaks.

    Each peak owns the bins within ``delay/2`` of its nominal center. The
    accidental floor is the mean count in bins beyond ``1.5 delay``, when the
    span reaches that far.
    """
    from .spectral import fwhm as _fwhm

    x = hist.bin_centers
    far = np.abs(x) > 1.5 * delay if delay > 0 else np.zeros_like(x, dtype=bool)
    n_far = int(far.sum())
    floor = float(hist.counts[far].mean()) if n_far else 0.0
    far_total = float(hist.counts[far].sum()) if n_far else 0.0
    stats = []
    for c in (-delay, 0.0, delay):
        sel = np.abs(x - c) < delay / 2 if delay > 0 else np.ones_like(x, dtype=bool)
        xs, ys = x[sel], hist.counts[sel]
        raw = int(ys.sum())
        nb = int(sel.sum())
        area = raw - floor * nb
        var = raw + (nb / n_far) ** 2 * far_total if n_far else raw
        if raw == 0:
            stats.append(PeakStats(c, math.nan, 0, 0.0, 0.0, math.nan))
            continue
        try:
            width = _fwhm(xs, ys - floor)
        except Exception:
            width = math.nan
        stats.append(PeakStats(c, float(xs[np.argmax(ys)]), raw, float(area), math.sqrt(var), width))
    side = stats[0].area + stats[2].area
    if side <= 0 or stats[1].area <= 0:
        return PeakReport(tuple(stats), floor, math.nan, math.nan)
    ratio = stats[1].area / (side / 2)
    rel2 = (stats[1].sigma_area / stats[1].area) ** 2 + (stats[0].sigma_area**2 + stats[2].sigma_area**2) / side**2
    return PeakReport(tuple(stats), floor, ratio, ratio * math.sqrt(rel2))


# --------------------------------------------------------------------------
# Full-chain runs
# --------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _profile_for(f: FilterSpec) -> TemporalCorrelation:
    return biphoton_temporal_correlation(f, "V")


def _intrinsic_profile(cfg: SourceRunConfig) -> TemporalCorrelation:
    return _profile_for(cfg.filter)


@dataclass(frozen=True, eq=False)
class HistogramRun:
    histogram: CoincidenceHistogram
    alice: DetectionStream
    bob: DetectionStream
    emission: MziEmission
    report: PeakReport


def simulate_histogram(
    cfg: SourceRunConfig,
    det_a: DetectorModel,
    det_b: DetectorModel,
    bin_width: float,
    span: float | None = None,
) -> HistogramRun:
    """Diagonal pairs -> interferometer -> 50/50 splitter -> two detectors."""
    rngs = _rngs(cfg.seed_sequence(0))
    t0 = generate_pair_times(cfg, rngs[_PAIRS])
    em = route_through_mzi(t0, cfg.mzi_delay, cfg.mzi_phase, rngs[_ROUTE])
    tau = sample_biphoton_offsets(_intrinsic_profile(cfg), t0.size, rngs[_TIMING])
    # splitter: each photon independently to Alice (0) or Bob (1)
    side = rngs[_POL].integers(0, 2, size=(2, t0.size), dtype=np.int8)
    streams = _assemble_streams(em.signal_times + tau, em.idler_times, side, np.ones((2, t0.size), dtype=bool))
    a = detect(streams[0], det_a, ALICE, cfg.duration, rngs[_DET_A], cfg.channel_loss_dB[0])
    b = detect(streams[1], det_b, BOB, cfg.duration, rngs[_DET_B], cfg.channel_loss_dB[1])
    span = span if span is not None else 2 * cfg.mzi_delay if cfg.mzi_delay > 0 else 50 * bin_width
    hist = histogram_coincidences(a, b, bin_width, span)
    return HistogramRun(hist, a, b, em, peak_report(hist, cfg.mzi_delay))


def _assemble_streams(t_sig, t_idl, side, reaches) -> tuple[PhotonStream, PhotonStream]:
    """Split photons into per-detector streams. ``side[k]`` is 0 for Alice;
    ``reaches[k]`` marks photons leaving the analyzer port that has the detector."""
    n = t_sig.size
    ids = np.arange(n, dtype=np.int64)
    out = []
    for s in (0, 1):
        ms = (side[0] == s) & reaches[0]
        mi = (side[1] == s) & reaches[1]
        times = np.concatenate([t_sig[ms], t_idl[mi]])
        pair_id = np.concatenate([ids[ms], ids[mi]])
        truth = np.concatenate([np.full(ms.sum(), SIGNAL, np.int8), np.full(mi.sum(), IDLER, np.int8)])
        order = np.argsort(times, kind="stable")
        out.append(PhotonStream(times[order], pair_id[order], truth[order]))
    return out[0], out[1]


@dataclass(frozen=True)
class PointCounts:
    coincidences: int
    accidentals: int
    singles_a: int
    singles_b: int
    pairs: int


def simulate_point(
    cfg: SourceRunConfig,
    det_a: DetectorModel,
    det_b: DetectorModel,
    state: pol.State,
    setting_a: pol.AnalyzerSetting,
    setting_b: pol.AnalyzerSetting,
    window: float,
    key: tuple = (),
) -> PointCounts:
    """Coincidences at one analyzer setting, with truth-tagged accidentals.

    Same-bin pairs carry the post-selected state; cross-bin pairs are a
    definite H/V product. Port outcomes are sampled jointly from the
    projection probabilities; each analyzer has its detector on
    ``setting.port``. Coincidences are counted in ``|t_A - t_B| <= window/2``.
    """
    rho = pol.as_density(state)
    rngs = _rngs(cfg.seed_sequence(1, *key))
    t0 = generate_pair_times(cfg, rngs[_PAIRS])
    n = t0.size
    em = route_through_mzi(t0, cfg.mzi_delay, cfg.mzi_phase, rngs[_ROUTE])
    tau = sample_biphoton_offsets(_intrinsic_profile(cfg), n, rngs[_TIMING])
    r = rngs[_POL]
    side = r.integers(0, 2, size=(2, n), dtype=np.int8)

    # polarization class: 0 same bin (rho), 1 signal H / idler V, 2 signal V / idler H
    klass = np.where(em.bin_s == em.bin_i, 0, np.where(em.bin_s == 0, 1, 2))
    states = (rho, pol.TwoPhotonState(np.array([0, 1, 0, 0])), pol.TwoPhotonState(np.array([0, 0, 1, 0])))
    settings = (setting_a, setting_b)
    cum = np.empty((3, 2, 2, 4))
    for k, st in enumerate(states):
        for ss in (0, 1):
            for si in (0, 1):
                p = pol.port_probabilities(st, settings[ss], settings[si])
                cum[k, ss, si] = np.cumsum(p / p.sum())
    table = cum[klass, side[0], side[1]]
    outcome = (r.random(n)[:, None] > table[:, :3]).sum(axis=1)  # 0 tt, 1 tr, 2 rt, 3 rr
    port_s = np.where(outcome >= 2, "r", "t")
    port_i = np.where(outcome % 2 == 1, "r", "t")
    det_port = np.array([setting_a.port, setting_b.port])
    reaches = np.vstack([port_s == det_port[side[0]], port_i == det_port[side[1]]])

    streams = _assemble_streams(em.signal_times + tau, em.idler_times, side, reaches)
    a = detect(streams[0], det_a, ALICE, cfg.duration, rngs[_DET_A], cfg.channel_loss_dB[0])
    b = detect(streams[1], det_b, BOB, cfg.duration, rngs[_DET_B], cfg.channel_loss_dB[1])
    ia, ib = coincidence_pairs(a.timestamps, b.timestamps, -window / 2, window / 2)
    true = _true_pair(a, b, ia, ib)
    return PointCounts(int(ia.size), int(np.count_nonzero(~true)), len(a), len(b), n)


@dataclass(frozen=True, eq=False)
class FringeScan:
    x: np.ndarray
    counts: np.ndarray
    accidentals: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.counts, 1))

    @property
    def net(self) -> np.ndarray:
        return self.counts - self.accidentals


def fringe_scan_mc(
    cfg: SourceRunConfig,
    analyzer_a,
    analyzer_b_angles: Sequence[float],
    state: pol.State,
    coincidence_window: float,
    det_a: DetectorModel | None = None,
    det_b: DetectorModel | None = None,
    port_b: str = "t",
) -> FringeScan:
    """Coincidence counts versus Bob's analyzer angle (polarization angle)."""
    det_a = det_a or DetectorModel.ideal()
    det_b = det_b or DetectorModel.ideal()
    a = pol._setting(analyzer_a)
    counts, acc = [], []
    for i, angle in enumerate(analyzer_b_angles):
        pc = simulate_point(cfg, det_a, det_b, state, a, pol.AnalyzerSetting(angle, port_b), coincidence_window, (i,))
        counts.append(pc.coincidences)
        acc.append(pc.accidentals)
    return FringeScan(np.asarray(analyzer_b_angles, dtype=float), np.array(counts), np.array(acc))


def phase_scan_mc(
    cfg: SourceRunConfig,
    phases: Sequence[float],
    visibility: float,
    coincidence_window: float,
    det_a: DetectorModel | None = None,
    det_b: DetectorModel | None = None,
) -> FringeScan:
    """Coincidences versus the interferometer phase with Alice on D and Bob on A.

    The state at phase ``phi`` is ``werner(V, phi_state(phi))``; this port
    pairing yields counts proportional to ``(1 - V cos phi) / 2``.
    """
    det_a = det_a or DetectorModel.ideal()
    det_b = det_b or DetectorModel.ideal()
    a = pol.AnalyzerSetting(math.pi / 4, "t")
    b = pol.AnalyzerSetting(math.pi / 4, "r")
    counts, acc = [], []
    for i, phi in enumerate(phases):
        state = pol.werner(visibility, pol.phi_state(phi))
        pc = simulate_point(replace(cfg, mzi_phase=float(phi)), det_a, det_b, state, a, b, coincidence_window, (i,))
        counts.append(pc.coincidences)
        acc.append(pc.accidentals)
    return FringeScan(np.asarray(phases, dtype=float), np.array(counts), np.array(acc))


@dataclass(frozen=True)
class ChshRun:
    result: BellResult
    correlations: tuple[float, float, float, float]
    sigmas: tuple[float, float, float, float]
    counts: tuple  # per setting pair: (tt, tr, rt, rr)


def chsh_mc(
    cfg: SourceRunConfig,
    state: pol.State,
    settings: Sequence[float],
    coincidence_window: float,
    det_a: DetectorModel | None = None,
    det_b: DetectorModel | None = None,
    subtract_accidentals: bool = False,
) -> ChshRun:
    """Estimate S from 16 single-detector runs: four setting pairs, each with
    the four port combinations obtained by rotating an analyzer by 90 deg."""
    det_a = det_a or DetectorModel.ideal()
    det_b = det_b or DetectorModel.ideal()
    a, a2, b, b2 = settings
    es, ss, all_counts = [], [], []
    for i, (x, y) in enumerate(((a, b), (a, b2), (a2, b), (a2, b2))):
        n = []
        for j, (pa, pb) in enumerate((("t", "t"), ("t", "r"), ("r", "t"), ("r", "r"))):
            pc = simulate_point(cfg, det_a, det_b, state, pol.AnalyzerSetting(x, pa),
                                pol.AnalyzerSetting(y, pb), coincidence_window, (100 + i, j))
            n.append(pc.coincidences - (pc.accidentals if subtract_accidentals else 0))
        e, s = correlation_from_counts(*n)
        es.append(e)
        ss.append(s)
        all_counts.append(tuple(n))
    return ChshRun(bell_from_fringes(es, ss), tuple(es), tuple(ss), tuple(all_counts))

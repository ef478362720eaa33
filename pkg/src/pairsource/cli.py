"""Command-line entry point: ``pairsource <subcommand> [--config FILE] [flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import budget as bud
from . import polarization as pol
from .analysis import fit_sinusoid, visibility_net
from .errors import ConfigError, NumericalError, ValidationError
from .events import DetectorModel, SourceRunConfig, chsh_mc, fringe_scan_mc, phase_scan_mc, simulate_histogram
from .phaselock import LockConfig, LockSimulator, PhasePlant, fidelity_under_lock, phase_sweep, set_phase
from .presets import DETECTORS, FILTERS, MZI_DELAY, PUMP_LINEWIDTH, filter_preset
from .spectral import (
    DEGENERATE_WAVELENGTH,
    FilterSpec,
    SpdcConfig,
    coherence_time,
    fwhm,
    pump_coherence_time,
    spdc_spectral_density,
    wavelength_to_frequency,
)
from .textio import read_table, write_table

OUTPUT_DIR_ENV = "PAIRSOURCE_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class RunConfig:
    scenario: str = "default"
    filter: str = "psfbg540mhz"
    detector: str = "ingaas"
    pump_power: float = 0.05  # mW
    phase: float = math.pi
    visibility: float = 1.0
    seed: int = 1
    output_dir: str | None = None
    duration: float = 1.0  # s
    coincidence_window: float = 2e-9  # s
    bin_width: float = 0.1e-9  # s
    channel_loss_dB: list = field(default_factory=lambda: [0.0, 0.0])
    max_events: int = 20_000_000
    custom_filter: dict | None = None
    custom_detector: dict | None = None
    # fringe
    sweep: str = "phase"
    points: int = 16
    alice_angle: float = math.pi / 4  # polarization angle, rad
    phases_from: str | None = None
    # spectrum
    temperature: float = 387.0  # K
    temperatures: list | None = None
    span_nm: float = 100.0
    spectrum_points: int = 2001
    # budget
    improvements: list = field(default_factory=list)
    # lock
    lock_duration: float = 1.0
    lock_dt: float = 2e-6
    lock_gains: list | None = None  # [kp, ki, kd]; null keeps the tuned defaults
    lock_decimate: int = 50
    sweep_points: int = 0

    def validate(self) -> "RunConfig":
        if self.filter not in (*FILTERS, "custom"):
            raise ConfigError(f"unknown filter preset {self.filter!r}")
        if self.detector not in (*DETECTORS, "custom"):
            raise ConfigError(f"unknown detector preset {self.detector!r}")
        if self.filter == "custom" and not self.custom_filter:
            raise ConfigError("filter 'custom' needs a custom_filter mapping")
        if self.detector == "custom" and not self.custom_detector:
            raise ConfigError("detector 'custom' needs a custom_detector mapping")
        if self.sweep not in ("phase", "hwp"):
            raise ConfigError("sweep must be 'phase' or 'hwp'")
        if len(self.channel_loss_dB) != 2:
            raise ConfigError("channel_loss_dB needs one value per arm")
        if self.pump_power < 0 or self.duration <= 0:
            raise ConfigError("pump_power must be >= 0 and duration > 0")
        if not 0 <= self.visibility <= 1:
            raise ConfigError("visibility must lie in [0, 1]")
        for flag in self.improvements:
            if flag not in bud.IMPROVEMENTS:
                raise ConfigError(f"unknown improvement {flag!r}")
        return self

    def filter_spec(self) -> FilterSpec:
        if self.filter == "custom":
            try:
                return FilterSpec(**self.custom_filter)
            except TypeError as exc:
                raise ConfigError(f"custom_filter: {exc}") from None
        return filter_preset(self.filter)

    def detector_model(self) -> DetectorModel:
        if self.detector == "custom":
            try:
                return DetectorModel(**self.custom_detector)
            except TypeError as exc:
                raise ConfigError(f"custom_detector: {exc}") from None
        return DetectorModel.preset(self.detector)

    def source(self, **overrides) -> SourceRunConfig:
        return SourceRunConfig(
            pump_power=self.pump_power,
            filter=self.filter_spec(),
            duration=self.duration,
            rng_seed=self.seed,
            mzi_phase=self.phase,
            channel_loss_dB=tuple(self.channel_loss_dB),
            max_events=self.max_events,
            **overrides,
        )

    def hashable(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        return d


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """File values first, then non-None flag overrides."""
    data = {}
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_effective_config(cfg: RunConfig, out: Path, command: str) -> Path:
    path = out / f"{command}_effective_config.yaml"
    path.write_text(yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=True))
    return path


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    spdc = SpdcConfig()
    lam0 = DEGENERATE_WAVELENGTH * 1e9
    if cfg.span_nm == 0 or cfg.spectrum_points == 1:
        lam_nm = np.array([lam0])
    else:
        lam_nm = np.linspace(lam0 - cfg.span_nm / 2, lam0 + cfg.span_nm / 2, cfg.spectrum_points)
    nu = wavelength_to_frequency(lam_nm * 1e-9)
    rows, cols = [], ["wavelength_nm", "density"]
    if cfg.temperatures:
        cols = ["temperature_K"] + cols
        for T in cfg.temperatures:
            rows += [(T, l, d) for l, d in zip(lam_nm, spdc_spectral_density(spdc, T, nu))]
    else:
        dens = spdc_spectral_density(spdc, cfg.temperature, nu)
        rows = list(zip(lam_nm, dens))
        print(f"peak wavelength = {lam_nm[np.argmax(dens)]:.3f} nm at T = {cfg.temperature:g} K")
        if lam_nm.size > 2:
            try:
                print(f"fwhm = {fwhm(lam_nm, dens):.3f} nm")
            except NumericalError:
                print("fwhm not resolved on this grid")
    path = write_table(out / "spectrum.tsv", cols, rows, cfg.hashable(), cfg.seed)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_histogram(cfg: RunConfig, out: Path) -> int:
    det = cfg.detector_model()
    run = simulate_histogram(cfg.source(), det, det, cfg.bin_width)
    h = run.histogram
    path = write_table(out / "histogram.tsv", ["bin_center_s", "counts"], zip(h.bin_centers, h.counts),
                       cfg.hashable(), cfg.seed)
    if h.counts.sum() == 0:
        print("no coincidences recorded")
    else:
        print(run.report)
    print(f"wrote {path}")
    return EXIT_OK


def _fringe_data(cfg: RunConfig):
    src = cfg.source()
    det = cfg.detector_model()
    if cfg.sweep == "phase":
        if cfg.phases_from:
            cols, data = read_table(cfg.phases_from)
            key = "achieved_phase_rad" if "achieved_phase_rad" in cols else cols[0]
            x = data[:, cols.index(key)]
        else:
            x = np.linspace(0.0, 2 * math.pi, cfg.points, endpoint=False)
        scan = phase_scan_mc(src, x, cfg.visibility, cfg.coincidence_window, det, det)
        return scan, 1.0, "phase_rad"
    # half-wave plate at theta rotates the analyzed polarization by 2 theta
    x = np.linspace(0.0, math.pi / 2, cfg.points, endpoint=False)
    state = pol.werner(cfg.visibility, pol.phi_state(cfg.phase))
    scan = fringe_scan_mc(src, cfg.alice_angle, 2 * x, state, cfg.coincidence_window, det, det)
    return dataclasses.replace(scan, x=x), 4.0, "hwp_angle_rad"


def cmd_fringe(cfg: RunConfig, out: Path) -> int:
    scan, freq, label = _fringe_data(cfg)
    path = write_table(out / "fringe.tsv", ["angle_rad", "counts", "acc_counts"],
                       zip(scan.x, scan.counts, scan.accidentals), cfg.hashable(), cfg.seed,
                       comments=[f"angle_rad is the {label}"])
    raw = fit_sinusoid(scan.x, scan.counts, frequency=freq)
    net = visibility_net(scan.x, scan.counts, scan.accidentals, frequency=freq)
    print(raw.report("raw_"))
    print(net.report("net_"))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bell(cfg: RunConfig, out: Path) -> int:
    det = cfg.detector_model()
    state = pol.werner(cfg.visibility, pol.phi_state(cfg.phase))
    run = chsh_mc(cfg.source(), state, pol.CHSH_PHI_MINUS, cfg.coincidence_window, det, det)
    rows = [(i, *c, e, s) for i, (c, e, s) in enumerate(zip(run.counts, run.correlations, run.sigmas))]
    path = write_table(out / "bell.tsv", ["setting_index", "n_tt", "n_tr", "n_rt", "n_rr", "E", "sigma_E"],
                       rows, cfg.hashable(), cfg.seed)
    print(run.result.report())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_budget(cfg: RunConfig, out: Path) -> int:
    spec = bud.BrightnessSpec()
    rows = []
    for name, f in FILTERS.items():
        b = bud.apply_improvements(bud.preset_budget(name), cfg.improvements)
        bw = f.fwhm_V / 1e6
        print(f"[{name}]")
        for item, db, running in bud.budget_table(b):
            print(f"  {item:<32s} {db:6.2f} dB   total {running:6.2f} dB")
            rows.append((name, item, db, running))
        rate = bud.available_pair_rate(spec, bw, 1.0, b)
        mu = bud.mean_pairs_per_window(spec, bw, cfg.pump_power, cfg.coincidence_window)
        print(f"  available pair rate = {rate:.4g} /(s mW)")
        print(f"  mu at {cfg.pump_power:g} mW, {cfg.coincidence_window:g} s window = {mu:.4g}"
              f" (fidelity penalty {bud.fidelity_penalty_from_multipair(mu):.3%})")
    print(bud.rate_from_internal_probability(spec, 1.0))
    path = write_table(out / "budget.tsv", ["filter", "item", "loss_dB", "running_total_dB"], rows,
                       cfg.hashable(), cfg.seed)
    print(f"wrote {path}")
    return EXIT_OK


def _lock_config(cfg: RunConfig) -> LockConfig:
    if cfg.lock_gains is None:
        return LockConfig()
    kp, ki, kd = (list(cfg.lock_gains) + [0.0, 0.0, 0.0])[:3]
    return LockConfig(kp=kp, ki=ki, kd=kd)


def cmd_lock(cfg: RunConfig, out: Path) -> int:
    plant = PhasePlant(seed=cfg.seed)
    lock = _lock_config(cfg)
    sim = LockSimulator(plant, lock, cfg.lock_dt, cfg.lock_duration + 12e-3)
    trace = sim.advance(cfg.lock_duration)
    k = max(cfg.lock_decimate, 1)
    path = write_table(out / "lock.tsv", ["t_s", "phi_r_rad", "error", "actuation_rad"],
                       zip(trace.t[::k], trace.phi_r[::k], trace.error[::k], trace.actuation[::k]),
                       cfg.hashable(), cfg.seed)
    print(f"residual_rms_rad={trace.rms:.6g}")
    print(f"max_excursion_rad={trace.max_excursion:.6g}")
    print(f"unwind_events={len(trace.unwind_times)}")
    print(f"fidelity={fidelity_under_lock(trace.residual):.6g}")
    if not lock.open:
        rep = set_phase(sim, cfg.phase)
        print(f"settle_time_s={rep.settle_time:.6g}")
        print(f"settled={rep.settled}")
    print(f"wrote {path}")
    if cfg.sweep_points > 0:
        targets = np.linspace(-math.pi, 2.5 * math.pi, cfg.sweep_points)
        pts = phase_sweep(plant, lock, targets, dt=cfg.lock_dt)
        rows = [(p.target, p.target + p.report.final_error, p.mean_fringe_rate, p.report.settle_time) for p in pts]
        path = write_table(out / "lock_sweep.tsv",
                           ["target_rad", "achieved_phase_rad", "mean_fringe_rate", "settle_time_s"],
                           rows, cfg.hashable(), cfg.seed)
        print(f"sweep settled {sum(p.report.settled for p in pts)}/{len(pts)}")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: Path) -> int:
    f = cfg.filter_spec()
    det = cfg.detector_model()
    report = pol.check_timescale_ordering(
        pump_coherence_time(PUMP_LINEWIDTH), MZI_DELAY, coherence_time(f), det.jitter_fwhm
    )
    print(report)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "histogram": cmd_histogram,
    "fringe": cmd_fringe,
    "bell": cmd_bell,
    "budget": cmd_budget,
    "lock": cmd_lock,
    "check": cmd_check,
}

_IMPROVEMENT_FLAGS = {
    "flat_top": "flat_top_filter",
    "splice": "spliced_fibers",
    "taper": "tapered_waveguide",
    "cavity": "cavity_splitting",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--filter", choices=[*FILTERS, "custom"])
    common.add_argument("--detector", choices=[*DETECTORS, "custom"])
    common.add_argument("--pump-power", dest="pump_power", type=float, help="mW")
    common.add_argument("--phase", type=float, help="rad")
    common.add_argument("--visibility", type=float)
    common.add_argument("--duration", type=float, help="s")
    common.add_argument("--window", dest="coincidence_window", type=float, help="coincidence window, s")

    parser = argparse.ArgumentParser(prog="pairsource", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("spectrum", parents=[common])
    p.add_argument("--temperature", type=float, help="K")
    p.add_argument("--temperatures", type=float, nargs="+")
    p.add_argument("--span-nm", dest="span_nm", type=float)
    p.add_argument("--spectrum-points", dest="spectrum_points", type=int)
    p = sub.add_parser("histogram", parents=[common])
    p.add_argument("--bin-width", dest="bin_width", type=float, help="s")
    p = sub.add_parser("fringe", parents=[common])
    p.add_argument("--sweep", choices=["phase", "hwp"])
    p.add_argument("--points", type=int)
    p.add_argument("--alice-angle", dest="alice_angle", type=float, help="polarization angle, rad")
    p.add_argument("--phases-from", dest="phases_from", help="lock_sweep.tsv from the lock command")
    sub.add_parser("bell", parents=[common])
    p = sub.add_parser("budget", parents=[common])
    for flag in _IMPROVEMENT_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=f"imp_{flag}", action="store_true")
    p.add_argument("--all-improvements", action="store_true")
    p = sub.add_parser("lock", parents=[common])
    p.add_argument("--lock-duration", dest="lock_duration", type=float)
    p.add_argument("--dt", dest="lock_dt", type=float)
    p.add_argument("--gains", dest="lock_gains", type=float, nargs=3, metavar=("KP", "KI", "KD"))
    p.add_argument("--decimate", dest="lock_decimate", type=int)
    p.add_argument("--sweep-points", dest="sweep_points", type=int)
    sub.add_parser("check", parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    if command == "budget":
        chosen = [v for k, v in _IMPROVEMENT_FLAGS.items() if args.pop(f"imp_{k}")]
        if args.pop("all_improvements"):
            chosen = list(_IMPROVEMENT_FLAGS.values())
        args["improvements"] = chosen or None
    try:
        cfg = load_config(config_path, args)
        out = output_dir(cfg)
        write_effective_config(cfg, out, command)
        return COMMANDS[command](cfg, out)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

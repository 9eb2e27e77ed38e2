"""Run orchestration: simulate to tag files, analyze them, summarize.

A simulated run writes one ``chN.ttag`` click file per configured
detector channel plus ``manifest.txt`` (a key = value file carrying the
run provenance and a full config echo that re-parses to the original
configuration).  Analysis reads a run directory back, builds the
histograms and normalized correlations, evaluates the Cauchy-Schwarz
parameters, and writes plot-ready CSV plus key = value reports.

Everything is single-threaded and seeded, so a rerun with the same
configuration and seed reproduces every output file byte for byte.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    MODE_COHERENT,
    MODE_SRS,
    AnalysisParams,
    ExperimentConfig,
    config_from_flat,
    parse_flat_text,
)
from .correlator import (
    CoincidenceHistogram,
    CorrelationResult,
    HistogramSpec,
    cross_histogram,
    g2_auto,
    g2_from_histogram,
    snr,
    triple_histogram,
)
from .detectors import GATED, detect_free, detect_gated
from .errors import AnalysisError, ConfigError, FormatError
from .nonclassicality import CS_CSV_HEADER, CsReport, cs_three, cs_two
from .rng import child_seed
from .sources import generate_srs, spdc_coherent, spdc_convert
from .timetags import TagStream, read_tags, write_tags

MANIFEST_NAME = "manifest.txt"
MANIFEST_FORMAT = "tripletsim-run-v1"

RESULTS_CSV_HEADER = (
    "name,value,sigma,delay_ps,second_delay_ps,peak_counts,"
    "accidental_per_bin,baseline_per_bin"
)

SWEEP_CSV_HEADER = (
    "param,value,mode,s2_singles_hz,pairs_detected_hz,pair_g2,pair_g2_sigma,"
    "pair_peak_delay_ps,coincidence_window_ps,auto_g2_ch2,auto_g2_ch2_sigma,"
    "cs_two_value,cs_three_value"
)

SWEEPABLE = {
    "two_photon_detuning_mhz": "source.two_photon_detuning_mhz",
    "cell_temperature_c": "source.cell_temperature_c",
    "coherent_pump_rate_hz": "spdc.coherent_pump_rate_hz",
    "pump1_detuning_ghz": "source.pump1_detuning_ghz",
}


@dataclass
class SimulationResult:
    config: ExperimentConfig
    duration_ps: int
    seed: int
    emissions: dict[int, TagStream]
    clicks: dict[int, TagStream]


def run_simulation(config: ExperimentConfig, duration_ps=None, seed=None) -> SimulationResult:
    """Generate emissions and detector clicks for one run, in memory."""
    config.validate()
    duration = int(duration_ps) if duration_ps is not None else config.run.duration_ps
    run_seed = int(seed) if seed is not None else config.run.seed
    src = config.effective_source()

    emissions: dict[int, TagStream] = {}
    if duration > 0:
        if config.mode == MODE_SRS:
            s1, s2 = generate_srs(src, duration, run_seed)
            emissions[0], emissions[1] = s1, s2
            s3, s4 = spdc_convert(s2, config.spdc, run_seed)
            emissions[2], emissions[3] = s3, s4
        else:
            s3, s4 = spdc_coherent(config.spdc, duration, run_seed)
            emissions[2], emissions[3] = s3, s4

    clicks: dict[int, TagStream] = {}
    free = [ch for ch, d in config.detectors.items() if d.params.mode != GATED]
    gated = [ch for ch, d in config.detectors.items() if d.params.mode == GATED]
    for ch in sorted(free):
        det = config.detectors[ch]
        stream = emissions.get(ch, TagStream.empty(duration))
        if duration > 0:
            clicks[ch] = detect_free(
                stream, det.params, child_seed(run_seed, f"detector.ch{ch}"), channel=ch
            )
        else:
            clicks[ch] = TagStream.empty(0)
    for ch in sorted(gated):
        det = config.detectors[ch]
        stream = emissions.get(ch, TagStream.empty(duration))
        if duration > 0:
            clicks[ch] = detect_gated(
                stream,
                clicks[det.trigger_channel],
                det.params,
                det.gate,
                child_seed(run_seed, f"detector.ch{ch}"),
                channel=ch,
            )
        else:
            clicks[ch] = TagStream.empty(0)
    return SimulationResult(config, duration, run_seed, emissions, clicks)


def simulate_to_dir(config: ExperimentConfig, out_dir) -> Path:
    """Run the simulation and persist click files plus the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = run_simulation(config)
    lines = [
        f"format = {MANIFEST_FORMAT}",
        f"package_version = {__version__}",
        f"seed = {sim.seed}",
        f"duration_ps = {sim.duration_ps}",
        f"channels = {','.join(str(c) for c in sorted(sim.clicks))}",
    ]
    for ch in sorted(sim.clicks):
        stream = sim.clicks[ch]
        name = f"ch{ch}.ttag"
        write_tags(stream, out / name)
        lines.append(f"channel.{ch}.file = {name}")
        lines.append(f"channel.{ch}.count = {len(stream)}")
        lines.append(f"channel.{ch}.mode = {config.detectors[ch].params.mode}")
        if config.detectors[ch].trigger_channel is not None:
            lines.append(
                f"channel.{ch}.trigger_channel = {config.detectors[ch].trigger_channel}"
            )
    for key, value in config.to_flat().items():
        lines.append(f"config.{key} = {value}")
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n", newline="\n")
    return out / MANIFEST_NAME


def read_manifest(path) -> tuple[dict[str, str], ExperimentConfig]:
    """Parse a manifest back into its raw keys and echoed configuration."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing manifest {path}")
    flat = parse_flat_text(path.read_text())
    if flat.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{path}: unknown manifest format {flat.get('format')!r}")
    config_keys = {
        k.removeprefix("config."): v for k, v in flat.items() if k.startswith("config.")
    }
    return flat, config_from_flat(config_keys)


@dataclass
class AnalysisOutputs:
    duration_ps: int
    counts: dict[int, int] = field(default_factory=dict)
    histograms: dict[str, CoincidenceHistogram] = field(default_factory=dict)
    correlations: dict[str, CorrelationResult] = field(default_factory=dict)
    snrs: dict[str, float] = field(default_factory=dict)
    cs_reports: dict[str, CsReport] = field(default_factory=dict)
    coincidence_window_ps: float | None = None
    notes: list[str] = field(default_factory=list)

    def rate_hz(self, channel: int) -> float:
        if self.duration_ps == 0:
            return 0.0
        return self.counts.get(channel, 0) / (self.duration_ps * 1e-12)


def _pair_analysis(h: CoincidenceHistogram, a: AnalysisParams):
    """Locate the histogram peak and build the peak/background bin sets."""
    spec = h.spec
    counts = h.counts
    peak_idx = int(np.argmax(counts))
    start = int(spec.edges()[peak_idx])
    peak = spec.bins_overlapping(start, start + a.pair_peak_window_ps)
    centers = spec.centers()
    background = np.setdiff1d(
        np.nonzero(np.abs(centers - int(centers[peak_idx])) > a.background_guard_ps)[0],
        peak,
    )
    return peak, background


def _mean_excess_ps(h: CoincidenceHistogram, peak, accidental: float) -> float:
    """Count-weighted mean delay above the peak-window start, floor-subtracted;
    tracks the exponential coincidence-window width."""
    centers = h.spec.centers()[peak].astype(np.float64)
    weights = h.counts[peak].astype(np.float64) - accidental
    weights = np.clip(weights, 0.0, None)
    total = weights.sum()
    if total <= 0:
        return 0.0
    start = h.spec.edges()[int(peak[0])]
    return float(((centers - start) * weights).sum() / total)


def analyze_clicks(
    clicks: dict[int, TagStream], config: ExperimentConfig, seed: int | None = None
) -> AnalysisOutputs:
    """All histograms, correlations, SNRs, and verdicts for one run."""
    a = config.analysis
    durations = {s.duration_ps for s in clicks.values()}
    if len(durations) > 1:
        raise ConfigError(f"click streams disagree on duration: {sorted(durations)}")
    duration = durations.pop() if durations else 0
    run_seed = int(seed) if seed is not None else config.run.seed
    out = AnalysisOutputs(duration_ps=duration)
    out.counts = {ch: len(s) for ch, s in clicks.items()}
    if duration == 0:
        out.notes.append("empty run: no analysis performed")
        return out

    # per-channel autos through the virtual splitter; with a dead-timed
    # detector the window sits just past the dead time
    for ch in sorted(clicks):
        stream = clicks[ch]
        det = config.detectors.get(ch)
        dead = det.params.dead_time_ps if det is not None else 0.0
        exclusion = int(dead + a.auto_bin_width_ps) if dead > 0 else 0
        spec = HistogramSpec(
            bin_width_ps=a.auto_bin_width_ps,
            range_min_ps=-a.auto_range_ps,
            range_max_ps=a.auto_range_ps,
            channel_a=ch,
            channel_b=ch,
        )
        try:
            result, hist = g2_auto(
                stream,
                spec,
                child_seed(run_seed, f"analysis.auto.ch{ch}"),
                exclusion_ps=exclusion,
                peak_window_ps=a.auto_peak_window_ps,
            )
        except AnalysisError as err:
            out.notes.append(f"auto ch{ch} skipped: {err}")
            continue
        out.correlations[f"g2_auto_ch{ch}"] = result
        out.histograms[f"hist_auto_ch{ch}"] = hist

    pair_spec = dict(
        bin_width_ps=a.bin_width_ps, range_min_ps=a.range_min_ps, range_max_ps=a.range_max_ps
    )
    for ca, cb, tag in ((0, 1, "s1s2"), (2, 3, "s3s4")):
        if ca not in clicks or cb not in clicks:
            continue
        spec = HistogramSpec(channel_a=ca, channel_b=cb, **pair_spec)
        h = cross_histogram(clicks[ca], clicks[cb], spec)
        out.histograms[f"hist_ch{ca}_ch{cb}"] = h
        if not h.counts.any():
            out.notes.append(f"pair {tag} skipped: empty histogram")
            continue
        peak, background = _pair_analysis(h, a)
        try:
            result = g2_from_histogram(h, peak, background)
        except AnalysisError as err:
            out.notes.append(f"pair {tag} skipped: {err}")
            continue
        out.correlations[f"g2_{tag}"] = result
        out.snrs[f"snr_{tag}"] = snr(h, peak, background)
        if tag == "s1s2":
            out.coincidence_window_ps = _mean_excess_ps(h, peak, result.accidental_estimate)

    g11 = out.correlations.get("g2_auto_ch0")
    g22 = out.correlations.get("g2_auto_ch1")
    g12 = out.correlations.get("g2_s1s2")
    if g11 and g22 and g12:
        try:
            out.cs_reports["two_photon"] = cs_two(g12, g11, g22, k=a.k_sigma)
        except AnalysisError as err:
            out.notes.append(f"cs_two skipped: {err}")

    det2 = config.detectors.get(2)
    gated_triple = (
        det2 is not None and det2.params.mode == GATED and {0, 2, 3} <= set(clicks)
    )
    if gated_triple:
        try:
            h3, g3 = triple_histogram(
                clicks[0],
                clicks[2],
                clicks[3],
                window_ps=a.triple_window_ps,
                bin_width_ps=a.bin_width_ps,
                range_ps=(a.range_min_ps, a.range_max_ps),
                peak_window_ps=a.pair_peak_window_ps,
                background_guard_ps=a.background_guard_ps,
            )
        except AnalysisError as err:
            out.notes.append(f"triple skipped: {err}")
        else:
            out.histograms["hist_triple"] = h3
            out.correlations["g3_s1s3s4"] = g3
            peak, background = _pair_analysis(h3, a)
            out.snrs["snr_triple"] = snr(h3, peak, background)
            if g11 is not None:
                try:
                    out.cs_reports["three_photon"] = cs_three(
                        g3,
                        g11,
                        (a.s3_auto_value, a.s3_auto_sigma),
                        (a.s4_auto_value, a.s4_auto_sigma),
                        k=a.k_sigma,
                    )
                except AnalysisError as err:
                    out.notes.append(f"cs_three skipped: {err}")
    return out


def results_text(out: AnalysisOutputs) -> str:
    lines = [f"duration_ps = {out.duration_ps}"]
    for ch in sorted(out.counts):
        lines.append(f"channel.{ch}.clicks = {out.counts[ch]}")
        lines.append(f"channel.{ch}.rate_hz = {out.rate_hz(ch)!r}")
    for name in sorted(out.correlations):
        r = out.correlations[name]
        lines.append(f"{name}.value = {r.value!r}")
        lines.append(f"{name}.sigma = {r.stat_sigma!r}")
        lines.append(f"{name}.delay_ps = {r.delay_ps}")
        lines.append(f"{name}.peak_counts = {r.peak_counts!r}")
        lines.append(f"{name}.accidental_per_bin = {r.accidental_estimate!r}")
        if r.baseline_estimate is not None:
            lines.append(f"{name}.baseline_per_bin = {r.baseline_estimate!r}")
    for name in sorted(out.snrs):
        lines.append(f"{name} = {out.snrs[name]!r}")
    if out.coincidence_window_ps is not None:
        lines.append(f"coincidence_window_ps = {out.coincidence_window_ps!r}")
    for kind in sorted(out.cs_reports):
        rep = out.cs_reports[kind]
        lines.append(f"cs.{kind}.value = {rep.value!r}")
        lines.append(f"cs.{kind}.sigma = {rep.sigma!r}")
        lines.append(f"cs.{kind}.k_sigma = {rep.k_sigma!r}")
        lines.append(f"cs.{kind}.violated = {'yes' if rep.violated else 'no'}")
    for note in out.notes:
        lines.append(f"note = {note}")
    return "\n".join(lines) + "\n"


def write_analysis(out: AnalysisOutputs, out_dir) -> None:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    for name, hist in out.histograms.items():
        hist.to_csv(directory / f"{name}.csv")
    (directory / "results.txt").write_text(results_text(out), newline="\n")

    rows = [RESULTS_CSV_HEADER]
    for name in sorted(out.correlations):
        r = out.correlations[name]
        rows.append(
            ",".join(
                [
                    name,
                    repr(r.value),
                    repr(r.stat_sigma),
                    str(r.delay_ps),
                    "" if r.second_delay_ps is None else str(r.second_delay_ps),
                    repr(r.peak_counts),
                    repr(r.accidental_estimate),
                    "" if r.baseline_estimate is None else repr(r.baseline_estimate),
                ]
            )
        )
    (directory / "results.csv").write_text("\n".join(rows) + "\n", newline="\n")

    cs_rows = [CS_CSV_HEADER]
    for kind in sorted(out.cs_reports):
        cs_rows.append(out.cs_reports[kind].to_csv_row())
    (directory / "cs.csv").write_text("\n".join(cs_rows) + "\n", newline="\n")


def load_run_dir(tags_dir) -> tuple[dict[int, TagStream], ExperimentConfig, int]:
    """Read chN.ttag files plus (if present) the manifest's config echo."""
    directory = Path(tags_dir)
    if not directory.is_dir():
        raise ConfigError(f"{directory} is not a directory")
    manifest_path = directory / MANIFEST_NAME
    if manifest_path.exists():
        flat, config = read_manifest(manifest_path)
        seed = int(flat.get("seed", "0"))
    else:
        config = ExperimentConfig()
        seed = 0
    clicks: dict[int, TagStream] = {}
    for path in sorted(directory.glob("ch*.ttag")):
        m = re.fullmatch(r"ch(\d+)\.ttag", path.name)
        if not m:
            continue
        try:
            clicks[int(m.group(1))] = read_tags(path)
        except FormatError as err:
            raise FormatError(f"{path.name}: {err}", byte_offset=err.byte_offset) from err
    if not clicks:
        raise ConfigError(f"no ch*.ttag files found in {directory}")
    durations = {s.duration_ps for s in clicks.values()}
    if len(durations) > 1:
        raise ConfigError(
            f"tag files disagree on duration_ps: {sorted(durations)}"
        )
    return clicks, config, seed


def analyze_dir(tags_dir, out_dir, *, bin_width_ps=None, range_ps=None, overrides=()) -> AnalysisOutputs:
    from .config import apply_overrides

    clicks, config, seed = load_run_dir(tags_dir)
    if bin_width_ps is not None:
        config.analysis.bin_width_ps = int(bin_width_ps)
    if range_ps is not None:
        config.analysis.range_min_ps, config.analysis.range_max_ps = map(int, range_ps)
    if overrides:
        apply_overrides(config, overrides)
    config.analysis.validate()
    out = analyze_clicks(clicks, config, seed)
    write_analysis(out, out_dir)
    return out


class MissingArtifacts(FormatError):
    def __init__(self, run_dir, missing):
        super().__init__(f"{run_dir}: missing artifacts: {', '.join(missing)}")
        self.missing = list(missing)


def render_report(run_dir) -> str:
    """One-page run summary; raises MissingArtifacts when inputs are absent."""
    directory = Path(run_dir)
    missing = []
    if not (directory / MANIFEST_NAME).exists():
        missing.append("manifest")
    if not (directory / "results.txt").exists():
        missing.append("results")
    if not list(directory.glob("hist_*.csv")):
        missing.append("histograms")
    if missing:
        raise MissingArtifacts(directory, missing)

    flat, config = read_manifest(directory / MANIFEST_NAME)
    results = parse_flat_text((directory / "results.txt").read_text())
    from .budget import expected_rates

    budget = expected_rates(config)
    duration_s = int(flat["duration_ps"]) * 1e-12

    lines = [
        "run summary",
        "===========",
        f"directory: {directory}",
        f"seed: {flat.get('seed')}   duration: {duration_s:.3f} s",
        "",
        "channel rates (observed | budget expected | pull):",
    ]
    for ch in sorted(int(c) for c in flat.get("channels", "").split(",") if c):
        n = int(flat.get(f"channel.{ch}.count", "0"))
        expected_rate = getattr(budget, f"s{ch + 1}_singles_hz", 0.0)
        expected = expected_rate * duration_s
        if expected > 0:
            pull = (n - expected) / math.sqrt(expected)
            lines.append(
                f"  ch{ch}: {n} clicks | {expected:.1f} | pull {pull:+.2f}"
            )
        else:
            lines.append(f"  ch{ch}: {n} clicks | n/a | n/a")
    lines.append("")
    lines.append("correlations:")
    for key in sorted(results):
        if key.endswith(".value") and not key.startswith("cs."):
            name = key.removesuffix(".value")
            sigma = results.get(f"{name}.sigma", "0")
            lines.append(f"  {name} = {float(results[key]):.4g} +- {float(sigma):.2g}")
    for key in sorted(results):
        if key.startswith("snr"):
            lines.append(f"  {key} = {float(results[key]):.4g}")
    if "coincidence_window_ps" in results:
        lines.append(
            f"  coincidence_window_ps = {float(results['coincidence_window_ps']):.4g}"
        )
    lines.append("")
    lines.append("nonclassicality:")
    for kind in ("two_photon", "three_photon"):
        vkey = f"cs.{kind}.value"
        if vkey in results:
            label = "R" if kind == "two_photon" else "R3"
            k = float(results[f"cs.{kind}.k_sigma"])
            verdict = results[f"cs.{kind}.violated"]
            lines.append(
                f"  {label} = {float(results[vkey]):.4g} "
                f"+- {float(results[f'cs.{kind}.sigma']):.2g} | "
                f"{label} > 1 at k={k:g}: {verdict}"
            )
    return "\n".join(lines) + "\n"


def run_sweep(config: ExperimentConfig, param: str, grid, out_csv, *, fast=False) -> list[str]:
    """One simulate+analyze (or budget) row per grid value; returns CSV lines."""
    from .budget import expected_rates
    from .config import apply_overrides

    if param not in SWEEPABLE:
        raise ConfigError(
            f"parameter {param!r} is not sweepable; choose one of "
            f"{', '.join(sorted(SWEEPABLE))}"
        )
    key = SWEEPABLE[param]
    rows = [SWEEP_CSV_HEADER]
    for value in grid:
        cfg = config_from_flat(config.to_flat())
        apply_overrides(cfg, [f"{key}={value!r}"])
        if fast:
            budget = expected_rates(cfg)
            tau = cfg.effective_source().correlation_time_ps
            rows.append(
                ",".join(
                    [
                        param,
                        repr(float(value)),
                        "budget",
                        repr(budget.s2_singles_hz),
                        repr(budget.pairs_detected_hz),
                        "", "", "",
                        repr(tau),
                        "", "", "", "",
                    ]
                )
            )
            continue
        sim = run_simulation(cfg)
        out = analyze_clicks(sim.clicks, cfg, sim.seed)
        pair = out.correlations.get("g2_s1s2")
        auto2 = out.correlations.get("g2_auto_ch2")
        cs2 = out.cs_reports.get("two_photon")
        cs3 = out.cs_reports.get("three_photon")
        rows.append(
            ",".join(
                [
                    param,
                    repr(float(value)),
                    "mc",
                    repr(out.rate_hz(1)) if 1 in out.counts else "",
                    "",
                    repr(pair.value) if pair else "",
                    repr(pair.stat_sigma) if pair else "",
                    str(pair.delay_ps) if pair else "",
                    repr(out.coincidence_window_ps)
                    if out.coincidence_window_ps is not None
                    else "",
                    repr(auto2.value) if auto2 else "",
                    repr(auto2.stat_sigma) if auto2 else "",
                    repr(cs2.value) if cs2 else "",
                    repr(cs3.value) if cs3 else "",
                ]
            )
        )
    if out_csv is not None:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        Path(out_csv).write_text("\n".join(rows) + "\n", newline="\n")
    return rows

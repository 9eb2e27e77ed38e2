"""Experiment configuration: a flat, sectioned key = value text format.

Lines look like ``source.pair_rate_hz = 4.0e5``; ``#`` starts a comment
and blank lines are ignored.  Units ride in the key names (``_ps``,
``_hz``, ``_mw``, ...), values are plain numbers, booleans
(true/false), or bare words, so any tooling can parse the files.
Detector arms are keyed by channel: ``detector.ch2.efficiency = 0.1``.

Command-line overrides use the same ``section.key=value`` paths and win
over file values.  ``load_config`` accepts a filesystem path or the
name of one of the bundled configs in ``tripletsim/configs``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .detectors import FREE_RUNNING, GATED, DetectorParams, GateParams
from .errors import ConfigError
from .sources import (
    SourceParams,
    SpdcParams,
    correlation_time_model,
    fwm_delay_model,
    pair_rate_model,
)

MODE_SRS = "srs"
MODE_COHERENT = "coherent"


@dataclass
class RunParams:
    duration_ps: int = 0
    seed: int = 0


@dataclass
class AnalysisParams:
    """Histogram geometry and peak/background policies for analysis."""

    bin_width_ps: int = 2_000
    range_min_ps: int = -200_000
    range_max_ps: int = 200_000
    pair_peak_window_ps: int = 50_000
    background_guard_ps: int = 100_000
    auto_bin_width_ps: int = 2_000
    auto_range_ps: int = 3_000_000
    auto_peak_window_ps: int = 100_000
    triple_window_ps: int = 2_000
    k_sigma: float = 3.0
    # auto-correlations of the down-converted arms come from a separate
    # coherent-pump calibration, so analysis takes them as estimates
    s3_auto_value: float = 1.0
    s3_auto_sigma: float = 0.05
    s4_auto_value: float = 1.0
    s4_auto_sigma: float = 0.05

    def validate(self):
        if self.bin_width_ps <= 0 or self.auto_bin_width_ps <= 0:
            raise ConfigError("bin widths must be > 0")
        if self.range_max_ps <= self.range_min_ps:
            raise ConfigError("analysis.range_max_ps must exceed range_min_ps")
        if (self.range_max_ps - self.range_min_ps) % self.bin_width_ps:
            raise ConfigError("analysis bin width must divide the range")
        if self.auto_range_ps <= 0 or self.auto_range_ps % self.auto_bin_width_ps:
            raise ConfigError("auto bin width must divide auto_range_ps")
        if self.pair_peak_window_ps <= 0 or self.auto_peak_window_ps <= 0:
            raise ConfigError("peak windows must be > 0")
        if self.triple_window_ps <= 0:
            raise ConfigError("triple_window_ps must be > 0")
        if self.k_sigma <= 0:
            raise ConfigError("k_sigma must be > 0")


@dataclass
class BudgetParams:
    """Analytic-budget knobs.

    ``herald_factor`` is the probability of catching the signal-1
    partner of a detected waveguide pair; left unset it is derived from
    the configured signal-1 arm.  ``waveguide_coupling`` only feeds the
    after-coupling annotation of the generated pair rate.
    """

    herald_factor: float | None = None
    waveguide_coupling: float = 0.88
    target_snr: float = 8.0

    def validate(self):
        if self.herald_factor is not None and not 0 < self.herald_factor <= 1:
            raise ConfigError("budget.herald_factor must be in (0, 1]")
        if not 0 < self.waveguide_coupling <= 1:
            raise ConfigError("budget.waveguide_coupling must be in (0, 1]")
        if self.target_snr <= 0:
            raise ConfigError("budget.target_snr must be > 0")


@dataclass
class DetectorChannel:
    """Detector arm attached to one emission channel."""

    params: DetectorParams = field(default_factory=DetectorParams)
    gate: GateParams | None = None
    trigger_channel: int | None = None

    def validate(self, channel: int):
        self.params.validate()
        if self.params.mode == GATED:
            if self.gate is None or self.trigger_channel is None:
                raise ConfigError(
                    f"detector.ch{channel}: gated mode needs gate settings and a trigger_channel"
                )
            self.gate.validate()
        elif self.trigger_channel is not None:
            raise ConfigError(
                f"detector.ch{channel}: trigger_channel only applies to gated mode"
            )


@dataclass
class ExperimentConfig:
    """Full parameterization of one simulated run."""

    run: RunParams = field(default_factory=RunParams)
    source: SourceParams = field(default_factory=SourceParams)
    spdc: SpdcParams = field(default_factory=SpdcParams)
    detectors: dict[int, DetectorChannel] = field(default_factory=dict)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    budget: BudgetParams = field(default_factory=BudgetParams)
    mode: str = MODE_SRS
    pair_rate_from_model: bool = False
    correlation_time_from_model: bool = False
    fwm_slope_ps_per_ghz: float = 0.0
    fwm_reference_ghz: float = 0.8

    def validate(self):
        if self.mode not in (MODE_SRS, MODE_COHERENT):
            raise ConfigError(f"source.mode must be srs or coherent, got {self.mode!r}")
        if self.run.duration_ps < 0:
            raise ConfigError("run.duration_ps must be >= 0")
        self.source.validate()
        self.spdc.validate()
        self.analysis.validate()
        self.budget.validate()
        for ch, det in self.detectors.items():
            det.validate(ch)
            if det.trigger_channel is not None:
                trig = self.detectors.get(det.trigger_channel)
                if trig is None:
                    raise ConfigError(
                        f"detector.ch{ch}: trigger channel {det.trigger_channel} has no detector"
                    )
                if trig.params.mode != FREE_RUNNING:
                    raise ConfigError(
                        f"detector.ch{ch}: trigger channel must be free_running"
                    )
        return self

    def effective_source(self) -> SourceParams:
        """Source parameters with the table models folded in."""
        src = self.source
        if self.pair_rate_from_model:
            src = replace(
                src,
                pair_rate_hz=pair_rate_model(
                    src.two_photon_detuning_mhz,
                    src.pump1_power_mw,
                    collection_efficiency=src.s2_collection_efficiency,
                    detector_efficiency=self._s2_detector_efficiency_for_model(),
                ),
            )
        if self.correlation_time_from_model:
            src = replace(
                src, correlation_time_ps=correlation_time_model(src.cell_temperature_c)
            )
        shift = fwm_delay_model(
            src.pump1_detuning_ghz,
            slope_ps_per_ghz=self.fwm_slope_ps_per_ghz,
            reference_detuning_ghz=self.fwm_reference_ghz,
        )
        if shift:
            src = replace(src, pair_delay_offset_ps=src.pair_delay_offset_ps + shift)
        return src

    def _s2_detector_efficiency_for_model(self) -> float:
        det = self.detectors.get(1)
        if det is None or det.params.efficiency <= 0:
            return 0.10
        # the arm efficiency already folds collection in, divide it back out
        return det.params.efficiency / self.source.s2_collection_efficiency

    def to_flat(self) -> dict[str, str]:
        """Flatten to ordered config keys; parse(format(c)) == c."""
        def _f(v):
            return repr(float(v))

        out: dict[str, str] = {}
        out["run.duration_ps"] = str(self.run.duration_ps)
        out["run.seed"] = str(self.run.seed)
        out["source.mode"] = self.mode
        s = self.source
        out["source.pair_rate_hz"] = _f(s.pair_rate_hz)
        out["source.pair_rate_from_model"] = _fmt_bool(self.pair_rate_from_model)
        out["source.two_photon_detuning_mhz"] = _f(s.two_photon_detuning_mhz)
        out["source.pump1_detuning_ghz"] = _f(s.pump1_detuning_ghz)
        out["source.pump1_power_mw"] = _f(s.pump1_power_mw)
        out["source.pump2_power_mw"] = _f(s.pump2_power_mw)
        out["source.cell_temperature_c"] = _f(s.cell_temperature_c)
        out["source.correlation_time_ps"] = _f(s.correlation_time_ps)
        out["source.correlation_time_from_model"] = _fmt_bool(self.correlation_time_from_model)
        out["source.pair_delay_offset_ps"] = _f(s.pair_delay_offset_ps)
        out["source.fwm_slope_ps_per_ghz"] = _f(self.fwm_slope_ps_per_ghz)
        out["source.fwm_reference_ghz"] = _f(self.fwm_reference_ghz)
        out["source.noise_rate_s1_hz"] = _f(s.noise_rate_s1_hz)
        out["source.noise_rate_s2_hz"] = _f(s.noise_rate_s2_hz)
        out["source.s2_collection_efficiency"] = _f(s.s2_collection_efficiency)
        p = self.spdc
        out["spdc.conversion_efficiency"] = _f(p.conversion_efficiency)
        out["spdc.pair_jitter_ps"] = _f(p.pair_jitter_ps)
        out["spdc.coherent_pump_rate_hz"] = _f(p.coherent_pump_rate_hz)
        out["spdc.mode_count"] = str(p.mode_count)
        out["spdc.coherence_time_ps"] = _f(p.coherence_time_ps)
        for ch in sorted(self.detectors):
            det = self.detectors[ch]
            pre = f"detector.ch{ch}"
            out[f"{pre}.mode"] = det.params.mode
            out[f"{pre}.efficiency"] = _f(det.params.efficiency)
            out[f"{pre}.dark_rate_hz"] = _f(det.params.dark_rate_hz)
            out[f"{pre}.dead_time_ps"] = _f(det.params.dead_time_ps)
            out[f"{pre}.jitter_sigma_ps"] = _f(det.params.jitter_sigma_ps)
            if det.gate is not None:
                out[f"{pre}.gate_delay_ps"] = _f(det.gate.gate_delay_ps)
                out[f"{pre}.gate_width_ps"] = _f(det.gate.gate_width_ps)
                out[f"{pre}.gate_dark_prob"] = _f(det.gate.dark_prob_per_gate)
            if det.trigger_channel is not None:
                out[f"{pre}.trigger_channel"] = str(det.trigger_channel)
        a = self.analysis
        out["analysis.bin_width_ps"] = str(a.bin_width_ps)
        out["analysis.range_min_ps"] = str(a.range_min_ps)
        out["analysis.range_max_ps"] = str(a.range_max_ps)
        out["analysis.pair_peak_window_ps"] = str(a.pair_peak_window_ps)
        out["analysis.background_guard_ps"] = str(a.background_guard_ps)
        out["analysis.auto_bin_width_ps"] = str(a.auto_bin_width_ps)
        out["analysis.auto_range_ps"] = str(a.auto_range_ps)
        out["analysis.auto_peak_window_ps"] = str(a.auto_peak_window_ps)
        out["analysis.triple_window_ps"] = str(a.triple_window_ps)
        out["analysis.k_sigma"] = _f(a.k_sigma)
        out["analysis.s3_auto_value"] = _f(a.s3_auto_value)
        out["analysis.s3_auto_sigma"] = _f(a.s3_auto_sigma)
        out["analysis.s4_auto_value"] = _f(a.s4_auto_value)
        out["analysis.s4_auto_sigma"] = _f(a.s4_auto_sigma)
        b = self.budget
        if b.herald_factor is not None:
            out["budget.herald_factor"] = _f(b.herald_factor)
        out["budget.waveguide_coupling"] = _f(b.waveguide_coupling)
        out["budget.target_snr"] = _f(b.target_snr)
        return out


def _fmt_bool(v: bool) -> str:
    return "true" if v else "false"


def _parse_bool(key, raw):
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _parse_int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected integer, got {raw!r}") from None


def _parse_float(key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected number, got {raw!r}") from None


_DETECTOR_KEY = re.compile(r"^detector\.ch(\d+)\.(\w+)$")

_DETECTOR_FIELDS = {
    "mode": "str",
    "efficiency": "float",
    "dark_rate_hz": "float",
    "dead_time_ps": "float",
    "jitter_sigma_ps": "float",
    "gate_delay_ps": "float",
    "gate_width_ps": "float",
    "gate_dark_prob": "float",
    "trigger_channel": "int",
}


def parse_flat_text(text: str) -> dict[str, str]:
    """Raw key/value lines -> dict; duplicate keys keep the last value."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        out[key] = value
    return out


def config_from_flat(flat: dict[str, str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for key, raw in flat.items():
        _apply_key(cfg, key, raw)
    return cfg.validate()


def _apply_key(cfg: ExperimentConfig, key: str, raw: str):
    m = _DETECTOR_KEY.match(key)
    if m:
        ch, name = int(m.group(1)), m.group(2)
        kind = _DETECTOR_FIELDS.get(name)
        if kind is None:
            raise ConfigError(f"unknown config key {key!r}")
        det = cfg.detectors.setdefault(ch, DetectorChannel())
        if name == "mode":
            if raw not in (FREE_RUNNING, GATED):
                raise ConfigError(f"{key}: mode must be free_running or gated")
            det.params.mode = raw
        elif name == "trigger_channel":
            det.trigger_channel = _parse_int(key, raw)
        elif name.startswith("gate_"):
            if det.gate is None:
                det.gate = GateParams()
            value = _parse_float(key, raw)
            if name == "gate_delay_ps":
                det.gate.gate_delay_ps = value
            elif name == "gate_width_ps":
                det.gate.gate_width_ps = value
            else:
                det.gate.dark_prob_per_gate = value
        else:
            setattr(det.params, name, _parse_float(key, raw))
        return

    simple = _SIMPLE_KEYS.get(key)
    if simple is None:
        raise ConfigError(f"unknown config key {key!r}")
    target, attr, kind = simple
    value = {"int": _parse_int, "float": _parse_float, "bool": _parse_bool, "str": lambda k, r: r}[
        kind
    ](key, raw)
    if key == "source.mode" and value not in (MODE_SRS, MODE_COHERENT):
        raise ConfigError(f"{key}: must be srs or coherent")
    obj = cfg if target == "" else getattr(cfg, target)
    setattr(obj, attr, value)


_SIMPLE_KEYS: dict[str, tuple[str, str, str]] = {
    "run.duration_ps": ("run", "duration_ps", "int"),
    "run.seed": ("run", "seed", "int"),
    "source.mode": ("", "mode", "str"),
    "source.pair_rate_hz": ("source", "pair_rate_hz", "float"),
    "source.pair_rate_from_model": ("", "pair_rate_from_model", "bool"),
    "source.two_photon_detuning_mhz": ("source", "two_photon_detuning_mhz", "float"),
    "source.pump1_detuning_ghz": ("source", "pump1_detuning_ghz", "float"),
    "source.pump1_power_mw": ("source", "pump1_power_mw", "float"),
    "source.pump2_power_mw": ("source", "pump2_power_mw", "float"),
    "source.cell_temperature_c": ("source", "cell_temperature_c", "float"),
    "source.correlation_time_ps": ("source", "correlation_time_ps", "float"),
    "source.correlation_time_from_model": ("", "correlation_time_from_model", "bool"),
    "source.pair_delay_offset_ps": ("source", "pair_delay_offset_ps", "float"),
    "source.fwm_slope_ps_per_ghz": ("", "fwm_slope_ps_per_ghz", "float"),
    "source.fwm_reference_ghz": ("", "fwm_reference_ghz", "float"),
    "source.noise_rate_s1_hz": ("source", "noise_rate_s1_hz", "float"),
    "source.noise_rate_s2_hz": ("source", "noise_rate_s2_hz", "float"),
    "source.s2_collection_efficiency": ("source", "s2_collection_efficiency", "float"),
    "spdc.conversion_efficiency": ("spdc", "conversion_efficiency", "float"),
    "spdc.pair_jitter_ps": ("spdc", "pair_jitter_ps", "float"),
    "spdc.coherent_pump_rate_hz": ("spdc", "coherent_pump_rate_hz", "float"),
    "spdc.mode_count": ("spdc", "mode_count", "int"),
    "spdc.coherence_time_ps": ("spdc", "coherence_time_ps", "float"),
    "analysis.bin_width_ps": ("analysis", "bin_width_ps", "int"),
    "analysis.range_min_ps": ("analysis", "range_min_ps", "int"),
    "analysis.range_max_ps": ("analysis", "range_max_ps", "int"),
    "analysis.pair_peak_window_ps": ("analysis", "pair_peak_window_ps", "int"),
    "analysis.background_guard_ps": ("analysis", "background_guard_ps", "int"),
    "analysis.auto_bin_width_ps": ("analysis", "auto_bin_width_ps", "int"),
    "analysis.auto_range_ps": ("analysis", "auto_range_ps", "int"),
    "analysis.auto_peak_window_ps": ("analysis", "auto_peak_window_ps", "int"),
    "analysis.triple_window_ps": ("analysis", "triple_window_ps", "int"),
    "analysis.k_sigma": ("analysis", "k_sigma", "float"),
    "analysis.s3_auto_value": ("analysis", "s3_auto_value", "float"),
    "analysis.s3_auto_sigma": ("analysis", "s3_auto_sigma", "float"),
    "analysis.s4_auto_value": ("analysis", "s4_auto_value", "float"),
    "analysis.s4_auto_sigma": ("analysis", "s4_auto_sigma", "float"),
    "budget.herald_factor": ("budget", "herald_factor", "float"),
    "budget.waveguide_coupling": ("budget", "waveguide_coupling", "float"),
    "budget.target_snr": ("budget", "target_snr", "float"),
}


def parse_config_text(text: str) -> ExperimentConfig:
    return config_from_flat(parse_flat_text(text))


def format_config(cfg: ExperimentConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in cfg.to_flat().items()) + "\n"


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply repeated ``section.key=value`` strings on top of a config."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        _apply_key(cfg, key, value)
    return cfg.validate()


def bundled_config_names() -> list[str]:
    pkg = resources.files("tripletsim") / "configs"
    return sorted(p.name.removesuffix(".cfg") for p in pkg.iterdir() if p.name.endswith(".cfg"))


def load_config(path_or_name: str | Path) -> ExperimentConfig:
    """Load a config file, or a bundled config by bare name."""
    p = Path(path_or_name)
    if p.exists():
        return parse_config_text(p.read_text())
    name = str(path_or_name)
    if "/" not in name and "\\" not in name:
        candidate = resources.files("tripletsim") / "configs" / f"{name}.cfg"
        if candidate.is_file():
            return parse_config_text(candidate.read_text())
    raise ConfigError(
        f"config {path_or_name!r} not found (bundled: {', '.join(bundled_config_names())})"
    )

"""Closed-form expected rates and the Monte Carlo cross-check.

The budget is the analytic oracle for the simulation: singles after
efficiency, dark counts and non-paralyzable dead time (rate a in,
a/(1+a*tau) out), waveguide pair rates, detected pair and triple rates,
and per-bin accidental levels R_a*R_b*bin_width.  ``mc_vs_budget``
replays full simulated runs over several seeds and reports the pull of
every measured count against its budget expectation.

The generated pair rate follows the bare conversion chain
(signal-2 flux x conversion efficiency); the after-coupling annotation
multiplies in the waveguide input coupling for comparison against
quoted generation figures, but never enters the detected chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import MODE_COHERENT, ExperimentConfig
from .detectors import GATED
from .errors import ConfigError

BUDGET_CSV_HEADER = (
    "s1_singles_hz,s2_singles_hz,s3_singles_hz,s4_singles_hz,"
    "pairs_generated_hz,pairs_generated_after_coupling_hz,pairs_detected_hz,"
    "triples_detected_hz,accidental_pair_hz,accidental_triple_hz,"
    "herald_factor,time_to_snr_s"
)


@dataclass
class RateBudget:
    """Expected rates for one configuration (Hz unless noted)."""

    s1_singles_hz: float = 0.0
    s2_singles_hz: float = 0.0
    s3_singles_hz: float = 0.0
    s4_singles_hz: float = 0.0
    pairs_generated_hz: float = 0.0
    pairs_generated_after_coupling_hz: float = 0.0
    pairs_detected_hz: float = 0.0
    triples_detected_hz: float = 0.0
    accidental_pair_hz: float = 0.0
    accidental_triple_hz: float = 0.0
    herald_factor: float = 0.0
    time_to_snr_s: float = math.inf

    def to_text(self) -> str:
        pairs_per_hour = self.pairs_detected_hz * 3600.0
        lines = [
            f"s1_singles_hz = {self.s1_singles_hz!r}",
            f"s2_singles_hz = {self.s2_singles_hz!r}",
            f"s3_singles_hz = {self.s3_singles_hz!r}",
            f"s4_singles_hz = {self.s4_singles_hz!r}",
            f"pairs_generated_hz = {self.pairs_generated_hz!r}",
            f"pairs_generated_after_coupling_hz = {self.pairs_generated_after_coupling_hz!r}",
            f"pairs_detected_hz = {self.pairs_detected_hz!r}",
            f"pairs_detected_per_hour = {pairs_per_hour!r}",
            f"triples_detected_hz = {self.triples_detected_hz!r}",
            f"triples_detected_per_hour = {self.triples_detected_hz * 3600.0!r}",
            f"accidental_pair_hz = {self.accidental_pair_hz!r}",
            f"accidental_triple_hz = {self.accidental_triple_hz!r}",
            f"herald_factor = {self.herald_factor!r}",
            f"time_to_snr_s = {self.time_to_snr_s!r}",
        ]
        return "\n".join(lines) + "\n"

    def to_csv_row(self) -> str:
        return ",".join(
            repr(v)
            for v in (
                self.s1_singles_hz,
                self.s2_singles_hz,
                self.s3_singles_hz,
                self.s4_singles_hz,
                self.pairs_generated_hz,
                self.pairs_generated_after_coupling_hz,
                self.pairs_detected_hz,
                self.triples_detected_hz,
                self.accidental_pair_hz,
                self.accidental_triple_hz,
                self.herald_factor,
                self.time_to_snr_s,
            )
        )


def click_rate(input_rate_hz: float, efficiency: float, dark_hz: float, dead_ps: float) -> float:
    """Detected singles rate after thinning, darks, and dead time."""
    a = input_rate_hz * efficiency + dark_hz
    return a / (1.0 + a * dead_ps * 1e-12)


def live_fraction(input_rate_hz: float, efficiency: float, dark_hz: float, dead_ps: float) -> float:
    """Steady-state probability the detector is armed at a random arrival."""
    a = input_rate_hz * efficiency + dark_hz
    return 1.0 / (1.0 + a * dead_ps * 1e-12)


def expected_rates(config: ExperimentConfig) -> RateBudget:
    config.validate()
    src = config.effective_source()
    spdc = config.spdc
    dets = config.detectors
    bin_s = config.analysis.bin_width_ps * 1e-12

    if config.mode == MODE_COHERENT:
        pair_flux = spdc.coherent_pump_rate_hz
        r_p = 0.0
        lam1 = lam2 = 0.0
    else:
        pair_flux = src.pair_rate_hz + src.noise_rate_s2_hz
        r_p = src.pair_rate_hz
        lam1 = src.pair_rate_hz + src.noise_rate_s1_hz
        lam2 = src.pair_rate_hz + src.noise_rate_s2_hz

    budget = RateBudget()
    budget.pairs_generated_hz = pair_flux * spdc.conversion_efficiency
    budget.pairs_generated_after_coupling_hz = (
        budget.pairs_generated_hz * config.budget.waveguide_coupling
    )
    g = budget.pairs_generated_hz
    g_correlated = r_p * spdc.conversion_efficiency

    d0, d1, d2, d3 = (dets.get(ch) for ch in (0, 1, 2, 3))
    live0 = live4 = 1.0
    if d0 is not None:
        p = d0.params
        budget.s1_singles_hz = click_rate(lam1, p.efficiency, p.dark_rate_hz, p.dead_time_ps)
        live0 = live_fraction(lam1, p.efficiency, p.dark_rate_hz, p.dead_time_ps)
    if d1 is not None:
        p = d1.params
        budget.s2_singles_hz = click_rate(lam2, p.efficiency, p.dark_rate_hz, p.dead_time_ps)

    if d3 is not None:
        p = d3.params
        budget.s4_singles_hz = click_rate(g, p.efficiency, p.dark_rate_hz, p.dead_time_ps)
        live4 = live_fraction(g, p.efficiency, p.dark_rate_hz, p.dead_time_ps)

    if d2 is not None and d3 is not None:
        p2, p3 = d2.params, d3.params
        live2 = live_fraction(g, p2.efficiency, p2.dark_rate_hz, p2.dead_time_ps)
        pair_core = g * p2.efficiency * p3.efficiency * live4
        if d2.params.mode == GATED:
            gate = d2.gate
            budget.pairs_detected_hz = pair_core  # gate acceptance rides on the D4 click
            duty = budget.s4_singles_hz * gate.gate_width_ps * 1e-12
            stray = g * p2.efficiency * duty
            gate_darks = budget.s4_singles_hz * gate.dark_prob_per_gate
            budget.s3_singles_hz = budget.pairs_detected_hz + stray + gate_darks
        else:
            budget.pairs_detected_hz = pair_core * live2
            budget.s3_singles_hz = click_rate(g, p2.efficiency, p2.dark_rate_hz, p2.dead_time_ps)
        budget.accidental_pair_hz = budget.s3_singles_hz * budget.s4_singles_hz * bin_s
    elif d2 is not None:
        p2 = d2.params
        if p2.mode != GATED:
            budget.s3_singles_hz = click_rate(g, p2.efficiency, p2.dark_rate_hz, p2.dead_time_ps)

    triple_ready = (
        d0 is not None and d2 is not None and d2.params.mode == GATED and d3 is not None
    )
    if triple_ready:
        if config.budget.herald_factor is not None:
            herald = config.budget.herald_factor
        else:
            herald = d0.params.efficiency * live0
        budget.herald_factor = herald
        correlated_pairs_detected = (
            g_correlated * d2.params.efficiency * d3.params.efficiency * live4
        )
        budget.triples_detected_hz = correlated_pairs_detected * herald
        budget.accidental_triple_hz = (
            budget.s1_singles_hz * budget.s3_singles_hz * bin_s
        )

    # statistical time to significance: peak grows like S*T over a noise
    # floor B*T per bin, so T = z^2 * B / S^2 and T scales as z^2
    z = config.budget.target_snr
    if budget.triples_detected_hz > 0:
        budget.time_to_snr_s = (
            z * z * budget.accidental_triple_hz / budget.triples_detected_hz**2
        )
    elif budget.pairs_detected_hz > 0:
        budget.time_to_snr_s = (
            z * z * budget.accidental_pair_hz / budget.pairs_detected_hz**2
        )
    return budget


@dataclass
class PullRow:
    seed: int
    quantity: str
    observed: float
    expected: float

    @property
    def pull(self) -> float:
        return (self.observed - self.expected) / math.sqrt(self.expected)


@dataclass
class BudgetComparison:
    rows: list[PullRow] = field(default_factory=list)

    @property
    def quantities(self) -> list[str]:
        seen = dict.fromkeys(r.quantity for r in self.rows)
        return list(seen)

    def mean_pull(self, quantity: str) -> float:
        pulls = [r.pull for r in self.rows if r.quantity == quantity]
        return float(np.mean(pulls))

    @property
    def passed(self) -> bool:
        if not self.rows:
            return False
        if any(abs(r.pull) > 4.0 for r in self.rows):
            return False
        return all(abs(self.mean_pull(q)) <= 1.0 for q in self.quantities)

    def to_text(self) -> str:
        lines = []
        for r in self.rows:
            lines.append(
                f"seed {r.seed} {r.quantity}: observed {r.observed:.1f} "
                f"expected {r.expected:.1f} pull {r.pull:+.2f}"
            )
        for q in self.quantities:
            lines.append(f"mean_pull.{q} = {self.mean_pull(q):+.3f}")
        lines.append(f"passed = {'yes' if self.passed else 'no'}")
        return "\n".join(lines) + "\n"


def mc_vs_budget(config: ExperimentConfig, duration_ps=None, seeds=(1, 2, 3)) -> BudgetComparison:
    """Simulate per seed and pull every measured count against the budget.

    Refuses configurations whose smallest compared expectation is below
    25 counts, because pulls lose meaning there; the error message sizes
    the run that would work.
    """
    from . import pipeline  # local import, pipeline depends on this module

    duration = int(duration_ps) if duration_ps is not None else config.run.duration_ps
    if duration <= 0:
        raise ConfigError("mc_vs_budget needs a positive duration")
    budget = expected_rates(config)
    t_s = duration * 1e-12

    expectations: dict[str, float] = {}
    for ch, name in ((0, "s1_clicks"), (1, "s2_clicks"), (2, "s3_clicks"), (3, "s4_clicks")):
        if ch in config.detectors:
            rate = getattr(budget, f"s{ch + 1}_singles_hz")
            expectations[name] = rate * t_s
    window_s = 2 * config.analysis.triple_window_ps * 1e-12
    if budget.pairs_detected_hz > 0:
        expectations["s3s4_pairs"] = (
            budget.pairs_detected_hz * t_s
            + budget.s3_singles_hz * budget.s4_singles_hz * window_s * t_s
        )
    if budget.triples_detected_hz > 0:
        # peak window of the triple histogram: correlated events (the
        # exponential tail truncates at the window edge) plus the floor
        n_bins = config.analysis.pair_peak_window_ps // config.analysis.bin_width_ps
        tau = config.effective_source().correlation_time_ps
        capture = 1.0 - math.exp(-config.analysis.pair_peak_window_ps / tau)
        expectations["triples"] = (
            budget.triples_detected_hz * t_s * capture
            + budget.accidental_triple_hz * n_bins * t_s
        )

    low = {k: v for k, v in expectations.items() if v < 25.0}
    if low:
        worst = min(low.values())
        factor = math.ceil(25.0 / max(worst, 1e-12))
        raise ConfigError(
            f"underpowered configuration: expected counts {low} below 25; "
            f"raise duration by ~{factor}x or raise rates"
        )

    comparison = BudgetComparison()
    for seed in seeds:
        sim = pipeline.run_simulation(config, duration_ps=duration, seed=seed)
        clicks = sim.clicks
        for ch, name in ((0, "s1_clicks"), (1, "s2_clicks"), (2, "s3_clicks"), (3, "s4_clicks")):
            if name in expectations:
                comparison.rows.append(
                    PullRow(seed, name, float(len(clicks[ch])), expectations[name])
                )
        if "s3s4_pairs" in expectations:
            from .correlator import herald_coincidences

            heralds = herald_coincidences(
                clicks[2], clicks[3], config.analysis.triple_window_ps
            )
            comparison.rows.append(
                PullRow(seed, "s3s4_pairs", float(len(heralds)), expectations["s3s4_pairs"])
            )
            if "triples" in expectations:
                observed = _triple_peak_counts(config, clicks, heralds)
                comparison.rows.append(
                    PullRow(seed, "triples", observed, expectations["triples"])
                )
    return comparison


def _triple_peak_counts(config, clicks, heralds) -> float:
    from .correlator import HistogramSpec, cross_histogram

    a = config.analysis
    spec = HistogramSpec(
        bin_width_ps=a.bin_width_ps,
        range_min_ps=a.range_min_ps,
        range_max_ps=a.range_max_ps,
        channel_a=0,
        channel_b=2,
    )
    h = cross_histogram(clicks[0], heralds, spec)
    peak_idx = int(np.argmax(h.counts))
    start = int(spec.edges()[peak_idx])
    peak = spec.bins_overlapping(start, start + a.pair_peak_window_ps)
    return float(h.counts[peak].sum())

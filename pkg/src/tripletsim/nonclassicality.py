"""Cauchy-Schwarz nonclassicality parameters.

Classical fields obey R = g12^2 / (g11 * g22) <= 1 between two channels
and the three-channel extension R3 = g3^2 / (g11 * g33 * g44) <= 1;
a value significantly above 1 certifies nonclassical correlations.
Uncertainties propagate to first order (delta method), and the verdict
is the statistical policy value - k*sigma > 1 with k = 3 by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .correlator import CorrelationResult
from .errors import AnalysisError

TWO_PHOTON = "two_photon"
THREE_PHOTON = "three_photon"

CS_CSV_HEADER = (
    "kind,value,sigma,k_sigma,violated,"
    "g_cross,g_cross_sigma,g_auto_a,g_auto_a_sigma,"
    "g_auto_b,g_auto_b_sigma,g_auto_c,g_auto_c_sigma"
)


@dataclass(frozen=True)
class CsReport:
    """One Cauchy-Schwarz evaluation with its inputs and verdict."""

    kind: str
    value: float
    sigma: float
    k_sigma: float
    violated: bool
    inputs: dict[str, tuple[float, float]]

    def to_text(self) -> str:
        lines = [
            f"kind = {self.kind}",
            f"value = {self.value!r}",
            f"sigma = {self.sigma!r}",
            f"k_sigma = {self.k_sigma!r}",
            f"violated = {'yes' if self.violated else 'no'}",
        ]
        for name, (v, s) in self.inputs.items():
            lines.append(f"{name} = {v!r}")
            lines.append(f"{name}_sigma = {s!r}")
        return "\n".join(lines) + "\n"

    def to_csv_row(self) -> str:
        order = ["cross", "auto_a", "auto_b", "auto_c"]
        cells = [self.kind, repr(self.value), repr(self.sigma), repr(self.k_sigma),
                 "yes" if self.violated else "no"]
        for name in order:
            if name in self.inputs:
                v, s = self.inputs[name]
                cells.extend([repr(v), repr(s)])
            else:
                cells.extend(["", ""])
        return ",".join(cells)


def _value_sigma(g) -> tuple[float, float]:
    if isinstance(g, CorrelationResult):
        return g.value, g.stat_sigma
    if isinstance(g, tuple):
        v, s = g
        return float(v), float(s)
    return float(g), 0.0


def _check_positive(name, value):
    if not math.isfinite(value) or value <= 0:
        raise AnalysisError(f"{name} must be positive and finite, got {value}")


def cs_two(g12, g11, g22, k: float = 3.0) -> CsReport:
    """Two-photon parameter R = g12^2 / (g11 * g22).

    Inputs may be CorrelationResult objects, (value, sigma) pairs, or
    bare numbers (sigma 0).
    """
    (v12, s12), (v11, s11), (v22, s22) = map(_value_sigma, (g12, g11, g22))
    for name, v in (("g12", v12), ("g11", v11), ("g22", v22)):
        _check_positive(name, v)
    value = v12 * v12 / (v11 * v22)
    rel = math.sqrt((2 * s12 / v12) ** 2 + (s11 / v11) ** 2 + (s22 / v22) ** 2)
    sigma = value * rel
    return CsReport(
        kind=TWO_PHOTON,
        value=value,
        sigma=sigma,
        k_sigma=k,
        violated=(value - k * sigma) > 1.0,
        inputs={"cross": (v12, s12), "auto_a": (v11, s11), "auto_b": (v22, s22)},
    )


def cs_three(g3, g11, g33, g44, k: float = 3.0) -> CsReport:
    """Three-photon parameter R3 = g3^2 / (g11 * g33 * g44)."""
    (v3, s3), (v11, s11), (v33, s33), (v44, s44) = map(_value_sigma, (g3, g11, g33, g44))
    for name, v in (("g3", v3), ("g11", v11), ("g33", v33), ("g44", v44)):
        _check_positive(name, v)
    value = v3 * v3 / (v11 * v33 * v44)
    rel = math.sqrt(
        (2 * s3 / v3) ** 2 + (s11 / v11) ** 2 + (s33 / v33) ** 2 + (s44 / v44) ** 2
    )
    sigma = value * rel
    return CsReport(
        kind=THREE_PHOTON,
        value=value,
        sigma=sigma,
        k_sigma=k,
        violated=(value - k * sigma) > 1.0,
        inputs={
            "cross": (v3, s3),
            "auto_a": (v11, s11),
            "auto_b": (v33, s33),
            "auto_c": (v44, s44),
        },
    )

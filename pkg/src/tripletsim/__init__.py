"""Monte Carlo simulation and time-correlated counting analysis for a
cascaded photon-triplet source (atomic-ensemble Raman pair source feeding
a down-conversion waveguide)."""

__version__ = "0.1.0"

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
from .detectors import DetectorParams, GateParams, detect_free, detect_gated
from .errors import AnalysisError, ConfigError, FormatError, TripletSimError
from .nonclassicality import CsReport, cs_three, cs_two
from .sources import (
    SourceParams,
    SpdcParams,
    correlation_time_model,
    fwm_delay_model,
    generate_srs,
    pair_rate_model,
    spdc_coherent,
    spdc_convert,
)
from .timetags import TagStream, TimeTag, merge_streams, read_tags, write_tags

__all__ = [
    "AnalysisError",
    "CoincidenceHistogram",
    "ConfigError",
    "CorrelationResult",
    "CsReport",
    "DetectorParams",
    "FormatError",
    "GateParams",
    "HistogramSpec",
    "SourceParams",
    "SpdcParams",
    "TagStream",
    "TimeTag",
    "TripletSimError",
    "correlation_time_model",
    "cross_histogram",
    "cs_three",
    "cs_two",
    "detect_free",
    "detect_gated",
    "fwm_delay_model",
    "g2_auto",
    "g2_from_histogram",
    "generate_srs",
    "merge_streams",
    "pair_rate_model",
    "read_tags",
    "snr",
    "spdc_coherent",
    "spdc_convert",
    "triple_histogram",
    "write_tags",
]

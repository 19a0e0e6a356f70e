"""Frequency-bin qubit link modeling, time-tag simulation and beat-note analysis."""

from .channel import ChannelConfig, PlatformTrajectory
from .config import ScenarioConfig, build_config, demo_document, load_config
from .exceptions import (
    AnalysisError,
    ConfigError,
    DomainError,
    FbinLinkError,
    TagFileError,
    UsageError,
)
from .mcsim import DetectorModel, Scenario, TaggerModel, simulate
from .qstate import (
    BinPair,
    FBinQubit,
    FrequencyBin,
    JitterConvention,
    VisibilityFactors,
)
from .receiver import Basis, MziConfig
from .schedule import Segment, StateLabel, StateSchedule
from .tagproc import BeatHistogram, FoldingConfig, VisibilityReport, analyze_stream
from .tagstream import TagMetadata, TagStream, read_tags, write_tags

__all__ = [
    "AnalysisError",
    "Basis",
    "BeatHistogram",
    "BinPair",
    "ChannelConfig",
    "ConfigError",
    "DetectorModel",
    "DomainError",
    "FBinQubit",
    "FbinLinkError",
    "FoldingConfig",
    "FrequencyBin",
    "JitterConvention",
    "MziConfig",
    "PlatformTrajectory",
    "Scenario",
    "ScenarioConfig",
    "Segment",
    "StateLabel",
    "StateSchedule",
    "TagFileError",
    "TagMetadata",
    "TagStream",
    "TaggerModel",
    "UsageError",
    "VisibilityFactors",
    "VisibilityReport",
    "analyze_stream",
    "build_config",
    "demo_document",
    "load_config",
    "read_tags",
    "simulate",
    "write_tags",
]

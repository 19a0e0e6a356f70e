"""
Scenario documents.

A scenario is a JSON document with a ``schema_version`` and unit-suffixed
keys. :func:`load_config` validates it against ``schema/scenario.json``,
applies ``key=value`` overrides, fills defaults, runs the cross-field checks
and builds the library objects. Every problem found is reported at once.
"""

import copy
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Tuple, TypedDict, Union

from packaging.version import InvalidVersion, Version

from .channel import ChannelConfig, PlatformTrajectory, load_trajectory_csv
from .constants import SPEED_OF_LIGHT
from .exceptions import ConfigError, DomainError, UsageError
from .mcsim import DetectorModel, Scenario, TaggerModel, beats_per_marker
from .qstate import BinPair, EnvelopeMode, JitterConvention, VisibilityFactors
from .receiver import Basis, MziConfig, required_path_difference
from .schedule import StateSchedule
from .schemas import diagnostics
from .tagstream import MARKER_CHANNEL, as_fraction

SCHEMA_VERSION = "1.0"

#: Optical carrier of the demonstration link (780 nm).
OMEGA_780NM = 2.0 * math.pi * SPEED_OF_LIGHT / 780e-9
DEMO_DELTA_OMEGA = 2.0 * math.pi * 260e6

PathLike = Union[str, "os.PathLike[str]"]


class _SourceRequired(TypedDict):
    delta_omega_rad_per_s: float


class SourceDocument(_SourceRequired, total=False):
    omega0_rad_per_s: float
    linewidth_rad_per_s: float


class _TrajectoryRequired(TypedDict):
    mode: str


class TrajectoryDocument(_TrajectoryRequired, total=False):
    range_m: float
    velocity_m_per_s: float
    file: str


class ChannelDocument(TypedDict, total=False):
    attenuation_db: float
    v_x_eps: float
    v_z_eps: float
    trajectory: TrajectoryDocument


class ReceiverDocument(TypedDict, total=False):
    basis: str
    delta_l_m: float
    v_x_eps: float
    v_z_eps: float
    v_z_eps_bins: List[float]
    phase_align_rad: float


class _DetectorRequired(TypedDict):
    name: str


class DetectorDocument(_DetectorRequired, total=False):
    jitter_fwhm_ps: float
    efficiency: float
    dark_rate_per_s: float
    dead_time_ps: float


class TaggerDocument(TypedDict, total=False):
    resolution_ps: float
    marker_period_ps: int
    marker_channel: int
    jitter_fwhm_ps: float


class SegmentDocument(TypedDict):
    state: str
    duration_s: float
    rate_per_s: float


class AnalysisDocument(TypedDict, total=False):
    delta_omega_rad_per_s: float
    bin_width_ps: float
    min_events: int
    state: Optional[str]


class _ScenarioRequired(TypedDict):
    schema_version: str
    source: SourceDocument
    detectors: List[DetectorDocument]
    schedule: List[SegmentDocument]


class ScenarioDocument(_ScenarioRequired, total=False):
    seed: int
    run_duration_s: float
    jitter_convention: str
    envelope_mode: str
    channel: ChannelDocument
    receiver: ReceiverDocument
    tagger: TaggerDocument
    analysis: AnalysisDocument


DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "run_duration_s": 60.0,
    "jitter_convention": JitterConvention.FWHM.value,
    "envelope_mode": EnvelopeMode.AS_PRINTED.value,
    "source": {"omega0_rad_per_s": OMEGA_780NM, "linewidth_rad_per_s": 0.0},
    "channel": {"attenuation_db": 0.0, "v_x_eps": 1.0, "v_z_eps": 1.0},
    "receiver": {
        "basis": "Z",
        "v_x_eps": 1.0,
        "v_z_eps": 1.0,
        "phase_align_rad": 0.0,
    },
    "tagger": {
        "resolution_ps": 78.125,
        "marker_period_ps": 2_000_000,
        "marker_channel": 0,
        "jitter_fwhm_ps": 0.0,
    },
    "analysis": {"min_events": 1000},
}

DETECTOR_DEFAULTS: Dict[str, Any] = {
    "jitter_fwhm_ps": 0.0,
    "efficiency": 1.0,
    "dark_rate_per_s": 0.0,
    "dead_time_ps": 0.0,
}


@dataclass(frozen=True)
class AnalysisSettings:
    """Analysis knobs; ``None`` means "take it from the tag metadata"."""

    delta_omega: Optional[float] = None
    bin_width_ps: Optional[Fraction] = None
    min_events: int = 1000
    state: Optional[str] = None

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "AnalysisSettings":
        problems = diagnostics(
            doc, "scenario.json", definition="analysis", prefix="analysis"
        )
        if problems:
            raise ConfigError(problems)
        width = doc.get("bin_width_ps")
        return cls(
            delta_omega=doc.get("delta_omega_rad_per_s"),
            bin_width_ps=as_fraction(width) if width is not None else None,
            min_events=int(doc.get("min_events", 1000)),
            state=doc.get("state"),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario: library objects plus the document they came from."""

    scenario: Scenario
    analysis: AnalysisSettings
    document: Dict[str, Any]
    digest: str


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_digest(doc: Any) -> str:
    """SHA-256 of the canonical form; insensitive to key order."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _step(node: Any, part: str, key: str) -> Any:
    if isinstance(node, list):
        try:
            return node[int(part)]
        except (ValueError, IndexError):
            raise UsageError(f"--override {key}: no list item {part!r}") from None
    if not isinstance(node, dict):
        raise UsageError(f"--override {key}: {part!r} is not inside an object")
    return node.setdefault(part, {})


def apply_override(doc: Dict[str, Any], assignment: str) -> None:
    """Apply one ``dotted.key=value`` edit in place; ``value`` is JSON if it parses."""
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise UsageError(f"--override expects key=value, got {assignment!r}")
    parts = key.split(".")
    node: Any = doc
    for part in parts[:-1]:
        node = _step(node, part, key)
    last = parts[-1]
    value = _parse_value(raw)
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise UsageError(f"--override {key}: no list item {last!r}") from None
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise UsageError(f"--override {key}: {last!r} is not inside an object")


def apply_overrides(doc: Dict[str, Any], assignments: Iterable[str]) -> Dict[str, Any]:
    """Return a copy of ``doc`` with every assignment applied in order."""
    out = copy.deepcopy(doc)
    for assignment in assignments:
        apply_override(out, assignment)
    return out


def _version_problems(version: str) -> List[str]:
    try:
        found = Version(version)
    except InvalidVersion:
        return [f"schema_version: {version!r} is not a version"]
    supported = Version(SCHEMA_VERSION)
    if found.major != supported.major:
        return [
            f"schema_version: {version} is not supported"
            f" (expected {supported.major}.x)"
        ]
    if found > supported:
        warnings.warn(
            f"schema_version {version} is newer than {SCHEMA_VERSION};"
            " unknown keys will be rejected"
        )
    return []


def _merged(defaults: Dict[str, Any], doc: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(defaults)
    for key, value in doc.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merged(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def fill_defaults(doc: Dict[str, Any]) -> Dict[str, Any]:
    """The document with every optional key made explicit."""
    filled = _merged(DEFAULTS, doc)
    filled["detectors"] = [_merged(DETECTOR_DEFAULTS, d) for d in filled["detectors"]]
    trajectory = filled["channel"].setdefault("trajectory", {"mode": "static"})
    if trajectory["mode"] != "sampled":
        trajectory.setdefault("range_m", 2.0 if trajectory["mode"] == "static" else 0.0)
        trajectory.setdefault("velocity_m_per_s", 0.0)
    delta_omega = filled["source"]["delta_omega_rad_per_s"]
    filled["receiver"].setdefault("delta_l_m", required_path_difference(delta_omega))
    return filled


def _trajectory(doc: Dict[str, Any], base_dir: str) -> PlatformTrajectory:
    mode = doc["mode"]
    if mode == "sampled":
        if "file" not in doc:
            raise DomainError("a sampled trajectory needs 'file'")
        return load_trajectory_csv(os.path.join(base_dir, doc["file"]))
    if mode == "linear":
        return PlatformTrajectory.linear(doc["velocity_m_per_s"], doc["range_m"])
    return PlatformTrajectory.static(doc["range_m"])


def _build(
    doc: Dict[str, Any], digest: str, base_dir: str
) -> Tuple[Optional[Scenario], List[str]]:
    """Build the scenario, collecting every domain error under its key."""
    problems: List[str] = []

    def attempt(key: str, build: Any) -> Any:
        try:
            return build()
        except DomainError as e:
            problems.append(f"{key}: {e}")
            return None

    src = doc["source"]
    pair = attempt(
        "source",
        lambda: BinPair.from_spacing(
            src["omega0_rad_per_s"],
            src["delta_omega_rad_per_s"],
            src["linewidth_rad_per_s"],
        ),
    )
    ch = doc["channel"]
    trajectory = attempt(
        "channel.trajectory", lambda: _trajectory(ch["trajectory"], base_dir)
    )
    rx = doc["receiver"]
    receiver = attempt(
        "receiver",
        lambda: MziConfig(
            rx["delta_l_m"],
            rx["v_z_eps"],
            Basis(rx["basis"]),
            src["omega0_rad_per_s"],
            rx["phase_align_rad"],
        ),
    )
    detectors = [
        attempt(
            f"detectors.{i}",
            lambda d=d: DetectorModel(
                d["name"],
                d["jitter_fwhm_ps"] * 1e-12,
                d["efficiency"],
                d["dark_rate_per_s"],
                d["dead_time_ps"] * 1e-12,
            ),
        )
        for i, d in enumerate(doc["detectors"])
    ]
    tg = doc["tagger"]
    tagger = attempt(
        "tagger",
        lambda: TaggerModel(
            as_fraction(tg["resolution_ps"]),
            tg["marker_period_ps"],
            tg["marker_channel"],
            tg["jitter_fwhm_ps"] * 1e-12,
        ),
    )
    schedule = attempt("schedule", lambda: StateSchedule.from_json(doc["schedule"]))

    if len(doc["detectors"]) != 2 and rx["basis"] == "Z":
        problems.append("detectors: the Z basis needs exactly two detectors")
    if len(doc["detectors"]) > 2:
        problems.append("detectors: at most two detectors (one per analyzer port)")
    if tg["marker_channel"] != MARKER_CHANNEL:
        problems.append(
            f"tagger.marker_channel: markers are recorded on channel {MARKER_CHANNEL},"
            " detectors on channels 1 and 2"
        )
    try:
        beats_per_marker(src["delta_omega_rad_per_s"], tg["marker_period_ps"])
    except ConfigError as e:
        problems.extend(e.diagnostics)

    built = [pair, trajectory, receiver, tagger, schedule] + detectors
    if problems or any(x is None for x in built):
        return None, problems
    factors = VisibilityFactors(ch["v_x_eps"], ch["v_z_eps"])
    channel = ChannelConfig(trajectory, ch["attenuation_db"], factors)
    bins = rx.get("v_z_eps_bins")
    return (
        Scenario(
            pair=pair,
            receiver=receiver,
            detectors=tuple(detectors),
            schedule=schedule,
            tagger=tagger,
            channel=channel,
            receiver_factors=VisibilityFactors(v_x_eps=rx["v_x_eps"]),
            v_z_eps_bins=(bins[0], bins[1]) if bins else None,
            seed=doc["seed"],
            run_duration=doc["run_duration_s"],
            jitter_convention=JitterConvention(doc["jitter_convention"]),
            envelope_mode=EnvelopeMode(doc["envelope_mode"]),
            digest=digest,
        ),
        [],
    )


def read_document(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError([f"{path}: {e.strerror}"]) from None
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}: line {e.lineno}: {e.msg}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: a scenario must be a JSON object"])
    return doc


def build_config(
    doc: Dict[str, Any], overrides: Iterable[str] = (), base_dir: str = "."
) -> ScenarioConfig:
    """Validate a scenario document and build its library objects."""
    doc = apply_overrides(doc, overrides)
    problems = diagnostics(doc, "scenario.json")
    if isinstance(doc.get("schema_version"), str):
        problems.extend(_version_problems(doc["schema_version"]))
    if problems:
        raise ConfigError(problems)
    filled = fill_defaults(doc)
    digest = config_digest(filled)
    scenario, problems = _build(filled, digest, base_dir)
    if problems or scenario is None:
        raise ConfigError(problems)
    analysis = AnalysisSettings.from_json(filled["analysis"])
    return ScenarioConfig(scenario, analysis, filled, digest)


def load_config(path: PathLike, overrides: Iterable[str] = ()) -> ScenarioConfig:
    """Read, validate and build the scenario at ``path``."""
    base_dir = os.path.dirname(os.path.abspath(path))
    return build_config(read_document(path), overrides, base_dir)


def demo_document(
    basis: str = "Z", run_duration: float = 60.0, seed: int = 2024
) -> ScenarioDocument:
    """
    The replication scenario: 260 MHz bins, a 500 kHz marker, 1 s shutter
    segments cycling ``Z0, X+, Z1, vac`` at 10⁴ photons/s, and the per-bin
    demultiplexing visibilities of the demonstration.
    """
    rate = 1e4
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "run_duration_s": run_duration,
        "jitter_convention": JitterConvention.FWHM.value,
        "envelope_mode": EnvelopeMode.AS_PRINTED.value,
        "source": {
            "omega0_rad_per_s": OMEGA_780NM,
            "delta_omega_rad_per_s": DEMO_DELTA_OMEGA,
            "linewidth_rad_per_s": 0.0,
        },
        "channel": {
            "attenuation_db": 0.0,
            "trajectory": {"mode": "static", "range_m": 2.0},
        },
        "receiver": {"basis": basis, "v_x_eps": 0.95, "v_z_eps_bins": [0.889, 0.821]},
        "detectors": [
            {"name": "apd0", "jitter_fwhm_ps": 50.0},
            {"name": "apd1", "jitter_fwhm_ps": 50.0},
        ],
        "tagger": {
            "resolution_ps": 78.125,
            "marker_period_ps": 2_000_000,
            "marker_channel": 0,
            "jitter_fwhm_ps": 78.125,
        },
        "schedule": [
            {"state": "Z0", "duration_s": 1.0, "rate_per_s": rate},
            {"state": "X+", "duration_s": 1.0, "rate_per_s": rate},
            {"state": "Z1", "duration_s": 1.0, "rate_per_s": rate},
            {"state": "vac", "duration_s": 1.0, "rate_per_s": 0.0},
        ],
    }


def tool_version() -> str:
    try:
        from importlib.metadata import PackageNotFoundError, version
    except ImportError:  # pragma: no cover
        return "0.0.0.dev0"
    try:
        return version("fbin-link")
    except PackageNotFoundError:
        return "0.0.0.dev0"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance of one CLI run, written next to its outputs."""

    command: str
    config_digest: Optional[str] = None
    seed: Optional[int] = None
    tool_version: str = field(default_factory=tool_version)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    config: Optional[Dict[str, Any]] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
            "outputs": sorted(self.outputs),
            "warnings": list(self.warnings),
            "config": self.config,
        }

    def write(self, path: PathLike) -> None:
        self.finished = _now()
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")

"""
Time-tag streams and their on-disk format.

A stream is a CSV with header ``channel,timestamp_ps`` (channel 0 carries the
marker pulses, channels 1 and 2 the two analyzer ports) plus a JSON sidecar
``<name>.meta.json`` describing the tagger and the scenario that produced it.
"""

import hashlib
import io
import json
import os
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Optional, Union

import numpy as np
from numpy.typing import NDArray

from .exceptions import TagFileError
from .schedule import StateSchedule
from .schemas import diagnostics

MARKER_CHANNEL = 0
PORT_CHANNELS = (1, 2)
# Largest channel id a stream can hold.
MAX_CHANNEL = int(np.iinfo(np.int16).max)
CSV_HEADER = "channel,timestamp_ps"

PathLike = Union[str, "os.PathLike[str]"]


def as_fraction(value: Union[float, int, str, Fraction]) -> Fraction:
    """Exact rational for a decimal figure such as ``78.125``."""
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


@dataclass(frozen=True)
class TagMetadata:
    """Sidecar content. ``basis``, ``run_duration_ps`` and ``schedule`` are optional."""

    resolution_ps: Fraction
    marker_period_ps: int
    delta_omega: float
    seed: Optional[int] = None
    scenario_digest: str = ""
    basis: Optional[str] = None
    run_duration_ps: Optional[int] = None
    schedule: Optional[StateSchedule] = None

    def to_json(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "resolution_ps": float(self.resolution_ps),
            "marker_period_ps": self.marker_period_ps,
            "delta_omega_rad_per_s": self.delta_omega,
            "seed": self.seed,
            "scenario_digest": self.scenario_digest,
        }
        if self.basis is not None:
            doc["basis"] = self.basis
        if self.run_duration_ps is not None:
            doc["run_duration_ps"] = self.run_duration_ps
        if self.schedule is not None:
            doc["schedule"] = self.schedule.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "TagMetadata":
        problems = diagnostics(doc, "tag_metadata.json")
        if problems:
            raise TagFileError("invalid metadata sidecar:\n" + "\n".join(problems))
        schedule = doc.get("schedule")
        return cls(
            resolution_ps=as_fraction(doc["resolution_ps"]),
            marker_period_ps=int(doc["marker_period_ps"]),
            delta_omega=float(doc["delta_omega_rad_per_s"]),
            seed=doc.get("seed"),
            scenario_digest=doc.get("scenario_digest", ""),
            basis=doc.get("basis"),
            run_duration_ps=doc.get("run_duration_ps"),
            schedule=StateSchedule.from_json(schedule) if schedule else None,
        )


@dataclass(frozen=True)
class TagStream:
    """Time-ordered ``(channel, timestamp_ps)`` records and their metadata."""

    channels: NDArray[np.int16]
    timestamps: NDArray[np.int64]
    metadata: TagMetadata

    def __post_init__(self) -> None:
        if self.channels.shape != self.timestamps.shape:
            raise ValueError("channels and timestamps must have the same length")

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.timestamps) >= 0))

    def on_channel(self, channel: int) -> NDArray[np.int64]:
        return self.timestamps[self.channels == channel]

    @property
    def markers(self) -> NDArray[np.int64]:
        return self.on_channel(MARKER_CHANNEL)


def metadata_path(path: PathLike) -> str:
    """``tags.csv`` → ``tags.meta.json``."""
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".meta.json"


def write_tags(stream: TagStream, path: PathLike) -> str:
    """Write the CSV and its sidecar; returns the sidecar path."""
    table = np.column_stack((stream.channels.astype(np.int64), stream.timestamps))
    with open(path, "w", newline="") as f:
        np.savetxt(f, table, fmt="%d", delimiter=",", header=CSV_HEADER, comments="")
    meta = metadata_path(path)
    with open(meta, "w") as f:
        json.dump(stream.metadata.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    return meta


def _locate_bad_line(text: str) -> TagFileError:
    for lineno, line in enumerate(text.splitlines()[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 2:
            return TagFileError(f"expected 2 fields, got {len(fields)}", lineno)
        try:
            channel, timestamp = (int(x) for x in fields)
        except ValueError:
            return TagFileError(f"non-integer field in {line!r}", lineno)
        if not 0 <= channel <= MAX_CHANNEL:
            return TagFileError(f"channel {channel} outside 0..{MAX_CHANNEL}", lineno)
    return TagFileError("unreadable tag data")


def read_tags(path: PathLike) -> TagStream:
    """Read a tag CSV and its sidecar, reporting format violations by line."""
    try:
        with open(path, newline="") as f:
            text = f.read()
    except OSError as e:
        raise TagFileError(f"cannot read {path}: {e}") from e
    header = text.split("\n", 1)[0].strip()
    if header != CSV_HEADER:
        raise TagFileError(f"expected header {CSV_HEADER!r}, got {header!r}", 1)
    try:
        with warnings.catch_warnings():
            # Header-only files are valid empty streams.
            warnings.simplefilter("ignore", UserWarning)
            table = np.loadtxt(
                io.StringIO(text), delimiter=",", skiprows=1, dtype=np.int64, ndmin=2
            )
    except ValueError:
        raise _locate_bad_line(text) from None
    if table.size and (
        table.shape[1] != 2 or np.any((table[:, 0] < 0) | (table[:, 0] > MAX_CHANNEL))
    ):
        raise _locate_bad_line(text)
    if table.size == 0:
        table = np.zeros((0, 2), dtype=np.int64)

    meta = metadata_path(path)
    try:
        with open(meta) as f:
            doc = json.load(f)
    except OSError as e:
        raise TagFileError(f"missing metadata sidecar {meta}: {e}") from e
    except json.JSONDecodeError as e:
        raise TagFileError(f"{meta}: {e.msg}", e.lineno) from e
    metadata = TagMetadata.from_json(doc)
    return TagStream(table[:, 0].astype(np.int16), table[:, 1].copy(), metadata)


def file_digest(path: PathLike) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

"""The repeating sequence of prepared states sent by the transmitter."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .exceptions import DomainError


class StateLabel(str, Enum):
    Z0 = "Z0"
    Z1 = "Z1"
    X_PLUS = "X+"
    VAC = "vac"


@dataclass(frozen=True)
class Segment:
    """One shutter state held for ``duration`` seconds at ``rate`` photons/s."""

    state: StateLabel
    duration: float
    rate: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "state", StateLabel(self.state))
        if not self.duration > 0:
            raise DomainError(f"segment duration must be > 0, got {self.duration}")
        if not self.rate >= 0:
            raise DomainError(f"segment rate must be >= 0, got {self.rate}")

    def to_json(self) -> Dict[str, Any]:
        return {
            "state": self.state.value,
            "duration_s": self.duration,
            "rate_per_s": self.rate,
        }


class Occurrence(NamedTuple):
    """A segment placed on the run timeline; ``index`` counts from the run start."""

    index: int
    segment: Segment
    start: float
    end: float


@dataclass(frozen=True)
class StateSchedule:
    """One cycle of segments, repeated back to back for the length of a run."""

    segments: Tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise DomainError("schedule needs at least one segment")

    @classmethod
    def from_json(cls, items: Sequence[Dict[str, Any]]) -> "StateSchedule":
        return cls(
            tuple(
                Segment(
                    StateLabel(item["state"]),
                    float(item["duration_s"]),
                    float(item["rate_per_s"]),
                )
                for item in items
            )
        )

    def to_json(self) -> List[Dict[str, Any]]:
        return [segment.to_json() for segment in self.segments]

    @property
    def cycle(self) -> float:
        return sum(segment.duration for segment in self.segments)

    def occurrences(self, run_duration: float) -> Iterator[Occurrence]:
        """Segments laid out over ``[0, run_duration)``, the last one truncated."""
        index = 0
        start = 0.0
        while start < run_duration:
            for segment in self.segments:
                if start >= run_duration:
                    return
                end = min(start + segment.duration, run_duration)
                yield Occurrence(index, segment, start, end)
                index += 1
                start = end

    def segment_index_at(self, times: NDArray[np.float64]) -> NDArray[np.int64]:
        """Position within the cycle of the segment active at each time (s)."""
        edges = np.cumsum([0.0] + [segment.duration for segment in self.segments])
        phase = np.mod(np.asarray(times, dtype=float), self.cycle)
        idx = np.searchsorted(edges, phase, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1).astype(np.int64)

"""
Moving-platform and free-space channel effects on frequency-bin qubits.

The relative phase between the two bins picks up the propagation phase
``Δω(1 + Ṙ/c)R/c`` of a platform at range ``R(t)``; its time derivative sets
how fast a receiver has to track the phase. Without a time reference the
measurement is averaged over a window and the bin coherence washes out.
"""

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import PchipInterpolator

from .constants import SPEED_OF_LIGHT
from .exceptions import DomainError
from .qstate import BinPair, FBinQubit, FloatOrArray, VisibilityFactors

#: Phase-tracking sensitivity of satellite links per degree of freedom.
#: Only the frequency-bin row is computed by :func:`phase_change_rate`; the
#: others are reported values.
COMPARISON_TABLE: Dict[str, Tuple[str, str]] = {
    "polarization": ("<1 Hz", "Polarization reference + control"),
    "time-bin": ("<1 Hz", "Phase modulation"),
    "frequency-bin": ("~5 kHz", "GPS + fast phase modulation"),
}


class TrajectoryMode(str, Enum):
    STATIC = "static"
    LINEAR = "linear"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class PlatformTrajectory:
    """
    Source-to-receiver range as a function of time.

    ``static`` keeps ``r0``; ``linear`` is ``r0 + v·t``; ``sampled`` interpolates
    ``(t, R)`` samples with a monotone cubic and differentiates numerically.
    """

    mode: TrajectoryMode = TrajectoryMode.STATIC
    v: float = 0.0
    r0: float = 0.0
    times: Tuple[float, ...] = ()
    ranges: Tuple[float, ...] = ()
    _interp: Optional[PchipInterpolator] = field(
        init=False, default=None, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", TrajectoryMode(self.mode))
        if self.mode is TrajectoryMode.SAMPLED:
            t = np.asarray(self.times, dtype=float)
            r = np.asarray(self.ranges, dtype=float)
            if t.size < 2 or t.shape != r.shape:
                raise DomainError(
                    "sampled trajectory needs >= 2 matching (t, R) samples"
                )
            if np.any(np.diff(t) <= 0):
                raise DomainError(
                    "sampled trajectory times must be strictly increasing"
                )
            if np.any(r < 0):
                raise DomainError("sampled trajectory ranges must be >= 0")
            interp = PchipInterpolator(t, r, extrapolate=False)
            object.__setattr__(self, "_interp", interp)
        elif self.r0 < 0:
            raise DomainError(f"r0 must be >= 0, got {self.r0}")
        if abs(self.v) >= SPEED_OF_LIGHT:
            raise DomainError("platform speed must stay below c")

    @classmethod
    def static(cls, r0: float) -> "PlatformTrajectory":
        return cls(TrajectoryMode.STATIC, r0=r0)

    @classmethod
    def linear(cls, v: float, r0: float = 0.0) -> "PlatformTrajectory":
        return cls(TrajectoryMode.LINEAR, v=v, r0=r0)

    @classmethod
    def sampled(
        cls, times: Sequence[float], ranges: Sequence[float]
    ) -> "PlatformTrajectory":
        return cls(
            TrajectoryMode.SAMPLED,
            times=tuple(float(x) for x in times),
            ranges=tuple(float(x) for x in ranges),
        )

    @property
    def span(self) -> Tuple[float, float]:
        """Time interval on which the trajectory is defined."""
        if self.mode is TrajectoryMode.SAMPLED:
            return self.times[0], self.times[-1]
        return -math.inf, math.inf

    def _check_domain(self, t: NDArray[np.float64]) -> None:
        lo, hi = self.span
        if np.any((t < lo) | (t > hi)):
            raise DomainError(f"time outside sampled trajectory span [{lo}, {hi}] s")

    def range_at(self, t: FloatOrArray) -> FloatOrArray:
        """``R(t)`` in meters."""
        t_arr = np.asarray(t, dtype=float)
        if self.mode is TrajectoryMode.STATIC:
            r = np.full_like(t_arr, self.r0)
        elif self.mode is TrajectoryMode.LINEAR:
            r = self.r0 + self.v * t_arr
        else:
            self._check_domain(t_arr)
            assert self._interp is not None
            r = np.asarray(self._interp(t_arr), dtype=float)
        return r if np.ndim(t) else float(r)

    def _local_step(self, t: NDArray[np.float64]) -> NDArray[np.float64]:
        times = np.asarray(self.times)
        idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
        return np.diff(times)[idx]

    def range_rate_at(
        self, t: FloatOrArray
    ) -> Tuple[FloatOrArray, Union[bool, NDArray[np.bool_]]]:
        """``dR/dt`` (m/s) and whether a one-sided difference had to be used."""
        t_arr = np.asarray(t, dtype=float)
        if self.mode is TrajectoryMode.SAMPLED:
            rate, one_sided = _derivative(
                self.range_at, t_arr, self._local_step(t_arr), self.span
            )
        else:
            velocity = 0.0 if self.mode is TrajectoryMode.STATIC else self.v
            rate = np.full_like(t_arr, velocity)
            one_sided = np.zeros(t_arr.shape, dtype=bool)
        if np.ndim(t):
            return rate, one_sided
        return float(rate), bool(one_sided)


def _derivative(
    fn: Any,
    t: NDArray[np.float64],
    step: NDArray[np.float64],
    span: Tuple[float, float],
) -> Tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Centered difference, one-sided where the stencil leaves ``span``."""
    lo, hi = span
    lower = t - step
    upper = t + step
    below = lower < lo
    above = upper > hi
    lower = np.where(below, t, lower)
    upper = np.where(above, t, upper)
    rate = (np.asarray(fn(upper)) - np.asarray(fn(lower))) / (upper - lower)
    return rate, below | above


@dataclass(frozen=True)
class ChannelConfig:
    """Everything the channel contributes to a link."""

    trajectory: PlatformTrajectory = field(
        default_factory=lambda: PlatformTrajectory.static(2.0)
    )
    attenuation_db: float = 0.0
    factors: VisibilityFactors = field(default_factory=VisibilityFactors)

    def __post_init__(self) -> None:
        if self.attenuation_db < 0:
            raise DomainError(
                f"attenuation_db must be >= 0, got {self.attenuation_db}"
            )

    @property
    def transmission(self) -> float:
        """Power transmission; loss only scales event rates, never amplitudes."""
        return 10.0 ** (-self.attenuation_db / 10.0)


@dataclass(frozen=True)
class DephasedState:
    """Diagonal populations and the surviving off-diagonal element of a qubit."""

    p0: float
    p1: float
    coherence: complex

    def __post_init__(self) -> None:
        if abs(self.coherence) > math.sqrt(self.p0 * self.p1) + 1e-12:
            raise DomainError("coherence exceeds sqrt(p0*p1)")

    @property
    def density_matrix(self) -> NDArray[np.complex128]:
        return np.array(
            [[self.p0, self.coherence], [self.coherence.conjugate(), self.p1]],
            dtype=complex,
        )


class PhaseRate(NamedTuple):
    hz: FloatOrArray
    one_sided: Union[bool, NDArray[np.bool_]]


def doppler_shift(omega: FloatOrArray, v: float) -> FloatOrArray:
    """Relativistic longitudinal Doppler shift of ``omega`` for radial speed ``v``."""
    if abs(v) >= SPEED_OF_LIGHT:
        raise DomainError(f"|v| must be below c, got {v}")
    factor = math.sqrt((SPEED_OF_LIGHT + v) / (SPEED_OF_LIGHT - v))
    return omega * factor


def phase_of_flight(
    pair: BinPair, traj: PlatformTrajectory, t: FloatOrArray
) -> FloatOrArray:
    """Relative bin phase ``Δω(1 + Ṙ/c)·R/c`` accumulated over the path (rad)."""
    r = np.asarray(traj.range_at(t))
    r_dot, _ = traj.range_rate_at(t)
    beta = np.asarray(r_dot) / SPEED_OF_LIGHT
    phase = pair.delta_omega * (1.0 + beta) * r / SPEED_OF_LIGHT
    return phase if np.ndim(t) else float(phase)


def phase_change_rate(
    pair: BinPair, traj: PlatformTrajectory, t: FloatOrArray
) -> PhaseRate:
    """Rate ``(1/2π)·dΔφ/dt`` (Hz) at which a receiver must track the bin phase."""
    t_arr = np.asarray(t, dtype=float)
    if traj.mode is TrajectoryMode.SAMPLED:
        hz, one_sided = _derivative(
            lambda x: phase_of_flight(pair, traj, x),
            t_arr,
            traj._local_step(t_arr),
            traj.span,
        )
        hz = hz / (2.0 * math.pi)
        if np.any(one_sided):
            warnings.warn(
                "phase change rate uses one-sided differences at trajectory edges"
            )
    else:
        # d/dt [Δω (1 + v/c) (r0 + v t) / c] with constant v.
        v = traj.v if traj.mode is TrajectoryMode.LINEAR else 0.0
        beta = v / SPEED_OF_LIGHT
        rate = pair.delta_omega * (1.0 + beta) * beta / (2.0 * math.pi)
        hz = np.full_like(t_arr, rate)
        one_sided = np.zeros(t_arr.shape, dtype=bool)
    if np.ndim(t):
        return PhaseRate(hz, one_sided)
    return PhaseRate(float(hz), bool(one_sided))


def coherence_factor(delta_omega: FloatOrArray, t_r: FloatOrArray) -> FloatOrArray:
    """``sin(Δω·T_r)/(Δω·T_r)``, the coherence left after averaging over ±T_r."""
    if np.any(np.asarray(t_r) < 0):
        raise DomainError("t_r must be >= 0")
    x = np.asarray(delta_omega, dtype=float) * np.asarray(t_r, dtype=float)
    factor = np.sinc(x / math.pi)
    return factor if np.ndim(factor) else float(factor)


def dephase_by_reference_window(q: FBinQubit, t_r: float) -> DephasedState:
    """Average the measurement projector over a time-reference uncertainty ``T_r``."""
    p0, p1 = q.populations
    factor = float(coherence_factor(q.pair.delta_omega, t_r))
    return DephasedState(p0, p1, q.a0 * q.a1.conjugate() * factor)


def dephasing_map(q: FBinQubit) -> DephasedState:
    """The completely dephasing limit ``T_r → ∞``."""
    p0, p1 = q.populations
    return DephasedState(p0, p1, 0j)


def compensation_fidelity(
    delta_omega: float, timing_error: FloatOrArray
) -> FloatOrArray:
    """Fidelity of an equator state compensated with a mistimed reference."""
    if np.any(np.asarray(timing_error) < 0):
        raise DomainError("timing_error must be >= 0")
    fidelity = np.cos(delta_omega * np.asarray(timing_error, dtype=float) / 2.0) ** 2
    return fidelity if np.ndim(fidelity) else float(fidelity)


def timing_budget(delta_omega: float, target_fidelity: float) -> float:
    """Largest timing error (s) that keeps :func:`compensation_fidelity` >= target."""
    if not 0.0 <= target_fidelity <= 1.0:
        raise DomainError("target fidelity must lie in [0, 1]")
    if delta_omega <= 0:
        raise DomainError("delta_omega must be > 0")
    return 2.0 * math.acos(math.sqrt(target_fidelity)) / delta_omega


def load_trajectory_csv(path: Union[str, "os.PathLike[str]"]) -> PlatformTrajectory:
    """Read a ``t_s,range_m`` CSV into a sampled trajectory."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DomainError(f"cannot read {path}: {e.strerror}") from None
    if not rows or [h.strip() for h in rows[0]] != ["t_s", "range_m"]:
        raise DomainError(f"{path}:1: expected header 't_s,range_m'")
    times, ranges = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            t, r = (float(x) for x in row)
        except ValueError:
            raise DomainError(
                f"{path}:{lineno}: expected two numbers, got {row}"
            ) from None
        if times and t <= times[-1]:
            raise DomainError(f"{path}:{lineno}: time not strictly increasing")
        times.append(t)
        ranges.append(r)
    return PlatformTrajectory.sampled(times, ranges)

"""
Field-widened unbalanced Mach-Zehnder analyzer.

In the Z basis both arms are open and the path difference ``ΔL`` routes the
two bins to opposite output ports. In the X basis the long arm is blocked and
the detector sees the beat note of the transmitted superposition. Field
widening is modeled only through the visibility factors: they do not depend on
the spatial mode or angle of the incoming beam.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .constants import SPEED_OF_LIGHT
from .exceptions import DomainError
from .qstate import (
    BinPair,
    EnvelopeMode,
    FBinQubit,
    FloatOrArray,
    VisibilityFactors,
    beat_signal,
)

# Tolerance on the port distribution summing to one.
PORT_SUM_TOLERANCE = 1e-12


class Basis(str, Enum):
    Z = "Z"
    X = "X"


@dataclass(frozen=True)
class MziConfig:
    """
    Static analyzer setting for one run.

    ``omega_ref`` is the bin routed constructively to port 0 when
    ``phase_align`` is zero.
    """

    delta_l: float
    v_z_eps: float = 1.0
    basis: Basis = Basis.Z
    omega_ref: float = 0.0
    phase_align: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "basis", Basis(self.basis))
        if not self.delta_l > 0:
            raise DomainError(f"delta_l must be > 0, got {self.delta_l}")
        if not 0.0 <= self.v_z_eps <= 1.0:
            raise DomainError(f"v_z_eps must lie in [0, 1], got {self.v_z_eps}")

    @classmethod
    def for_pair(
        cls,
        pair: BinPair,
        v_z_eps: float = 1.0,
        basis: Basis = Basis.Z,
        phase_align: float = 0.0,
    ) -> "MziConfig":
        """An analyzer whose path difference demultiplexes ``pair``."""
        return cls(
            required_path_difference(pair.delta_omega),
            v_z_eps,
            basis,
            pair.bin0.omega_center,
            phase_align,
        )


@dataclass(frozen=True)
class PortDistribution:
    p_port0: float
    p_port1: float

    def __post_init__(self) -> None:
        total = self.p_port0 + self.p_port1
        if abs(total - 1.0) > PORT_SUM_TOLERANCE:
            raise DomainError(f"port probabilities sum to {total}, not 1")

    @property
    def majority_port(self) -> int:
        return 0 if self.p_port0 >= self.p_port1 else 1

    def __getitem__(self, port: int) -> float:
        return (self.p_port0, self.p_port1)[port]


def demux_spacing(delta_l: float) -> float:
    """Bin spacing (rad/s) demultiplexed by a path difference ``delta_l`` (m)."""
    if not delta_l > 0:
        raise DomainError(f"delta_l must be > 0, got {delta_l}")
    return math.pi * SPEED_OF_LIGHT / delta_l


def required_path_difference(delta_omega: float) -> float:
    """Path difference (m) that demultiplexes bins ``delta_omega`` apart."""
    if not delta_omega > 0:
        raise DomainError(f"delta_omega must be > 0, got {delta_omega}")
    return math.pi * SPEED_OF_LIGHT / delta_omega


def _require(cfg: MziConfig, basis: Basis) -> None:
    if cfg.basis is not basis:
        raise DomainError(f"analyzer is set to the {cfg.basis.value} basis")


def z_basis_ports(
    omega: float, cfg: MziConfig, v_z_eps: Optional[float] = None
) -> PortDistribution:
    """
    Output port probabilities for a monochromatic input at ``omega``.

    ``v_z_eps`` overrides the analyzer's own value, which lets callers model
    bin-dependent leakage.
    """
    _require(cfg, Basis.Z)
    visibility = cfg.v_z_eps if v_z_eps is None else v_z_eps
    phase = (omega - cfg.omega_ref) * cfg.delta_l / SPEED_OF_LIGHT + cfg.phase_align
    p0 = 0.5 * (1.0 + visibility * math.cos(phase))
    return PortDistribution(p0, 1.0 - p0)


def route(omega: float, cfg: MziConfig) -> int:
    """Majority output port for ``omega``."""
    return z_basis_ports(omega, cfg).majority_port


def state_ports(
    q: FBinQubit, cfg: MziConfig, v_z_eps_bins: Optional[Sequence[float]] = None
) -> PortDistribution:
    """Time-averaged Z-basis port distribution of an arbitrary qubit."""
    bins = (q.pair.bin0.omega_center, q.pair.bin1.omega_center)
    overrides = list(v_z_eps_bins) if v_z_eps_bins is not None else [None, None]
    p0 = 0.0
    for population, omega, v in zip(q.populations, bins, overrides):
        if population:
            p0 += population * z_basis_ports(omega, cfg, v).p_port0
    return PortDistribution(p0, 1.0 - p0)


def x_basis_ports(cfg: MziConfig) -> PortDistribution:
    """With the long arm blocked every photon reaches the port-0 detector."""
    _require(cfg, Basis.X)
    return PortDistribution(1.0, 0.0)


def x_basis_rate(
    q: FBinQubit,
    f: VisibilityFactors,
    t: FloatOrArray,
    cfg: Optional[MziConfig] = None,
    mode: EnvelopeMode = EnvelopeMode.AS_PRINTED,
    phase_offset: FloatOrArray = 0.0,
) -> FloatOrArray:
    """Relative detection rate behind the blocked-arm analyzer at time ``t``."""
    if cfg is not None:
        _require(cfg, Basis.X)
    return beat_signal(q, f, t, mode, phase_offset)

"""
Frequency-bin state algebra and closed-form beat / visibility models.

A qubit lives on an ordered pair of spectral modes (:class:`BinPair`). Its
superposition produces an intensity beat at the bin separation, whose contrast
is limited by the amplitude balance, experimental imperfections, the bin
bandwidths and the timing jitter of the detection system. All functions here
are pure and accept either scalars or numpy arrays for times and spacings.
"""

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .constants import FWHM_PER_SIGMA, SPEED_OF_LIGHT
from .exceptions import DomainError

FloatOrArray = Union[float, NDArray[np.float64]]

# Tolerance on the qubit normalization invariant.
NORM_TOLERANCE = 1e-12


class JitterConvention(str, Enum):
    """How a quoted (FWHM) jitter figure enters the Gaussian jitter model.

    ``FWHM`` uses the figure directly as the width of the Gaussian weight, the
    reading under which tabulated FWHM resolutions reproduce measured beat
    visibilities. ``STANDARD_DEVIATION`` converts it to the Gaussian standard
    deviation first.
    """

    FWHM = "fwhm"
    STANDARD_DEVIATION = "standard-deviation"


class EnvelopeMode(str, Enum):
    """Which bandwidth envelope :func:`beat_contrast` applies."""

    AS_PRINTED = "as-printed"
    ORACLE = "oracle"


@dataclass(frozen=True)
class FrequencyBin:
    """One spectral mode: center angular frequency and Gaussian bandwidth (rad/s)."""

    omega_center: float
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not self.omega_center > 0:
            raise DomainError(f"omega_center must be > 0, got {self.omega_center}")
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")

    def shifted(self, omega: float) -> "FrequencyBin":
        """Return the same mode translated by ``omega``."""
        return FrequencyBin(self.omega_center + omega, self.sigma)


@dataclass(frozen=True)
class BinPair:
    """The ordered pair of modes encoding logical 0 and 1.

    ``spacing`` keeps the bin separation exactly as it was given. Without it
    the separation is the difference of the two centers, which loses the low
    digits of a GHz spacing next to an optical carrier.
    """

    bin0: FrequencyBin
    bin1: FrequencyBin
    spacing: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.bin1.omega_center > self.bin0.omega_center:
            raise DomainError("bin1 must lie above bin0 in frequency")
        if self.spacing is not None:
            difference = self.bin1.omega_center - self.bin0.omega_center
            tol = 4.0 * float(np.spacing(self.bin1.omega_center))
            if not abs(self.spacing - difference) <= tol:
                raise DomainError(
                    f"spacing {self.spacing} does not match the bin centers"
                    f" ({difference} apart)"
                )

    @classmethod
    def from_spacing(
        cls, omega0: float, delta_omega: float, sigma: float = 0.0
    ) -> "BinPair":
        """Build a pair of equal-bandwidth bins separated by ``delta_omega``."""
        return cls(
            FrequencyBin(omega0, sigma),
            FrequencyBin(omega0 + delta_omega, sigma),
            delta_omega,
        )

    def with_spacing(self, delta_omega: float) -> "BinPair":
        """The same bins with ``bin1`` moved to ``delta_omega`` above ``bin0``."""
        bin1 = FrequencyBin(self.bin0.omega_center + delta_omega, self.bin1.sigma)
        return BinPair(self.bin0, bin1, delta_omega)

    @property
    def delta_omega(self) -> float:
        if self.spacing is not None:
            return self.spacing
        return self.bin1.omega_center - self.bin0.omega_center

    @property
    def beat_period(self) -> float:
        """Period of the beat note in seconds."""
        return 2.0 * math.pi / self.delta_omega


@dataclass(frozen=True)
class FBinQubit:
    """A two-bin superposition ``a0|ω0⟩ + a1|ω1⟩``.

    Amplitudes are renormalized on construction; the factor applied is kept in
    :attr:`norm_factor` so callers may pass plain ratios.
    """

    pair: BinPair
    a0: complex
    a1: complex
    norm_factor: float = field(init=False, default=1.0)

    def __post_init__(self) -> None:
        norm = math.sqrt(abs(self.a0) ** 2 + abs(self.a1) ** 2)
        if norm == 0.0:
            raise DomainError("cannot build a qubit from the zero vector")
        object.__setattr__(self, "a0", complex(self.a0) / norm)
        object.__setattr__(self, "a1", complex(self.a1) / norm)
        object.__setattr__(self, "norm_factor", 1.0 / norm)

    @classmethod
    def zero(cls, pair: BinPair) -> "FBinQubit":
        return cls(pair, 1.0, 0.0)

    @classmethod
    def one(cls, pair: BinPair) -> "FBinQubit":
        return cls(pair, 0.0, 1.0)

    @classmethod
    def plus(cls, pair: BinPair) -> "FBinQubit":
        return cls(pair, 1.0, 1.0)

    @classmethod
    def from_label(cls, pair: BinPair, label: str) -> "FBinQubit":
        """Basis state for a schedule label: ``Z0``, ``Z1``, ``X+`` or ``X-``."""
        amplitudes = {
            "Z0": (1.0, 0.0),
            "Z1": (0.0, 1.0),
            "X+": (1.0, 1.0),
            "X-": (1.0, -1.0),
        }
        try:
            a0, a1 = amplitudes[label]
        except KeyError:
            raise DomainError(f"no qubit state for label {label!r}") from None
        return cls(pair, a0, a1)

    @property
    def populations(self) -> Tuple[float, float]:
        return abs(self.a0) ** 2, abs(self.a1) ** 2

    @property
    def relative_phase(self) -> float:
        """Phase of ``a1`` relative to ``a0`` (0 when either amplitude vanishes)."""
        if self.a0 == 0 or self.a1 == 0:
            return 0.0
        return cmath.phase(self.a1 * self.a0.conjugate())


@dataclass(frozen=True)
class VisibilityFactors:
    """Visibility lost to mode mismatch and imperfections, per basis."""

    v_x_eps: float = 1.0
    v_z_eps: float = 1.0

    def __post_init__(self) -> None:
        for name in ("v_x_eps", "v_z_eps"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}")

    def combined(self, other: "VisibilityFactors") -> "VisibilityFactors":
        """Chain two independent imperfection sources."""
        return VisibilityFactors(
            self.v_x_eps * other.v_x_eps, self.v_z_eps * other.v_z_eps
        )


@dataclass(frozen=True)
class Curve:
    """Sampled visibility curve, ``abscissa`` in SI units."""

    abscissa: NDArray[np.float64]
    visibility: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.abscissa)


def _bins(
    pair: Union[BinPair, Tuple[FrequencyBin, FrequencyBin]]
) -> Tuple[FrequencyBin, FrequencyBin]:
    if isinstance(pair, BinPair):
        return pair.bin0, pair.bin1
    return pair[0], pair[1]


def bin_overlap(pair: Union[BinPair, Tuple[FrequencyBin, FrequencyBin]]) -> float:
    """
    Inner product ``⟨ω0|ω1⟩`` of two Gaussian frequency modes.

    Accepts a :class:`BinPair` or any two bins (coincident centers included).
    Zero-bandwidth bins are delta functions: identical ones overlap fully,
    distinct ones not at all.
    """
    bin0, bin1 = _bins(pair)
    s0, s1 = bin0.sigma, bin1.sigma
    delta = bin1.omega_center - bin0.omega_center
    spread = s0**2 + s1**2
    if spread == 0.0:
        return 1.0 if delta == 0.0 else 0.0
    return math.sqrt(2.0 * s0 * s1 / spread) * math.exp(-(delta**2) / (4.0 * spread))


def logical_overlap_negligible(pair: BinPair, tol: float = 1e-6) -> bool:
    """Whether the bins are orthogonal enough to act as logical 0 and 1."""
    return bin_overlap(pair) <= tol


def beat_visibility_x(q: FBinQubit, f: VisibilityFactors) -> float:
    """Monochromatic beat visibility of ``q`` measured in the X basis."""
    p0, p1 = q.populations
    return 2.0 * abs(q.a0 * q.a1) / (p0 + p1) * f.v_x_eps


def _printed_envelope(pair: BinPair, t: NDArray[np.float64]) -> NDArray[np.float64]:
    s0, s1 = pair.bin0.sigma, pair.bin1.sigma
    if s0 == 0.0 and s1 == 0.0:
        return np.ones_like(t)
    num = math.sqrt(2.0 * s0 * s1) * np.exp(-(t**2) * (s0**2 + s1**2))
    den = s0 * np.exp(-2.0 * t**2 * s0**2) + s1 * np.exp(-2.0 * t**2 * s1**2)
    out = np.zeros_like(t)
    np.divide(num, den, out=out, where=den > 0)
    return out


def packet_amplitude(sigma: float, t: float) -> float:
    """
    Magnitude of ``∫dμ φ(μ) e^{i(μ-ω)t}`` for a Gaussian mode, by quadrature.

    This is the time-domain field amplitude of the wave packet relative to its
    carrier; the closed form is ``(8πσ²)^{1/4} exp(-σ²t²)``.
    """
    if sigma == 0.0:
        return 1.0
    scaled = sigma * abs(t)
    if scaled > 40.0:
        return 0.0
    value, _ = integrate.quad(
        lambda u: math.exp(-(u**2) / 4.0) * math.cos(u * scaled),
        -40.0,
        40.0,
        limit=400,
    )
    return (2.0 * math.pi * sigma**2) ** -0.25 * sigma * value


# Above this many times the packet amplitudes are tabulated and interpolated.
DIRECT_QUADRATURE_LIMIT = 256


def _packet_amplitudes(sigma: float, t: NDArray[np.float64]) -> NDArray[np.float64]:
    scaled = np.abs(t)
    reach = min(float(scaled.max(initial=0.0)), 40.0 / sigma)
    if scaled.size <= DIRECT_QUADRATURE_LIMIT or reach == 0.0:
        values = [packet_amplitude(sigma, ti) for ti in scaled.flat]
        return np.array(values, dtype=float).reshape(t.shape)
    grid = np.linspace(0.0, reach, 2049)
    table = np.array([packet_amplitude(sigma, ti) for ti in grid])
    out = np.zeros_like(scaled)
    inside = scaled <= reach
    out[inside] = PchipInterpolator(grid, table)(scaled[inside])
    return out


def _oracle_contrast(q: FBinQubit, t: NDArray[np.float64]) -> NDArray[np.float64]:
    s0, s1 = q.pair.bin0.sigma, q.pair.bin1.sigma
    p0, p1 = q.populations
    cross = 2.0 * abs(q.a0 * q.a1)
    if s0 == 0.0 and s1 == 0.0:
        return np.full_like(t, cross / (p0 + p1))
    if s0 == 0.0 or s1 == 0.0:
        # A delta-function bin has no peak intensity next to a finite packet.
        return np.zeros_like(t)
    c0 = _packet_amplitudes(s0, t)
    c1 = _packet_amplitudes(s1, t)
    dc = p0 * c0**2 + p1 * c1**2
    out = np.zeros_like(t)
    np.divide(cross * c0 * c1, dc, out=out, where=dc > 0)
    return out


def beat_contrast(
    q: FBinQubit,
    f: VisibilityFactors,
    t: FloatOrArray,
    mode: EnvelopeMode = EnvelopeMode.AS_PRINTED,
) -> FloatOrArray:
    """Time-dependent beat visibility ``v_X'(t)`` including the bandwidth envelope."""
    t_arr = np.asarray(t, dtype=float)
    if EnvelopeMode(mode) is EnvelopeMode.ORACLE:
        contrast = f.v_x_eps * _oracle_contrast(q, t_arr)
    else:
        contrast = beat_visibility_x(q, f) * _printed_envelope(q.pair, t_arr)
    return contrast if np.ndim(t) else float(contrast)


def envelope_discrepancy(pair: BinPair) -> float:
    """Ratio of the printed envelope to the quadrature result at ``t = 0``.

    Equals ``1/√2`` for equal, non-zero bandwidths.
    """
    q = FBinQubit.plus(pair)
    f = VisibilityFactors()
    oracle = float(beat_contrast(q, f, 0.0, EnvelopeMode.ORACLE))
    printed = float(beat_contrast(q, f, 0.0, EnvelopeMode.AS_PRINTED))
    return printed / oracle if oracle else math.nan


def beat_signal(
    q: FBinQubit,
    f: VisibilityFactors,
    t: FloatOrArray,
    mode: EnvelopeMode = EnvelopeMode.AS_PRINTED,
    phase_offset: FloatOrArray = 0.0,
) -> FloatOrArray:
    """
    Normalized direct-detection intensity ``½(1 + v_X'(t)·cos(Δω t + φ))``.

    ``phase_offset`` is added to the beat phase, e.g. the flight phase of a
    moving platform sampled at the same times.
    """
    t_arr = np.asarray(t, dtype=float)
    contrast = np.asarray(beat_contrast(q, f, t_arr, mode))
    phase = q.pair.delta_omega * t_arr + q.relative_phase + phase_offset
    signal = 0.5 * (1.0 + contrast * np.cos(phase))
    return signal if np.ndim(signal) else float(signal)


def visibility_z(pair: BinPair, f: VisibilityFactors) -> float:
    """Demultiplexing visibility including the bin bandwidth penalty."""
    spread = pair.bin0.sigma**2 + pair.bin1.sigma**2
    return f.v_z_eps * math.exp(-2.0 * math.pi**4 * spread / pair.delta_omega**2)


def bandwidth_phase_spread(pair: BinPair, delta_l: float) -> Tuple[float, float, float]:
    """Per-bin interferometer phase spreads and their quadrature total (rad)."""
    dphi0 = 2.0 * math.pi * pair.bin0.sigma * delta_l / SPEED_OF_LIGHT
    dphi1 = 2.0 * math.pi * pair.bin1.sigma * delta_l / SPEED_OF_LIGHT
    return dphi0, dphi1, math.hypot(dphi0, dphi1)


def jitter_sigma(
    delta_t: FloatOrArray, convention: JitterConvention = JitterConvention.FWHM
) -> FloatOrArray:
    """Width of the Gaussian timing weight for a quoted FWHM jitter ``delta_t`` (s)."""
    if JitterConvention(convention) is JitterConvention.STANDARD_DEVIATION:
        return delta_t / FWHM_PER_SIGMA
    return delta_t


def jitter_visibility(
    v0: float,
    delta_omega: FloatOrArray,
    delta_t: FloatOrArray,
    convention: JitterConvention = JitterConvention.FWHM,
) -> FloatOrArray:
    """
    Beat visibility after convolution with Gaussian timing jitter.

    ``delta_t`` is the total system jitter (components already added in
    quadrature) quoted as a FWHM; ``convention`` decides how it maps to the
    Gaussian width.
    """
    if not 0.0 <= v0 <= 1.0:
        raise DomainError(f"v0 must lie in [0, 1], got {v0}")
    if np.any(np.asarray(delta_t) < 0):
        raise DomainError("delta_t must be >= 0")
    width = jitter_sigma(np.asarray(delta_t, dtype=float), convention)
    result = v0 * np.exp(-((np.asarray(delta_omega, dtype=float) * width) ** 2) / 2.0)
    return result if np.ndim(result) else float(result)


def _checked_range(values: Sequence[float], name: str) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional")
    if arr.size and (np.any(arr < 0) or np.any(np.diff(arr) < 0)):
        raise DomainError(f"{name} must be non-negative and sorted")
    return arr


def visibility_vs_spacing_curve(
    v0: float,
    delta_t: float,
    omega_range: Sequence[float],
    convention: JitterConvention = JitterConvention.FWHM,
) -> Curve:
    """Jitter-limited visibility as a function of bin spacing, at fixed jitter."""
    omegas = _checked_range(omega_range, "omega_range")
    return Curve(omegas, np.asarray(jitter_visibility(v0, omegas, delta_t, convention)))


def visibility_vs_jitter_curve(
    v0: float,
    delta_omega: float,
    jitter_range: Sequence[float],
    convention: JitterConvention = JitterConvention.FWHM,
) -> Curve:
    """Jitter-limited visibility as a function of system jitter, at fixed spacing."""
    jitters = _checked_range(jitter_range, "jitter_range")
    return Curve(
        jitters, np.asarray(jitter_visibility(v0, delta_omega, jitters, convention))
    )


def max_resolvable_spacing(
    v0: float,
    delta_t: float,
    v_min: float,
    convention: JitterConvention = JitterConvention.FWHM,
) -> float:
    """Largest bin spacing (rad/s) keeping the jitter-limited visibility >= v_min."""
    if not 0.0 < v_min <= v0:
        raise DomainError("need 0 < v_min <= v0")
    width = float(jitter_sigma(delta_t, convention))
    if width == 0.0:
        return math.inf
    return math.sqrt(2.0 * math.log(v0 / v_min)) / width


def evolve(q: FBinQubit, t: float) -> FBinQubit:
    """Free evolution: the relative phase advances at ``Δω`` around the equator."""
    return FBinQubit(q.pair, q.a0, q.a1 * cmath.exp(1j * q.pair.delta_omega * t))


def state_fidelity(q: FBinQubit, r: FBinQubit) -> float:
    """``|⟨q|r⟩|²`` for two qubits on the same bin pair."""
    overlap = q.a0.conjugate() * r.a0 + q.a1.conjugate() * r.a1
    return abs(overlap) ** 2

"""
Monte Carlo generation of detector time tags.

Each schedule segment placed on the timeline is simulated independently with
its own RNG substream derived from ``(seed, segment index)``, so the output
does not depend on how many workers share the work. Photon arrivals follow
an inhomogeneous Poisson process sampled by thinning; each detection is then
blurred by Gaussian timing jitter and truncated to the tagger grid.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .channel import ChannelConfig, phase_of_flight
from .constants import PS_PER_S
from .exceptions import ConfigError, DomainError
from .qstate import (
    BinPair,
    EnvelopeMode,
    FBinQubit,
    JitterConvention,
    VisibilityFactors,
    jitter_sigma,
    visibility_z,
)
from .receiver import Basis, MziConfig, state_ports, x_basis_rate
from .schedule import Occurrence, StateLabel, StateSchedule
from .tagstream import (
    MARKER_CHANNEL,
    PORT_CHANNELS,
    TagMetadata,
    TagStream,
    as_fraction,
)

log = logging.getLogger(__name__)

# Tolerance on the number of beat periods per marker period being an integer.
COMMENSURABILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DetectorModel:
    """One detector channel; times in seconds."""

    name: str
    jitter_fwhm: float = 0.0
    efficiency: float = 1.0
    dark_rate: float = 0.0
    dead_time: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter_fwhm < 0:
            raise DomainError(f"{self.name}: jitter_fwhm must be >= 0")
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError(f"{self.name}: efficiency must lie in [0, 1]")
        if self.dark_rate < 0:
            raise DomainError(f"{self.name}: dark_rate must be >= 0")
        if self.dead_time < 0:
            raise DomainError(f"{self.name}: dead_time must be >= 0")


@dataclass(frozen=True)
class TaggerModel:
    """
    Time tagger: bin quantum and marker period in picoseconds.

    ``jitter_fwhm`` (seconds) is the tagger's own timing jitter; the bin quantum
    enters only through quantization.
    """

    resolution_ps: Fraction = Fraction(625, 8)
    marker_period_ps: int = 2_000_000
    marker_channel: int = MARKER_CHANNEL
    jitter_fwhm: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "resolution_ps", as_fraction(self.resolution_ps))
        if not self.resolution_ps > 0:
            raise DomainError("tagger resolution must be > 0")
        if not self.marker_period_ps > 0:
            raise DomainError("marker period must be > 0")
        if self.jitter_fwhm < 0:
            raise DomainError("tagger jitter_fwhm must be >= 0")

    @property
    def resolution(self) -> float:
        """Bin quantum in seconds."""
        return float(self.resolution_ps) / PS_PER_S

    @property
    def marker_period(self) -> float:
        return self.marker_period_ps / PS_PER_S


@dataclass(frozen=True)
class Scenario:
    """Everything :func:`simulate` needs for one run."""

    pair: BinPair
    receiver: MziConfig
    detectors: Tuple[DetectorModel, ...]
    schedule: StateSchedule
    tagger: TaggerModel = field(default_factory=TaggerModel)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    receiver_factors: VisibilityFactors = field(default_factory=VisibilityFactors)
    v_z_eps_bins: Optional[Tuple[float, float]] = None
    seed: int = 0
    run_duration: float = 0.0
    jitter_convention: JitterConvention = JitterConvention.FWHM
    envelope_mode: EnvelopeMode = EnvelopeMode.AS_PRINTED
    digest: str = ""

    @property
    def run_duration_ps(self) -> int:
        return int(round(self.run_duration * PS_PER_S))

    @property
    def factors(self) -> VisibilityFactors:
        return self.receiver_factors.combined(self.channel.factors)


def combine_jitter(components: Sequence[float]) -> float:
    """Total jitter of independent Gaussian contributions (quadrature sum)."""
    if any(c < 0 for c in components):
        raise DomainError("jitter components must be >= 0")
    return math.sqrt(sum(c * c for c in components))


class DetectionSystem(NamedTuple):
    """A detector/tagger pairing and the beat visibility measured with it."""

    detector: str
    detector_fwhm_ps: float
    tagger_fwhm_ps: float
    measured_visibility: float
    measured_error: float

    @property
    def system_fwhm_ps(self) -> float:
        return combine_jitter([self.detector_fwhm_ps, self.tagger_fwhm_ps])


#: Reported beat visibilities for the detection systems of the demonstration.
REFERENCE_SYSTEMS = (
    DetectionSystem("LeCroy waveRunner 640Zi", 25.0, 23.0, 0.944, 0.022),
    DetectionSystem("MPD PDM NIM output", 50.0, 78.125, 0.927, 0.027),
    DetectionSystem("MPD PDM TTL output", 250.0, 78.125, 0.870, 0.020),
    DetectionSystem("Excelitas SPCM", 350.0, 78.125, 0.770, 0.024),
)


def beats_per_marker(delta_omega: float, marker_period_ps: int) -> int:
    """Number of beat periods in one marker period; must be an integer."""
    n_beats = delta_omega * marker_period_ps / PS_PER_S / (2.0 * math.pi)
    nearest = round(n_beats)
    tol = COMMENSURABILITY_TOLERANCE
    if nearest < 1 or not math.isclose(n_beats, nearest, rel_tol=tol, abs_tol=tol):
        raise ConfigError(
            [
                "tagger.marker_period_ps: marker period spans"
                f" {n_beats:.9f} beat periods;"
                " it must be an integer multiple of 2*pi/delta_omega"
            ]
        )
    return int(nearest)


def sample_inhomogeneous(
    rate_fn: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    rate_max: float,
    t0: float,
    t1: float,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """
    Sorted arrival times on ``[t0, t1)`` of a Poisson process with intensity
    ``rate_fn``.

    Candidates are drawn from a homogeneous process at ``rate_max`` and kept
    with probability ``rate_fn(t) / rate_max``.
    """
    if rate_max <= 0 or t1 <= t0:
        return np.empty(0)
    n = rng.poisson(rate_max * (t1 - t0))
    candidates = np.sort(rng.uniform(t0, t1, size=n))
    keep = rng.random(n) * rate_max < rate_fn(candidates)
    return candidates[keep]


def quantize(
    times_ps: NDArray[np.float64], resolution_ps: Fraction
) -> NDArray[np.int64]:
    """Truncate to the tagger grid ``floor(k·resolution)`` in integer picoseconds."""
    num, den = resolution_ps.numerator, resolution_ps.denominator
    k = np.floor(times_ps * den / num).astype(np.int64)
    return (k * num) // den


def apply_dead_time(
    channels: NDArray[np.int16],
    timestamps: NDArray[np.int64],
    channel: int,
    dead_time_ps: int,
) -> NDArray[np.bool_]:
    """Mask of records surviving a non-paralyzable dead time on ``channel``."""
    keep = np.ones(timestamps.size, dtype=bool)
    if dead_time_ps <= 0:
        return keep
    last = None
    for i in np.flatnonzero(channels == channel):
        t = timestamps[i]
        if last is not None and t - last < dead_time_ps:
            keep[i] = False
        else:
            last = t
    return keep


class _SegmentSimulator:
    """
    Generates the detector records of one occurrence.

    The beat runs at the commensurate spacing ``2π·N_b/T_M`` and is evaluated
    on the time since the preceding marker, so its phase stays locked to the
    markers over arbitrarily long runs. The bandwidth envelope is evaluated on
    that same time.
    """

    def __init__(self, scenario: Scenario, n_beats: int) -> None:
        self.scenario = scenario
        self.factors = scenario.factors
        pair = scenario.pair
        bandwidth = visibility_z(pair, VisibilityFactors())
        per_bin = scenario.v_z_eps_bins or (scenario.receiver.v_z_eps,) * 2
        self.v_z_bins = tuple(v * self.factors.v_z_eps * bandwidth for v in per_bin)
        convention = scenario.jitter_convention
        tagger = scenario.tagger
        fwhm = [
            combine_jitter([d.jitter_fwhm, tagger.jitter_fwhm])
            for d in scenario.detectors
        ]
        self.jitter_ps = [float(jitter_sigma(w, convention)) * PS_PER_S for w in fwhm]
        self.transmission = scenario.channel.transmission
        self.marker_period = tagger.marker_period
        beat_omega = 2.0 * math.pi * n_beats / self.marker_period
        self.beat_pair = pair.with_spacing(beat_omega)

    def _photon_times(
        self, occ: Occurrence, rng: np.random.Generator
    ) -> List[NDArray[np.float64]]:
        """Photon detection times (s) per detector, before jitter."""
        sc = self.scenario
        n_det = len(sc.detectors)
        out = [np.empty(0) for _ in range(n_det)]
        if occ.segment.state is StateLabel.VAC or occ.segment.rate == 0:
            return out
        label = occ.segment.state.value
        if sc.receiver.basis is Basis.Z:
            q = FBinQubit.from_label(sc.pair, label)
            ports = state_ports(q, sc.receiver, self.v_z_bins)
            for k, detector in enumerate(sc.detectors[:2]):
                rate = occ.segment.rate * self.transmission * detector.efficiency
                rate *= ports[k]
                n = rng.poisson(rate * (occ.end - occ.start))
                out[k] = np.sort(rng.uniform(occ.start, occ.end, size=n))
            return out

        detector = sc.detectors[0]
        peak = occ.segment.rate * self.transmission * detector.efficiency
        q = FBinQubit.from_label(self.beat_pair, label)

        def rate_fn(t: NDArray[np.float64]) -> NDArray[np.float64]:
            flight = np.asarray(phase_of_flight(sc.pair, sc.channel.trajectory, t))
            since_marker = np.mod(t, self.marker_period)
            signal = x_basis_rate(
                q, self.factors, since_marker, sc.receiver, sc.envelope_mode, flight
            )
            return peak * np.asarray(signal)

        out[0] = sample_inhomogeneous(rate_fn, peak, occ.start, occ.end, rng)
        return out

    def __call__(
        self, occ: Occurrence
    ) -> Tuple[NDArray[np.int16], NDArray[np.int64]]:
        sc = self.scenario
        seed = np.random.SeedSequence(sc.seed, spawn_key=(occ.index,))
        rng = np.random.default_rng(seed)
        duration_ps = sc.run_duration_ps
        channels, stamps = [], []
        photon_times = self._photon_times(occ, rng)
        for k, (detector, photons) in enumerate(zip(sc.detectors, photon_times)):
            times_ps = photons * PS_PER_S
            if self.jitter_ps[k] > 0:
                noise = rng.normal(0.0, self.jitter_ps[k], size=times_ps.size)
                times_ps = times_ps + noise
            n_dark = rng.poisson(detector.dark_rate * (occ.end - occ.start))
            dark_ps = rng.uniform(occ.start, occ.end, size=n_dark) * PS_PER_S
            times_ps = np.concatenate((times_ps, dark_ps))
            times_ps = times_ps[(times_ps >= 0) & (times_ps <= duration_ps)]
            quantized = quantize(times_ps, sc.tagger.resolution_ps)
            stamps.append(quantized)
            channels.append(np.full(quantized.size, PORT_CHANNELS[k], dtype=np.int16))
        if not stamps:
            return np.empty(0, dtype=np.int16), np.empty(0, dtype=np.int64)
        return np.concatenate(channels), np.concatenate(stamps)


def _check(scenario: Scenario) -> int:
    problems = []
    n_det = len(scenario.detectors)
    if scenario.receiver.basis is Basis.Z and n_det != 2:
        problems.append("detectors: the Z basis needs exactly two detectors")
    if scenario.receiver.basis is Basis.X and not 1 <= n_det <= 2:
        problems.append("detectors: the X basis needs one or two detectors")
    if scenario.tagger.marker_channel != MARKER_CHANNEL:
        problems.append(
            f"tagger.marker_channel: markers are recorded on channel {MARKER_CHANNEL}"
        )
    if scenario.run_duration < 0:
        problems.append("run_duration_s: must be >= 0")
    if problems:
        raise ConfigError(problems)
    return beats_per_marker(scenario.pair.delta_omega, scenario.tagger.marker_period_ps)


def simulate(scenario: Scenario, workers: int = 1) -> TagStream:
    """Generate the marker and detector tag stream of ``scenario``."""
    n_beats = _check(scenario)
    duration_ps = scenario.run_duration_ps
    period = scenario.tagger.marker_period_ps
    markers = np.arange(0, duration_ps + 1, period, dtype=np.int64)
    occurrences = list(scenario.schedule.occurrences(scenario.run_duration))
    log.info(
        "simulating %d segments, %d markers, %d beats per marker",
        len(occurrences),
        markers.size,
        n_beats,
    )

    worker = _SegmentSimulator(scenario, n_beats)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, occurrences))
    else:
        parts = [worker(occ) for occ in occurrences]

    channels = np.concatenate(
        [np.full(markers.size, MARKER_CHANNEL, dtype=np.int16)] + [p[0] for p in parts]
    )
    stamps = np.concatenate([markers] + [p[1] for p in parts])
    order = np.argsort(stamps, kind="stable")
    channels, stamps = channels[order], stamps[order]

    for k, detector in enumerate(scenario.detectors):
        dead_time_ps = int(round(detector.dead_time * PS_PER_S))
        keep = apply_dead_time(channels, stamps, PORT_CHANNELS[k], dead_time_ps)
        channels, stamps = channels[keep], stamps[keep]

    metadata = TagMetadata(
        resolution_ps=scenario.tagger.resolution_ps,
        marker_period_ps=scenario.tagger.marker_period_ps,
        delta_omega=scenario.pair.delta_omega,
        seed=scenario.seed,
        scenario_digest=scenario.digest,
        basis=scenario.receiver.basis.value,
        run_duration_ps=duration_ps,
        schedule=scenario.schedule,
    )
    log.info("simulated %d records", stamps.size)
    return TagStream(channels, stamps, metadata)

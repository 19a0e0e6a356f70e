"""
Time-tag statistics: marker referencing, beat folding, histogramming and fits.

Folding is exact. The beat period is the rational ``T_M / N_b`` picoseconds,
so folded times are carried as integer numerators over a common denominator
and never drift, however many beat cycles a run spans.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import curve_fit

from .constants import PS_PER_S
from .exceptions import AnalysisError, DomainError
from .mcsim import beats_per_marker
from .schedule import StateLabel, StateSchedule
from .schemas import diagnostics
from .tagstream import (
    MARKER_CHANNEL,
    PORT_CHANNELS,
    TagMetadata,
    TagStream,
    as_fraction,
)

log = logging.getLogger(__name__)

DEFAULT_MIN_EVENTS = 1000


@dataclass(frozen=True)
class FoldingConfig:
    """How detections are referenced and folded; times in picoseconds."""

    delta_omega: float
    marker_period_ps: int
    bin_width_ps: Fraction
    marker_channel: int = MARKER_CHANNEL
    detector_channels: Tuple[int, ...] = PORT_CHANNELS
    n_beats: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "bin_width_ps", as_fraction(self.bin_width_ps))
        object.__setattr__(
            self, "n_beats", beats_per_marker(self.delta_omega, self.marker_period_ps)
        )
        if not self.bin_width_ps > 0:
            raise DomainError("bin width must be > 0")
        if not self.beat_period_ps > self.bin_width_ps:
            raise DomainError("bin width must be shorter than the beat period")

    @classmethod
    def from_metadata(
        cls,
        meta: TagMetadata,
        bin_width_ps: Optional[Fraction] = None,
        delta_omega: Optional[float] = None,
    ) -> "FoldingConfig":
        return cls(
            delta_omega=meta.delta_omega if delta_omega is None else delta_omega,
            marker_period_ps=meta.marker_period_ps,
            bin_width_ps=meta.resolution_ps if bin_width_ps is None else bin_width_ps,
        )

    @property
    def beat_period_ps(self) -> Fraction:
        return Fraction(self.marker_period_ps, self.n_beats)

    @property
    def n_bins(self) -> int:
        return math.ceil(self.beat_period_ps / self.bin_width_ps)


class Referenced(NamedTuple):
    """Detections referenced to their latest marker."""

    delta_ps: NDArray[np.int64]
    channels: NDArray[np.int16]
    dropped: int


class FoldedTimes(NamedTuple):
    """Folded times ``numerators / denominator`` picoseconds, all in ``[0, T_b)``."""

    numerators: NDArray[np.int64]
    denominator: int

    def to_ps(self) -> NDArray[np.float64]:
        return self.numerators / self.denominator

    def __len__(self) -> int:
        return int(self.numerators.size)


@dataclass(frozen=True)
class BeatHistogram:
    """Folded-event counts over one beat period; the last bin may be partial."""

    counts: NDArray[np.int64]
    bin_width_ps: Fraction
    beat_period_ps: Fraction
    channel: Optional[int] = None

    def __post_init__(self) -> None:
        expected = math.ceil(self.beat_period_ps / self.bin_width_ps)
        if self.counts.size != expected:
            raise ValueError(f"histogram needs {expected} bins, got {self.counts.size}")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def edges_ps(self) -> NDArray[np.float64]:
        edges = np.arange(self.counts.size + 1) * float(self.bin_width_ps)
        edges[-1] = float(self.beat_period_ps)
        return edges

    @property
    def widths_ps(self) -> NDArray[np.float64]:
        return np.diff(self.edges_ps)

    @property
    def centers_ps(self) -> NDArray[np.float64]:
        edges = self.edges_ps
        return 0.5 * (edges[:-1] + edges[1:])

    @property
    def width_fractions(self) -> NDArray[np.float64]:
        """Bin widths relative to a full bin (1 except for a partial last bin)."""
        return self.widths_ps / float(self.bin_width_ps)

    def coarsened(self, factor: int = 2) -> "BeatHistogram":
        """Merge ``factor`` adjacent bins."""
        k = self.counts.size
        padded = np.concatenate((self.counts, np.zeros(-k % factor, dtype=np.int64)))
        merged = padded.reshape(-1, factor).sum(axis=1)
        width = self.bin_width_ps * factor
        return BeatHistogram(merged, width, self.beat_period_ps, self.channel)


class BeatFit(NamedTuple):
    v: float
    v_err: float
    phase: float
    offset: float
    v_peak_trough: float
    clamped: bool


class ZVisibility(NamedTuple):
    value: float
    error: float
    clamped: bool


@dataclass(frozen=True)
class VisibilityReport:
    """Fitted and counted visibilities of one run; ``None`` where not measured."""

    v_fit: Optional[float] = None
    v_fit_err: Optional[float] = None
    phase_rad: Optional[float] = None
    v_peak_trough: Optional[float] = None
    v_z_omega0: Optional[float] = None
    v_z_omega0_err: Optional[float] = None
    v_z_omega1: Optional[float] = None
    v_z_omega1_err: Optional[float] = None
    v_z_combined: Optional[float] = None
    qber: Optional[float] = None
    events_total: int = 0
    events_dropped: int = 0
    flags: Tuple[str, ...] = field(default=(), compare=False)

    def to_json(self) -> Dict[str, Any]:
        doc = {
            "v_fit": self.v_fit,
            "v_fit_err": self.v_fit_err,
            "phase_rad": self.phase_rad,
            "v_peak_trough": self.v_peak_trough,
            "v_z_omega0": self.v_z_omega0,
            "v_z_omega0_err": self.v_z_omega0_err,
            "v_z_omega1": self.v_z_omega1,
            "v_z_omega1_err": self.v_z_omega1_err,
            "v_z_combined": self.v_z_combined,
            "qber": self.qber,
            "events_total": self.events_total,
            "events_dropped": self.events_dropped,
        }
        problems = diagnostics(doc, "visibility_report.json")
        assert not problems, problems
        return doc


def reference_to_marker(stream: TagStream, cfg: FoldingConfig) -> Referenced:
    """Time of each detection since the latest marker at or before it."""
    if not stream.is_monotone():
        raise AnalysisError("timestamps are not in non-decreasing order")
    markers = stream.on_channel(cfg.marker_channel)
    if markers.size == 0:
        raise AnalysisError(f"no marker events on channel {cfg.marker_channel}")
    is_detection = np.isin(stream.channels, cfg.detector_channels)
    times = stream.timestamps[is_detection]
    channels = stream.channels[is_detection]
    idx = np.searchsorted(markers, times, side="right") - 1
    referenced = idx >= 0
    dropped = int(times.size - np.count_nonzero(referenced))
    if dropped:
        log.debug("dropped %d detections preceding the first marker", dropped)
    delta = times[referenced] - markers[idx[referenced]]
    return Referenced(delta, channels[referenced], dropped)


def fold(delta_ts: NDArray[np.int64], cfg: FoldingConfig) -> FoldedTimes:
    """``Δt mod T_b`` in exact integer arithmetic."""
    delta = np.mod(np.asarray(delta_ts, dtype=np.int64), cfg.marker_period_ps)
    if cfg.marker_period_ps % cfg.n_beats == 0:
        return FoldedTimes(delta % (cfg.marker_period_ps // cfg.n_beats), 1)
    return FoldedTimes((delta * cfg.n_beats) % cfg.marker_period_ps, cfg.n_beats)


def histogram(
    taus: FoldedTimes, cfg: FoldingConfig, channel: Optional[int] = None
) -> BeatHistogram:
    """Count folded times per ``bin_width`` interval of the beat period."""
    width = cfg.bin_width_ps
    index = (taus.numerators * width.denominator) // (
        taus.denominator * width.numerator
    )
    counts = np.bincount(index, minlength=cfg.n_bins).astype(np.int64)
    return BeatHistogram(counts, width, cfg.beat_period_ps, channel)


def merge_histograms(histograms: Iterable[BeatHistogram]) -> BeatHistogram:
    """Sum histograms built from disjoint partitions of a stream."""
    items = list(histograms)
    if not items:
        raise ValueError("nothing to merge")
    first = items[0]
    binning = (first.bin_width_ps, first.beat_period_ps)
    for h in items[1:]:
        if (h.bin_width_ps, h.beat_period_ps) != binning:
            raise ValueError("histograms use different binning")
    channels = {h.channel for h in items}
    return BeatHistogram(
        np.sum([h.counts for h in items], axis=0),
        first.bin_width_ps,
        first.beat_period_ps,
        channels.pop() if len(channels) == 1 else None,
    )


def _design(h: BeatHistogram, delta_omega: float) -> NDArray[np.float64]:
    """Columns of the expected counts per bin, linear in ``(a, b, c)``."""
    x = delta_omega * h.centers_ps / PS_PER_S
    # Averaging the cosine over a bin of width w scales it by sinc(Δω·w/2).
    smear = np.sinc(delta_omega * h.widths_ps / PS_PER_S / (2.0 * math.pi))
    r = h.width_fractions
    return np.column_stack((r, r * smear * np.cos(x), r * smear * np.sin(x)))


def fit_beat(
    h: BeatHistogram, delta_omega: float, min_events: int = DEFAULT_MIN_EVENTS
) -> BeatFit:
    """
    Weighted least-squares fit of ``a·(1 + v·cos(Δω·τ + φ))`` at fixed ``Δω``.

    Bins are weighted by their Poisson variance; the partial last bin enters
    with its width fraction. The peak-to-trough contrast of the full bins is
    returned for comparison.
    """
    if h.total < min_events:
        raise AnalysisError(
            f"{h.total} events in histogram, need at least {min_events}"
        )
    design = _design(h, delta_omega)
    y = h.counts.astype(float)

    def model(
        k: NDArray[np.float64], a: float, b: float, c: float
    ) -> NDArray[np.float64]:
        return design[k.astype(int)] @ np.array([a, b, c])

    k = np.arange(y.size, dtype=float)
    p0, *_ = np.linalg.lstsq(design, y, rcond=None)
    sigma = np.sqrt(np.maximum(y, 1.0))
    for _ in range(2):
        popt, pcov = curve_fit(model, k, y, p0=p0, sigma=sigma, absolute_sigma=True)
        p0 = popt
        sigma = np.sqrt(np.maximum(model(k, *popt), 1.0))
    a, b, c = popt
    if not a > 0:
        raise AnalysisError(f"degenerate beat fit: offset {a:.3g} <= 0")

    amplitude = math.hypot(b, c)
    v = amplitude / a
    if amplitude > 0:
        grad = np.array([-v / a, b / (a * amplitude), c / (a * amplitude)])
        v_err = float(math.sqrt(max(grad @ pcov @ grad, 0.0)))
    else:
        v_err = float(math.sqrt(max(pcov[1, 1] + pcov[2, 2], 0.0)) / a)
    phase = math.atan2(-c, b)

    full = h.width_fractions >= 1.0 - 1e-12
    density = y[full] / h.width_fractions[full]
    total = density.max() + density.min()
    v_peak_trough = float((density.max() - density.min()) / total) if total > 0 else 0.0

    clamped = v > 1.0
    if clamped:
        warnings.warn(f"fitted visibility {v:.4f} exceeds 1; clamped")
        v = 1.0
    return BeatFit(float(v), v_err, phase, float(a), v_peak_trough, clamped)


def z_visibility(counts_peak: float, counts_leak: float) -> ZVisibility:
    """``(N_peak − N_leak)/(N_peak + N_leak)`` with a binomial standard error."""
    clamped = counts_peak < 0 or counts_leak < 0
    peak = max(float(counts_peak), 0.0)
    leak = max(float(counts_leak), 0.0)
    n = peak + leak
    if n <= 0:
        raise AnalysisError("no counts left after background subtraction")
    p = peak / n
    value = 2.0 * p - 1.0
    if value < 0:
        clamped = True
        value = 0.0
    if clamped:
        warnings.warn("negative background-subtracted count or visibility; clamped")
    return ZVisibility(value, 2.0 * math.sqrt(p * (1.0 - p) / n), clamped)


def combine_z(
    v0: ZVisibility, n0: float, v1: ZVisibility, n1: float
) -> Tuple[float, float]:
    """Event-weighted mean of the two per-bin visibilities and its error."""
    total = n0 + n1
    value = (n0 * v0.value + n1 * v1.value) / total
    error = math.hypot(n0 * v0.error, n1 * v1.error) / total
    return value, error


def qber_from_visibility(v: float) -> float:
    """Bit error rate implied by a visibility."""
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"visibility must lie in [0, 1], got {v}")
    return (1.0 - v) / 2.0


@dataclass(frozen=True)
class SegmentCounts:
    """Detector counts and exposure per prepared state."""

    counts: Dict[Tuple[StateLabel, int], int]
    durations: Dict[StateLabel, float]

    def count(self, state: StateLabel, channel: int) -> int:
        return self.counts.get((state, channel), 0)


def state_of_events(
    timestamps_ps: NDArray[np.int64], schedule: StateSchedule
) -> NDArray[np.str_]:
    """Prepared state at each timestamp, as the label value (``"X+"``, ...)."""
    labels = np.array([s.state.value for s in schedule.segments], dtype=str)
    return labels[schedule.segment_index_at(timestamps_ps / PS_PER_S)]


def segment_counts(
    stream: TagStream,
    schedule: StateSchedule,
    run_duration: float,
    detector_channels: Sequence[int] = PORT_CHANNELS,
) -> SegmentCounts:
    """Per-state detector counts and total time spent in each state."""
    durations: Dict[StateLabel, float] = {}
    for occ in schedule.occurrences(run_duration):
        state = occ.segment.state
        durations[state] = durations.get(state, 0.0) + occ.end - occ.start
    counts: Dict[Tuple[StateLabel, int], int] = {}
    for channel in detector_channels:
        times = stream.on_channel(channel)
        states = state_of_events(times, schedule)
        values, totals = np.unique(states, return_counts=True)
        for value, total in zip(values.tolist(), totals.tolist()):
            counts[(StateLabel(value), channel)] = int(total)
    return SegmentCounts(counts, durations)


def z_basis_report(
    seg: SegmentCounts, channels: Tuple[int, int] = PORT_CHANNELS
) -> Tuple[Optional[ZVisibility], Optional[ZVisibility], Optional[Tuple[float, float]]]:
    """
    Per-bin and combined Z visibilities.

    Vacuum segments give a per-channel floor rate that is subtracted from the
    peak and leak counts of each Z segment.
    """
    vac_time = seg.durations.get(StateLabel.VAC, 0.0)
    floor = {
        ch: seg.count(StateLabel.VAC, ch) / vac_time if vac_time > 0 else 0.0
        for ch in channels
    }
    results: List[Optional[ZVisibility]] = []
    weights: List[float] = []
    for state, peak_ch, leak_ch in (
        (StateLabel.Z0, channels[0], channels[1]),
        (StateLabel.Z1, channels[1], channels[0]),
    ):
        exposure = seg.durations.get(state, 0.0)
        peak = seg.count(state, peak_ch) - floor[peak_ch] * exposure
        leak = seg.count(state, leak_ch) - floor[leak_ch] * exposure
        if exposure <= 0 or max(peak, 0.0) + max(leak, 0.0) <= 0:
            results.append(None)
            weights.append(0.0)
            continue
        results.append(z_visibility(peak, leak))
        weights.append(max(peak, 0.0) + max(leak, 0.0))
    v0, v1 = results
    combined = None
    if v0 is not None and v1 is not None:
        combined = combine_z(v0, weights[0], v1, weights[1])
    elif v0 is not None or v1 is not None:
        only = v0 if v0 is not None else v1
        assert only is not None
        combined = (only.value, only.error)
    return v0, v1, combined


@dataclass
class AnalysisResult:
    report: VisibilityReport
    histogram: BeatHistogram
    errors: List[str] = field(default_factory=list)
    events_excluded: int = 0

    @property
    def ok(self) -> bool:
        return not self.errors


def analyze_stream(
    stream: TagStream,
    cfg: FoldingConfig,
    state: Optional[str] = None,
    min_events: int = DEFAULT_MIN_EVENTS,
) -> AnalysisResult:
    """
    Run the full pipeline on a stream.

    ``state`` restricts the beat histogram to detections made while that
    state was being sent (needs a schedule in the metadata). X-basis runs are
    fitted for the beat visibility; Z-basis runs with a schedule are counted
    for the per-bin visibilities.
    """
    meta = stream.metadata
    basis = meta.basis or "X"
    schedule = meta.schedule
    if state is None and basis == "X" and schedule is not None:
        if any(s.state is StateLabel.X_PLUS for s in schedule.segments):
            state = StateLabel.X_PLUS.value

    selected = stream
    excluded = 0
    if state is not None:
        if schedule is None:
            raise AnalysisError("state selection needs a schedule in the tag metadata")
        wanted = StateLabel(state)
        is_detection = np.isin(stream.channels, cfg.detector_channels)
        states = state_of_events(stream.timestamps, schedule)
        keep = ~is_detection | (states == wanted.value)
        excluded = int(np.count_nonzero(~keep))
        selected = TagStream(stream.channels[keep], stream.timestamps[keep], meta)

    referenced = reference_to_marker(selected, cfg)
    hist = histogram(fold(referenced.delta_ps, cfg), cfg)
    log.info(
        "folded %d detections into %d bins (%d dropped, %d excluded)",
        hist.total,
        hist.counts.size,
        referenced.dropped,
        excluded,
    )

    errors: List[str] = []
    values: Dict[str, Any] = {
        "events_total": hist.total,
        "events_dropped": referenced.dropped,
    }
    flags: List[str] = []
    if basis == "X":
        try:
            fit = fit_beat(hist, cfg.delta_omega, min_events)
        except AnalysisError as e:
            errors.append(str(e))
        else:
            values.update(
                v_fit=fit.v,
                v_fit_err=fit.v_err,
                phase_rad=fit.phase,
                v_peak_trough=fit.v_peak_trough,
                qber=qber_from_visibility(fit.v),
            )
            if fit.clamped:
                flags.append("v_fit_clamped")
    elif schedule is not None:
        run_duration = (
            meta.run_duration_ps / PS_PER_S
            if meta.run_duration_ps is not None
            else float(stream.timestamps[-1]) / PS_PER_S if len(stream) else 0.0
        )
        v0, v1, combined = z_basis_report(
            segment_counts(stream, schedule, run_duration, cfg.detector_channels)
        )
        if v0 is not None:
            values.update(v_z_omega0=v0.value, v_z_omega0_err=v0.error)
        if v1 is not None:
            values.update(v_z_omega1=v1.value, v_z_omega1_err=v1.error)
        if combined is not None:
            values.update(
                v_z_combined=combined[0], qber=qber_from_visibility(combined[0])
            )
        else:
            errors.append("no Z-basis counts to evaluate")
    else:
        errors.append("Z-basis analysis needs a schedule in the tag metadata")

    if hist.total == 0:
        errors.append("no detector events")
    report = VisibilityReport(**values, flags=tuple(flags))
    return AnalysisResult(report, hist, errors, excluded)

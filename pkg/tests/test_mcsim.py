import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from conftest import DELTA_OMEGA, OMEGA0, build_scenario, x_plus_scenario
from fbin_link.channel import ChannelConfig, phase_of_flight
from fbin_link.exceptions import ConfigError
from fbin_link.mcsim import (
    REFERENCE_SYSTEMS,
    DetectionSystem,
    DetectorModel,
    apply_dead_time,
    beats_per_marker,
    combine_jitter,
    quantize,
    sample_inhomogeneous,
    simulate,
)
from fbin_link.qstate import BinPair, EnvelopeMode, jitter_visibility
from fbin_link.receiver import Basis
from fbin_link.schedule import Segment, StateLabel
from fbin_link.tagproc import FoldingConfig, analyze_stream, fold, reference_to_marker
from fbin_link.tagstream import TagStream, as_fraction


def test_combine_jitter():
    assert combine_jitter([50e-12, 78.125e-12]) * 1e12 == pytest.approx(92.75, abs=0.01)
    assert combine_jitter([350.0, 78.125]) == pytest.approx(358.6, abs=0.05)
    assert combine_jitter([40e-12]) == 40e-12


def test_beats_per_marker():
    assert beats_per_marker(DELTA_OMEGA, 2_000_000) == 520
    with pytest.raises(ConfigError) as e:
        beats_per_marker(1.634e9, 2_000_000)
    assert e.value.diagnostics[0].startswith("tagger.marker_period_ps")


def test_quantize_truncates_to_tagger_grid():
    times = np.array([0.0, 78.1, 78.125, 156.3, 1000.0])
    assert quantize(times, Fraction(625, 8)).tolist() == [0, 0, 78, 156, 937]


def test_dead_time_is_per_channel():
    channels = np.array([1, 1, 2, 1, 1], dtype=np.int16)
    stamps = np.array([0, 50, 60, 120, 200], dtype=np.int64)
    keep = apply_dead_time(channels, stamps, 1, 100)
    assert keep.tolist() == [True, False, True, True, False]
    assert apply_dead_time(channels, stamps, 1, 0).all()


def test_thinning_matches_integrated_intensity():
    lam0, window, f = 1e9, 1e-6, 5e6

    def rate(t):
        return lam0 * (1.0 + 0.8 * np.cos(2.0 * math.pi * f * t))

    rng = np.random.default_rng(5)
    runs = [sample_inhomogeneous(rate, 1.8 * lam0, 0.0, window, rng) for _ in range(200)]
    assert all(np.all(np.diff(r) >= 0) and r.min() >= 0 and r.max() < window for r in runs)

    # Brute-force intensity integral on a 1 ps grid.
    grid = np.arange(0.0, window, 1e-12)
    density = rate(grid) * 1e-12
    expected = density.sum()
    counts = np.array([r.size for r in runs])
    assert abs(counts.mean() - expected) < 5.0 * math.sqrt(expected / counts.size)

    edges = np.linspace(0.0, window, 21)
    observed, _ = np.histogram(np.concatenate(runs), bins=edges)
    per_bin = np.add.reduceat(density, np.searchsorted(grid, edges[:-1])) * len(runs)
    per_bin *= observed.sum() / per_bin.sum()
    assert stats.chisquare(observed, per_bin).pvalue > 1e-3


def test_markers_span_the_run():
    stream = simulate(x_plus_scenario(1e5, 1e-3))
    assert stream.markers.size == 501
    assert stream.markers[1] == 2_000_000
    assert stream.is_monotone()


def test_zero_duration_gives_markers_only(z_scenario):
    stream = simulate(dataclasses.replace(z_scenario, run_duration=0.0))
    assert stream.channels.tolist() == [0]
    assert stream.timestamps.tolist() == [0]


def test_simulation_is_reproducible_and_worker_independent():
    segments = [
        Segment(StateLabel.X_PLUS, 0.25, 2e5),
        Segment(StateLabel.Z0, 0.25, 2e5),
        Segment(StateLabel.VAC, 0.25, 0.0),
    ]
    scenario = build_scenario(Basis.X, segments, 1.5, jitter_fwhm=50e-12, dark_rate=50.0)
    first = simulate(scenario)
    again = simulate(scenario)
    threaded = simulate(scenario, workers=4)
    for other in (again, threaded):
        assert np.array_equal(first.channels, other.channels)
        assert np.array_equal(first.timestamps, other.timestamps)
    other_seed = simulate(dataclasses.replace(scenario, seed=12))
    assert not np.array_equal(first.timestamps, other_seed.timestamps)


def test_vacuum_without_dark_counts_is_silent():
    scenario = build_scenario(Basis.Z, [Segment(StateLabel.VAC, 1.0, 1e6)], 1.0)
    stream = simulate(scenario)
    assert np.all(stream.channels == 0)


def test_dark_counts_follow_their_rate():
    scenario = build_scenario(Basis.Z, [Segment(StateLabel.VAC, 1.0, 0.0)], 1.0, dark_rate=1e4)
    stream = simulate(scenario)
    for channel in (1, 2):
        n = stream.on_channel(channel).size
        assert abs(n - 1e4) < 5 * math.sqrt(1e4)


def test_loss_and_efficiency_scale_the_rate():
    scenario = build_scenario(Basis.Z, [Segment(StateLabel.Z0, 1.0, 1e5)], 1.0)
    detectors = tuple(DetectorModel(d.name, efficiency=0.5) for d in scenario.detectors)
    scenario = dataclasses.replace(
        scenario, detectors=detectors, channel=ChannelConfig(attenuation_db=3.0)
    )
    stream = simulate(scenario)
    expected = 1e5 * 0.5 * 10 ** -0.3
    assert abs(stream.on_channel(1).size - expected) < 5 * math.sqrt(expected)
    assert stream.on_channel(2).size == 0


def test_perfect_demultiplexer_routes_every_photon(z_scenario):
    scenario = dataclasses.replace(z_scenario, v_z_eps_bins=None, run_duration=3.0)
    scenario = dataclasses.replace(
        scenario, detectors=tuple(DetectorModel(d.name) for d in scenario.detectors)
    )
    stream = simulate(scenario)
    ch1, ch2 = stream.on_channel(1), stream.on_channel(2)
    assert ch1.size > 0 and ch2.size > 0
    assert np.all(ch1 < 1_000_000_000_000)
    assert np.all((ch2 >= 1_000_000_000_000) & (ch2 < 2_000_000_000_000))


def test_configuration_problems_are_reported():
    scenario = x_plus_scenario(1e5, 1e-3)
    with pytest.raises(ConfigError):
        simulate(dataclasses.replace(scenario, pair=BinPair.from_spacing(OMEGA0, 1.634e9)))
    z_scenario = build_scenario(Basis.Z, [Segment(StateLabel.Z0, 1.0, 1e3)], 1e-3)
    with pytest.raises(ConfigError) as e:
        simulate(dataclasses.replace(z_scenario, detectors=z_scenario.detectors[:1]))
    assert any(d.startswith("detectors") for d in e.value.diagnostics)


def test_folded_arrival_times_follow_the_beat():
    scenario = x_plus_scenario(2e5, 1.0, resolution_ps=Fraction(1), v_x_eps=0.9)
    stream = simulate(scenario)
    cfg = FoldingConfig.from_metadata(stream.metadata)
    taus = fold(reference_to_marker(stream, cfg).delta_ps, cfg).to_ps() / 1e12
    assert taus.size > 90_000

    offset = float(phase_of_flight(scenario.pair, scenario.channel.trajectory, 0.0))
    period = 2.0 * math.pi / DELTA_OMEGA

    def cdf(tau):
        wiggle = 0.9 / DELTA_OMEGA * (np.sin(DELTA_OMEGA * tau + offset) - math.sin(offset))
        return (tau + wiggle) / period

    assert stats.kstest(taus, cdf).pvalue > 0.01


@pytest.mark.parametrize("system", REFERENCE_SYSTEMS, ids=lambda s: s.detector)
def test_monte_carlo_reproduces_jitter_model(system: DetectionSystem):
    scenario = x_plus_scenario(
        2e6,
        1.0,
        jitter_fwhm=system.detector_fwhm_ps * 1e-12,
        resolution_ps=as_fraction(system.tagger_fwhm_ps),
        tagger_jitter_fwhm=system.tagger_fwhm_ps * 1e-12,
    )
    stream = simulate(scenario)
    result = analyze_stream(stream, FoldingConfig.from_metadata(stream.metadata))
    assert result.ok, result.errors
    assert result.report.events_total > 950_000
    expected = jitter_visibility(0.95, DELTA_OMEGA, system.system_fwhm_ps * 1e-12)
    assert result.report.v_fit == pytest.approx(expected, abs=0.01)


def test_tagger_resolution_only_quantizes():
    stream = simulate(x_plus_scenario(2e6, 1.0))
    result = analyze_stream(stream, FoldingConfig.from_metadata(stream.metadata))
    assert result.ok, result.errors
    # Truncation to 78.125 ps bins smears the 3846 ps beat by sinc(Δω·res/2).
    assert result.report.v_fit == pytest.approx(0.9494, abs=0.004)


def test_beat_phase_stays_locked_over_long_runs():
    stream = simulate(x_plus_scenario(1e5, 10.0))
    cfg = FoldingConfig.from_metadata(stream.metadata)

    def window(start_s: float, stop_s: float):
        mask = (stream.timestamps >= start_s * 1e12) & (stream.timestamps < stop_s * 1e12)
        part = TagStream(stream.channels[mask], stream.timestamps[mask], stream.metadata)
        result = analyze_stream(part, cfg)
        assert result.ok, result.errors
        return result.report

    early, late = window(0.0, 2.0), window(8.0, 10.0)
    assert early.phase_rad is not None and late.phase_rad is not None
    assert early.v_fit == pytest.approx(0.949, abs=0.02)
    assert late.v_fit == pytest.approx(0.949, abs=0.02)
    assert abs(math.remainder(early.phase_rad - late.phase_rad, 2 * math.pi)) < 0.05


@pytest.mark.parametrize(
    "mode, expected",
    [(EnvelopeMode.AS_PRINTED, 0.95 / math.sqrt(2.0)), (EnvelopeMode.ORACLE, 0.95)],
)
def test_envelope_mode_sets_the_simulated_contrast(mode: EnvelopeMode, expected: float):
    pair = BinPair.from_spacing(OMEGA0, DELTA_OMEGA, 2.0 * math.pi * 300e3)
    scenario = dataclasses.replace(x_plus_scenario(2e5, 1.0), pair=pair, envelope_mode=mode)
    stream = simulate(scenario)
    result = analyze_stream(stream, FoldingConfig.from_metadata(stream.metadata))
    assert result.ok, result.errors
    assert result.report.v_fit == pytest.approx(expected, abs=0.02)

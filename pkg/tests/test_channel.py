import math

import numpy as np
import pytest

from fbin_link.channel import (
    COMPARISON_TABLE,
    ChannelConfig,
    PlatformTrajectory,
    coherence_factor,
    compensation_fidelity,
    dephase_by_reference_window,
    dephasing_map,
    doppler_shift,
    load_trajectory_csv,
    phase_change_rate,
    phase_of_flight,
    timing_budget,
)
from fbin_link.constants import SPEED_OF_LIGHT
from fbin_link.exceptions import DomainError
from fbin_link.qstate import BinPair, FBinQubit

OMEGA0 = 2.0 * math.pi * 384e12
DELTA_OMEGA = 2.0 * math.pi * 260e6
PAIR = BinPair.from_spacing(OMEGA0, DELTA_OMEGA)


def test_satellite_phase_rate_is_a_few_kilohertz():
    rate = phase_change_rate(PAIR, PlatformTrajectory.linear(6000.0, 500e3), 0.0)
    assert rate.hz == pytest.approx(5.20e3, rel=0.01)
    assert rate.one_sided is False


def test_static_platform_has_no_phase_drift():
    rate = phase_change_rate(PAIR, PlatformTrajectory.static(2.0), np.array([0.0, 1.0]))
    assert np.all(rate.hz == 0.0)


def test_phase_of_flight_static():
    phase = phase_of_flight(PAIR, PlatformTrajectory.static(2.0), 0.0)
    assert phase == pytest.approx(DELTA_OMEGA * 2.0 / SPEED_OF_LIGHT)


def test_doppler_shift():
    assert doppler_shift(OMEGA0, 0.0) == OMEGA0
    assert doppler_shift(OMEGA0, 6000.0) > OMEGA0
    with pytest.raises(DomainError):
        doppler_shift(OMEGA0, SPEED_OF_LIGHT)


def test_sampled_trajectory_follows_samples():
    t = np.linspace(0.0, 10.0, 11)
    traj = PlatformTrajectory.sampled(t, 1000.0 + 6000.0 * t)
    assert traj.range_at(2.5) == pytest.approx(16000.0)
    rate, one_sided = traj.range_rate_at(5.0)
    assert rate == pytest.approx(6000.0)
    assert not one_sided
    _, edge = traj.range_rate_at(0.0)
    assert edge
    with pytest.raises(DomainError):
        traj.range_at(11.0)


def test_sampled_phase_rate_matches_linear_motion():
    t = np.linspace(0.0, 10.0, 11)
    traj = PlatformTrajectory.sampled(t, 1000.0 + 6000.0 * t)
    expected = phase_change_rate(PAIR, PlatformTrajectory.linear(6000.0, 1000.0), 0.0).hz
    inner = phase_change_rate(PAIR, traj, np.array([2.0, 5.0, 8.0]))
    assert np.allclose(inner.hz, expected, rtol=1e-6)
    with pytest.warns(UserWarning, match="one-sided"):
        edge = phase_change_rate(PAIR, traj, np.array([0.0, 10.0]))
    assert np.all(edge.one_sided)


def test_sampled_trajectory_rejects_bad_samples():
    with pytest.raises(DomainError):
        PlatformTrajectory.sampled([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        PlatformTrajectory.sampled([0.0], [1.0])


def test_load_trajectory_csv(tmp_path):
    good = tmp_path / "pass.csv"
    good.write_text("t_s,range_m\n0,1000\n1,7000\n2,13000\n")
    traj = load_trajectory_csv(good)
    assert traj.span == (0.0, 2.0)

    bad_header = tmp_path / "header.csv"
    bad_header.write_text("time,range\n0,1\n")
    with pytest.raises(DomainError, match=":1:"):
        load_trajectory_csv(bad_header)

    backwards = tmp_path / "backwards.csv"
    backwards.write_text("t_s,range_m\n0,1\n2,2\n1,3\n")
    with pytest.raises(DomainError, match=":4:"):
        load_trajectory_csv(backwards)


def test_coherence_factor_is_sinc():
    rng = np.random.default_rng(7)
    omegas = rng.uniform(1e6, 1e10, 100)
    windows = rng.uniform(0.0, 1e-8, 100)
    x = omegas * windows
    assert np.allclose(coherence_factor(omegas, windows), np.sin(x) / x, rtol=0, atol=1e-12)
    assert coherence_factor(DELTA_OMEGA, 0.0) == 1.0
    assert abs(coherence_factor(DELTA_OMEGA, math.pi / DELTA_OMEGA)) < 1e-12


def test_reference_window_dephasing():
    plus = FBinQubit.plus(PAIR)
    assert dephase_by_reference_window(plus, 0.0).coherence == pytest.approx(0.5)
    assert abs(dephase_by_reference_window(plus, math.pi / DELTA_OMEGA).coherence) < 1e-12
    rho = dephasing_map(plus).density_matrix
    assert np.allclose(rho, np.diag([0.5, 0.5]))


def test_compensation_budget():
    budget = timing_budget(DELTA_OMEGA, 0.999)
    assert budget * 1e12 == pytest.approx(38.7, abs=0.1)
    assert compensation_fidelity(DELTA_OMEGA, budget) == pytest.approx(0.999, abs=1e-12)
    assert compensation_fidelity(DELTA_OMEGA, 0.0) == 1.0
    with pytest.raises(DomainError):
        compensation_fidelity(DELTA_OMEGA, -1e-12)


def test_channel_attenuation_scales_rates_only():
    channel = ChannelConfig(attenuation_db=3.0)
    assert channel.transmission == pytest.approx(0.501187, rel=1e-5)
    with pytest.raises(DomainError):
        ChannelConfig(attenuation_db=-1.0)


def test_comparison_table_lists_frequency_bins():
    sensitivity, _ = COMPARISON_TABLE["frequency-bin"]
    assert sensitivity == "~5 kHz"
    assert set(COMPARISON_TABLE) == {"polarization", "time-bin", "frequency-bin"}


@pytest.mark.parametrize("v", [-6000.0, -30.0, 0.0, 7.5, 6000.0, 2.0e7])
def test_doppler_shift_reverses(v: float):
    shifted = doppler_shift(OMEGA0, v)
    assert doppler_shift(shifted, -v) == pytest.approx(OMEGA0, rel=1e-12)


def test_doppler_factors_at_orbital_speed():
    assert doppler_shift(1.0, 6000.0) == pytest.approx(1.0 + 2.0014e-5, abs=1e-9)
    assert doppler_shift(1.0, -6000.0) == pytest.approx(1.0 - 2.0014e-5, abs=1e-9)


def test_compensation_fidelity_is_periodic():
    period = 2.0 * math.pi / DELTA_OMEGA
    errors = np.linspace(0.0, period, 41)
    fidelity = compensation_fidelity(DELTA_OMEGA, errors)
    assert np.all((fidelity >= 0.0) & (fidelity <= 1.0))
    assert np.allclose(compensation_fidelity(DELTA_OMEGA, errors + period), fidelity, atol=1e-9)


@pytest.mark.parametrize("v", [-6000.0, 100.0, 1000.0, 6000.0])
def test_phase_change_rate_is_linear_in_speed(v: float):
    reference = phase_change_rate(PAIR, PlatformTrajectory.linear(1000.0, 500e3), 0.0).hz / 1000.0
    traj = PlatformTrajectory.linear(v, 500e3)
    assert phase_change_rate(PAIR, traj, 0.0).hz / v == pytest.approx(reference, rel=1e-4)
    assert phase_change_rate(PAIR, traj, 1.0).hz == phase_change_rate(PAIR, traj, 10.0).hz


def test_phase_of_flight_after_one_second():
    pair = BinPair.from_spacing(OMEGA0, 1.634e9)
    phase = phase_of_flight(pair, PlatformTrajectory.linear(6000.0), 1.0)
    assert phase == pytest.approx(3.270e4, rel=1e-3)


def test_half_beat_window_removes_the_coherence():
    carrier = 2.0 * math.pi * SPEED_OF_LIGHT / 780e-9
    pair = BinPair.from_spacing(carrier, DELTA_OMEGA)
    rho = dephase_by_reference_window(FBinQubit.plus(pair), math.pi / DELTA_OMEGA)
    assert abs(rho.coherence) < 1e-12
    assert rho.p0 == pytest.approx(0.5)

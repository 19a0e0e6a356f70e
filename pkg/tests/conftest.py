import math
from fractions import Fraction
from typing import Sequence

import pytest

from fbin_link.mcsim import DetectorModel, Scenario, TaggerModel
from fbin_link.qstate import BinPair, VisibilityFactors
from fbin_link.receiver import Basis, MziConfig
from fbin_link.schedule import Segment, StateLabel, StateSchedule

OMEGA0 = 2.0 * math.pi * 384e12
DELTA_OMEGA = 2.0 * math.pi * 260e6


def build_scenario(
    basis: Basis,
    segments: Sequence[Segment],
    run_duration: float,
    jitter_fwhm: float = 0.0,
    resolution_ps: Fraction = Fraction(625, 8),
    tagger_jitter_fwhm: float = 0.0,
    v_x_eps: float = 0.95,
    v_z_eps_bins=None,
    dark_rate: float = 0.0,
    seed: int = 11,
) -> Scenario:
    pair = BinPair.from_spacing(OMEGA0, DELTA_OMEGA)
    n_det = 2 if basis is Basis.Z else 1
    return Scenario(
        pair=pair,
        receiver=MziConfig.for_pair(pair, basis=basis),
        detectors=tuple(
            DetectorModel(f"d{k}", jitter_fwhm=jitter_fwhm, dark_rate=dark_rate)
            for k in range(n_det)
        ),
        schedule=StateSchedule(tuple(segments)),
        tagger=TaggerModel(resolution_ps=resolution_ps, jitter_fwhm=tagger_jitter_fwhm),
        receiver_factors=VisibilityFactors(v_x_eps=v_x_eps),
        v_z_eps_bins=v_z_eps_bins,
        seed=seed,
        run_duration=run_duration,
    )


def x_plus_scenario(rate: float, duration: float, **kwargs) -> Scenario:
    return build_scenario(
        Basis.X, [Segment(StateLabel.X_PLUS, duration, rate)], duration, **kwargs
    )


@pytest.fixture
def z_scenario() -> Scenario:
    """Alternating Z states with a vacuum slot for the background floor."""
    return build_scenario(
        Basis.Z,
        [
            Segment(StateLabel.Z0, 1.0, 5e5),
            Segment(StateLabel.Z1, 1.0, 5e5),
            Segment(StateLabel.VAC, 1.0, 0.0),
        ],
        6.0,
        v_z_eps_bins=(0.889, 0.821),
        dark_rate=100.0,
    )

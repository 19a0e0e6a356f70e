from fractions import Fraction

import numpy as np
import pytest

from fbin_link.exceptions import DomainError, TagFileError
from fbin_link.schedule import Segment, StateLabel, StateSchedule
from fbin_link.tagstream import (
    TagMetadata,
    TagStream,
    as_fraction,
    file_digest,
    metadata_path,
    read_tags,
    write_tags,
)

SCHEDULE = StateSchedule.from_json(
    [
        {"state": "Z0", "duration_s": 1.0, "rate_per_s": 1e4},
        {"state": "X+", "duration_s": 1.0, "rate_per_s": 1e4},
        {"state": "Z1", "duration_s": 1.0, "rate_per_s": 1e4},
        {"state": "vac", "duration_s": 1.0, "rate_per_s": 0.0},
    ]
)

METADATA = TagMetadata(
    resolution_ps=Fraction(625, 8),
    marker_period_ps=2_000_000,
    delta_omega=1.6336281798666925e9,
    seed=3,
    scenario_digest="abc",
    basis="Z",
    run_duration_ps=4_000_000,
    schedule=SCHEDULE,
)


def test_schedule_layout():
    occurrences = list(SCHEDULE.occurrences(4.0))
    assert [o.segment.state for o in occurrences] == [
        StateLabel.Z0,
        StateLabel.X_PLUS,
        StateLabel.Z1,
        StateLabel.VAC,
    ]
    truncated = list(SCHEDULE.occurrences(4.5))
    assert len(truncated) == 5
    assert truncated[-1].index == 4
    assert truncated[-1].segment.state is StateLabel.Z0
    assert truncated[-1].end == 4.5
    assert list(SCHEDULE.occurrences(0.0)) == []


def test_segment_index_at():
    idx = SCHEDULE.segment_index_at(np.array([0.5, 1.5, 3.99, 4.2]))
    assert idx.tolist() == [0, 1, 3, 0]


def test_schedule_validation():
    with pytest.raises(DomainError):
        Segment(StateLabel.Z0, 0.0, 1.0)
    with pytest.raises(DomainError):
        Segment(StateLabel.Z0, 1.0, -1.0)
    with pytest.raises(ValueError):
        StateSchedule.from_json([{"state": "Y+", "duration_s": 1.0, "rate_per_s": 1.0}])
    with pytest.raises(DomainError):
        StateSchedule(())


def test_exact_resolution():
    assert as_fraction(78.125) == Fraction(625, 8)
    assert as_fraction("23") == 23


def test_write_then_read(tmp_path):
    stream = TagStream(
        np.array([0, 1, 2, 0], dtype=np.int16),
        np.array([0, 156, 312, 2_000_000], dtype=np.int64),
        METADATA,
    )
    path = tmp_path / "tags.csv"
    assert write_tags(stream, path) == str(tmp_path / "tags.meta.json")
    assert path.read_text().splitlines()[:2] == ["channel,timestamp_ps", "0,0"]

    back = read_tags(path)
    assert np.array_equal(back.channels, stream.channels)
    assert np.array_equal(back.timestamps, stream.timestamps)
    assert back.metadata == METADATA
    assert back.is_monotone()
    assert back.markers.tolist() == [0, 2_000_000]


def _write(tmp_path, body: str, meta: bool = True):
    path = tmp_path / "tags.csv"
    path.write_text(body)
    if meta:
        (tmp_path / "tags.meta.json").write_text(
            '{"resolution_ps": 78.125, "marker_period_ps": 2000000,'
            ' "delta_omega_rad_per_s": 1.6336e9, "seed": null, "scenario_digest": ""}'
        )
    return path


def test_header_only_file_is_an_empty_stream(tmp_path):
    stream = read_tags(_write(tmp_path, "channel,timestamp_ps\n"))
    assert len(stream) == 0
    assert stream.metadata.basis is None


@pytest.mark.parametrize(
    "body, line",
    [
        ("chan,time\n0,0\n", 1),
        ("channel,timestamp_ps\n0,0\n1,abc\n", 3),
        ("channel,timestamp_ps\n0,0\n1,5\n2,6,7\n", 4),
        ("channel,timestamp_ps\n0,0\n-1,5\n", 3),
        ("channel,timestamp_ps\n0,0\n1,5\n65537,9\n", 4),
    ],
)
def test_malformed_rows_report_their_line(tmp_path, body: str, line: int):
    with pytest.raises(TagFileError) as e:
        read_tags(_write(tmp_path, body))
    assert e.value.line == line
    assert str(e.value).startswith(f"line {line}:")


def test_missing_or_invalid_sidecar(tmp_path):
    with pytest.raises(TagFileError, match="sidecar"):
        read_tags(_write(tmp_path, "channel,timestamp_ps\n0,0\n", meta=False))
    path = _write(tmp_path, "channel,timestamp_ps\n0,0\n", meta=False)
    (tmp_path / "tags.meta.json").write_text('{"marker_period_ps": 2000000}')
    with pytest.raises(TagFileError, match="resolution_ps"):
        read_tags(path)


def test_file_digest_is_stable(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("0,0\n")
    b.write_text("0,0\n")
    assert file_digest(a) == file_digest(b)
    assert len(file_digest(a)) == 64
    assert metadata_path("runs/x_tags.csv") == "runs/x_tags.meta.json"


def test_channel_ids_do_not_wrap(tmp_path):
    with pytest.raises(TagFileError, match="outside 0..32767"):
        read_tags(_write(tmp_path, "channel,timestamp_ps\n0,0\n32768,5\n"))
    stream = read_tags(_write(tmp_path, "channel,timestamp_ps\n0,0\n32767,5\n"))
    assert stream.channels.tolist() == [0, 32767]

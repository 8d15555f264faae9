"""
Timeline and core types.

Covers:
 - timestamp and frame window arithmetic
 - frame sequence checks
 - event/frame merge order and batching
 - stream diagnostics
 - per-pixel windowed event sums against a brute-force count
"""

import numpy as np
import pytest

from evfuse.core.errors import GeometryError, ParameterError, StreamOrderError
from evfuse.core.timeline import EventIndex, interleave, validate_stream
from evfuse.core.types import (Event, EventStream, Frame, TimelineKind, Timestamp, check_frame_sequence,
                               to_micros, to_seconds)
from tests.helpers import make_frames, random_events


# ========== TYPES ==========

def test_timestamp_rejects_negative():
    with pytest.raises(ParameterError):
        Timestamp(-1)


def test_timestamp_seconds_round_trip():
    assert Timestamp.from_seconds(1.5).micros == 1_500_000
    assert Timestamp(250_000).seconds == 0.25
    assert to_micros(0.000001) == 1
    assert to_seconds(2_000_000) == 2.0
    assert np.array_equal(to_micros(np.array([0.1, 0.2])), [100_000, 200_000])


def test_frame_exposure_window():
    frame = Frame(Timestamp(1000), 0.000101, np.zeros((2, 2)))
    assert frame.exposure_micros == 101
    assert frame.exposure_start == 950
    assert frame.exposure_end == 1051


def test_zero_exposure_window_collapses_to_midpoint():
    frame = Frame(Timestamp(5000), 0.0, np.zeros((2, 2)))
    assert frame.exposure_start == frame.exposure_end == 5000


def test_frame_rejects_out_of_range_response():
    with pytest.raises(ParameterError):
        Frame(Timestamp(0), 0.0, np.full((2, 2), 1.5))
    with pytest.raises(ParameterError):
        Frame(Timestamp(0), -0.1, np.zeros((2, 2)))
    with pytest.raises(GeometryError):
        Frame(Timestamp(0), 0.0, np.zeros(4))


def test_frame_sequence_checks():
    check_frame_sequence(make_frames([0, 100, 200], (2, 2)))
    with pytest.raises(StreamOrderError) as info:
        check_frame_sequence(make_frames([0, 200, 200], (2, 2)))
    assert info.value.index == 2
    with pytest.raises(GeometryError):
        check_frame_sequence(make_frames([0], (2, 2)) + make_frames([100], (3, 2)))
    with pytest.raises(ParameterError):
        check_frame_sequence(make_frames([0, 100], (2, 2), exposure=0.0002))


def test_event_stream_window_is_half_open_on_the_left():
    events = EventStream([10, 20, 20, 30], [0, 0, 1, 1], [0, 0, 0, 0], [1, -1, 1, 1], 2, 1)
    assert len(events.window(10, 20)) == 2
    assert list(events.window(10, 30).t) == [20, 20, 30]
    assert list(events.window(10, 30, inclusive_lo=True, inclusive_hi=False).t) == [10, 20, 20]


def test_event_stream_item_access():
    events = EventStream([5], [1], [2], [-1], 4, 4)
    assert events[0] == Event(Timestamp(5), 1, 2, -1)
    assert events.shape == (4, 4)
    assert list(events.pixel_index) == [9]
    assert EventStream.from_events(events.to_events(), 4, 4).equals(events)


# ========== MERGE ==========

def test_interleave_puts_frames_before_events_at_equal_time():
    events = EventStream([10, 20, 20, 30], [0, 1, 0, 1], [0, 0, 0, 0], [1, 1, -1, 1], 2, 1)
    frames = make_frames([20, 40], (1, 2))
    timeline = interleave(events, frames)
    kinds = [(item.kind, item.t) for item in timeline]
    assert kinds == [
        (TimelineKind.EVENT_BATCH, 10),
        (TimelineKind.FRAME_BOUNDARY, 20),
        (TimelineKind.EVENT_BATCH, 20),
        (TimelineKind.EVENT_BATCH, 30),
        (TimelineKind.FRAME_BOUNDARY, 40),
    ]
    batch = timeline[2]
    assert (batch.start, batch.stop) == (1, 3)
    assert timeline[1].frame_index == 0 and timeline[4].frame_index == 1


def test_interleave_events_first_variant():
    events = EventStream([10, 20, 20, 30], [0, 1, 0, 1], [0, 0, 0, 0], [1, 1, -1, 1], 2, 1)
    frames = make_frames([20, 40], (1, 2))
    timeline = interleave(events, frames, frames_first=False)
    assert [item.is_frame for item in timeline] == [False, False, True, False, True]


def test_interleave_reports_first_unsorted_event():
    events = EventStream([10, 5, 20], [0, 0, 0], [0, 0, 0], [1, 1, 1], 1, 1)
    with pytest.raises(StreamOrderError) as info:
        interleave(events, [])
    assert info.value.index == 1


def test_interleave_covers_every_event_once():
    events = random_events(500, 4, 4, 10_000, seed=3)
    frames = make_frames([0, 2500, 5000, 7500], (4, 4))
    timeline = interleave(events, frames)
    covered = [i for item in timeline if not item.is_frame for i in range(item.start, item.stop)]
    assert covered == list(range(len(events)))
    times = [item.t for item in timeline]
    assert times == sorted(times)
    assert sum(item.is_frame for item in timeline) == 4


def test_interleave_without_events():
    timeline = interleave(EventStream.empty(2, 2), make_frames([0, 10], (2, 2)))
    assert [item.is_frame for item in timeline] == [True, True]


# ========== DIAGNOSTICS ==========

def test_validate_stream_counts_problems():
    events = EventStream([0, 10, 5, 20], [0, 9, 1, 1], [0, 0, 0, -1], [1, 1, 0, -1], 4, 4)
    report = validate_stream(events)
    assert report.total == 4
    assert report.out_of_bounds == 2
    assert report.out_of_order == 1
    assert report.zero_polarity == 1
    assert not report.accepted
    assert report.to_dict()['out_of_bounds'] == 2


def test_validate_stream_accepts_clean_stream():
    assert validate_stream(random_events(100, 8, 8, 1000)).accepted


# ========== EVENT INDEX ==========

def _brute_sum(events, pixel, t_lo, t_hi, inclusive_lo, inclusive_hi):
    total = 0
    for t, pix, p in zip(events.t, events.pixel_index, events.polarity):
        if pix != pixel:
            continue
        above = t >= t_lo if inclusive_lo else t > t_lo
        below = t <= t_hi if inclusive_hi else t < t_hi
        if above and below:
            total += int(p)
    return total


@pytest.mark.parametrize('inclusive_lo,inclusive_hi', [(False, True), (True, False), (True, True), (False, False)])
def test_event_index_matches_brute_force(inclusive_lo, inclusive_hi):
    events = random_events(400, 3, 3, 200, seed=11, t_min=100)
    index = EventIndex(events)
    rng = np.random.default_rng(5)
    pixels = np.arange(9)
    for _ in range(30):
        t_lo, t_hi = sorted(int(v) for v in rng.integers(50, 350, size=2))
        got = index.signed_sum(pixels, t_lo, t_hi, inclusive_hi=inclusive_hi, inclusive_lo=inclusive_lo)
        expected = [_brute_sum(events, p, t_lo, t_hi, inclusive_lo, inclusive_hi) for p in pixels]
        assert list(got) == expected


def test_event_index_per_pixel_windows_and_counts():
    events = EventStream([1, 2, 3, 3, 4], [0, 1, 0, 0, 1], [0, 0, 0, 0, 0], [1, -1, 1, 1, 1], 2, 1)
    index = EventIndex(events)
    assert list(index.signed_sum(np.array([0, 1]), np.array([0, 2]), np.array([3, 4]))) == [3, 1]
    assert list(index.count(np.array([0, 1]), 0, 10)) == [3, 2]
    assert index.signed_sum_image(0, 10).tolist() == [[3, 0]]


def test_event_index_empty_stream():
    index = EventIndex(EventStream.empty(2, 2))
    assert len(index) == 0
    assert index.signed_sum_image(0, 100).tolist() == [[0, 0], [0, 0]]


def test_event_index_rejects_out_of_bounds():
    with pytest.raises(GeometryError):
        EventIndex(EventStream([0], [5], [0], [1], 2, 2))

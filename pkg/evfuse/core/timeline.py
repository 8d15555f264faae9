"""
EvFuse Timeline

Merges the event stream and the frame sequence into the single ordered
timeline that drives every per-pixel update, and provides the per-pixel
event index used by augmentation and calibration.

Features:
- Stable merge, frame boundary before events at equal timestamps
- Same-timestamp events grouped into batches
- Stream diagnostics (out-of-bounds, out-of-order, zero polarity)
- Vectorized signed event sums over per-pixel time windows

Author: Dragos Gontariu
License: GPL-3.0
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import GeometryError, StreamOrderError
from .types import EventStream, Frame, TimelineItem, TimelineKind


def interleave(events: EventStream, frames: Sequence[Frame], frames_first: bool = True) -> List[TimelineItem]:
    """
    Merge events and frames into one timeline.

    Events sharing a timestamp form one EVENT_BATCH item covering the slice
    [start, stop) of the stream. At equal timestamps the frame boundary comes
    first unless `frames_first` is False.

    Args:
        events: event stream sorted by t
        frames: frames sorted by t_mid
        frames_first: tie-break order at equal timestamps

    Returns:
        list of TimelineItem

    Raises:
        StreamOrderError: if either input is unsorted
    """
    bad = events.first_unsorted()
    if bad is not None:
        raise StreamOrderError(bad, 'events')
    frame_t = np.array([f.t_mid.micros for f in frames], dtype=np.int64)
    if frame_t.size > 1:
        violations = np.flatnonzero(np.diff(frame_t) < 0)
        if violations.size:
            raise StreamOrderError(int(violations[0]) + 1, 'frames')

    t = events.t
    n = len(t)
    if n:
        starts = np.flatnonzero(np.r_[True, t[1:] != t[:-1]])
        stops = np.r_[starts[1:], n]
        batch_t = t[starts]
    else:
        starts = stops = batch_t = np.empty(0, dtype=np.int64)

    # number of batches placed before each frame
    side = 'left' if frames_first else 'right'
    frame_pos = np.searchsorted(batch_t, frame_t, side=side)

    timeline = []
    b = 0
    for k, pos in enumerate(frame_pos):
        while b < pos:
            timeline.append(TimelineItem(int(batch_t[b]), TimelineKind.EVENT_BATCH, int(starts[b]), int(stops[b])))
            b += 1
        timeline.append(TimelineItem(int(frame_t[k]), TimelineKind.FRAME_BOUNDARY, k, k + 1))
    while b < len(starts):
        timeline.append(TimelineItem(int(batch_t[b]), TimelineKind.EVENT_BATCH, int(starts[b]), int(stops[b])))
        b += 1
    return timeline


@dataclass
class StreamReport:
    """Diagnostic counts for an event stream."""

    total: int
    out_of_bounds: int
    out_of_order: int
    zero_polarity: int

    @property
    def accepted(self) -> bool:
        return self.out_of_bounds == 0 and self.out_of_order == 0 and self.zero_polarity == 0

    def to_dict(self):
        return {
            'total': self.total,
            'out_of_bounds': self.out_of_bounds,
            'out_of_order': self.out_of_order,
            'zero_polarity': self.zero_polarity,
            'accepted': self.accepted,
        }


def validate_stream(events: EventStream, width: Optional[int] = None, height: Optional[int] = None) -> StreamReport:
    """
    Count out-of-bounds, out-of-order and zero-polarity records.

    An out-of-order record is one whose timestamp is earlier than the
    record before it.
    """
    width = events.width if width is None else width
    height = events.height if height is None else height
    oob = (events.x < 0) | (events.x >= width) | (events.y < 0) | (events.y >= height)
    out_of_order = int(np.count_nonzero(np.diff(events.t) < 0)) if len(events) > 1 else 0
    return StreamReport(
        total=len(events),
        out_of_bounds=int(np.count_nonzero(oob)),
        out_of_order=out_of_order,
        zero_polarity=int(np.count_nonzero(events.polarity == 0)),
    )


class EventIndex:
    """
    Per-pixel time index over an event stream.

    Events are ordered by (pixel, t) and encoded into one sorted int64 key
    so that window lookups for many pixels run as a single searchsorted.
    """

    def __init__(self, events: EventStream):
        """
        Constructor.

        Args:
            events: in-bounds event stream (need not be globally sorted)
        """
        if len(events) and not np.all(events.in_bounds()):
            raise GeometryError('EventIndex requires in-bounds events')
        self.width = events.width
        self.height = events.height
        pix = events.pixel_index
        order = np.lexsort((events.t, pix))
        self._t0 = int(events.t.min()) if len(events) else 0
        span = int(events.t.max()) - self._t0 if len(events) else 0
        self._span = span
        self._stride = span + 3
        if self.width * self.height * self._stride >= 2 ** 62:
            raise GeometryError('Event stream too long to index at this resolution')
        self._keys = pix[order] * self._stride + (events.t[order] - self._t0)
        self._cum_signed = np.concatenate(([0], np.cumsum(events.polarity[order], dtype=np.int64)))
        self.order = order

    def __len__(self):
        return len(self._keys)

    def _key(self, pixels, t):
        rel = np.clip(np.asarray(t, dtype=np.int64) - self._t0, -1, self._span + 1)
        return np.asarray(pixels, dtype=np.int64) * self._stride + rel

    def _bounds(self, pixels, t_lo, t_hi, inclusive_lo, inclusive_hi):
        lo = np.searchsorted(self._keys, self._key(pixels, t_lo), side='left' if inclusive_lo else 'right')
        hi = np.searchsorted(self._keys, self._key(pixels, t_hi), side='right' if inclusive_hi else 'left')
        return lo, np.maximum(hi, lo)

    def signed_sum(self, pixels, t_lo, t_hi, inclusive_hi=True, inclusive_lo=False):
        """
        Sum of polarities at `pixels` over (t_lo, t_hi].

        Args:
            pixels: flat pixel indices (array)
            t_lo, t_hi: window bounds in microseconds (scalars or arrays)
            inclusive_hi: include events at t_hi
            inclusive_lo: include events at t_lo

        Returns:
            np.ndarray[int64] with the shape of `pixels`
        """
        lo, hi = self._bounds(pixels, t_lo, t_hi, inclusive_lo, inclusive_hi)
        return self._cum_signed[hi] - self._cum_signed[lo]

    def count(self, pixels, t_lo, t_hi, inclusive_hi=True, inclusive_lo=False):
        """Number of events at `pixels` over (t_lo, t_hi]."""
        lo, hi = self._bounds(pixels, t_lo, t_hi, inclusive_lo, inclusive_hi)
        return hi - lo

    def signed_sum_image(self, t_lo, t_hi, inclusive_hi=True, inclusive_lo=False):
        """signed_sum for every pixel, reshaped to (height, width)."""
        pixels = np.arange(self.width * self.height)
        return self.signed_sum(pixels, t_lo, t_hi, inclusive_hi, inclusive_lo).reshape(self.height, self.width)

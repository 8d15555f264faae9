"""
EvFuse Domain Types

Timestamps, events, frames, timeline items and per-pixel filter state.

Conventions:
- Timestamps are integer microseconds since the stream epoch
- Filter arithmetic converts to seconds (double precision)
- Pixel coordinates are 0-based, x along columns, y along rows
- Images are (height, width) arrays

Author: Dragos Gontariu
License: GPL-3.0
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional

import numpy as np

from .errors import GeometryError, ParameterError

MICROS_PER_SECOND = 1_000_000


@dataclass(frozen=True, order=True)
class Timestamp:
    """Integer microseconds since the stream epoch."""

    micros: int

    def __post_init__(self):
        if self.micros < 0:
            raise ParameterError(f'Timestamp must be non-negative, got {self.micros}')

    @property
    def seconds(self) -> float:
        return self.micros / MICROS_PER_SECOND

    @classmethod
    def from_seconds(cls, seconds: float) -> 'Timestamp':
        return cls(int(round(seconds * MICROS_PER_SECOND)))


def to_seconds(micros):
    """Convert microsecond scalars or arrays to seconds (float64)."""
    return np.asarray(micros, dtype=np.float64) / MICROS_PER_SECOND if np.ndim(micros) else micros / MICROS_PER_SECOND


def to_micros(seconds):
    """Convert second scalars or arrays to integer microseconds (nearest)."""
    if np.ndim(seconds):
        return np.rint(np.asarray(seconds, dtype=np.float64) * MICROS_PER_SECOND).astype(np.int64)
    return int(round(seconds * MICROS_PER_SECOND))


@dataclass(frozen=True)
class Event:
    """One signed log-intensity impulse at a pixel."""

    t: Timestamp
    x: int
    y: int
    polarity: int


@dataclass
class Frame:
    """
    One conventional camera frame.

    Attributes:
        t_mid: midpoint of the exposure
        exposure: exposure duration T in seconds
        response: (height, width) raw camera responses in [0, 1]
    """

    t_mid: Timestamp
    exposure: float
    response: np.ndarray

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=np.float64)
        if self.response.ndim != 2:
            raise GeometryError(f'Frame response must be 2-D, got shape {self.response.shape}')
        if self.exposure < 0:
            raise ParameterError(f'Frame exposure must be >= 0, got {self.exposure}')
        if not np.all(np.isfinite(self.response)):
            raise ParameterError('Frame response contains non-finite values')
        if self.response.size and (self.response.min() < 0.0 or self.response.max() > 1.0):
            raise ParameterError('Frame response outside [0, 1]')

    @property
    def shape(self):
        return self.response.shape

    @property
    def exposure_micros(self) -> int:
        return to_micros(self.exposure)

    @property
    def exposure_start(self) -> int:
        """Start of the exposure window in microseconds."""
        return self.t_mid.micros - self.exposure_micros // 2

    @property
    def exposure_end(self) -> int:
        """End of the exposure window in microseconds."""
        return self.t_mid.micros + self.exposure_micros - self.exposure_micros // 2


def check_frame_sequence(frames: List[Frame]):
    """
    Check the frame sequence invariants: sorted midpoints, common geometry,
    exposure shorter than the spacing to the next frame.

    Raises:
        StreamOrderError, GeometryError, ParameterError
    """
    from .errors import StreamOrderError

    for k in range(1, len(frames)):
        if frames[k].t_mid.micros <= frames[k - 1].t_mid.micros:
            raise StreamOrderError(k, 'frames')
        if frames[k].shape != frames[0].shape:
            raise GeometryError(f'Frame {k} has shape {frames[k].shape}, expected {frames[0].shape}')
        if frames[k - 1].exposure_end > frames[k].exposure_start:
            raise ParameterError(f'Exposure windows of frames {k - 1} and {k} overlap')


class EventStream:
    """
    Columnar event storage.

    Attributes:
        t (np.ndarray[int64]): timestamps in microseconds
        x, y (np.ndarray[int32]): pixel coordinates
        polarity (np.ndarray[int8]): -1 / +1 (0 only in unvalidated raw input)
        width, height (int): sensor geometry
    """

    def __init__(self, t, x, y, polarity, width, height):
        self.t = np.ascontiguousarray(t, dtype=np.int64)
        self.x = np.ascontiguousarray(x, dtype=np.int32)
        self.y = np.ascontiguousarray(y, dtype=np.int32)
        self.polarity = np.ascontiguousarray(polarity, dtype=np.int8)
        self.width = int(width)
        self.height = int(height)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.polarity) == n):
            raise GeometryError('Event columns have different lengths')

    @classmethod
    def empty(cls, width, height):
        return cls([], [], [], [], width, height)

    @classmethod
    def from_events(cls, events: Iterable[Event], width, height):
        events = list(events)
        return cls(
            [e.t.micros for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.polarity for e in events],
            width,
            height,
        )

    def to_events(self) -> List[Event]:
        return [
            Event(Timestamp(int(t)), int(x), int(y), int(p))
            for t, x, y, p in zip(self.t, self.x, self.y, self.polarity)
        ]

    def __len__(self):
        return len(self.t)

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return Event(Timestamp(int(self.t[index])), int(self.x[index]), int(self.y[index]), int(self.polarity[index]))
        return EventStream(self.t[index], self.x[index], self.y[index], self.polarity[index], self.width, self.height)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def pixel_index(self) -> np.ndarray:
        """Flat pixel index y * width + x."""
        return self.y.astype(np.int64) * self.width + self.x

    def first_unsorted(self) -> Optional[int]:
        """Index of the first event earlier than its predecessor, or None."""
        if len(self.t) < 2:
            return None
        bad = np.flatnonzero(np.diff(self.t) < 0)
        return int(bad[0]) + 1 if bad.size else None

    def is_sorted(self) -> bool:
        return self.first_unsorted() is None

    def window(self, t_lo, t_hi, inclusive_lo=False, inclusive_hi=True) -> 'EventStream':
        """Events with t in (t_lo, t_hi] by default; the stream must be sorted."""
        lo = np.searchsorted(self.t, t_lo, side='left' if inclusive_lo else 'right')
        hi = np.searchsorted(self.t, t_hi, side='right' if inclusive_hi else 'left')
        return self[lo:hi]

    def in_bounds(self) -> np.ndarray:
        return (self.x >= 0) & (self.x < self.width) & (self.y >= 0) & (self.y < self.height)

    def equals(self, other: 'EventStream') -> bool:
        return (
            self.width == other.width and self.height == other.height
            and np.array_equal(self.t, other.t) and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y) and np.array_equal(self.polarity, other.polarity)
        )


class TimelineKind(Enum):
    EVENT_BATCH = 'event_batch'
    FRAME_BOUNDARY = 'frame_boundary'


@dataclass(frozen=True)
class TimelineItem:
    """
    One step of the merged event/frame timeline.

    Attributes:
        t: time of the item in microseconds
        kind: event batch or frame boundary
        start, stop: event slice [start, stop) for batches; (frame index, frame index + 1) for boundaries
    """

    t: int
    kind: TimelineKind
    start: int
    stop: int

    @property
    def frame_index(self) -> int:
        return self.start

    @property
    def is_frame(self) -> bool:
        return self.kind is TimelineKind.FRAME_BOUNDARY


@dataclass
class PixelState:
    """Snapshot of one pixel of a filter state."""

    L_hat: float
    P: float
    t_last: int
    t_last_event: int
    t_last_neighbor_event: int

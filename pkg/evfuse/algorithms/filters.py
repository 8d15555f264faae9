"""
Asynchronous Filters for EvFuse

Per-pixel continuous-time fusion of events with a frame-derived reference:
- Complementary filter (CF) with constant crossover gain alpha
- High-pass filter (events only, reference ignored)
- Asynchronous Kalman filter (AKF) with Riccati covariance propagation
- Direct event integration reset at every frame (baseline)

Every interval between two updates of a pixel is solved in closed form,
so the cost is one state update per impulse regardless of time resolution.
Before the first frame all modes run as high-pass filters. The Kalman filter
restarts from the reference at the first frame unless init_from_frame is off.

Author: Dragos Gontariu
License: GPL-3.0
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from ..core.errors import GeometryError, ParameterError, QueryError
from ..core.types import EventStream, PixelState, TimelineItem, to_seconds
from ..utils.logger import Logger
from .noise import DEFAULT_I0, EventNoiseParams, NoiseTracker

P_FLOOR = 1e-12


class FilterMode(Enum):
    CF = 'cf'
    HIGHPASS = 'highpass'
    AKF = 'akf'
    INTEGRATE = 'integrate'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(f'Unknown filter mode: {value}')


@dataclass
class FilterParams:
    """
    Filter parameters.

    Attributes:
        mode: CF, HIGHPASS, AKF or INTEGRATE
        alpha: crossover frequency in rad/s (CF and high-pass)
        c: global contrast threshold (log intensity per event)
        P_init: initial state covariance (AKF)
        L_init: initial log intensity, log(0.5 + I0) when None
        q_init: event covariance used when no noise model is attached
        reference_at_interval_start: evaluate the reference at the interval start instead of the query time
        scale_event_jumps: multiply event jumps by the per-pixel contrast threshold scale
        init_from_frame: start the Kalman state from the reference at the first frame
    """

    mode: FilterMode = FilterMode.AKF
    alpha: float = 20.0
    c: float = 0.1
    P_init: float = 100.0
    L_init: Optional[float] = None
    q_init: float = 0.01
    reference_at_interval_start: bool = False
    scale_event_jumps: bool = True
    init_from_frame: bool = True

    def __post_init__(self):
        self.mode = FilterMode.parse(self.mode)
        if self.alpha <= 0:
            raise ParameterError(f'alpha must be > 0, got {self.alpha}')
        if self.c <= 0:
            raise ParameterError(f'c must be > 0, got {self.c}')
        if self.P_init <= 0:
            raise ParameterError(f'P_init must be > 0, got {self.P_init}')
        if self.q_init < 0:
            raise ParameterError(f'q_init must be >= 0, got {self.q_init}')
        if self.L_init is None:
            self.L_init = float(np.log(0.5 + DEFAULT_I0))


# ========== CLOSED-FORM SOLUTIONS ==========

def _check_dt(dt):
    if np.any(np.asarray(dt) < 0):
        raise ParameterError('dt must be >= 0')


def cf_interval(L_hat_i, L_A, alpha, dt):
    """Complementary filter over an interval with constant reference."""
    _check_dt(dt)
    decay = np.exp(-alpha * np.asarray(dt, dtype=np.float64))
    return decay * L_hat_i + (1.0 - decay) * L_A


def highpass_interval(L_hat_i, alpha, dt):
    """High-pass filter: the complementary filter with a zero reference."""
    _check_dt(dt)
    return np.exp(-alpha * np.asarray(dt, dtype=np.float64)) * L_hat_i


def event_jump(L_hat_minus, polarity, c_effective):
    """State right after an event: L + c_effective * polarity."""
    if np.any(np.asarray(c_effective) <= 0):
        raise ParameterError('c_effective must be > 0')
    return L_hat_minus + c_effective * polarity


def frame_boundary(L_hat_minus):
    """The state is continuous across frame timestamps."""
    return L_hat_minus


def riccati_interval(P_i, R, dt):
    """Covariance after an interval of constant R: 1 / (1/P + dt/R)."""
    _check_dt(dt)
    if np.any(np.asarray(P_i) <= 0) or np.any(np.asarray(R) <= 0):
        raise ParameterError('P and R must be > 0')
    return 1.0 / (1.0 / P_i + dt / R)


def riccati_event_update(P_minus, Q):
    """Covariance after an event: P + Q."""
    if np.any(np.asarray(Q) < 0):
        raise ParameterError('Q must be >= 0')
    return P_minus + Q


def kalman_gain(P, R):
    return P / R


def akf_interval(L_hat_i, L_A_i, L_A_t, P_i, R, dt):
    """
    Kalman filter state after an interval.

    Args:
        L_hat_i: state at the interval start
        L_A_i: reference at the interval start
        L_A_t: reference at the query time
        P_i: covariance at the interval start
        R: frame covariance held over the interval
        dt: elapsed seconds

    Returns:
        (L_hat_i - L_A_i) * (1/P_i) / (1/P_i + dt/R) + L_A_t
    """
    _check_dt(dt)
    inv_p = 1.0 / P_i
    return (L_hat_i - L_A_i) * inv_p / (inv_p + dt / R) + L_A_t


# ========== IMPULSE SOURCES ==========

class EventImpulses:
    """
    Turns event batches into state impulses (pixel, magnitude, Q).

    One impulse per in-bounds event. Out-of-bounds events are skipped and counted.
    """

    def __init__(self, events: EventStream, params: FilterParams, reference=None,
                 noise_params: Optional[EventNoiseParams] = None, t_start_micros=0):
        """
        Constructor.

        Args:
            events: event stream the timeline was built from
            params: filter parameters (c, q_init, scale_event_jumps)
            reference: reference provider supplying ct_scale, or None
            noise_params: event noise model; constant q_init when None
            t_start_micros: stream start for the noise model
        """
        self.events = events
        self.params = params
        self.reference = reference
        self.tracker = None
        if noise_params is not None:
            self.tracker = NoiseTracker(events.width, events.height, noise_params, t_start_micros)
        self.skipped_out_of_bounds = 0

    def source_impulses(self, item: TimelineItem, frame_index: int):
        """
        Unconvolved impulses of one batch.

        Returns:
            (pixels, magnitudes, Q) as flat arrays
        """
        ev = self.events
        x = ev.x[item.start:item.stop]
        y = ev.y[item.start:item.stop]
        pol = ev.polarity[item.start:item.stop]
        ok = (x >= 0) & (x < ev.width) & (y >= 0) & (y < ev.height)
        if not np.all(ok):
            self.skipped_out_of_bounds += int(np.count_nonzero(~ok))
            x, y, pol = x[ok], y[ok], pol[ok]
        pixels = y.astype(np.int64) * ev.width + x
        if self.tracker is not None:
            q = self.tracker.covariance(x, y, item.t)
            self.tracker.record(x, y, item.t)
        else:
            q = np.full(len(pixels), self.params.q_init)
        c_eff = np.full(len(pixels), self.params.c)
        if self.params.scale_event_jumps and self.reference is not None and frame_index >= 0:
            c_eff = self.params.c * self.reference.ct_scale(pixels, item.t, frame_index)
        return pixels, c_eff * pol, q

    def __call__(self, item: TimelineItem, frame_index: int):
        return self.source_impulses(item, frame_index)


# ========== FILTER STATE ==========

class AsyncFilter:
    """
    Per-pixel asynchronous filter over a merged timeline.

    The committed state is only changed by timeline items; query() is pure.
    """

    def __init__(self, params: FilterParams, reference, shape, impulses, initial_value=None,
                 frames_first=True, t_start_micros=0):
        """
        Constructor.

        Args:
            params: filter parameters
            reference: reference provider (log_value / covariance / ct_scale), or None for high-pass only
            shape: (height, width)
            impulses: callable(item, frame_index) -> (pixels, magnitudes, Q)
            initial_value: initial log intensity (defaults to params.L_init)
            frames_first: timeline tie-break used to build the timeline
            t_start_micros: time of the initial state
        """
        self.params = params
        self.reference = reference
        self.shape = tuple(shape)
        self.impulses = impulses
        self.frames_first = frames_first
        self.logger = Logger('AsyncFilter')

        n = self.shape[0] * self.shape[1]
        init = params.L_init if initial_value is None else initial_value
        self.L_hat = np.full(n, init, dtype=np.float64)
        self.P = np.full(n, params.P_init, dtype=np.float64)
        self.t_last = np.full(n, int(t_start_micros), dtype=np.int64)
        self.La_last = np.zeros(n, dtype=np.float64)
        self.R_last = np.full(n, np.inf, dtype=np.float64)
        self.frame_index = -1

        # Counters
        self.position = 0
        self.update_count = 0
        self.events_processed = 0
        self.frames_processed = 0

        if params.mode is not FilterMode.HIGHPASS and reference is None:
            raise ParameterError(f'{params.mode.value} mode needs a reference provider')

    @property
    def size(self):
        return self.L_hat.size

    @property
    def t_cursor(self) -> int:
        return int(self.t_last.max()) if self.size else 0

    def _uses_reference(self):
        return self.params.mode is not FilterMode.HIGHPASS and self.frame_index >= 0

    def _interval(self, pixels, t, inclusive):
        """
        Closed-form state of `pixels` at time t, without committing.

        Returns:
            (L, P) arrays for the pixels
        """
        mode = self.params.mode
        L = self.L_hat[pixels]
        P = self.P[pixels]
        dt = to_seconds(t - self.t_last[pixels])
        if np.any(dt < 0):
            raise QueryError('Query earlier than the last committed update')
        moving = dt > 0
        if not np.any(moving):
            return L, P

        if not self._uses_reference():
            if mode is not FilterMode.INTEGRATE:
                L = np.where(moving, highpass_interval(L, self.params.alpha, dt), L)
            return L, P

        if mode is FilterMode.INTEGRATE:
            return L, P

        La_i = self.La_last[pixels]
        if self.params.reference_at_interval_start:
            La_t = La_i
        else:
            La_t = self.reference.log_value(pixels, t, self.frame_index, inclusive)

        if mode is FilterMode.CF:
            L_new = cf_interval(L, La_t, self.params.alpha, dt)
            return np.where(moving, L_new, L), P

        R = self.R_last[pixels]
        L_new = akf_interval(L, La_i, La_t, P, R, dt)
        P_new = np.maximum(1.0 / (1.0 / P + dt / R), P_FLOOR)
        return np.where(moving, L_new, L), np.where(moving, P_new, P)

    def _advance(self, pixels, t, inclusive=False):
        L, P = self._interval(pixels, t, inclusive)
        self.L_hat[pixels] = L
        self.P[pixels] = P
        self.t_last[pixels] = t

    def _refresh_reference(self, pixels, t, inclusive):
        if not self._uses_reference():
            return
        self.La_last[pixels] = self.reference.log_value(pixels, t, self.frame_index, inclusive)
        if self.params.mode is FilterMode.AKF:
            self.R_last[pixels] = self.reference.covariance(pixels, t, self.frame_index)

    def apply_impulses(self, t, pixels, magnitudes, q):
        """
        Apply a batch of impulses sharing timestamp t.

        Every affected pixel is first advanced to t (left limit), then each
        impulse adds its magnitude to L and its Q to P, in the given order.
        """
        if len(pixels) == 0:
            return
        unique = np.unique(pixels)
        self._advance(unique, t, inclusive=False)
        np.add.at(self.L_hat, pixels, magnitudes)
        if self.params.mode is FilterMode.AKF:
            np.add.at(self.P, pixels, q)
        self.update_count += len(pixels)
        self._refresh_reference(unique, t, inclusive=True)

    def apply_frame(self, k, t):
        """Frame boundary k at time t: advance everything, then switch the reference."""
        everything = np.arange(self.size)
        self._advance(everything, t, inclusive=not self.frames_first)
        first = self.frame_index < 0
        self.frame_index = k
        self.frames_processed += 1
        self._refresh_reference(everything, t, inclusive=not self.frames_first)
        mode = self.params.mode
        if mode is FilterMode.INTEGRATE or (first and mode is FilterMode.AKF and self.params.init_from_frame):
            self.L_hat[:] = self.La_last

    def process_timeline(self, timeline: Sequence[TimelineItem], until=None):
        """
        Process timeline items from the current position.

        Args:
            timeline: merged timeline (the same list on every call)
            until: stop after the last item with t <= until (microseconds)

        Returns:
            number of items processed
        """
        start = self.position
        while self.position < len(timeline):
            item = timeline[self.position]
            if until is not None and item.t > until:
                break
            if item.is_frame:
                self.apply_frame(item.frame_index, item.t)
            else:
                pixels, magnitudes, q = self.impulses(item, self.frame_index)
                self.apply_impulses(item.t, pixels, magnitudes, q)
                self.events_processed += item.stop - item.start
            self.position += 1
        return self.position - start

    def query(self, t) -> np.ndarray:
        """
        Log-intensity image at time t, without changing the committed state.

        Raises:
            QueryError: t earlier than a committed update
        """
        t = int(t)
        if t < self.t_cursor:
            raise QueryError(f'Cannot query t={t} before committed time {self.t_cursor}')
        L, _ = self._interval(np.arange(self.size), t, inclusive=True)
        return L.reshape(self.shape)

    def covariance_image(self, t=None) -> np.ndarray:
        """State covariance image, evaluated at t when given."""
        if t is None:
            return self.P.reshape(self.shape).copy()
        _, P = self._interval(np.arange(self.size), int(t), inclusive=True)
        return P.reshape(self.shape)

    def gain_image(self, t=None) -> np.ndarray:
        """Kalman gain P/R (zero before the first frame)."""
        P = self.covariance_image(t)
        return kalman_gain(P, self.R_last.reshape(self.shape))

    def reconstruct_schedule(self, timeline, times) -> List[np.ndarray]:
        """Interleave processing with queries at the sorted `times`."""
        images = []
        for t in times:
            self.process_timeline(timeline, until=int(t))
            images.append(self.query(int(t)))
        return images

    def pixel(self, x, y) -> PixelState:
        i = y * self.shape[1] + x
        tracker = getattr(self.impulses, 'tracker', None)
        last_event = int(tracker.last_event[y, x]) if tracker is not None else -1
        last_neighbor = int(tracker.last_neighbor[y, x]) if tracker is not None else -1
        return PixelState(float(self.L_hat[i]), float(self.P[i]), int(self.t_last[i]), last_event, last_neighbor)

    def counters(self):
        return {
            'events_processed': self.events_processed,
            'frames_processed': self.frames_processed,
            'state_updates': self.update_count,
            'skipped_out_of_bounds': getattr(self.impulses, 'skipped_out_of_bounds', 0),
        }


def process_timeline(timeline, events: EventStream, params: FilterParams, reference=None,
                     noise_params: Optional[EventNoiseParams] = None, until=None,
                     frames_first=True, t_start_micros=0) -> AsyncFilter:
    """
    Run a plain (unconvolved) filter over a timeline.

    Returns:
        AsyncFilter holding the committed state
    """
    if reference is not None and tuple(reference.shape) != events.shape:
        raise GeometryError(f'Reference shape {reference.shape} does not match events {events.shape}')
    impulses = EventImpulses(events, params, reference, noise_params, t_start_micros)
    state = AsyncFilter(params, reference, events.shape, impulses,
                        frames_first=frames_first, t_start_micros=t_start_micros)
    state.process_timeline(timeline, until=until)
    if impulses.skipped_out_of_bounds:
        state.logger.warning(f'Skipped {impulses.skipped_out_of_bounds} out-of-bounds events')
    return state

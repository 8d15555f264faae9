"""
Frame Augmentation for EvFuse

Turns exposure-blurred LDR frames and the event stream into a continuous-time
log-intensity reference for the filters:
- EDI deblurring of each frame at its exposure midpoint
- Intra-exposure event integration around the deblurred image
- Forward / backward interpolation between exposures, blended
- Per-pixel contrast threshold scaling between consecutive frames
- Zero-order hold of the raw frames as the simple alternative

Deblurring and calibration run once per frame; evaluating the reference
afterwards costs one event-index lookup per pixel.

Author: Dragos Gontariu
License: GPL-3.0
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from ..core.errors import CalibrationError, GeometryError, ParameterError, QueryError
from ..core.timeline import EventIndex
from ..core.types import EventStream, Frame, check_frame_sequence, to_seconds
from ..utils.logger import Logger
from .noise import CrfModel, frame_covariance


class AugmentMode(Enum):
    FULL = 'full'
    ZOH = 'zoh'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(f'Unknown augmentation mode: {value}')


@dataclass
class AugmentParams:
    """
    Augmentation parameters.

    Attributes:
        mode: FULL (deblur + interpolation) or ZOH
        ct_clamp: (lo, hi) range of the per-pixel threshold scale
        min_abs_integral: smallest |event integral| used for calibration, c when None
        literal_blend: give the far anchor full weight at each window end
    """

    mode: AugmentMode = AugmentMode.FULL
    ct_clamp: Tuple[float, float] = (0.1, 10.0)
    min_abs_integral: Optional[float] = None
    literal_blend: bool = False

    def __post_init__(self):
        self.mode = AugmentMode.parse(self.mode)
        lo, hi = self.ct_clamp
        if lo <= 0 or hi < lo:
            raise ParameterError(f'Invalid ct_clamp {self.ct_clamp}')
        if not lo <= 1.0 <= hi:
            raise ParameterError('ct_clamp must contain 1.0')


@dataclass
class AugmentedFrame:
    """Deblurred anchors and threshold scale of one inter-frame span (flat arrays)."""

    L_D_mid: np.ndarray
    L_D_end: np.ndarray
    L_D_next_begin: Optional[np.ndarray]
    ct_scale: np.ndarray
    span: Tuple[int, int]


# ========== DEBLUR AND INTERPOLATION ==========

def edi_deblur(frame: Frame, events: EventStream, c: float, crf: CrfModel) -> np.ndarray:
    """
    Deblur a frame with the events of its exposure.

    The blurred intensity is the exposure mean of the sharp intensity times
    exp(c * E(t)), E being the signed event count from the midpoint. The
    exponent is piecewise constant between events, so the time integral is
    summed exactly segment by segment.

    Args:
        frame: blurred frame
        events: events sorted by time (only those inside the exposure are used)
        c: contrast threshold
        crf: camera response model

    Returns:
        (height, width) log image at the exposure midpoint
    """
    h, w = frame.shape
    if (events.height, events.width) != (h, w):
        raise GeometryError('Events and frame geometry differ')
    log_blurred = np.log(crf.inverse(frame.response) + crf.i0)
    s, e = frame.exposure_start, frame.exposure_end
    if e <= s:
        return log_blurred

    mid = frame.t_mid.micros
    ev = events.window(s, e)
    ev = ev[ev.in_bounds()]
    n = h * w
    T = to_seconds(e - s)
    if len(ev) == 0:
        return log_blurred

    pix = ev.pixel_index
    pol = ev.polarity.astype(np.float64)
    before = ev.t <= mid
    E0 = -np.bincount(pix[before], weights=pol[before], minlength=n)

    order = np.lexsort((ev.t, pix))
    pix, t, pol = pix[order], ev.t[order], pol[order]
    first = np.r_[True, pix[1:] != pix[:-1]]
    group_start = np.flatnonzero(first)
    cum = np.cumsum(pol)
    offset = np.repeat(cum[group_start] - pol[group_start], np.diff(np.r_[group_start, len(pix)]))
    E_after = E0[pix] + (cum - offset)
    is_last = np.r_[first[1:], True]
    t_next = np.where(is_last, e, np.r_[t[1:], e])
    seg = to_seconds(t_next - t)

    integral = np.bincount(pix, weights=np.exp(c * E_after) * seg, minlength=n)
    t_first = np.full(n, e, dtype=np.int64)
    t_first[pix[group_start]] = t[group_start]
    integral += np.exp(c * E0) * to_seconds(t_first - s)
    return log_blurred - np.log(integral / T).reshape(h, w)


def _window_sum(index: EventIndex, pixels, t_lo, t_hi, inclusive_lo=False, inclusive_hi=True):
    return index.signed_sum(pixels, t_lo, t_hi, inclusive_hi=inclusive_hi, inclusive_lo=inclusive_lo)


def intra_exposure(L_D_mid, index: EventIndex, frame: Frame, c, t, inclusive=True, pixels=None):
    """
    Log intensity at t inside the exposure of `frame`.

    Raises:
        QueryError: t outside [start, end) of the exposure
    """
    if not frame.exposure_start <= t < max(frame.exposure_end, frame.exposure_start + 1):
        raise QueryError(f't={t} outside exposure [{frame.exposure_start}, {frame.exposure_end})')
    value = _intra(L_D_mid, index, frame.t_mid.micros, c, t, inclusive, pixels)
    return value.reshape(np.shape(L_D_mid)) if pixels is None else value


def _intra(L_D_mid, index, mid, c, t, inclusive, pixels=None):
    flat = np.asarray(L_D_mid).reshape(-1)
    pixels = np.arange(flat.size) if pixels is None else pixels
    if t > mid or (t == mid and inclusive):
        count = _window_sum(index, pixels, mid, t, inclusive_hi=inclusive)
        return flat[pixels] + c * count
    count = _window_sum(index, pixels, t, mid, inclusive_lo=not inclusive)
    return flat[pixels] - c * count


def forward_interp(L_D_end, index: EventIndex, window_start, t, c, ct_scale, inclusive=True, pixels=None):
    """Forward interpolation: anchor plus scaled event integral over (window_start, t]."""
    flat = np.asarray(L_D_end).reshape(-1)
    pixels = np.arange(flat.size) if pixels is None else pixels
    scale = np.asarray(ct_scale).reshape(-1)[pixels] if np.ndim(ct_scale) else ct_scale
    count = _window_sum(index, pixels, window_start, t, inclusive_hi=inclusive)
    return flat[pixels] + c * scale * count


def backward_interp(L_D_next_begin, index: EventIndex, window_end, t, c, ct_scale, inclusive=True, pixels=None):
    """Backward interpolation: anchor minus scaled event integral over (t, window_end]."""
    flat = np.asarray(L_D_next_begin).reshape(-1)
    pixels = np.arange(flat.size) if pixels is None else pixels
    scale = np.asarray(ct_scale).reshape(-1)[pixels] if np.ndim(ct_scale) else ct_scale
    count = _window_sum(index, pixels, t, window_end, inclusive_lo=not inclusive)
    return flat[pixels] - c * scale * count


def blend(L_fwd, L_bwd, t, window_start, window_end, literal=False):
    """
    Convex combination of the two interpolations.

    The anchor nearest to t dominates: window start gives L_fwd, window end L_bwd.
    `literal` swaps the weights.
    """
    if window_end <= window_start:
        return L_fwd
    w = (t - window_start) / (window_end - window_start)
    if literal:
        return w * L_fwd + (1.0 - w) * L_bwd
    return (1.0 - w) * L_fwd + w * L_bwd


def calibrate_ct(L_D_end, L_D_next_begin, signed_counts, c, params: AugmentParams, trusted=None):
    """
    Per-pixel contrast threshold scale between two exposures.

    scale = (L_D_next_begin - L_D_end) / (c * signed_counts) where the event
    integral is large enough and has the sign of the change, 1.0 elsewhere,
    then clamped. Pixels outside the optional `trusted` mask (an anchor in
    the floored part of the response) keep 1.0.
    """
    delta = np.asarray(L_D_next_begin, dtype=np.float64) - np.asarray(L_D_end, dtype=np.float64)
    integral = c * np.asarray(signed_counts, dtype=np.float64)
    min_abs = c if params.min_abs_integral is None else params.min_abs_integral
    usable = (np.abs(integral) >= min_abs) & (np.sign(delta) == np.sign(integral)) & (integral != 0)
    if trusted is not None:
        usable &= np.asarray(trusted, dtype=bool).reshape(usable.shape)
    scale = np.ones_like(delta)
    scale[usable] = delta[usable] / integral[usable]
    lo, hi = params.ct_clamp
    return np.where(usable, np.clip(scale, lo, hi), 1.0)


def global_ct_estimate(frames: Sequence[Frame], events: EventStream, crf: CrfModel, band=(0.05, 0.95),
                       min_events=1) -> float:
    """
    Median per-pixel contrast threshold over consecutive frame pairs.

    Only pixels whose responses stay inside `band` at both frames and that
    saw at least `min_events` net events in between contribute.

    Raises:
        CalibrationError: no qualifying pixel
    """
    if len(frames) < 2:
        raise CalibrationError('Need at least two frames')
    index = EventIndex(events[events.in_bounds()])
    lo, hi = band
    estimates = []
    for k in range(len(frames) - 1):
        a, b = frames[k], frames[k + 1]
        counts = index.signed_sum_image(a.t_mid.micros, b.t_mid.micros)
        ok = ((a.response >= lo) & (a.response <= hi) & (b.response >= lo) & (b.response <= hi)
              & (np.abs(counts) >= min_events))
        if not np.any(ok):
            continue
        delta = crf.log_intensity(b.response) - crf.log_intensity(a.response)
        ratio = delta[ok] / counts[ok]
        estimates.append(ratio[ratio > 0])
    values = np.concatenate(estimates) if estimates else np.empty(0)
    if values.size == 0:
        raise CalibrationError('No pixels qualify for contrast threshold estimation')
    return float(np.median(values))


def zoh_reference(frames: Sequence[Frame], crf: CrfModel, t) -> np.ndarray:
    """Log image of the latest frame at or before t."""
    times = np.array([f.t_mid.micros for f in frames], dtype=np.int64)
    k = int(np.searchsorted(times, int(t), side='right')) - 1
    if k < 0:
        raise QueryError(f't={t} precedes the first frame')
    return crf.log_intensity(frames[k].response)


# ========== REFERENCE PROVIDERS ==========

class ZohReference:
    """
    Reference provider holding each raw log frame until the next one.

    Interface shared with AugmentedReference:
    log_value(pixels, t, k, inclusive), covariance(pixels, t, k), ct_scale(pixels, t, k),
    log_image(t, k, inclusive). `k` is the index of the latest applied frame.
    """

    def __init__(self, frames: Sequence[Frame], crf: CrfModel):
        """
        Constructor.

        Args:
            frames: frames sorted by midpoint
            crf: camera response model
        """
        frames = list(frames)
        if not frames:
            raise ParameterError('A reference needs at least one frame')
        check_frame_sequence(frames)
        self.frames = frames
        self.crf = crf
        self.shape = frames[0].shape
        self.times = np.array([f.t_mid.micros for f in frames], dtype=np.int64)
        self.log_frames = [crf.log_intensity(f.response).reshape(-1) for f in frames]
        self._R = [frame_covariance(f, crf).R.reshape(-1) for f in frames]
        self.logger = Logger(type(self).__name__)

    @property
    def n_frames(self):
        return len(self.frames)

    def frame_at(self, t) -> int:
        """Index of the latest frame with midpoint <= t, -1 before the first."""
        return int(np.searchsorted(self.times, int(t), side='right')) - 1

    def _pixels(self, pixels):
        return np.arange(self.shape[0] * self.shape[1]) if pixels is None else np.asarray(pixels)

    def log_value(self, pixels, t, k, inclusive=True):
        return self.log_frames[k][self._pixels(pixels)]

    def log_image(self, t, k=None, inclusive=True):
        k = self.frame_at(t) if k is None else k
        if k < 0:
            raise QueryError(f't={t} precedes the first frame')
        return self.log_value(None, int(t), k, inclusive).reshape(self.shape)

    def covariance(self, pixels, t, k):
        """Frame covariance R, linear in time between frame k and k + 1."""
        pixels = self._pixels(pixels)
        R_k = self._R[k][pixels]
        if k + 1 >= self.n_frames:
            return R_k
        t0, t1 = self.times[k], self.times[k + 1]
        w = (min(max(int(t), t0), t1) - t0) / (t1 - t0)
        return R_k + w * (self._R[k + 1][pixels] - R_k)

    def ct_scale(self, pixels, t, k):
        return np.ones(len(self._pixels(pixels)))


class AugmentedReference(ZohReference):
    """
    Deblurred and event-interpolated reference.

    Span of frame k: intra-exposure of k up to the end of its exposure,
    blended forward/backward interpolation until the next exposure starts,
    intra-exposure of k + 1 from there. After the last exposure only the
    forward interpolation with unit scale remains.

    A frame pixel is trusted when its response weighting is above the CRF
    floor. Between exposures a pixel blends only when both anchors are
    trusted; with a single trusted anchor that interpolation is used alone,
    and with none the forward interpolation carries the pixel.
    """

    def __init__(self, frames: Sequence[Frame], events: EventStream, crf: CrfModel, c: float,
                 params: Optional[AugmentParams] = None):
        """
        Constructor.

        Args:
            frames: frames sorted by midpoint
            events: events sorted by time
            crf: camera response model
            c: nominal contrast threshold
            params: augmentation parameters
        """
        super().__init__(frames, crf)
        if events.shape != self.shape:
            raise GeometryError(f'Events {events.shape} and frames {self.shape} differ in shape')
        self.c = c
        self.params = params or AugmentParams()
        inside = events[events.in_bounds()]
        self.index = EventIndex(inside)
        self.starts = np.array([f.exposure_start for f in self.frames], dtype=np.int64)
        self.ends = np.array([f.exposure_end for f in self.frames], dtype=np.int64)

        n = self.shape[0] * self.shape[1]
        everything = np.arange(n)
        self.L_D_mid = [edi_deblur(f, inside, c, crf).reshape(-1) for f in self.frames]
        self.L_D_end = []
        self.L_D_begin = []
        for k, f in enumerate(self.frames):
            mid = f.t_mid.micros
            self.L_D_end.append(self.L_D_mid[k] + c * self.index.signed_sum(everything, mid, self.ends[k]))
            self.L_D_begin.append(self.L_D_mid[k] - c * self.index.signed_sum(everything, self.starts[k], mid))

        self.trusted = [crf.weighting_at(f.response).reshape(-1) > crf.f_w_floor for f in self.frames]
        self.scales = []
        for k in range(self.n_frames - 1):
            counts = self.index.signed_sum(everything, self.ends[k], self.starts[k + 1])
            both = self.trusted[k] & self.trusted[k + 1]
            self.scales.append(calibrate_ct(self.L_D_end[k], self.L_D_begin[k + 1], counts, c, self.params, both))
        if self.scales:
            clamped = sum(int(np.count_nonzero(s != 1.0)) for s in self.scales)
            self.logger.debug(f'Calibrated {len(self.scales)} spans, {clamped} scaled pixel values')
        untrusted = sum(int(np.count_nonzero(~m)) for m in self.trusted)
        if untrusted:
            self.logger.debug(f'{untrusted} frame pixel values in the floored response range')

    def augmented_frame(self, k) -> AugmentedFrame:
        last = k + 1 >= self.n_frames
        return AugmentedFrame(
            L_D_mid=self.L_D_mid[k],
            L_D_end=self.L_D_end[k],
            L_D_next_begin=None if last else self.L_D_begin[k + 1],
            ct_scale=np.ones_like(self.L_D_mid[k]) if last else self.scales[k],
            span=(int(self.starts[k]), int(self.starts[k + 1]) if not last else int(np.iinfo(np.int64).max)),
        )

    def log_value(self, pixels, t, k, inclusive=True):
        pixels = self._pixels(pixels)
        t = int(t)
        c = self.c
        if k + 1 < self.n_frames and t >= self.starts[k + 1]:
            return _intra(self.L_D_mid[k + 1], self.index, self.times[k + 1], c, t, inclusive, pixels)
        if t < self.ends[k]:
            return _intra(self.L_D_mid[k], self.index, self.times[k], c, t, inclusive, pixels)
        if k + 1 >= self.n_frames:
            return forward_interp(self.L_D_end[k], self.index, self.ends[k], t, c, 1.0, inclusive, pixels)
        scale = self.scales[k]
        fwd = forward_interp(self.L_D_end[k], self.index, self.ends[k], t, c, scale, inclusive, pixels)
        bwd = backward_interp(self.L_D_begin[k + 1], self.index, self.starts[k + 1], t, c, scale, inclusive, pixels)
        mixed = blend(fwd, bwd, t, self.ends[k], self.starts[k + 1], literal=self.params.literal_blend)
        start = self.trusted[k][pixels]
        end = self.trusted[k + 1][pixels]
        return np.where(start & end, mixed, np.where(end & ~start, bwd, fwd))

    def log_image(self, t, k=None, inclusive=True):
        k = self.frame_at(t) if k is None else k
        if k < 0:
            raise QueryError(f't={t} precedes the first frame')
        return self.log_value(None, int(t), k, inclusive).reshape(self.shape)

    def ct_scale(self, pixels, t, k):
        pixels = self._pixels(pixels)
        if k + 1 < self.n_frames and self.ends[k] < t <= self.starts[k + 1]:
            return self.scales[k][pixels]
        return np.ones(len(pixels))


def build_reference(frames, events, crf, c, params: Optional[AugmentParams] = None):
    """Reference provider for the configured augmentation mode."""
    params = params or AugmentParams()
    if params.mode is AugmentMode.ZOH:
        return ZohReference(frames, crf)
    return AugmentedReference(frames, events, crf, c, params)

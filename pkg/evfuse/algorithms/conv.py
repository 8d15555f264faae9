"""
Event-Space Convolution for EvFuse

Spatially filtered reconstructions without intermediate images:
- Kernel library (identity, Gaussian, Sobel X/Y, Laplacian, custom)
- Each event expanded into kernel-weighted impulses on neighbouring pixels
- Frame references convolved with replicate boundaries
- Independent filter states per kernel, run in parallel
- Colour-wheel encoding of gradient fields

Author: Dragos Gontariu
License: GPL-3.0
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from matplotlib.colors import hsv_to_rgb
from scipy import ndimage

from ..core.errors import GeometryError, ParameterError
from ..core.timeline import interleave
from ..core.types import Event, EventStream, Timestamp
from .filters import AsyncFilter, EventImpulses, FilterParams
from .noise import EventNoiseParams

COVARIANCE_RULES = ('weighted', 'unconvolved')


@dataclass
class Kernel:
    """
    Small spatial mask stored as taps (dx, dy, weight).

    A tap at offset d sends an event at pixel q to pixel q + d; on images it
    reads pixel p - d.
    """

    taps: List[Tuple[int, int, float]]
    name: str = 'custom'

    def __post_init__(self):
        if not self.taps:
            raise ParameterError('Kernel needs at least one tap')
        clean = []
        seen = set()
        for dx, dy, w in self.taps:
            w = float(w)
            if not math.isfinite(w):
                raise ParameterError(f'Kernel {self.name} has a non-finite weight at ({dx}, {dy})')
            if (int(dx), int(dy)) in seen:
                raise ParameterError(f'Kernel {self.name} repeats tap ({dx}, {dy})')
            seen.add((int(dx), int(dy)))
            clean.append((int(dx), int(dy), w))
        self.taps = clean

    # ========== LIBRARY ==========

    @classmethod
    def identity(cls) -> 'Kernel':
        return cls([(0, 0, 1.0)], 'identity')

    @classmethod
    def gaussian(cls, sigma=1.0, radius=None) -> 'Kernel':
        """Gaussian truncated at radius ceil(3 sigma), renormalized to unit sum."""
        if sigma <= 0:
            raise ParameterError(f'Gaussian sigma must be > 0, got {sigma}')
        radius = int(math.ceil(3 * sigma)) if radius is None else int(radius)
        offsets = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
        weights = np.array([math.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) for dx, dy in offsets])
        weights /= weights.sum()
        return cls([(dx, dy, w) for (dx, dy), w in zip(offsets, weights)], f'gaussian({sigma:g})')

    @classmethod
    def sobel_x(cls) -> 'Kernel':
        return cls([(dx, dy, dx * (2 if dy == 0 else 1)) for dy in (-1, 0, 1) for dx in (-1, 1)], 'sobelx')

    @classmethod
    def sobel_y(cls) -> 'Kernel':
        return cls([(dx, dy, dy * (2 if dx == 0 else 1)) for dy in (-1, 1) for dx in (-1, 0, 1)], 'sobely')

    @classmethod
    def laplacian(cls) -> 'Kernel':
        return cls([(0, 0, -4.0), (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0)], 'laplacian')

    @classmethod
    def from_dense(cls, mask, name='custom') -> 'Kernel':
        """Kernel from an odd-sized dense mask indexed [r + dy, r + dx]."""
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1] or mask.shape[0] % 2 == 0:
            raise ParameterError('Dense kernel must be square with odd size')
        r = mask.shape[0] // 2
        taps = [(ix - r, iy - r, mask[iy, ix]) for iy in range(mask.shape[0]) for ix in range(mask.shape[1])
                if mask[iy, ix] != 0]
        return cls(taps, name)

    @classmethod
    def by_name(cls, name, sigma=1.0) -> 'Kernel':
        builders = {
            'identity': cls.identity,
            'gaussian': lambda: cls.gaussian(sigma),
            'sobelx': cls.sobel_x,
            'sobely': cls.sobel_y,
            'laplacian': cls.laplacian,
        }
        if name not in builders:
            raise ParameterError(f'Unknown kernel: {name}')
        return builders[name]()

    # ========== PROPERTIES ==========

    @property
    def nonzero_taps(self) -> List[Tuple[int, int, float]]:
        return [tap for tap in self.taps if tap[2] != 0.0]

    @property
    def radius(self) -> int:
        return max(max(abs(dx), abs(dy)) for dx, dy, _ in self.taps)

    @property
    def weight_sum(self) -> float:
        return float(sum(w for _, _, w in self.taps))

    def to_dense(self) -> np.ndarray:
        r = self.radius
        mask = np.zeros((2 * r + 1, 2 * r + 1))
        for dx, dy, w in self.taps:
            mask[r + dy, r + dx] = w
        return mask


@dataclass
class ConvolvedEventBatch:
    """Kernel-weighted impulses produced by one event; all share its timestamp."""

    t: Timestamp
    x: np.ndarray
    y: np.ndarray
    magnitudes: np.ndarray

    def __len__(self):
        return len(self.x)


def convolve_event(event: Event, kernel: Kernel, width, height, c=1.0) -> ConvolvedEventBatch:
    """
    Expand one event into impulses of magnitude c * polarity * weight.

    Taps landing outside the image are dropped.
    """
    if not (0 <= event.x < width and 0 <= event.y < height):
        raise GeometryError(f'Event at ({event.x}, {event.y}) outside {width}x{height}')
    xs, ys, mags = [], [], []
    for dx, dy, w in kernel.nonzero_taps:
        tx, ty = event.x + dx, event.y + dy
        if 0 <= tx < width and 0 <= ty < height:
            xs.append(tx)
            ys.append(ty)
            mags.append(c * event.polarity * w)
    return ConvolvedEventBatch(event.t, np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64),
                               np.array(mags, dtype=np.float64))


def convolve_frame(log_image, kernel: Kernel) -> np.ndarray:
    """Spatial convolution with replicate boundaries."""
    return ndimage.convolve(np.asarray(log_image, dtype=np.float64), kernel.to_dense(), mode='nearest')


# ========== CONVOLVED PIPELINE ==========

class ConvolvedImpulses(EventImpulses):
    """Event impulses expanded through a kernel; Q scaled by weight² or kept."""

    def __init__(self, events, params, kernel: Kernel, reference=None, noise_params=None,
                 t_start_micros=0, covariance_rule='weighted'):
        super().__init__(events, params, reference, noise_params, t_start_micros)
        if covariance_rule not in COVARIANCE_RULES:
            raise ParameterError(f'Unknown covariance rule: {covariance_rule}')
        self.kernel = kernel
        self.covariance_rule = covariance_rule
        self._taps = kernel.nonzero_taps

    def __call__(self, item, frame_index):
        pixels, magnitudes, q = self.source_impulses(item, frame_index)
        width, height = self.events.width, self.events.height
        x = pixels % width
        y = pixels // width
        out_p, out_m, out_q = [], [], []
        for dx, dy, w in self._taps:
            tx, ty = x + dx, y + dy
            ok = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
            out_p.append(ty[ok] * width + tx[ok])
            out_m.append(magnitudes[ok] * w)
            out_q.append(q[ok] * (w * w) if self.covariance_rule == 'weighted' else q[ok])
        return np.concatenate(out_p), np.concatenate(out_m), np.concatenate(out_q)


class ConvolvedReference:
    """Reference provider evaluating K * L^A (replicate boundary) tap by tap."""

    def __init__(self, base, kernel: Kernel, covariance_rule='weighted'):
        """
        Constructor.

        Args:
            base: unconvolved reference provider
            kernel: spatial kernel
            covariance_rule: 'weighted' (sum of w² R) or 'unconvolved' (R of the pixel)
        """
        if covariance_rule not in COVARIANCE_RULES:
            raise ParameterError(f'Unknown covariance rule: {covariance_rule}')
        self.base = base
        self.kernel = kernel
        self.covariance_rule = covariance_rule
        self.shape = base.shape
        self._taps = kernel.nonzero_taps

    @property
    def n_frames(self):
        return self.base.n_frames

    def _sources(self, pixels, dx, dy):
        h, w = self.shape
        x = np.clip(pixels % w - dx, 0, w - 1)
        y = np.clip(pixels // w - dy, 0, h - 1)
        return y * w + x

    def _pixels(self, pixels):
        return np.arange(self.shape[0] * self.shape[1]) if pixels is None else np.asarray(pixels)

    def log_value(self, pixels, t, k, inclusive=True):
        pixels = self._pixels(pixels)
        total = np.zeros(len(pixels))
        for dx, dy, w in self._taps:
            total += w * self.base.log_value(self._sources(pixels, dx, dy), t, k, inclusive)
        return total

    def log_image(self, t, k=None, inclusive=True):
        return convolve_frame(self.base.log_image(t, k, inclusive), self.kernel)

    def covariance(self, pixels, t, k):
        pixels = self._pixels(pixels)
        if self.covariance_rule == 'unconvolved':
            return self.base.covariance(pixels, t, k)
        total = np.zeros(len(pixels))
        for dx, dy, w in self._taps:
            total += (w * w) * self.base.covariance(self._sources(pixels, dx, dy), t, k)
        return total

    def ct_scale(self, pixels, t, k):
        return self.base.ct_scale(pixels, t, k)


def build_convolved_filter(events: EventStream, kernel: Kernel, params: FilterParams, reference=None,
                           noise_params: Optional[EventNoiseParams] = None, covariance_rule='weighted',
                           t_start_micros=0, frames_first=True) -> AsyncFilter:
    """Filter state fed by convolved events and the convolved reference, not yet run."""
    impulses = ConvolvedImpulses(events, params, kernel, reference, noise_params, t_start_micros, covariance_rule)
    conv_reference = ConvolvedReference(reference, kernel, covariance_rule) if reference is not None else None
    return AsyncFilter(params, conv_reference, events.shape, impulses,
                       initial_value=params.L_init * kernel.weight_sum,
                       frames_first=frames_first, t_start_micros=t_start_micros)


def run_convolved_pipeline(events: EventStream, frames, kernels: Dict[str, Kernel], params: FilterParams,
                           reference=None, noise_params: Optional[EventNoiseParams] = None,
                           covariance_rule='weighted', until=None, timeline=None,
                           max_workers=1) -> Dict[str, AsyncFilter]:
    """
    Run one independent filter per kernel over the same timeline.

    Args:
        events, frames: inputs as for the plain filter
        kernels: name -> Kernel
        params: filter parameters
        reference: unconvolved reference provider
        noise_params: event noise model
        covariance_rule: 'weighted' or 'unconvolved'
        until: process items up to this time (microseconds)
        timeline: prebuilt timeline, built from events and frames when None
        max_workers: threads running pipelines concurrently

    Returns:
        dict name -> AsyncFilter
    """
    timeline = interleave(events, frames) if timeline is None else timeline
    states = {
        name: build_convolved_filter(events, kernel, params, reference, noise_params, covariance_rule)
        for name, kernel in kernels.items()
    }
    advance_states(states, timeline, until, max_workers)
    return states


def advance_states(states: Dict[str, AsyncFilter], timeline, until=None, max_workers=1, executor=None):
    """
    Process every state up to `until`, concurrently when max_workers > 1.

    States share nothing but the read-only timeline and inputs.
    """
    if executor is None and max_workers > 1 and len(states) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return advance_states(states, timeline, until, executor=pool)
    if executor is not None:
        futures = [executor.submit(state.process_timeline, timeline, until) for state in states.values()]
        for future in futures:
            future.result()
    else:
        for state in states.values():
            state.process_timeline(timeline, until)


def gradient_color_encode(Gx, Gy, percentile=99.0) -> np.ndarray:
    """
    Colour-wheel image of a gradient field.

    Hue follows the direction atan2(Gy, Gx); saturation and value follow the
    magnitude normalized by its `percentile` (clipped to 1).

    Returns:
        (H, W, 3) float RGB in [0, 1]
    """
    Gx = np.asarray(Gx, dtype=np.float64)
    Gy = np.asarray(Gy, dtype=np.float64)
    if Gx.shape != Gy.shape:
        raise GeometryError(f'Gradient shapes differ: {Gx.shape} vs {Gy.shape}')
    magnitude = np.hypot(Gx, Gy)
    scale = np.percentile(magnitude, percentile) if magnitude.size else 0.0
    if scale <= 0:
        scale = magnitude.max() if magnitude.size and magnitude.max() > 0 else 1.0
    strength = np.clip(magnitude / scale, 0.0, 1.0)
    hue = np.mod(np.arctan2(Gy, Gx), 2 * np.pi) / (2 * np.pi)
    hsv = np.stack([hue, strength, strength], axis=-1)
    return hsv_to_rgb(hsv)

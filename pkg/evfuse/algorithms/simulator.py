"""
Simulator for EvFuse

Synthetic ground truth for end-to-end checks:
- Analytic log-intensity scenes (constant, ramp, moving sinusoid, moving step edge, sums)
- Threshold-crossing event synthesis with refractory suppression
- Exposure-integrated LDR frames through a clipping CRF, optional noise and 8-bit quantization
- Exact ground-truth log images at any time

Each pixel's time axis is cut at the scene's breakpoints (turning points of the
smooth part, jumps of the step part). Crossings are solved per monotone piece
with Brent's method, so event times are exact up to rounding to the microsecond.
All levels crossed by a jump fire at the jump time.

A crossing that falls inside the refractory period is dropped, but the pixel's
reference level still moves, so the lost change is not recovered later.

Author: Dragos Gontariu
License: GPL-3.0
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from ..core.errors import ParameterError
from ..core.types import EventStream, Frame, Timestamp, to_micros
from ..utils.logger import Logger
from .noise import DEFAULT_I0, CrfModel

CROSSING_TOLERANCE = 1e-12
ROOT_TOLERANCE = 1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ========== SCENES ==========

class Scene:
    """
    Log intensity L(x, y, t) over a width x height sensor.

    L is split into a continuous part and a piecewise-constant part. Between
    two consecutive breakpoints the continuous part is monotone and the
    piecewise-constant part does not change.
    """

    # True when the continuous part varies in time
    varies_smoothly = True

    def __init__(self, width, height):
        self.width = int(width)
        self.height = int(height)

    @property
    def shape(self):
        return (self.height, self.width)

    def smooth_value(self, x, y, t):
        """Continuous part of L at arrays x, y, t (broadcast)."""
        return np.zeros(np.broadcast(x, y, t).shape)

    def step_value(self, x, y, t):
        """Piecewise-constant part of L."""
        return np.zeros(np.broadcast(x, y, t).shape)

    def value(self, x, y, t):
        """L at arrays x, y, t (broadcast)."""
        return self.smooth_value(x, y, t) + self.step_value(x, y, t)

    def breakpoints(self, x, y, t0, t1) -> np.ndarray:
        """Sorted times in (t0, t1) where the pixel's continuous part turns or its step part jumps."""
        return np.empty(0)

    def image(self, t) -> np.ndarray:
        yy, xx = np.mgrid[0:self.height, 0:self.width]
        return np.broadcast_to(self.value(xx, yy, t), self.shape).astype(np.float64)

    def exposure_mean(self, t0, t1, subintervals=64) -> np.ndarray:
        """Mean of exp(L) over [t0, t1] per pixel (composite Gauss-Legendre)."""
        if t1 <= t0:
            return np.exp(self.image(t0))
        edges = np.linspace(t0, t1, subintervals + 1)
        total = np.zeros(self.shape)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
                total += weight * half * np.exp(self.image(0.5 * (a + b) + half * node))
        return total / (t1 - t0)


class ConstantScene(Scene):
    varies_smoothly = False

    def __init__(self, width, height, level=math.log(0.5 + DEFAULT_I0)):
        super().__init__(width, height)
        self.level = np.asarray(level, dtype=np.float64)

    def step_value(self, x, y, t):
        if self.level.ndim == 2:
            return self.level[y, x] + 0.0 * np.asarray(t)
        return self.level + 0.0 * (np.asarray(x) + np.asarray(y) + np.asarray(t))

    def exposure_mean(self, t0, t1, subintervals=64):
        return np.exp(self.image(t0))


class RampScene(Scene):
    """L = offset + gradient * x + rate * t."""

    def __init__(self, width, height, offset=-2.0, rate=1.0, gradient=0.0):
        super().__init__(width, height)
        self.offset = offset
        self.rate = rate
        self.gradient = gradient

    def smooth_value(self, x, y, t):
        return self.offset + self.gradient * np.asarray(x) + self.rate * np.asarray(t) + 0.0 * np.asarray(y)


class SinusoidScene(Scene):
    """Sinusoidal grating of `wavelength` pixels moving at `velocity` pixels/s along `angle`."""

    def __init__(self, width, height, mean=-1.0, amplitude=0.3, wavelength=16.0, velocity=8.0, angle=0.0):
        super().__init__(width, height)
        self.mean = mean
        self.amplitude = amplitude
        self.wavelength = wavelength
        self.velocity = velocity
        self.angle = angle

    def _along(self, x, y):
        return np.asarray(x) * math.cos(self.angle) + np.asarray(y) * math.sin(self.angle)

    def smooth_value(self, x, y, t):
        phase = (self._along(x, y) - self.velocity * np.asarray(t)) / self.wavelength
        return self.mean + self.amplitude * np.sin(2 * np.pi * phase)

    def breakpoints(self, x, y, t0, t1):
        # Extrema sit at phase 1/4 + n/2 cycles
        if self.velocity == 0 or self.amplitude == 0:
            return np.empty(0)
        along = float(self._along(x, y))
        ends = sorted(((along - self.velocity * t0) / self.wavelength, (along - self.velocity * t1) / self.wavelength))
        n = np.arange(math.ceil(2 * (ends[0] - 0.25)), math.floor(2 * (ends[1] - 0.25)) + 1)
        times = (along - self.wavelength * (0.25 + 0.5 * n)) / self.velocity
        return np.sort(times[(times > t0) & (times < t1)])


class StepEdgeScene(Scene):
    """Vertical edge at x0 + velocity * t; pixels with x <= edge are `high`, the rest `low`."""

    varies_smoothly = False

    def __init__(self, width, height, low=-2.0, high=-1.0, x0=0.5, velocity=100.0):
        super().__init__(width, height)
        self.low = low
        self.high = high
        self.x0 = x0
        self.velocity = velocity

    def step_value(self, x, y, t):
        passed = np.asarray(x) <= self.x0 + self.velocity * np.asarray(t)
        return np.where(passed, self.high, self.low) + 0.0 * np.asarray(y)

    def crossing_time(self, x):
        """Time at which the edge reaches column x (inf when it never does)."""
        if self.velocity == 0:
            return np.where(np.asarray(x) <= self.x0, -np.inf, np.inf)
        return (np.asarray(x, dtype=np.float64) - self.x0) / self.velocity

    def breakpoints(self, x, y, t0, t1):
        tc = float(self.crossing_time(x))
        return np.array([tc]) if t0 < tc < t1 else np.empty(0)

    def exposure_mean(self, t0, t1, subintervals=64):
        if t1 <= t0:
            return np.exp(self.image(t0))
        xx = np.broadcast_to(np.arange(self.width, dtype=np.float64), self.shape)
        tc = self.crossing_time(xx)
        if self.velocity >= 0:
            frac_high = np.clip((t1 - np.maximum(tc, t0)) / (t1 - t0), 0.0, 1.0)
        else:
            frac_high = np.clip((np.minimum(tc, t1) - t0) / (t1 - t0), 0.0, 1.0)
        return (1.0 - frac_high) * math.exp(self.low) + frac_high * math.exp(self.high)


class SumScene(Scene):
    """
    Sum of scene log intensities.

    At most one component may vary smoothly, otherwise the turning points of
    the sum are not known in closed form.
    """

    def __init__(self, *scenes: Scene):
        if not scenes:
            raise ParameterError('SumScene needs at least one scene')
        super().__init__(scenes[0].width, scenes[0].height)
        if any(s.shape != self.shape for s in scenes):
            raise ParameterError('SumScene components differ in shape')
        smooth = [s for s in scenes if s.varies_smoothly]
        if len(smooth) > 1:
            raise ParameterError(f'SumScene allows one smoothly varying component, got {len(smooth)}')
        self.scenes = scenes
        self.varies_smoothly = bool(smooth)

    def smooth_value(self, x, y, t):
        return sum(s.smooth_value(x, y, t) for s in self.scenes)

    def step_value(self, x, y, t):
        return sum(s.step_value(x, y, t) for s in self.scenes)

    def breakpoints(self, x, y, t0, t1):
        return np.unique(np.concatenate([s.breakpoints(x, y, t0, t1) for s in self.scenes]))


def ground_truth(scene: Scene, t_seconds) -> np.ndarray:
    """Exact log-intensity image at t."""
    return scene.image(t_seconds)


# ========== CONFIG ==========

@dataclass
class SimConfig:
    """
    Simulation settings.

    Attributes:
        c_true: contrast threshold, scalar or (H, W) map
        refractory: seconds; crossings closer than this to the previous event are dropped
        fps: frame rate
        exposure: exposure time T in seconds
        duration: seconds
        clip_band: irradiance band mapped linearly onto the response, None for the identity CRF
        frame_noise_std: Gaussian noise added to responses
        quantize: round responses to 8-bit levels
        seed: random seed
    """

    c_true: object = 0.1
    refractory: float = 0.0
    fps: float = 30.0
    exposure: float = 0.0
    duration: float = 1.0
    clip_band: Optional[Tuple[float, float]] = None
    frame_noise_std: float = 0.0
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.c_true) <= 0):
            raise ParameterError('c_true must be > 0')
        if self.fps <= 0 or self.duration <= 0:
            raise ParameterError('fps and duration must be > 0')
        if self.exposure < 0 or self.exposure >= 1.0 / self.fps:
            raise ParameterError('exposure must be in [0, 1/fps)')
        if self.refractory < 0 or self.frame_noise_std < 0:
            raise ParameterError('refractory and frame_noise_std must be >= 0')

    def crf(self, **kwargs) -> CrfModel:
        if self.clip_band is None:
            return CrfModel.identity(**kwargs)
        return CrfModel.clip_band(self.clip_band[0], self.clip_band[1], **kwargs)


# ========== EVENTS ==========

def _levels_crossed(target, ref, c):
    """(count, direction) of threshold levels between ref and target."""
    up = math.floor((target - ref) / c + CROSSING_TOLERANCE)
    if up > 0:
        return up, 1
    down = math.floor((ref - target) / c + CROSSING_TOLERANCE)
    return max(down, 0), -1


def _offset_from_level(t, scene, x, y, step, level):
    return float(scene.smooth_value(x, y, t)) + step - level


def _solve_crossing(scene, x, y, step, level, a, b):
    """Root of L - level on a monotone piece [a, b]; the nearer end when rounding hides the sign change."""
    fa = _offset_from_level(a, scene, x, y, step, level)
    fb = _offset_from_level(b, scene, x, y, step, level)
    if fa == 0.0:
        return a
    if fb == 0.0 or math.copysign(1.0, fa) == math.copysign(1.0, fb):
        return b if abs(fb) <= abs(fa) else a
    return brentq(_offset_from_level, a, b, args=(scene, x, y, step, level), xtol=ROOT_TOLERANCE)


def pixel_crossings(scene: Scene, x, y, c, duration) -> List[Tuple[float, int]]:
    """
    (time in seconds, polarity) of every threshold crossing of one pixel, in order.

    The pixel fires when L reaches its reference level +/- c; the reference
    then moves by c in that direction.
    """
    edges = np.concatenate([[0.0], scene.breakpoints(x, y, 0.0, duration), [duration]])
    base = float(scene.value(x, y, 0.0))
    index = 0
    crossings = []
    for a, b in zip(edges[:-1], edges[1:]):
        step = float(scene.step_value(x, y, 0.5 * (a + b)))
        start = float(scene.smooth_value(x, y, a)) + step
        end = float(scene.smooth_value(x, y, b)) + step

        # Jump into the piece
        count, direction = _levels_crossed(start, base + index * c, c)
        crossings.extend([(float(a), direction)] * count)
        index += direction * count

        count, direction = _levels_crossed(end, base + index * c, c)
        lo = float(a)
        for j in range(1, count + 1):
            lo = _solve_crossing(scene, x, y, step, base + (index + direction * j) * c, lo, float(b))
            crossings.append((lo, direction))
        index += direction * count
    return crossings


def simulate_events(scene: Scene, config: SimConfig) -> EventStream:
    """
    Threshold-crossing events of a scene.

    Crossing times come from pixel_crossings, rounded to the microsecond.
    Within one pixel, a crossing less than `refractory` after the previous
    emitted event is dropped.
    """
    logger = Logger('Simulator')
    h, w = scene.shape
    c = np.broadcast_to(np.asarray(config.c_true, dtype=np.float64), scene.shape)
    refractory_us = to_micros(config.refractory)

    out_t, out_x, out_y, out_p = [], [], [], []
    dropped = 0
    for y in range(h):
        for x in range(w):
            last_us = None
            for t, direction in pixel_crossings(scene, x, y, float(c[y, x]), config.duration):
                t_us = to_micros(t)
                if last_us is not None and t_us - last_us < refractory_us:
                    dropped += 1
                    continue
                last_us = t_us
                out_t.append(t_us)
                out_x.append(x)
                out_y.append(y)
                out_p.append(direction)

    t = np.array(out_t, dtype=np.int64)
    order = np.argsort(t, kind='stable')
    stream = EventStream(t[order], np.array(out_x, dtype=np.int64)[order], np.array(out_y, dtype=np.int64)[order],
                         np.array(out_p, dtype=np.int64)[order], w, h)
    if dropped:
        logger.info(f'Refractory period suppressed {dropped} crossings')
    logger.debug(f'Simulated {len(stream)} events over {config.duration} s')
    return stream


def scan_threshold_crossings(scene: Scene, x, y, c, duration, step=1e-5) -> List[Tuple[float, int]]:
    """
    Dense-time scanner for one pixel: (sample time, polarity) of every crossing.

    Independent of simulate_events; used as its oracle.
    """
    times = np.arange(0.0, duration + 0.5 * step, step)
    values = np.asarray(scene.value(np.full(times.shape, x), np.full(times.shape, y), times), dtype=np.float64)
    ref = values[0]
    crossings = []
    for t, v in zip(times[1:], values[1:]):
        while v - ref >= c - CROSSING_TOLERANCE:
            ref += c
            crossings.append((float(t), 1))
        while ref - v >= c - CROSSING_TOLERANCE:
            ref -= c
            crossings.append((float(t), -1))
    return crossings


# ========== FRAMES ==========

def frame_times(config: SimConfig) -> List[int]:
    """Exposure midpoints (microseconds) of frames fully inside the duration."""
    period = 1.0 / config.fps
    half = config.exposure / 2
    times = []
    k = 0
    while True:
        mid = (k + 0.5) * period
        if mid + half > config.duration + 1e-12:
            break
        times.append(to_micros(mid))
        k += 1
    return times


def simulate_frames(scene: Scene, config: SimConfig, crf: Optional[CrfModel] = None) -> List[Frame]:
    """
    Exposure-integrated LDR frames.

    response = CRF(clip(mean over exposure of exp(L) - I0)), plus optional
    Gaussian noise, quantized to 8-bit levels.
    """
    crf = crf or config.crf()
    rng = np.random.default_rng(config.seed)
    exposure_us = to_micros(config.exposure)
    frames = []
    for mid in frame_times(config):
        start = mid - exposure_us // 2
        end = mid + exposure_us - exposure_us // 2
        irradiance = scene.exposure_mean(start / 1e6, end / 1e6) - crf.i0
        response = crf.forward(np.clip(irradiance, 0.0, 1.0))
        if config.frame_noise_std > 0:
            response = response + rng.normal(0.0, config.frame_noise_std, response.shape)
        if config.quantize:
            response = np.round(np.clip(response, 0.0, 1.0) * 255.0) / 255.0
        frames.append(Frame(Timestamp(mid), exposure_us / 1e6, np.clip(response, 0.0, 1.0)))
    return frames


@dataclass
class SimulatedDataset:
    """Everything one simulation produces."""

    scene: Scene
    config: SimConfig
    events: EventStream
    frames: List[Frame]
    crf: CrfModel

    def ground_truth(self, t_micros) -> np.ndarray:
        return ground_truth(self.scene, t_micros / 1e6)


def simulate(scene: Scene, config: SimConfig, crf: Optional[CrfModel] = None) -> SimulatedDataset:
    crf = crf or config.crf()
    events = simulate_events(scene, config)
    frames = simulate_frames(scene, config, crf)
    return SimulatedDataset(scene, config, events, frames, crf)


def build_scene(name, width, height, **kwargs) -> Scene:
    """
    Scene by name: constant, ramp, sinusoid, edge, or hdr.

    hdr is a moving sinusoid plus a step edge sweeping right to left. Pixels
    start inside the response band of clip_band=(0.1, 0.9) and fall below it
    once the edge has passed.
    """
    if name == 'constant':
        return ConstantScene(width, height, **kwargs)
    if name == 'ramp':
        return RampScene(width, height, **kwargs)
    if name == 'sinusoid':
        return SinusoidScene(width, height, **kwargs)
    if name == 'edge':
        return StepEdgeScene(width, height, **kwargs)
    if name == 'hdr':
        return SumScene(
            SinusoidScene(width, height, mean=-1.6, amplitude=0.5, wavelength=width / 2, velocity=width / 8),
            StepEdgeScene(width, height, low=-1.5, high=0.6, x0=width - 0.5, velocity=-width / 2.5),
        )
    raise ParameterError(f'Unknown scene: {name}')

"""
Noise Models for EvFuse

Uncertainty models for both sensors:
- Event covariance Q: process noise + isolated-pixel noise + refractory noise
- Frame covariance R: image noise weighted by the camera response function

The CRF weighting function is the derivative of the response curve re-expressed
over the response axis and renormalized to unit maximum. Pixels where the
curve is flat (clipped) get the floor weight and therefore the capped covariance.

Author: Dragos Gontariu
License: GPL-3.0
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core.errors import ParameterError
from ..core.types import Frame, Timestamp, to_seconds
from ..utils.logger import Logger

RESPONSE_LEVELS = 256
DEFAULT_I0 = 0.01
DEFAULT_FW_FLOOR = 0.01
CRF_REPAIR_EPS = 1e-6
CRF_REPAIR_TOLERANCE = 0.01

_logger = Logger('NoiseModel')


@dataclass
class EventNoiseParams:
    """Event noise tuning parameters (variances in log-intensity²)."""

    sigma2_proc: float = 0.0005
    sigma2_iso: float = 0.03
    sigma2_ref: float = 0.01
    rho_bar: float = 1e-3
    neighborhood_radius: int = 1

    def __post_init__(self):
        if min(self.sigma2_proc, self.sigma2_iso, self.sigma2_ref) < 0:
            raise ParameterError('Event noise variances must be >= 0')
        if self.rho_bar <= 0:
            raise ParameterError(f'rho_bar must be > 0, got {self.rho_bar}')
        if self.neighborhood_radius < 1:
            raise ParameterError('neighborhood_radius must be >= 1')


# ========== EVENT NOISE ==========

def q_process(dt_since_last_event: float, params: EventNoiseParams) -> float:
    """
    Process noise, growing linearly with time since the last event.

    Args:
        dt_since_last_event: seconds, >= 0
        params: event noise parameters

    Returns:
        sigma2_proc * dt
    """
    if dt_since_last_event < 0:
        raise ParameterError(f'dt must be >= 0, got {dt_since_last_event}')
    return params.sigma2_proc * dt_since_last_event


def q_isolated(t_event: float, t_last_neighbor_event: Optional[float], params: EventNoiseParams,
               t_start: float = 0.0) -> float:
    """
    Isolated-pixel noise: grows with time since the last event in the neighbourhood.

    With no neighbour event yet, isolation is measured from `t_start`.
    """
    reference = t_start if t_last_neighbor_event is None else t_last_neighbor_event
    return params.sigma2_iso * max(t_event - reference, 0.0)


def q_refractory(dt_since_last_event: float, params: EventNoiseParams) -> float:
    """Refractory noise: sigma2_ref when dt <= rho_bar, else 0."""
    if dt_since_last_event < 0:
        raise ParameterError(f'dt must be >= 0, got {dt_since_last_event}')
    return params.sigma2_ref if dt_since_last_event <= params.rho_bar else 0.0


def event_covariance(t_event: float, t_last_event: Optional[float], t_last_neighbor_event: Optional[float],
                     params: EventNoiseParams, t_start: float = 0.0) -> float:
    """
    Total covariance Q of one event.

    Args:
        t_event: event time (seconds)
        t_last_event: previous event at the same pixel, or None
        t_last_neighbor_event: most recent strictly earlier neighbour event, or None
        params: event noise parameters
        t_start: stream start (seconds)

    Returns:
        q_process + q_isolated + q_refractory; refractory noise needs a previous event
    """
    has_previous = t_last_event is not None
    dt = t_event - (t_last_event if has_previous else t_start)
    q = q_process(dt, params) + q_isolated(t_event, t_last_neighbor_event, params, t_start)
    if has_previous:
        q += q_refractory(dt, params)
    return q


class NoiseTracker:
    """
    Owns the last-event and last-neighbour-event maps and computes Q per event.

    A batch of same-timestamp events must be handled as covariance() for the
    whole batch followed by record(), so that every Q only sees strictly
    earlier neighbour events.
    """

    NO_EVENT = -1

    def __init__(self, width, height, params: EventNoiseParams, t_start_micros=0):
        """
        Constructor.

        Args:
            width, height: sensor geometry
            params: event noise parameters
            t_start_micros: stream start used when a pixel has no history
        """
        self.width = width
        self.height = height
        self.params = params
        self.t_start = int(t_start_micros)
        self.last_event = np.full((height, width), self.NO_EVENT, dtype=np.int64)
        self.last_neighbor = np.full((height, width), self.NO_EVENT, dtype=np.int64)
        r = params.neighborhood_radius
        self._offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if (dy, dx) != (0, 0)]

    def covariance(self, x, y, t_micros) -> np.ndarray:
        """
        Q for a batch of events sharing timestamp `t_micros`.

        Repeated pixels inside the batch see the earlier copy as their previous event.
        """
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        p = self.params
        t = to_seconds(t_micros)
        last = self.last_event[y, x].copy()
        if len(x) > 1:
            flat = y * self.width + x
            _, first = np.unique(flat, return_index=True)
            repeated = np.ones(len(x), dtype=bool)
            repeated[first] = False
            last[repeated] = t_micros
        has_previous = last != self.NO_EVENT
        dt = np.where(has_previous, t - to_seconds(np.where(has_previous, last, 0)), t - to_seconds(self.t_start))
        neigh = self.last_neighbor[y, x]
        neigh_ref = np.where(neigh != self.NO_EVENT, neigh, self.t_start)
        iso_gap = np.maximum(t - to_seconds(neigh_ref), 0.0)
        q = p.sigma2_proc * np.maximum(dt, 0.0) + p.sigma2_iso * iso_gap
        q = q + np.where(has_previous & (dt <= p.rho_bar), p.sigma2_ref, 0.0)
        return q

    def record(self, x, y, t_micros):
        """Commit a batch of events at `t_micros` into the history maps."""
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        self.last_event[y, x] = t_micros
        for dy, dx in self._offsets:
            nx = x + dx
            ny = y + dy
            ok = (nx >= 0) & (nx < self.width) & (ny >= 0) & (ny < self.height)
            self.last_neighbor[ny[ok], nx[ok]] = t_micros


# ========== CAMERA RESPONSE ==========

def repair_crf_table(irradiance, response, eps=CRF_REPAIR_EPS, tolerance=CRF_REPAIR_TOLERANCE):
    """
    Make a tabulated CRF strictly increasing.

    Plateaus (clipping) are lifted by a tiny ramp proportional to irradiance.
    Drops larger than `tolerance` are not plateaus and are rejected.

    Returns:
        (irradiance, response) as float64 arrays
    """
    irradiance = np.asarray(irradiance, dtype=np.float64)
    response = np.asarray(response, dtype=np.float64)
    if irradiance.shape != response.shape or irradiance.ndim != 1 or irradiance.size < 2:
        raise ParameterError('CRF table must be two 1-D arrays of equal length >= 2')
    if np.any(np.diff(irradiance) <= 0):
        raise ParameterError('CRF irradiance samples must be strictly increasing')
    if np.all(np.diff(response) > 0):
        return irradiance, response
    drops = np.maximum.accumulate(response) - response
    if drops.max() > tolerance:
        raise ParameterError(f'CRF table is not monotone (drop of {drops.max():.4g})')
    repaired = (np.maximum.accumulate(response) + eps * irradiance) / (1.0 + eps)
    return irradiance, repaired


def _segment_slopes(irradiance, response, at_irradiance):
    slopes = np.diff(response) / np.diff(irradiance)
    seg = np.clip(np.searchsorted(irradiance, at_irradiance, side='right') - 1, 0, len(slopes) - 1)
    return slopes[seg]


def weighting_from_crf(irradiance, response, levels=RESPONSE_LEVELS) -> np.ndarray:
    """
    Weighting function f^w over `levels` evenly spaced response values.

    f^w(y) = CRF'(CRF^{-1}(y)), renormalized so that its maximum is exactly 1.

    Args:
        irradiance, response: CRF table (repaired if needed)
        levels: number of response samples

    Returns:
        np.ndarray of shape (levels,), unfloored
    """
    irradiance, response = repair_crf_table(irradiance, response)
    y = np.linspace(0.0, 1.0, levels)
    at = np.interp(y, response, irradiance)
    fw = _segment_slopes(irradiance, response, at)
    peak = fw.max()
    if not np.isfinite(peak) or peak <= 0:
        raise ParameterError('CRF has no positive slope')
    return fw / peak


@dataclass
class CrfModel:
    """
    Tabulated camera response with its inverse and derived weighting.

    Attributes:
        irradiance, response: table samples, both in [0, 1]
        sigma2_im: image noise scale
        f_w_floor: minimum weighting before covariance capping
        i0: log offset keeping intensities positive
    """

    irradiance: np.ndarray
    response: np.ndarray
    sigma2_im: float = 1e-4
    f_w_floor: float = DEFAULT_FW_FLOOR
    i0: float = DEFAULT_I0
    weighting: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma2_im <= 0:
            raise ParameterError('sigma2_im must be > 0')
        if not 0 < self.f_w_floor <= 1:
            raise ParameterError('f_w_floor must be in (0, 1]')
        self.irradiance, self.response = repair_crf_table(self.irradiance, self.response)
        self.weighting = np.maximum(weighting_from_crf(self.irradiance, self.response), self.f_w_floor)

    @classmethod
    def identity(cls, **kwargs) -> 'CrfModel':
        grid = np.linspace(0.0, 1.0, RESPONSE_LEVELS)
        return cls(grid, grid.copy(), **kwargs)

    @classmethod
    def from_table(cls, irradiance, response, **kwargs) -> 'CrfModel':
        return cls(np.asarray(irradiance), np.asarray(response), **kwargs)

    @classmethod
    def clip_band(cls, lo, hi, **kwargs) -> 'CrfModel':
        """Linear response between lo and hi irradiance, flat outside."""
        if not 0 <= lo < hi <= 1:
            raise ParameterError(f'Invalid clip band [{lo}, {hi}]')
        grid = np.linspace(0.0, 1.0, RESPONSE_LEVELS)
        grid = np.union1d(grid, [lo, hi])
        return cls(grid, np.clip((grid - lo) / (hi - lo), 0.0, 1.0), **kwargs)

    @property
    def cap(self) -> float:
        """Largest linear-intensity covariance, reached where the weighting is floored."""
        return self.sigma2_im / self.f_w_floor

    def forward(self, irradiance):
        """Response for irradiance values (clipped to [0, 1])."""
        return np.interp(np.clip(irradiance, 0.0, 1.0), self.irradiance, self.response)

    def inverse(self, response):
        """Irradiance for response values."""
        return np.interp(np.asarray(response, dtype=np.float64), self.response, self.irradiance)

    def log_intensity(self, response):
        """log(CRF^{-1}(response) + I0)."""
        return np.log(self.inverse(response) + self.i0)

    def weighting_at(self, response):
        levels = np.linspace(0.0, 1.0, len(self.weighting))
        return np.interp(np.asarray(response, dtype=np.float64), levels, self.weighting)


# ========== FRAME NOISE ==========

@dataclass
class FrameCovariance:
    """Per-pixel frame covariances: R_bar (linear intensity) and R (log intensity) at time t."""

    R_bar: np.ndarray
    R: np.ndarray
    t: Timestamp


def frame_covariance(frame: Frame, crf: CrfModel) -> FrameCovariance:
    """
    Covariance of one frame's log-intensity measurement.

    R_bar = sigma2_im / f^w(response), capped at sigma2_im / f_w_floor;
    R = R_bar / (CRF^{-1}(response) + I0)^2.
    """
    response = frame.response
    R_bar = np.minimum(crf.sigma2_im / crf.weighting_at(response), crf.cap)
    intensity = crf.inverse(response)
    R = R_bar / (intensity + crf.i0) ** 2
    return FrameCovariance(R_bar=R_bar, R=R, t=frame.t_mid)


def interpolate_R(cov_k: FrameCovariance, cov_k1: FrameCovariance, t_micros):
    """
    Linear interpolation of the log covariance between two frames.

    Times outside [t_k, t_k1] are clamped to the nearest endpoint with a warning.

    Args:
        cov_k, cov_k1: covariances of consecutive frames
        t_micros: query time in microseconds (int or Timestamp)

    Returns:
        np.ndarray covariance at t
    """
    t = t_micros.micros if isinstance(t_micros, Timestamp) else int(t_micros)
    t_k, t_k1 = cov_k.t.micros, cov_k1.t.micros
    if t < t_k or t > t_k1:
        _logger.warning(f'interpolate_R: t={t} outside [{t_k}, {t_k1}], clamped')
        t = min(max(t, t_k), t_k1)
    if t_k1 == t_k:
        return np.array(cov_k.R, dtype=np.float64)
    w = (t - t_k) / (t_k1 - t_k)
    R_k = np.asarray(cov_k.R, dtype=np.float64)
    return R_k + w * (np.asarray(cov_k1.R, dtype=np.float64) - R_k)

"""
Reconstruction Metrics for EvFuse

Quantitative comparison of reconstructions with reference intensities:
- MSE on raw intensities
- SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1
- Per-sequence reports pairing images by timestamp

Author: Dragos Gontariu
License: GPL-3.0
"""

from dataclasses import dataclass, field
from typing import Dict, List

import cv2
import numpy as np
import pandas as pd

from ..core.errors import GeometryError
from ..data.images_io import read_image_sequence
from .noise import DEFAULT_I0

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = (11, 11)
SSIM_SIGMA = 1.5
SSIM_RANGE = 1.0


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError(f'Image shapes differ: {a.shape} vs {b.shape}')
    return a, b


def mse(a, b) -> float:
    """Mean squared difference over all pixels."""
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def ssim(a, b) -> float:
    """
    Mean structural similarity of two images pre-scaled to [0, 1].

    Local statistics use a Gaussian window; borders are reflected.
    """
    a, b = _check_pair(a, b)
    if a.ndim != 2:
        raise GeometryError('SSIM expects 2-D grayscale images')
    C1 = (SSIM_K1 * SSIM_RANGE) ** 2
    C2 = (SSIM_K2 * SSIM_RANGE) ** 2

    mu1 = cv2.GaussianBlur(a, SSIM_WINDOW, SSIM_SIGMA, sigmaY=SSIM_SIGMA)
    mu2 = cv2.GaussianBlur(b, SSIM_WINDOW, SSIM_SIGMA, sigmaY=SSIM_SIGMA)

    sigma1_2 = cv2.GaussianBlur(a ** 2, SSIM_WINDOW, SSIM_SIGMA, sigmaY=SSIM_SIGMA) - mu1 ** 2
    sigma2_2 = cv2.GaussianBlur(b ** 2, SSIM_WINDOW, SSIM_SIGMA, sigmaY=SSIM_SIGMA) - mu2 ** 2
    sigma12 = cv2.GaussianBlur(a * b, SSIM_WINDOW, SSIM_SIGMA, sigmaY=SSIM_SIGMA) - mu1 * mu2

    ssim_map = ((2 * mu1 * mu2 + C1) * (2 * sigma12 + C2)) / ((mu1 ** 2 + mu2 ** 2 + C1) * (sigma1_2 + sigma2_2 + C2))
    return float(np.mean(ssim_map))


def intensity_from_log(L_hat, i0=DEFAULT_I0) -> np.ndarray:
    """Linear intensity exp(L) - I0, clipped at 0."""
    return np.maximum(np.exp(np.asarray(L_hat, dtype=np.float64)) - i0, 0.0)


@dataclass
class MetricReport:
    """Per-frame and mean MSE / SSIM of one sequence."""

    timestamps: List[int] = field(default_factory=list)
    mse_values: List[float] = field(default_factory=list)
    ssim_values: List[float] = field(default_factory=list)

    def add(self, t_micros, reconstruction, reference):
        """Score one reconstruction against its reference (intensities)."""
        self.timestamps.append(int(t_micros))
        self.mse_values.append(mse(reconstruction, reference))
        self.ssim_values.append(ssim(np.clip(reconstruction, 0.0, 1.0), np.clip(reference, 0.0, 1.0)))

    @property
    def frame_count(self) -> int:
        return len(self.timestamps)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse_values)) if self.mse_values else float('nan')

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values)) if self.ssim_values else float('nan')

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({
            'timestamp_us': self.timestamps,
            'mse': self.mse_values,
            'ssim': self.ssim_values,
        })

    def summary_line(self) -> str:
        return f'frames={self.frame_count} mean_mse={self.mean_mse:.6g} mean_ssim={self.mean_ssim:.6f}'

    def to_dict(self) -> Dict:
        return {
            'frame_count': self.frame_count,
            'mean_mse': self.mean_mse,
            'mean_ssim': self.mean_ssim,
            'frames': [
                {'timestamp_us': t, 'mse': m, 'ssim': s}
                for t, m, s in zip(self.timestamps, self.mse_values, self.ssim_values)
            ],
        }


def evaluate_images(reconstructions: Dict[int, np.ndarray], references: Dict[int, np.ndarray]) -> MetricReport:
    """
    Build a report from two timestamp -> intensity image maps.

    Only timestamps present in both maps are scored.
    """
    report = MetricReport()
    for t in sorted(set(reconstructions) & set(references)):
        report.add(t, reconstructions[t], references[t])
    return report


def evaluate_sequences(reconstruction_dir, reference_dir) -> MetricReport:
    """
    Score a directory of reconstructions against a directory of references.

    Images are paired by the microsecond timestamp in their filenames.

    Raises:
        DataFormatError: unreadable directories
        GeometryError: paired images differ in shape
    """
    return evaluate_images(read_image_sequence(reconstruction_dir), read_image_sequence(reference_dir))

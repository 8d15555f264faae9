"""
Reconstruction metrics.

Covers:
 - MSE and SSIM against direct implementations
 - per-sequence reports and timestamp pairing
 - directory evaluation with raw and display images
"""

import math

import numpy as np
import pytest

from evfuse.algorithms.metrics import (MetricReport, evaluate_images, evaluate_sequences, intensity_from_log, mse,
                                       ssim)
from evfuse.core.errors import DataFormatError, GeometryError
from evfuse.data.images_io import snapshot_name, write_raw


def _naive_ssim(a, b):
    """Separable Gaussian window, 11 taps, sigma 1.5, reflect-101 borders."""
    taps = np.array([math.exp(-(i - 5) ** 2 / (2 * 1.5 ** 2)) for i in range(11)])
    taps /= taps.sum()

    def blur(img):
        padded = np.pad(img, 5, mode='reflect')
        h, w = img.shape
        rows = sum(taps[i] * padded[i:i + h, :] for i in range(11))
        return sum(taps[j] * rows[:, j:j + w] for j in range(11))

    C1, C2 = 0.01 ** 2, 0.03 ** 2
    mu1, mu2 = blur(a), blur(b)
    s11 = blur(a * a) - mu1 ** 2
    s22 = blur(b * b) - mu2 ** 2
    s12 = blur(a * b) - mu1 * mu2
    value = ((2 * mu1 * mu2 + C1) * (2 * s12 + C2)) / ((mu1 ** 2 + mu2 ** 2 + C1) * (s11 + s22 + C2))
    return float(value.mean())


# ========== METRICS ==========

def test_mse_matches_loop():
    rng = np.random.default_rng(1)
    a, b = rng.random((5, 6)), rng.random((5, 6))
    expected = sum((a[y, x] - b[y, x]) ** 2 for y in range(5) for x in range(6)) / 30
    assert mse(a, b) == pytest.approx(expected)
    assert mse(a, a) == 0.0


def test_ssim_matches_direct_gaussian_window():
    rng = np.random.default_rng(2)
    a = rng.random((20, 24))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(_naive_ssim(a, b), abs=1e-7)


def test_ssim_of_identical_images_is_one():
    a = np.random.default_rng(3).random((16, 16))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, 1.0 - a) < 0.5


def test_shape_mismatch_is_a_geometry_error():
    with pytest.raises(GeometryError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(GeometryError):
        ssim(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)))


def test_intensity_from_log():
    assert intensity_from_log(np.log(0.51)) == pytest.approx(0.5)
    assert intensity_from_log(-10.0) == 0.0
    assert intensity_from_log(0.0, i0=0.0) == pytest.approx(1.0)


# ========== REPORTS ==========

def test_report_pairs_common_timestamps():
    rng = np.random.default_rng(4)
    images = {t: rng.random((12, 12)) for t in (100, 200, 300)}
    references = {200: images[200], 300: np.zeros((12, 12)), 400: np.ones((12, 12))}
    report = evaluate_images(images, references)
    assert report.frame_count == 2
    assert report.timestamps == [200, 300]
    assert report.mse_values[0] == 0.0
    assert report.mean_mse == pytest.approx(np.mean(images[300] ** 2) / 2)

    frame = report.to_dataframe()
    assert list(frame.columns) == ['timestamp_us', 'mse', 'ssim']
    assert frame['timestamp_us'].tolist() == [200, 300]
    assert report.to_dict()['frames'][0]['timestamp_us'] == 200
    assert report.summary_line().startswith('frames=2 ')


def test_empty_report():
    report = MetricReport()
    assert report.frame_count == 0
    assert math.isnan(report.mean_mse)
    assert math.isnan(report.mean_ssim)


def test_ssim_in_report_clips_to_unit_range():
    report = MetricReport()
    bright = np.full((12, 12), 2.0)
    report.add(0, bright, np.ones((12, 12)))
    assert report.ssim_values[0] == pytest.approx(1.0)
    assert report.mse_values[0] == pytest.approx(1.0)


def test_evaluate_sequences_from_directories(tmp_path):
    rng = np.random.default_rng(5)
    truth = {t: rng.random((10, 10)) for t in (1000, 2000)}
    for t, image in truth.items():
        write_raw(str(tmp_path / 'truth'), t, image)
        write_raw(str(tmp_path / 'recon'), t, image * 0.5)
    report = evaluate_sequences(str(tmp_path / 'recon'), str(tmp_path / 'truth'))
    assert report.timestamps == [1000, 2000]
    expected = np.mean([np.mean((0.25 * img ** 2)) for img in truth.values()])
    assert report.mean_mse == pytest.approx(expected)
    assert (tmp_path / 'truth' / snapshot_name(1000, 'npy')).exists()


def test_evaluate_sequences_needs_images(tmp_path):
    (tmp_path / 'empty').mkdir()
    with pytest.raises(DataFormatError):
        evaluate_sequences(str(tmp_path / 'empty'), str(tmp_path / 'empty'))
    with pytest.raises(DataFormatError):
        evaluate_sequences(str(tmp_path / 'missing'), str(tmp_path / 'empty'))

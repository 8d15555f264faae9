"""
Event-space convolution.

Covers:
 - kernel library masks and dense round trips
 - event expansion with dropped out-of-image taps
 - frame convolution against a replicate-boundary loop
 - identity kernel reproducing the plain filter bit for bit
 - convolving the plain reconstruction equals reconstructing convolved events (linear filter, interior events)
 - impulse counts and the two covariance rules
 - gradient colour encoding and parallel execution
"""

import numpy as np
import pytest

from evfuse.algorithms.augment import AugmentedReference, ZohReference
from evfuse.algorithms.conv import (ConvolvedImpulses, Kernel, build_convolved_filter, convolve_event,
                                    convolve_frame, gradient_color_encode, run_convolved_pipeline)
from evfuse.algorithms.filters import FilterParams, process_timeline
from evfuse.algorithms.noise import EventNoiseParams
from evfuse.core.errors import GeometryError, ParameterError
from evfuse.core.timeline import interleave
from evfuse.core.types import Event, EventStream, Timestamp


def _interior(events, margin):
    """Events at least `margin` pixels away from every border."""
    keep = ((events.x >= margin) & (events.x < events.width - margin)
            & (events.y >= margin) & (events.y < events.height - margin))
    return EventStream(events.t[keep], events.x[keep], events.y[keep], events.polarity[keep],
                       events.width, events.height)


# ========== KERNELS ==========

def test_library_masks():
    assert Kernel.sobel_x().to_dense().tolist() == [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    assert Kernel.sobel_y().to_dense().tolist() == [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    assert Kernel.laplacian().to_dense().tolist() == [[0, 1, 0], [1, -4, 1], [0, 1, 0]]
    assert Kernel.identity().to_dense().tolist() == [[1.0]]


def test_gaussian_is_normalized_and_truncated_at_three_sigma():
    kernel = Kernel.gaussian(1.0)
    assert kernel.radius == 3
    assert kernel.weight_sum == pytest.approx(1.0)
    dense = kernel.to_dense()
    assert dense.shape == (7, 7)
    assert dense[3, 3] == dense.max()
    assert np.allclose(dense, dense.T)
    assert Kernel.gaussian(0.5).radius == 2


def test_dense_round_trip():
    for kernel in (Kernel.sobel_x(), Kernel.laplacian(), Kernel.gaussian(0.8)):
        again = Kernel.from_dense(kernel.to_dense())
        assert np.array_equal(again.to_dense(), kernel.to_dense())
    assert len(Kernel.from_dense(Kernel.sobel_x().to_dense()).taps) == 6


def test_kernel_validation():
    with pytest.raises(ParameterError):
        Kernel([])
    with pytest.raises(ParameterError):
        Kernel([(0, 0, 1.0), (0, 0, 2.0)])
    with pytest.raises(ParameterError):
        Kernel([(0, 0, float('nan'))])
    with pytest.raises(ParameterError):
        Kernel.from_dense(np.ones((2, 2)))
    with pytest.raises(ParameterError):
        Kernel.by_name('prewitt')
    assert Kernel.by_name('gaussian', sigma=2.0).radius == 6


# ========== EXPANSION ==========

def test_corner_event_keeps_only_in_image_taps():
    batch = convolve_event(Event(Timestamp(7), 0, 0, 1), Kernel.sobel_x(), 5, 5, c=0.1)
    assert len(batch) == 2
    impulses = sorted(zip(batch.x.tolist(), batch.y.tolist(), batch.magnitudes.tolist()))
    assert impulses == [(1, 0, pytest.approx(0.2)), (1, 1, pytest.approx(0.1))]
    assert batch.t.micros == 7


def test_interior_event_spreads_over_every_tap():
    batch = convolve_event(Event(Timestamp(0), 2, 2, -1), Kernel.laplacian(), 5, 5)
    image = np.zeros((5, 5))
    image[batch.y, batch.x] = batch.magnitudes
    assert image[1:4, 1:4].tolist() == [[0, -1, 0], [-1, 4, -1], [0, -1, 0]]
    with pytest.raises(GeometryError):
        convolve_event(Event(Timestamp(0), 5, 0, 1), Kernel.identity(), 5, 5)


def test_convolve_frame_uses_replicate_boundary():
    rng = np.random.default_rng(2)
    image = rng.normal(size=(6, 7))
    kernel = Kernel([(1, 0, 0.5), (0, -1, 2.0), (-2, 1, -1.0)])
    h, w = image.shape
    expected = np.zeros_like(image)
    for y in range(h):
        for x in range(w):
            for dx, dy, weight in kernel.taps:
                expected[y, x] += weight * image[min(max(y - dy, 0), h - 1), min(max(x - dx, 0), w - 1)]
    assert np.allclose(convolve_frame(image, kernel), expected, atol=1e-12)


# ========== PIPELINE ==========

def test_identity_kernel_reproduces_plain_filter(sinusoid_dataset):
    d = sinusoid_dataset
    params = FilterParams(mode='akf', c=0.1)
    noise = EventNoiseParams()
    reference = AugmentedReference(d.frames, d.events, d.crf, 0.1)
    timeline = interleave(d.events, d.frames)

    plain = process_timeline(timeline, d.events, params, reference, noise)
    states = run_convolved_pipeline(d.events, d.frames, {'identity': Kernel.identity()}, params,
                                    reference, noise, timeline=timeline)
    convolved = states['identity']
    assert np.array_equal(convolved.L_hat, plain.L_hat)
    assert np.array_equal(convolved.P, plain.P)
    t = timeline[-1].t + 1000
    assert np.array_equal(convolved.query(t), plain.query(t))


@pytest.mark.parametrize('kernel', [Kernel.identity(), Kernel.gaussian(1.0), Kernel.sobel_x(), Kernel.sobel_y(),
                                    Kernel.laplacian()], ids=lambda k: k.name)
def test_convolution_commutes_with_the_complementary_filter(sinusoid_dataset, kernel):
    d = sinusoid_dataset
    events = _interior(d.events, 3)
    assert len(events) > 0
    params = FilterParams(mode='cf', alpha=20.0, c=0.1)
    reference = ZohReference(d.frames, d.crf)
    timeline = interleave(events, d.frames)
    times = [5_000, 30_000, 100_000, 190_000]

    plain = process_timeline([], events, params, reference)
    plain_images = plain.reconstruct_schedule(timeline, times)
    convolved = build_convolved_filter(events, kernel, params, reference)
    convolved_images = convolved.reconstruct_schedule(timeline, times)

    for t, a, b in zip(times, plain_images, convolved_images):
        assert np.max(np.abs(convolve_frame(a, kernel) - b)) < 1e-9, f't={t}'


def test_update_count_is_taps_times_events(sinusoid_dataset):
    d = sinusoid_dataset
    events = _interior(d.events, 3)
    params = FilterParams(mode='cf')
    reference = ZohReference(d.frames, d.crf)
    kernels = {'gaussian': Kernel.gaussian(1.0), 'laplacian': Kernel.laplacian(), 'sobelx': Kernel.sobel_x()}
    states = run_convolved_pipeline(events, d.frames, kernels, params, reference)
    assert states['gaussian'].update_count == 49 * len(events)
    assert states['laplacian'].update_count == 5 * len(events)
    assert states['sobelx'].update_count == 6 * len(events)


def test_covariance_rules():
    events = EventStream([100], [2], [2], [1], 5, 5)
    item = interleave(events, [])[0]
    params = FilterParams(mode='akf', c=0.1, q_init=0.02)

    weighted = ConvolvedImpulses(events, params, Kernel.sobel_x())
    pixels, magnitudes, q = weighted(item, -1)
    assert len(pixels) == 6
    assert np.allclose(q, 0.02 * (magnitudes / 0.1) ** 2)

    plain = ConvolvedImpulses(events, params, Kernel.sobel_x(), covariance_rule='unconvolved')
    _, _, q = plain(item, -1)
    assert np.allclose(q, 0.02)

    with pytest.raises(ParameterError):
        ConvolvedImpulses(events, params, Kernel.sobel_x(), covariance_rule='sum')


def test_parallel_run_matches_sequential(sinusoid_dataset):
    d = sinusoid_dataset
    params = FilterParams(mode='akf')
    reference = AugmentedReference(d.frames, d.events, d.crf, 0.1)
    kernels = {'sobelx': Kernel.sobel_x(), 'sobely': Kernel.sobel_y(), 'gaussian': Kernel.gaussian(1.0)}
    serial = run_convolved_pipeline(d.events, d.frames, kernels, params, reference, EventNoiseParams())
    threaded = run_convolved_pipeline(d.events, d.frames, kernels, params, reference, EventNoiseParams(),
                                      max_workers=2)
    for name in kernels:
        assert np.array_equal(serial[name].L_hat, threaded[name].L_hat)
        assert np.array_equal(serial[name].P, threaded[name].P)


# ========== GRADIENT ENCODING ==========

def test_gradient_colour_encoding():
    rgb = gradient_color_encode(np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 0.0, 1.0]]))
    assert rgb.shape == (1, 3, 3)
    assert rgb[0, 0] == pytest.approx([1.0, 0.0, 0.0])
    assert rgb[0, 1] == pytest.approx([0.0, 0.0, 0.0])
    assert rgb[0, 2] == pytest.approx([0.5, 1.0, 0.0])
    with pytest.raises(GeometryError):
        gradient_color_encode(np.zeros((2, 2)), np.zeros((2, 3)))

"""
Reconstruction runs from dataset to written snapshots.

Covers:
 - output schedules
 - the processor writing images, raw arrays and the run summary
 - out-of-bounds events skipped and counted
 - end to end on a high dynamic range scene: the Kalman filter against frame hold, direct integration
   and the complementary filter
"""

import json
import os

import numpy as np
import pytest

from evfuse.algorithms.augment import AugmentedReference, zoh_reference
from evfuse.algorithms.filters import FilterParams, process_timeline
from evfuse.algorithms.metrics import intensity_from_log, mse
from evfuse.algorithms.noise import EventNoiseParams
from evfuse.algorithms.simulator import SimConfig, build_scene, simulate
from evfuse.core.errors import ParameterError
from evfuse.core.processor import ReconstructionProcessor, load_dataset, output_schedule, stream_bounds
from evfuse.core.timeline import interleave
from evfuse.core.types import EventStream
from evfuse.data.events_io import read_events, write_events
from evfuse.data.manifest import read_manifest
from evfuse.utils.config import build_config

from tests.helpers import make_frames, random_events


# ========== SCHEDULES ==========

def test_rate_schedule_spans_stream():
    events = EventStream([0, 1_000_000], [0, 1], [0, 0], [1, -1], 2, 1)
    times = output_schedule('rate', events, [], rate=100.0)
    assert len(times) == 100
    assert times[0] == 0
    assert times[1] == 10_000
    assert times[-1] == 990_000
    assert len(output_schedule('rate', events, [], rate=100.0, start=500_000)) == 50


def test_frame_event_and_list_schedules():
    events = random_events(20, 4, 4, 100_000, seed=3)
    frames = make_frames([10_000, 60_000], (4, 4))
    assert output_schedule('frames', events, frames).tolist() == [10_000, 60_000]
    assert output_schedule('events', events, frames).tolist() == np.unique(events.t).tolist()
    assert output_schedule('list', events, frames, times_seconds=[0.5, 0.25]).tolist() == [250_000, 500_000]
    assert stream_bounds(events, frames) == (min(int(events.t[0]), 10_000), max(int(events.t[-1]), 60_000))


def test_event_schedule_has_one_time_per_distinct_timestamp():
    events = EventStream([100, 100, 100, 250, 400, 400], [0, 1, 2, 0, 1, 1], [0, 0, 0, 0, 0, 0],
                         [1, -1, 1, 1, 1, -1], 3, 1)
    assert output_schedule('events', events, []).tolist() == [100, 250, 400]
    distinct = EventStream([10, 20, 30], [0, 0, 1], [0, 0, 0], [1, 1, -1], 2, 1)
    assert len(output_schedule('events', distinct, [])) == len(distinct)


def test_bad_schedules():
    events = random_events(5, 4, 4, 1000)
    with pytest.raises(ParameterError):
        output_schedule('hourly', events, [])
    with pytest.raises(ParameterError):
        output_schedule('frames', events, [])
    with pytest.raises(ParameterError):
        output_schedule('rate', events, [], rate=0)
    with pytest.raises(ParameterError):
        output_schedule('list', events, [], times_seconds=[])


# ========== PROCESSOR ==========

def test_processor_writes_snapshots_and_summary(dataset_dir, tmp_path):
    out_dir = tmp_path / 'out'
    config = build_config(overrides={'output.directory': str(out_dir)}, fallback_profile='synthetic')
    progress = []
    result = ReconstructionProcessor(config, dataset_dir, progress_callback=progress.append).run()
    assert result['success'], result['error']
    assert result['exit_code'] == 0

    dataset = load_dataset(dataset_dir)
    n_frames = len(dataset.frames)
    pngs = sorted(p for p in os.listdir(out_dir) if p.endswith('.png'))
    npys = sorted(p for p in os.listdir(out_dir) if p.endswith('.npy'))
    assert len(pngs) == n_frames
    assert len(npys) == n_frames
    assert progress[-1]['percent'] == 100

    with open(out_dir / 'summary.json', encoding='utf-8') as f:
        summary = json.load(f)
    assert summary['counters']['snapshots'] == n_frames
    assert summary['counters']['skipped_out_of_bounds'] == 0
    assert summary['counters']['state_updates'] > 0
    assert summary['config']['filter']['mode'] == 'akf'


def test_processor_counts_out_of_bounds_events(dataset_dir, tmp_path):
    manifest = read_manifest(dataset_dir)
    events = read_events(manifest.events)
    at = int(np.searchsorted(events.t, 100_000, side='right'))
    patched = EventStream(np.insert(events.t, at, 100_000), np.insert(events.x, at, 40),
                          np.insert(events.y, at, 3), np.insert(events.polarity, at, 1),
                          events.width, events.height)
    write_events(manifest.events, patched)

    config = build_config(overrides={'output.directory': str(tmp_path / 'out')})
    result = ReconstructionProcessor(config, dataset_dir).run()
    assert result['success'], result['error']
    assert result['counters']['stream']['out_of_bounds'] == 1
    assert result['counters']['skipped_out_of_bounds'] == 1


def test_processor_rejects_missing_dataset(tmp_path):
    config = build_config(overrides={'output.directory': str(tmp_path / 'out')})
    result = ReconstructionProcessor(config, str(tmp_path / 'nowhere')).run()
    assert not result['success']
    assert result['exit_code'] == 1


def test_processor_reports_corrupt_data(dataset_dir, tmp_path):
    manifest = read_manifest(dataset_dir)
    with open(manifest.events, 'a', encoding='utf-8') as f:
        f.write('not an event\n')
    config = build_config(overrides={'output.directory': str(tmp_path / 'out')})
    result = ReconstructionProcessor(config, dataset_dir).run()
    assert not result['success']
    assert result['exit_code'] == 2
    assert 'Malformed' in result['error']


def test_convolution_run_writes_one_directory_per_kernel(dataset_dir, tmp_path):
    out_dir = tmp_path / 'conv'
    config = build_config(overrides={'output.directory': str(out_dir), 'conv.workers': 2})
    result = ReconstructionProcessor(config, dataset_dir, kernels=['gradient', 'laplacian']).run()
    assert result['success'], result['error']
    for name in ('sobelx', 'sobely', 'laplacian', 'gradient'):
        assert any(p.endswith('.png') for p in os.listdir(out_dir / name)), name
    assert set(result['counters']['filters']) == {'sobelx', 'sobely', 'laplacian'}


# ========== END TO END ==========

@pytest.fixture(scope='module')
def hdr_run():
    """64x64 HDR scene, 2 s at 30 fps: the edge drives pixels below the clip band."""
    scene = build_scene('hdr', 64, 64)
    d = simulate(scene, SimConfig(c_true=0.1, fps=30.0, exposure=0.0, duration=2.0, clip_band=(0.1, 0.9),
                                  quantize=True))
    times = np.arange(50_000, 1_950_001, 37_000)
    truth = [intensity_from_log(scene.image(t / 1e6)) for t in times]
    return d, times, truth


def _mean_mse(images, truth):
    return float(np.mean([mse(intensity_from_log(image), ref) for image, ref in zip(images, truth)]))


def test_kalman_fusion_beats_frame_baselines_in_high_dynamic_range(hdr_run):
    d, times, truth = hdr_run
    assert any(np.count_nonzero(f.response == 0.0) > 1000 for f in d.frames[-5:])
    timeline = interleave(d.events, d.frames)
    reference = AugmentedReference(d.frames, d.events, d.crf, 0.1)

    def run(mode, noise=None):
        state = process_timeline([], d.events, FilterParams(mode=mode, c=0.1), reference, noise)
        return _mean_mse(state.reconstruct_schedule(timeline, times), truth)

    held = _mean_mse([zoh_reference(d.frames, d.crf, t) for t in times], truth)
    integrate = run('integrate')
    cf = run('cf')
    akf = run('akf', EventNoiseParams())
    assert akf < 0.7 * held
    assert akf < 0.7 * integrate
    assert akf <= cf


def test_hdr_reference_follows_events_between_clipped_frames(hdr_run):
    d, _, _ = hdr_run
    reference = AugmentedReference(d.frames, d.events, d.crf, 0.1)
    last = reference.n_frames - 2
    clipped = ~reference.trusted[last] & ~reference.trusted[last + 1]
    assert np.any(clipped)
    assert np.all(reference.scales[last][clipped] == 1.0)
    t = int((reference.times[last] + reference.times[last + 1]) // 2)
    pixels = np.flatnonzero(clipped)
    counts = reference.index.signed_sum(pixels, reference.times[last], t)
    expected = reference.L_D_end[last][pixels] + 0.1 * counts
    assert np.allclose(reference.log_value(pixels, t, last), expected)

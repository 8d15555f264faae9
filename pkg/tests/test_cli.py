"""
Command line.

Covers:
 - exit status for usage, data errors and success
 - simulate, reconstruct, convolve, calibrate-ct and evaluate end to end
 - byte-identical output across repeated runs
"""

import json
import logging
import os

import pytest

from evfuse.cli import main
from evfuse.data.manifest import read_manifest
from evfuse.utils.logger import ROOT_LOGGER_NAME, set_default_log_file


@pytest.fixture(autouse=True)
def _reset_logging():
    yield
    set_default_log_file(None)
    root = logging.getLogger(ROOT_LOGGER_NAME)
    for handler in [h for h in root.handlers if getattr(h, '_evfuse_console', False)]:
        root.removeHandler(handler)
    root.setLevel(logging.NOTSET)


def _files(directory, ext):
    return sorted(name for name in os.listdir(directory) if name.endswith(ext))


# ========== USAGE ==========

def test_no_arguments_is_a_usage_error(capsys):
    assert main([]) == 1
    assert 'usage' in capsys.readouterr().err


def test_unknown_command_and_flag(dataset_dir):
    assert main(['paint']) == 1
    assert main(['reconstruct', dataset_dir, '--bogus']) == 1
    assert main(['reconstruct', dataset_dir, '--mode', 'kalman']) == 1


def test_help_exits_cleanly(capsys):
    assert main(['--help']) == 0
    assert 'calibrate-ct' in capsys.readouterr().out


def test_bad_override_is_a_usage_error(dataset_dir, tmp_path):
    assert main(['--set', 'filter.speed=3', 'reconstruct', dataset_dir, '--out', str(tmp_path)]) == 1
    assert main(['--set', 'filter.alpha', 'reconstruct', dataset_dir, '--out', str(tmp_path)]) == 1


# ========== COMMANDS ==========

def test_simulate_writes_a_dataset(tmp_path, capsys):
    target = tmp_path / 'sim'
    status = main(['simulate', str(target), '--scene', 'sinusoid', '--width', '16', '--height', '12',
                   '--duration', '0.2', '--fps', '30'])
    assert status == 0
    assert 'frames to' in capsys.readouterr().out
    manifest = read_manifest(str(target))
    assert (manifest.width, manifest.height) == (16, 12)
    assert manifest.profile == 'synthetic'
    assert len(_files(target / 'ground_truth', '.npy')) == 6


def test_reconstruct_and_evaluate(dataset_dir, tmp_path, capsys):
    out_dir = tmp_path / 'akf'
    assert main(['reconstruct', dataset_dir, '--out', str(out_dir)]) == 0
    assert 'Wrote 6 images' in capsys.readouterr().out
    assert len(_files(out_dir, '.png')) == 6
    assert len(_files(out_dir, '.npy')) == 6
    with open(out_dir / 'summary.json', encoding='utf-8') as f:
        assert json.load(f)['config']['profile'] == 'synthetic'

    metrics_dir = tmp_path / 'metrics'
    truth = os.path.join(dataset_dir, 'ground_truth')
    assert main(['evaluate', str(out_dir), truth, '--out', str(metrics_dir)]) == 0
    assert capsys.readouterr().out.startswith('frames=6 ')
    assert (metrics_dir / 'metrics.csv').exists()
    with open(metrics_dir / 'metrics.json', encoding='utf-8') as f:
        assert len(json.load(f)['frames']) == 6


def test_reconstruct_cf_at_fixed_rate(dataset_dir, tmp_path):
    out_dir = tmp_path / 'cf'
    status = main(['reconstruct', dataset_dir, '--mode', 'cf', '--alpha', '10', '--schedule', 'rate',
                   '--rate', '50', '--normalize', 'fixed', '--bit-depth', '8', '--out', str(out_dir)])
    assert status == 0
    assert len(_files(out_dir, '.png')) == 10


def test_evaluate_without_common_timestamps(dataset_dir, tmp_path, capsys):
    out_dir = tmp_path / 'rate'
    assert main(['reconstruct', dataset_dir, '--schedule', 'list', '--times', '0.1', '--out', str(out_dir)]) == 0
    truth = os.path.join(dataset_dir, 'ground_truth')
    assert main(['evaluate', str(out_dir), truth]) == 2


def test_missing_dataset_is_a_usage_error(tmp_path):
    assert main(['reconstruct', str(tmp_path / 'nowhere'), '--out', str(tmp_path / 'out')]) == 1


def test_corrupt_events_are_a_data_error(dataset_dir, tmp_path, capsys):
    manifest = read_manifest(dataset_dir)
    with open(manifest.events, 'a', encoding='utf-8') as f:
        f.write('0.5 1 1 7\n')
    assert main(['reconstruct', dataset_dir, '--out', str(tmp_path / 'out')]) == 2
    assert 'error:' in capsys.readouterr().err
    assert main(['calibrate-ct', dataset_dir]) == 2


def test_calibrate_ct_prints_threshold(dataset_dir, tmp_path, capsys):
    scale_map = tmp_path / 'maps' / 'scale.npy'
    assert main(['calibrate-ct', dataset_dir, '--per-pixel', str(scale_map)]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith('c = ')
    assert float(line[4:]) > 0
    assert scale_map.exists()


def test_convolve_gradient(dataset_dir, tmp_path):
    out_dir = tmp_path / 'grad'
    assert main(['convolve', dataset_dir, '--kernel', 'gradient', '--workers', '2', '--out', str(out_dir)]) == 0
    for name in ('sobelx', 'sobely', 'gradient'):
        assert len(_files(out_dir / name, '.png')) == 6, name
    assert (out_dir / 'summary.json').exists()


def test_log_file_flag(dataset_dir, tmp_path):
    log_path = tmp_path / 'run.log'
    assert main(['--log-file', str(log_path), '-q', 'reconstruct', dataset_dir, '--out', str(tmp_path / 'o')]) == 0
    assert 'STARTING RECONSTRUCTION' in log_path.read_text(encoding='utf-8')


# ========== DETERMINISM ==========

def test_repeated_runs_write_identical_images(dataset_dir, tmp_path):
    first, second = tmp_path / 'first', tmp_path / 'second'
    assert main(['reconstruct', dataset_dir, '--out', str(first)]) == 0
    assert main(['reconstruct', dataset_dir, '--out', str(second)]) == 0
    names = _files(first, '.png')
    assert names == _files(second, '.png')
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()

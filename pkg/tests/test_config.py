"""
Configuration, validation and run bookkeeping.

Covers:
 - precedence of defaults, profiles, config files and overrides
 - config file errors with line numbers
 - value coercion
 - section validators
 - logger output and the progress tracker
"""

import logging
from typing import Optional

import pytest

from evfuse.core.errors import DataFormatError, ParameterError
from evfuse.utils.config import PROFILES, RunConfig, build_config, coerce_value, describe_keys, parse_config_file
from evfuse.utils.logger import Logger
from evfuse.utils.progress_tracker import ProgressTracker
from evfuse.utils.validators import InputValidator


def _config_file(tmp_path, text):
    path = tmp_path / 'run.cfg'
    path.write_text(text, encoding='utf-8')
    return str(path)


# ========== PRECEDENCE ==========

def test_defaults():
    config = build_config()
    assert config.filter.mode == 'akf'
    assert config.filter.c == 0.1
    assert config.output.schedule == 'frames'
    assert config.profile is None


def test_profile_then_file_then_overrides(tmp_path):
    path = _config_file(tmp_path, 'profile = flir\nfilter.c = 0.04\nfilter.alpha = 25\n')
    config = build_config(path)
    assert config.profile == 'flir'
    assert config.noise.sigma2_im == PROFILES['flir']['noise.sigma2_im']
    assert config.filter.c == 0.04
    assert config.filter.alpha == 25.0

    config = build_config(path, profile='dsec', overrides={'filter.alpha': '30', 'filter.mode': None})
    assert config.profile == 'dsec'
    assert config.noise.sigma2_im == PROFILES['dsec']['noise.sigma2_im']
    assert config.filter.c == 0.04
    assert config.filter.alpha == 30.0
    assert config.filter.mode == 'akf'


def test_fallback_profile_only_when_none_named(tmp_path):
    assert build_config(fallback_profile='synthetic').profile == 'synthetic'
    path = _config_file(tmp_path, 'profile = davis240c\n')
    assert build_config(path, fallback_profile='synthetic').profile == 'davis240c'


def test_unknown_profile():
    with pytest.raises(ParameterError):
        build_config(profile='gopro')


# ========== CONFIG FILES ==========

def test_config_file_reports_unknown_key_line(tmp_path):
    path = _config_file(tmp_path, '# comment\nfilter.mode = cf\n\nfilter.speed = 3\n')
    with pytest.raises(DataFormatError) as info:
        parse_config_file(path)
    assert info.value.line == 4


def test_config_file_reports_bad_value_and_syntax(tmp_path):
    with pytest.raises(DataFormatError) as info:
        parse_config_file(_config_file(tmp_path, 'filter.alpha = fast\n'))
    assert info.value.line == 1
    with pytest.raises(DataFormatError) as info:
        parse_config_file(_config_file(tmp_path, 'filter.alpha\n'))
    assert info.value.line == 1
    with pytest.raises(DataFormatError):
        parse_config_file(str(tmp_path / 'missing.cfg'))


def test_parse_config_file_keeps_entries(tmp_path):
    profile, entries = parse_config_file(_config_file(tmp_path, 'output.rate = 100  # Hz\nprofile = flir\n'))
    assert profile == 'flir'
    assert entries == [('output.rate', '100', 1)]


def test_key_access():
    config = RunConfig()
    config.set('noise.enabled', 'off')
    assert config.get('noise.enabled') is False
    assert config.noise_params() is None
    config.set('augment.min_abs_integral', 'none')
    assert config.augment.min_abs_integral is None
    with pytest.raises(ParameterError):
        config.set('alpha', 1)
    with pytest.raises(ParameterError):
        config.set('camera.alpha', 1)
    assert 'filter.mode = akf' in describe_keys()


def test_explicit_times():
    config = RunConfig()
    config.set('output.times', '0.1, 0.25 0.5')
    assert config.explicit_times() == [0.1, 0.25, 0.5]
    config.set('output.times', '0.1, soon')
    with pytest.raises(ParameterError):
        config.explicit_times()


# ========== COERCION ==========

def test_coerce_value():
    assert coerce_value('yes', bool) is True
    assert coerce_value('0', bool) is False
    assert coerce_value(' 12 ', int) == 12
    assert coerce_value(3.0, int) == 3
    assert coerce_value('2.5', float) == 2.5
    assert coerce_value('null', Optional[float]) is None
    assert coerce_value('0.5', Optional[float]) == 0.5
    with pytest.raises(ParameterError):
        coerce_value('maybe', bool)
    with pytest.raises(ParameterError):
        coerce_value(2.5, int)
    with pytest.raises(ParameterError):
        coerce_value('1.5', int)


def test_engine_parameters_follow_config():
    config = build_config(overrides={'filter.mode': 'cf', 'filter.alpha': 7, 'augment.mode': 'zoh',
                                     'augment.ct_clamp_hi': 4, 'filter.init_from_frame': 'off'})
    params = config.filter_params()
    assert params.mode.value == 'cf'
    assert params.alpha == 7.0
    assert params.init_from_frame is False
    assert config.augment_params().ct_clamp == (0.1, 4.0)
    assert config.crf_kwargs()['sigma2_im'] == 1e-4


def test_sim_config_threshold_jitter():
    config = build_config(overrides={'sim.width': 5, 'sim.height': 4, 'sim.ct_jitter': 0.2, 'sim.clip_hi': 0.9})
    sim = config.sim_config()
    assert sim.c_true.shape == (4, 5)
    assert sim.c_true.min() >= 0.08 and sim.c_true.max() <= 0.12
    assert sim.clip_band == (0.0, 0.9)


# ========== VALIDATION ==========

def test_default_config_is_valid():
    is_valid, errors = InputValidator.validate_all(RunConfig())
    assert is_valid, errors


@pytest.mark.parametrize('key,value,fragment', [
    ('filter.mode', 'kalman', 'filter mode'),
    ('filter.alpha', 0, 'filter.alpha'),
    ('noise.rho_bar', 0, 'rho_bar'),
    ('augment.ct_clamp_lo', 1.5, 'ct_clamp'),
    ('conv.kernel', 'sobelx,prewitt', 'prewitt'),
    ('conv.kernel', 'custom', 'kernel_file'),
    ('output.schedule', 'hourly', 'schedule'),
    ('output.bit_depth', 12, 'bit_depth'),
    ('sim.exposure', 0.5, 'sim.exposure'),
    ('logging.level', 'loud', 'logging.level'),
])
def test_validation_errors(key, value, fragment):
    config = RunConfig()
    config.set(key, value)
    is_valid, errors = InputValidator.validate_all(config)
    assert not is_valid
    assert any(fragment in error for error in errors)


def test_list_schedule_needs_times():
    config = build_config(overrides={'output.schedule': 'list'})
    is_valid, errors = InputValidator.validate_all(config, ['output'])
    assert not is_valid
    config.set('output.times', '0.5')
    assert InputValidator.validate_all(config, ['output'])[0]


def test_dataset_path_validation(tmp_path):
    assert not InputValidator.validate_dataset_path('')[0]
    assert not InputValidator.validate_dataset_path(str(tmp_path / 'missing'))[0]
    assert not InputValidator.validate_dataset_path(str(tmp_path))[0]
    (tmp_path / 'dataset.cfg').write_text('', encoding='utf-8')
    assert InputValidator.validate_dataset_path(str(tmp_path)) == (True, '')


# ========== LOGGING AND PROGRESS ==========

def test_logger_writes_file_and_standard_logging(tmp_path, caplog):
    caplog.set_level(logging.DEBUG, logger='evfuse')
    path = tmp_path / 'logs' / 'run.log'
    logger = Logger('Writer', log_file=str(path))
    logger.info('hello')
    logger.debug('details')
    text = path.read_text(encoding='utf-8')
    assert '[INFO] [Writer] hello' in text
    assert '[DEBUG] [Writer] details' in text
    assert any(r.name == 'evfuse.Writer' and r.getMessage() == 'hello' for r in caplog.records)


def test_progress_tracker():
    tracker = ProgressTracker(total_snapshots=4, total_events=100)
    assert tracker.get_overall_progress() == 0
    assert tracker.get_eta() is None
    tracker.start_stage('filter')
    tracker.update(2, processed_events=50)
    tracker.finish_stage('filter')
    assert tracker.get_overall_progress() == 50
    summary = tracker.get_summary()
    assert summary['completed_snapshots'] == 2
    assert summary['processed_events'] == 50
    assert 'filter' in summary['stage_seconds']
    assert summary['memory_mb'] > 0
    assert ProgressTracker(0).get_overall_progress() == 0

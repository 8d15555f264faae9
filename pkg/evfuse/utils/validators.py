"""
Input Validators for EvFuse

Validates run configurations and dataset paths and provides helpful error messages.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os

from .config import PROFILES

FILTER_MODES = ('cf', 'akf', 'highpass', 'integrate')
AUGMENT_MODES = ('full', 'zoh')
SCHEDULES = ('frames', 'rate', 'events', 'list')
KERNELS = ('identity', 'gaussian', 'sobelx', 'sobely', 'laplacian', 'gradient', 'custom')
SCENES = ('constant', 'ramp', 'sinusoid', 'edge', 'hdr')
LOG_LEVELS = ('debug', 'info', 'warning', 'error')


class InputValidator:
    """
    Validate processing inputs.
    """

    @staticmethod
    def validate_filter(section):
        """
        Validate filter settings.

        Args:
            section (FilterSection): filter section of a RunConfig

        Returns:
            tuple: (is_valid, error_message)
        """
        if section.mode not in FILTER_MODES:
            return False, f"Unknown filter mode '{section.mode}' (choose from {', '.join(FILTER_MODES)})"
        if not 0 < section.alpha <= 1e4:
            return False, f'filter.alpha must be in (0, 1e4] rad/s, got {section.alpha}'
        if not 0 < section.c <= 2.0:
            return False, f'filter.c must be in (0, 2], got {section.c}'
        if section.p_init <= 0:
            return False, f'filter.p_init must be > 0, got {section.p_init}'
        if section.q_init < 0:
            return False, f'filter.q_init must be >= 0, got {section.q_init}'
        return True, ''

    @staticmethod
    def validate_noise(section):
        """
        Validate event and frame noise settings.

        Returns:
            tuple: (is_valid, error_message)
        """
        for name in ('sigma2_proc', 'sigma2_iso', 'sigma2_ref'):
            if getattr(section, name) < 0:
                return False, f'noise.{name} must be >= 0, got {getattr(section, name)}'
        if section.rho_bar <= 0:
            return False, f'noise.rho_bar must be > 0, got {section.rho_bar}'
        if section.neighborhood_radius < 1:
            return False, f'noise.neighborhood_radius must be >= 1, got {section.neighborhood_radius}'
        if section.sigma2_im <= 0:
            return False, f'noise.sigma2_im must be > 0, got {section.sigma2_im}'
        if not 0 < section.f_w_floor <= 1:
            return False, f'noise.f_w_floor must be in (0, 1], got {section.f_w_floor}'
        if section.i0 <= 0:
            return False, f'noise.i0 must be > 0, got {section.i0}'
        return True, ''

    @staticmethod
    def validate_augment(section):
        """
        Validate augmentation settings.

        Returns:
            tuple: (is_valid, error_message)
        """
        if section.mode not in AUGMENT_MODES:
            return False, f"Unknown augmentation mode '{section.mode}' (choose from {', '.join(AUGMENT_MODES)})"
        if not 0 < section.ct_clamp_lo <= 1.0 <= section.ct_clamp_hi:
            return False, (f'augment.ct_clamp_lo/hi must satisfy 0 < lo <= 1 <= hi, '
                           f'got {section.ct_clamp_lo}, {section.ct_clamp_hi}')
        if section.min_abs_integral is not None and section.min_abs_integral <= 0:
            return False, f'augment.min_abs_integral must be > 0, got {section.min_abs_integral}'
        if not 0 <= section.band_lo < section.band_hi <= 1:
            return False, 'augment.band_lo/hi must satisfy 0 <= lo < hi <= 1'
        return True, ''

    @staticmethod
    def validate_conv(section):
        """
        Validate convolution settings.

        Returns:
            tuple: (is_valid, error_message)
        """
        kernels = [k.strip() for k in section.kernel.split(',') if k.strip()]
        if not kernels:
            return False, 'conv.kernel is empty'
        unknown = [k for k in kernels if k not in KERNELS]
        if unknown:
            return False, f"Unknown kernels: {', '.join(unknown)} (choose from {', '.join(KERNELS)})"
        if 'custom' in kernels and not section.kernel_file:
            return False, 'conv.kernel_file is required for the custom kernel'
        if section.kernel_file and not os.path.exists(section.kernel_file):
            return False, f'Kernel file not found: {section.kernel_file}'
        if section.sigma <= 0:
            return False, f'conv.sigma must be > 0, got {section.sigma}'
        if section.covariance_rule not in ('weighted', 'unconvolved'):
            return False, "conv.covariance_rule must be 'weighted' or 'unconvolved'"
        if section.workers < 1:
            return False, f'conv.workers must be >= 1, got {section.workers}'
        return True, ''

    @staticmethod
    def validate_output(section, explicit_times=None):
        """
        Validate output schedule and image settings.

        Args:
            section (OutputSection): output section
            explicit_times (list): parsed output.times in seconds

        Returns:
            tuple: (is_valid, error_message)
        """
        if not section.directory:
            return False, 'No output directory specified'
        if section.schedule not in SCHEDULES:
            return False, f"Unknown schedule '{section.schedule}' (choose from {', '.join(SCHEDULES)})"
        if section.schedule == 'rate' and section.rate <= 0:
            return False, f'output.rate must be > 0 Hz, got {section.rate}'
        if section.schedule == 'list':
            if not explicit_times:
                return False, 'output.times must list at least one timestamp'
            if any(t < 0 for t in explicit_times):
                return False, 'output.times must be non-negative'
        if section.normalization not in ('fixed', 'percentile'):
            return False, "output.normalization must be 'fixed' or 'percentile'"
        if section.fixed_hi <= section.fixed_lo:
            return False, 'output.fixed_hi must exceed output.fixed_lo'
        if not 0 <= section.percentile_lo < section.percentile_hi <= 100:
            return False, 'output.percentile_lo/hi must satisfy 0 <= lo < hi <= 100'
        if section.bit_depth not in (8, 16):
            return False, f'output.bit_depth must be 8 or 16, got {section.bit_depth}'
        if section.image_format not in ('png', 'pgm'):
            return False, "output.image_format must be 'png' or 'pgm'"
        if section.writer_threads < 1:
            return False, 'output.writer_threads must be >= 1'
        return True, ''

    @staticmethod
    def validate_sim(section):
        """
        Validate simulator settings.

        Returns:
            tuple: (is_valid, error_message)
        """
        if section.scene not in SCENES:
            return False, f"Unknown scene '{section.scene}' (choose from {', '.join(SCENES)})"
        if section.width <= 0 or section.height <= 0:
            return False, f'Invalid geometry {section.width}x{section.height}'
        if section.duration <= 0 or section.fps <= 0:
            return False, 'sim.duration and sim.fps must be > 0'
        if not 0 <= section.exposure < 1.0 / section.fps:
            return False, f'sim.exposure must be in [0, 1/fps), got {section.exposure}'
        if section.c_true <= 0:
            return False, f'sim.c_true must be > 0, got {section.c_true}'
        if not 0 <= section.ct_jitter < 1:
            return False, f'sim.ct_jitter must be in [0, 1), got {section.ct_jitter}'
        if section.refractory < 0 or section.frame_noise_std < 0:
            return False, 'sim.refractory and sim.frame_noise_std must be >= 0'
        lo = 0.0 if section.clip_lo is None else section.clip_lo
        hi = 1.0 if section.clip_hi is None else section.clip_hi
        if not 0 <= lo < hi <= 1:
            return False, 'sim.clip_lo/hi must satisfy 0 <= lo < hi <= 1'
        return True, ''

    @staticmethod
    def validate_dataset_path(path):
        """
        Validate a dataset manifest path (file or directory holding dataset.cfg).

        Returns:
            tuple: (is_valid, error_message)
        """
        if not path:
            return False, 'No dataset specified'
        if not os.path.exists(path):
            return False, f'Dataset not found: {path}'
        if os.path.isdir(path) and not os.path.exists(os.path.join(path, 'dataset.cfg')):
            return False, f'No dataset.cfg in {path}'
        return True, ''

    @staticmethod
    def validate_all(config, sections=None):
        """
        Validate every section of a RunConfig.

        Args:
            config (RunConfig): configuration to validate
            sections (list): section names to check (all when None)

        Returns:
            tuple: (is_valid, list_of_errors)
        """
        errors = []
        wanted = sections or ('filter', 'noise', 'augment', 'conv', 'output', 'sim', 'logging')

        checks = {
            'filter': lambda: InputValidator.validate_filter(config.filter),
            'noise': lambda: InputValidator.validate_noise(config.noise),
            'augment': lambda: InputValidator.validate_augment(config.augment),
            'conv': lambda: InputValidator.validate_conv(config.conv),
            'sim': lambda: InputValidator.validate_sim(config.sim),
        }
        for name in wanted:
            if name in checks:
                is_valid, error = checks[name]()
                if not is_valid:
                    errors.append(error)

        if 'output' in wanted:
            try:
                times = config.explicit_times()
            except ValueError as e:
                errors.append(str(e))
                times = []
            is_valid, error = InputValidator.validate_output(config.output, times)
            if not is_valid:
                errors.append(error)

        if 'logging' in wanted and config.logging.level not in LOG_LEVELS:
            errors.append(f"logging.level must be one of {', '.join(LOG_LEVELS)}")

        if config.profile is not None and config.profile not in PROFILES:
            errors.append(f"Unknown profile '{config.profile}'")

        return len(errors) == 0, errors

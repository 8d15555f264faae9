"""
Run Configuration for EvFuse

RunConfig gathers every tunable of a run in one dataclass tree with the
sections filter, noise, augment, conv, output, sim and logging.

Config files are flat text, one `section.key = value` per line:

    # AKF on a FLIR recording
    profile = flir
    filter.mode = akf
    filter.alpha = 25
    output.schedule = rate
    output.rate = 100

Precedence: built-in defaults < sensor profile < config file < command-line flags.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os
import typing
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

from ..core.errors import DataFormatError, ParameterError

SECTIONS = ('filter', 'noise', 'augment', 'conv', 'output', 'sim', 'logging')

# Sensor profiles: frame noise variance sigma2_im and contrast threshold c
PROFILES = {
    'davis240c': {'noise.sigma2_im': 7e5, 'filter.c': 0.1},
    'flir': {'noise.sigma2_im': 7e7, 'filter.c': 0.033},
    'dsec': {'noise.sigma2_im': 7e7, 'filter.c': 0.05},
    'synthetic': {'noise.sigma2_im': 1e-4, 'filter.c': 0.1},
}

_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


@dataclass
class FilterSection:
    mode: str = 'akf'
    alpha: float = 20.0
    c: float = 0.1
    p_init: float = 100.0
    l_init: Optional[float] = None
    q_init: float = 0.01
    reference_at_interval_start: bool = False
    scale_event_jumps: bool = True
    init_from_frame: bool = True
    frames_first: bool = True


@dataclass
class NoiseSection:
    enabled: bool = True
    sigma2_proc: float = 0.0005
    sigma2_iso: float = 0.03
    sigma2_ref: float = 0.01
    rho_bar: float = 1e-3
    neighborhood_radius: int = 1
    sigma2_im: float = 1e-4
    f_w_floor: float = 0.01
    i0: float = 0.01


@dataclass
class AugmentSection:
    mode: str = 'full'
    ct_clamp_lo: float = 0.1
    ct_clamp_hi: float = 10.0
    min_abs_integral: Optional[float] = None
    literal_blend: bool = False
    band_lo: float = 0.05
    band_hi: float = 0.95


@dataclass
class ConvSection:
    kernel: str = 'identity'
    sigma: float = 1.0
    kernel_file: Optional[str] = None
    covariance_rule: str = 'weighted'
    workers: int = 2


@dataclass
class OutputSection:
    directory: str = 'output'
    schedule: str = 'frames'
    rate: float = 30.0
    times: str = ''
    normalization: str = 'percentile'
    fixed_lo: float = 0.0
    fixed_hi: float = 1.0
    percentile_lo: float = 1.0
    percentile_hi: float = 99.0
    bit_depth: int = 16
    image_format: str = 'png'
    raw: bool = True
    writer_threads: int = 1


@dataclass
class SimSection:
    scene: str = 'hdr'
    width: int = 64
    height: int = 64
    duration: float = 1.0
    fps: float = 30.0
    exposure: float = 0.0
    c_true: float = 0.1
    ct_jitter: float = 0.0
    refractory: float = 0.0
    clip_lo: Optional[float] = None
    clip_hi: Optional[float] = None
    frame_noise_std: float = 0.0
    quantize: bool = True
    seed: int = 0


@dataclass
class LoggingSection:
    level: str = 'info'
    file: Optional[str] = None


@dataclass
class RunConfig:
    """Every tunable of a run, grouped by section."""

    filter: FilterSection = field(default_factory=FilterSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    conv: ConvSection = field(default_factory=ConvSection)
    output: OutputSection = field(default_factory=OutputSection)
    sim: SimSection = field(default_factory=SimSection)
    logging: LoggingSection = field(default_factory=LoggingSection)
    profile: Optional[str] = None

    # ========== KEY ACCESS ==========

    def _locate(self, key):
        if '.' not in key:
            raise ParameterError(f'Config key {key!r} needs a section prefix')
        section_name, name = key.split('.', 1)
        if section_name not in SECTIONS:
            raise ParameterError(f'Unknown config section {section_name!r}')
        section = getattr(self, section_name)
        if name not in {f.name for f in fields(section)}:
            raise ParameterError(f'Unknown config key {key!r}')
        return section, name

    def get(self, key):
        section, name = self._locate(key)
        return getattr(section, name)

    def set(self, key, value):
        """Set `section.key`, coercing text to the field type."""
        section, name = self._locate(key)
        hint = typing.get_type_hints(type(section))[name]
        setattr(section, name, coerce_value(value, hint, key))

    def apply(self, overrides: Dict[str, object]):
        for key, value in overrides.items():
            self.set(key, value)
        return self

    def apply_profile(self, name):
        """
        Apply a sensor profile.

        Raises:
            ParameterError: unknown profile
        """
        if name not in PROFILES:
            raise ParameterError(f'Unknown profile {name!r} (choose from {", ".join(sorted(PROFILES))})')
        self.apply(PROFILES[name])
        self.profile = name
        return self

    def to_dict(self):
        return asdict(self)

    # ========== ENGINE PARAMETERS ==========

    def filter_params(self):
        from ..algorithms.filters import FilterParams
        f = self.filter
        return FilterParams(
            mode=f.mode, alpha=f.alpha, c=f.c, P_init=f.p_init, L_init=f.l_init, q_init=f.q_init,
            reference_at_interval_start=f.reference_at_interval_start,
            scale_event_jumps=f.scale_event_jumps,
            init_from_frame=f.init_from_frame,
        )

    def noise_params(self):
        """EventNoiseParams, or None when the noise model is disabled (constant q_init)."""
        if not self.noise.enabled:
            return None
        from ..algorithms.noise import EventNoiseParams
        n = self.noise
        return EventNoiseParams(
            sigma2_proc=n.sigma2_proc, sigma2_iso=n.sigma2_iso, sigma2_ref=n.sigma2_ref,
            rho_bar=n.rho_bar, neighborhood_radius=n.neighborhood_radius,
        )

    def crf_kwargs(self):
        return {'sigma2_im': self.noise.sigma2_im, 'f_w_floor': self.noise.f_w_floor, 'i0': self.noise.i0}

    def augment_params(self):
        from ..algorithms.augment import AugmentParams
        a = self.augment
        return AugmentParams(
            mode=a.mode, ct_clamp=(a.ct_clamp_lo, a.ct_clamp_hi),
            min_abs_integral=a.min_abs_integral, literal_blend=a.literal_blend,
        )

    def sim_config(self):
        """SimConfig with a per-pixel threshold map when ct_jitter > 0."""
        import numpy as np

        from ..algorithms.simulator import SimConfig
        s = self.sim
        c_true = s.c_true
        if s.ct_jitter > 0:
            rng = np.random.default_rng(s.seed)
            c_true = s.c_true * (1.0 + rng.uniform(-s.ct_jitter, s.ct_jitter, size=(s.height, s.width)))
        clip_band = None
        if s.clip_lo is not None or s.clip_hi is not None:
            clip_band = (0.0 if s.clip_lo is None else s.clip_lo, 1.0 if s.clip_hi is None else s.clip_hi)
        return SimConfig(
            c_true=c_true, refractory=s.refractory, fps=s.fps, exposure=s.exposure, duration=s.duration,
            clip_band=clip_band, frame_noise_std=s.frame_noise_std, quantize=s.quantize, seed=s.seed,
        )

    def explicit_times(self) -> List[float]:
        """output.times as seconds (comma or whitespace separated)."""
        text = self.output.times.replace(',', ' ').split()
        try:
            return [float(v) for v in text]
        except ValueError:
            raise ParameterError(f'output.times must list numbers, got {self.output.times!r}')


# ========== PARSING ==========

def coerce_value(value, hint, key='value'):
    """
    Convert `value` (usually text) to the annotated field type.

    Raises:
        ParameterError: value cannot be converted
    """
    if typing.get_origin(hint) is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None or (isinstance(value, str) and value.strip().lower() in ('', 'none', 'null')):
            return None
        hint = args[0]
    if hint is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ParameterError(f'{key}: expected a boolean, got {value!r}')
    try:
        if hint is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(str(value).strip()) if isinstance(value, str) else int(value)
        if hint is float:
            return float(value)
        if hint is str:
            return str(value).strip()
    except (TypeError, ValueError):
        raise ParameterError(f'{key}: cannot convert {value!r} to {hint.__name__}')
    return value


def parse_config_file(path) -> Tuple[Optional[str], List[Tuple[str, str, int]]]:
    """
    Read a config file without applying it.

    Returns:
        (profile or None, [(key, raw value, line number), ...])

    Raises:
        DataFormatError: missing file, malformed line or unknown key (with line number)
    """
    if not os.path.exists(path):
        raise DataFormatError('Config file not found', path)
    scratch = RunConfig()
    profile = None
    entries = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            text = raw.split('#', 1)[0].strip()
            if not text:
                continue
            if '=' not in text:
                raise DataFormatError(f'Expected "section.key = value", got {text!r}', path, number)
            key, value = (part.strip() for part in text.split('=', 1))
            if key == 'profile':
                profile = value
                continue
            try:
                scratch.set(key, value)
            except ParameterError as e:
                raise DataFormatError(str(e), path, number)
            entries.append((key, value, number))
    return profile, entries


def build_config(config_path=None, profile=None, overrides=None, fallback_profile=None) -> RunConfig:
    """
    Assemble a RunConfig: defaults < profile < config file < overrides.

    Args:
        config_path: optional config file
        profile: profile requested on the command line (wins over the file's)
        overrides: {section.key: value} from command-line flags
        fallback_profile: profile used when neither flag nor file names one

    Raises:
        DataFormatError: config file problems
        ParameterError: unknown profile or bad override
    """
    file_profile, entries = parse_config_file(config_path) if config_path else (None, [])
    config = RunConfig()
    chosen = profile or file_profile or fallback_profile
    if chosen:
        config.apply_profile(chosen)
    for key, value, _ in entries:
        config.set(key, value)
    if overrides:
        config.apply({k: v for k, v in overrides.items() if v is not None})
    return config


def describe_keys() -> List[str]:
    """One `section.key = default` line per config key, for --help."""
    config = RunConfig()
    lines = ['profile = (davis240c | flir | dsec | synthetic)']
    for name in SECTIONS:
        section = getattr(config, name)
        for f in fields(section):
            lines.append(f'{name}.{f.name} = {getattr(section, f.name)}')
    return lines

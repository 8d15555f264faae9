"""
EvFuse Command Line

Subcommands:
- reconstruct   fuse events and frames of a dataset into timestamped images
- convolve      spatially filtered reconstructions computed in event space
- simulate      write a synthetic dataset with ground truth
- calibrate-ct  estimate the global contrast threshold of a dataset
- evaluate      score a reconstruction directory against references

Exit status: 0 success, 1 usage error, 2 data error.

Author: Dragos Gontariu
License: GPL-3.0
"""

import argparse
import logging
import os
import sys

import numpy as np

from .algorithms.augment import AugmentedReference, global_ct_estimate
from .algorithms.metrics import evaluate_sequences
from .algorithms.simulator import build_scene, simulate
from .core.errors import DataFormatError, EvFuseError, ParameterError
from .core.processor import EXIT_DATA, EXIT_OK, EXIT_USAGE, ReconstructionProcessor, load_dataset
from .data.manifest import read_manifest
from .data.simulated import write_simulated_dataset
from .export.csv_exporter import CSVExporter
from .export.json_exporter import JSONExporter
from .utils.config import PROFILES, build_config, describe_keys
from .utils.logger import Logger, configure_console, set_default_log_file
from .utils.validators import KERNELS, InputValidator

logger = Logger('CLI')

# Flag destination -> config key
FLAG_KEYS = {
    'mode': 'filter.mode',
    'alpha': 'filter.alpha',
    'c': 'filter.c',
    'p_init': 'filter.p_init',
    'q_init': 'filter.q_init',
    'augment': 'augment.mode',
    'literal_blend': 'augment.literal_blend',
    'out': 'output.directory',
    'schedule': 'output.schedule',
    'rate': 'output.rate',
    'times': 'output.times',
    'normalize': 'output.normalization',
    'bit_depth': 'output.bit_depth',
    'no_noise_model': 'noise.enabled',
    'sigma': 'conv.sigma',
    'kernel_file': 'conv.kernel_file',
    'covariance_rule': 'conv.covariance_rule',
    'workers': 'conv.workers',
    'scene': 'sim.scene',
    'width': 'sim.width',
    'height': 'sim.height',
    'duration': 'sim.duration',
    'fps': 'sim.fps',
    'exposure': 'sim.exposure',
    'c_true': 'sim.c_true',
    'ct_jitter': 'sim.ct_jitter',
    'refractory': 'sim.refractory',
    'frame_noise': 'sim.frame_noise_std',
    'no_quantize': 'sim.quantize',
    'seed': 'sim.seed',
}
# Store-true flags that switch a default-on key off
NEGATED = ('no_noise_model', 'no_quantize')


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


# ========== PARSER ==========

def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument('--config', default=default, help='config file of "section.key = value" lines')
    parser.add_argument('--profile', choices=sorted(PROFILES), default=default, help='sensor profile')
    parser.add_argument('--log-file', default=default, help='append log lines to this file')
    parser.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE',
                        default=argparse.SUPPRESS if suppress else [], help='override any config key')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='store_true',
                           default=argparse.SUPPRESS if suppress else False, help='debug output')
    verbosity.add_argument('--quiet', '-q', action='store_true',
                           default=argparse.SUPPRESS if suppress else False, help='warnings and errors only')


def _filter_flags(parser):
    parser.add_argument('dataset', help='dataset.cfg or the directory holding it')
    parser.add_argument('--mode', choices=['cf', 'akf', 'highpass', 'integrate'], help='filter mode')
    parser.add_argument('--alpha', type=float, help='crossover gain in rad/s (CF and high-pass)')
    parser.add_argument('--c', type=float, help='contrast threshold')
    parser.add_argument('--p-init', type=float, help='initial state covariance (AKF)')
    parser.add_argument('--q-init', type=float, help='constant event covariance without noise model')
    parser.add_argument('--no-noise-model', action='store_true', default=None,
                        help='use the constant q_init for every event')
    parser.add_argument('--augment', choices=['full', 'zoh'], help='frame augmentation')
    parser.add_argument('--literal-blend', action='store_true', default=None,
                        help='give the far anchor full weight at each window end')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--schedule', choices=['frames', 'rate', 'events', 'list'], help='output schedule')
    parser.add_argument('--rate', type=float, help='snapshot rate in Hz for --schedule rate')
    parser.add_argument('--times', help='comma-separated snapshot times in seconds for --schedule list')
    parser.add_argument('--normalize', choices=['fixed', 'percentile'], help='image normalization')
    parser.add_argument('--bit-depth', type=int, choices=[8, 16], help='output image depth')


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    parser = UsageParser(
        prog='evfuse',
        description='Asynchronous fusion of event streams and frames into continuous-time intensity.',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='Examples:\n'
               '    evfuse simulate data/hdr --scene hdr --duration 2 --clip 0.1 0.9\n'
               '    evfuse reconstruct data/hdr --mode akf --out out/akf\n'
               '    evfuse convolve data/hdr --kernel gradient --out out/grad\n'
               '    evfuse calibrate-ct data/hdr\n'
               '    evfuse evaluate out/akf data/hdr/ground_truth\n\n'
               'Config keys (section.key = default):\n    ' + '\n    '.join(describe_keys()),
    )
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest='command', parser_class=UsageParser)

    p = sub.add_parser('reconstruct', parents=[common], help='reconstruct intensity images')
    _filter_flags(p)

    p = sub.add_parser('convolve', parents=[common], help='convolved reconstructions')
    _filter_flags(p)
    p.add_argument('--kernel', action='append', help=f'kernel ({", ".join(KERNELS)}); repeat or comma-separate')
    p.add_argument('--sigma', type=float, help='Gaussian sigma')
    p.add_argument('--kernel-file', help='custom kernel file (dx dy weight per line)')
    p.add_argument('--covariance-rule', choices=['weighted', 'unconvolved'], help='event covariance rule')
    p.add_argument('--workers', type=int, help='threads running kernel states')

    p = sub.add_parser('simulate', parents=[common], help='write a synthetic dataset')
    p.add_argument('output', help='dataset directory to create')
    p.add_argument('--scene', choices=['constant', 'ramp', 'sinusoid', 'edge', 'hdr'], help='scene')
    p.add_argument('--width', type=int)
    p.add_argument('--height', type=int)
    p.add_argument('--duration', type=float, help='seconds')
    p.add_argument('--fps', type=float, help='frame rate')
    p.add_argument('--exposure', type=float, help='exposure time in seconds')
    p.add_argument('--c-true', type=float, help='contrast threshold of the simulated sensor')
    p.add_argument('--ct-jitter', type=float, help='per-pixel threshold spread (fraction)')
    p.add_argument('--refractory', type=float, help='refractory period in seconds')
    p.add_argument('--clip', type=float, nargs=2, metavar=('LO', 'HI'), help='irradiance band of the CRF')
    p.add_argument('--frame-noise', type=float, help='response noise standard deviation')
    p.add_argument('--no-quantize', action='store_true', default=None, help='keep float responses')
    p.add_argument('--seed', type=int)

    p = sub.add_parser('calibrate-ct', parents=[common], help='estimate the global contrast threshold')
    p.add_argument('dataset', help='dataset.cfg or the directory holding it')
    p.add_argument('--band', type=float, nargs=2, metavar=('LO', 'HI'), help='usable response band')
    p.add_argument('--min-events', type=int, default=1, help='minimum net events per pixel and frame pair')
    p.add_argument('--per-pixel', metavar='NPY', help='also save the mean per-pixel threshold scale map')

    p = sub.add_parser('evaluate', parents=[common], help='score reconstructions against references')
    p.add_argument('reconstruction', help='directory of timestamped reconstructions')
    p.add_argument('reference', help='directory of timestamped references')
    p.add_argument('--out', help='directory for metrics.csv and metrics.json')
    return parser


# ========== CONFIG ==========

def _overrides(args):
    overrides = {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        overrides[key] = (not value) if dest in NEGATED else value
    clip = getattr(args, 'clip', None)
    if clip is not None:
        overrides['sim.clip_lo'], overrides['sim.clip_hi'] = clip
    kernels = getattr(args, 'kernel', None)
    if kernels:
        overrides['conv.kernel'] = ','.join(kernels)
    band = getattr(args, 'band', None)
    if band is not None:
        overrides['augment.band_lo'], overrides['augment.band_hi'] = band
    log_file = getattr(args, 'log_file', None)
    if log_file:
        overrides['logging.file'] = log_file
    for item in getattr(args, 'set', None) or []:
        if '=' not in item:
            raise ParameterError(f'--set expects SECTION.KEY=VALUE, got {item!r}')
        key, value = item.split('=', 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _manifest_profile(args):
    dataset = getattr(args, 'dataset', None)
    if not dataset:
        return None
    try:
        return read_manifest(dataset).profile
    except EvFuseError:
        return None


def _configure_logging(args, config):
    level = {'debug': logging.DEBUG, 'info': logging.INFO, 'warning': logging.WARNING,
             'error': logging.ERROR}.get(config.logging.level, logging.INFO)
    if getattr(args, 'verbose', False):
        level = logging.DEBUG
    elif getattr(args, 'quiet', False):
        level = logging.WARNING
    configure_console(level)
    set_default_log_file(config.logging.file)


# ========== COMMANDS ==========

def _report(result):
    for error in result.get('errors', []):
        print(f'warning: {error}', file=sys.stderr)
    if not result['success']:
        print(f'error: {result["error"]}', file=sys.stderr)
        return result['exit_code']
    images = [p for p in result['outputs'] if not p.endswith(('.json', '.npy'))]
    print(f'Wrote {len(images)} images in {result["elapsed"]:.2f} s '
          f'({result["counters"].get("state_updates", 0)} state updates)')
    return EXIT_OK


def cmd_reconstruct(args, config):
    return _report(ReconstructionProcessor(config, args.dataset).run())


def cmd_convolve(args, config):
    kernels = [k.strip() for k in config.conv.kernel.split(',') if k.strip()]
    return _report(ReconstructionProcessor(config, args.dataset, kernels=kernels).run())


def cmd_simulate(args, config):
    is_valid, error = InputValidator.validate_sim(config.sim)
    if not is_valid:
        print(f'error: {error}', file=sys.stderr)
        return EXIT_USAGE
    s = config.sim
    sim_config = config.sim_config()
    scene = build_scene(s.scene, s.width, s.height)
    dataset = simulate(scene, sim_config, sim_config.crf(**config.crf_kwargs()))
    write_simulated_dataset(dataset, args.output, profile=config.profile or 'synthetic')
    print(f'Wrote {len(dataset.events)} events and {len(dataset.frames)} frames to {args.output}')
    return EXIT_OK


def cmd_calibrate(args, config):
    is_valid, error = InputValidator.validate_augment(config.augment)
    if not is_valid:
        print(f'error: {error}', file=sys.stderr)
        return EXIT_USAGE
    dataset = load_dataset(args.dataset, config.crf_kwargs())
    band = (config.augment.band_lo, config.augment.band_hi)
    c = global_ct_estimate(dataset.frames, dataset.events, dataset.crf, band, args.min_events)
    print(f'c = {c:.6f}')
    if args.per_pixel:
        reference = AugmentedReference(dataset.frames, dataset.events, dataset.crf, c, config.augment_params())
        if reference.scales:
            scale_map = np.mean(reference.scales, axis=0).reshape(reference.shape)
        else:
            scale_map = np.ones(reference.shape)
        directory = os.path.dirname(args.per_pixel)
        if directory:
            os.makedirs(directory, exist_ok=True)
        np.save(args.per_pixel, scale_map)
        logger.info(f'Saved per-pixel threshold scale map to {args.per_pixel}')
    return EXIT_OK


def cmd_evaluate(args, config):
    report = evaluate_sequences(args.reconstruction, args.reference)
    if report.frame_count == 0:
        print('error: no matching timestamps between the two directories', file=sys.stderr)
        return EXIT_DATA
    print(report.summary_line())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for exporter, name in ((CSVExporter(), 'metrics.csv'), (JSONExporter(), 'metrics.json')):
            success, _, error = exporter.export(report, os.path.join(args.out, name))
            if not success:
                print(f'error: {error}', file=sys.stderr)
                return EXIT_DATA
    return EXIT_OK


COMMANDS = {
    'reconstruct': cmd_reconstruct,
    'convolve': cmd_convolve,
    'simulate': cmd_simulate,
    'calibrate-ct': cmd_calibrate,
    'evaluate': cmd_evaluate,
}


def main(argv=None):
    """
    Run the command line.

    Returns:
        int: exit status (0 success, 1 usage, 2 data error)
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        config = build_config(args.config, args.profile, _overrides(args), _manifest_profile(args))
    except (ParameterError, DataFormatError) as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args, config)
    logger.debug(f'Running {args.command}')

    try:
        return COMMANDS[args.command](args, config)
    except EvFuseError as e:
        logger.error(str(e))
        print(f'error: {e}', file=sys.stderr)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())

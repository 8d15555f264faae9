"""
EvFuse Reconstruction Processor

Main processing engine for event/frame reconstruction runs.
Orchestrates the workflow from dataset reading to snapshot output:

read -> validate -> augment -> filter -> scheduled queries -> write

Plain runs keep one filter state; convolution runs keep one independent
state per kernel and advance them concurrently.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os
import time
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List

import numpy as np

from ..algorithms.augment import build_reference
from ..algorithms.conv import Kernel, advance_states, build_convolved_filter, gradient_color_encode
from ..algorithms.filters import AsyncFilter, EventImpulses, FilterMode
from ..algorithms.noise import CrfModel
from ..data.events_io import EventReader
from ..data.frames_io import read_frames
from ..data.manifest import DatasetManifest, read_manifest
from ..data.tables_io import read_crf, read_kernel
from ..export.image_exporter import ImageExporter
from ..export.json_exporter import JSONExporter
from ..utils.logger import Logger
from ..utils.progress_tracker import ProgressTracker
from ..utils.validators import InputValidator
from .errors import EvFuseError, GeometryError, ParameterError
from .timeline import interleave, validate_stream
from .types import EventStream, Frame, to_micros

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


@dataclass
class LoadedDataset:
    """A dataset read into memory."""

    manifest: DatasetManifest
    events: EventStream
    frames: List[Frame]
    crf: CrfModel
    dropped_zero_polarity: int = 0

    @property
    def shape(self):
        return self.manifest.height, self.manifest.width


def load_dataset(path, crf_kwargs=None) -> LoadedDataset:
    """
    Read manifest, events, frames and CRF of a dataset.

    Args:
        path: dataset.cfg or the directory holding it
        crf_kwargs: CrfModel options (sigma2_im, f_w_floor, i0)

    Raises:
        DataFormatError, GeometryError, StreamOrderError
    """
    crf_kwargs = crf_kwargs or {}
    manifest = read_manifest(path)
    reader = EventReader(manifest.events, manifest.width, manifest.height)
    events = reader.read()
    frames = read_frames(manifest.frame_index, manifest.frame_dir, (manifest.height, manifest.width))
    crf = read_crf(manifest.crf, **crf_kwargs) if manifest.crf else CrfModel.identity(**crf_kwargs)
    return LoadedDataset(manifest, events, frames, crf, reader.dropped_zero_polarity)


def stream_bounds(events: EventStream, frames) -> tuple:
    """(start, end) in microseconds covered by events and frame exposures."""
    starts = [int(events.t[0])] if len(events) else []
    ends = [int(events.t[-1])] if len(events) else []
    if frames:
        starts.append(max(0, frames[0].exposure_start))
        ends.append(frames[-1].t_mid.micros)
    if not starts:
        return 0, 0
    return min(starts), max(ends)


def output_schedule(kind, events: EventStream, frames, rate=None, times_seconds=None, start=None, end=None):
    """
    Query times of a run, sorted microseconds.

    Args:
        kind: 'frames' (frame midpoints), 'events' (one per distinct event timestamp), 'rate' (fixed Hz)
            or 'list'
        rate: Hz for 'rate'
        times_seconds: explicit times for 'list'
        start, end: half-open range [start, end) for 'rate', stream bounds by default

    Raises:
        ParameterError: unknown kind or empty schedule
    """
    if kind == 'frames':
        times = np.array([f.t_mid.micros for f in frames], dtype=np.int64)
    elif kind == 'events':
        # Coincident events share one snapshot
        times = np.unique(np.asarray(events.t, dtype=np.int64))
    elif kind == 'rate':
        if not rate or rate <= 0:
            raise ParameterError(f'Schedule rate must be > 0 Hz, got {rate}')
        lo, hi = stream_bounds(events, frames)
        lo = lo if start is None else int(start)
        hi = hi if end is None else int(end)
        count = int(np.ceil((hi - lo) * rate / 1e6 - 1e-9)) if hi > lo else 0
        times = lo + np.round(np.arange(count) * 1e6 / rate).astype(np.int64)
    elif kind == 'list':
        times = np.sort(np.atleast_1d(to_micros(np.asarray(times_seconds or [], dtype=np.float64))))
    else:
        raise ParameterError(f'Unknown schedule: {kind}')
    if len(times) == 0:
        raise ParameterError(f'Output schedule {kind!r} is empty')
    return np.asarray(times, dtype=np.int64)


class ReconstructionProcessor:
    """
    Run one reconstruction (plain or convolved) over a dataset.
    """

    def __init__(self, config, dataset_path, kernels=None, progress_callback=None):
        """
        Constructor.

        Args:
            config (RunConfig): run configuration
            dataset_path (str): dataset.cfg or its directory
            kernels (list): kernel names for a convolution run, None for a plain run
            progress_callback (callable): called with progress dictionaries
        """
        self.config = config
        self.dataset_path = dataset_path
        self.kernel_names = kernels
        self.progress_callback = progress_callback

        # Processing state
        self.dataset = None
        self.tracker = None
        self.counters = {}
        self.outputs = []
        self.errors = []
        self.start_time = None
        self.end_time = None

        self.logger = Logger('ReconstructionProcessor')

    def run(self):
        """
        Main processing loop.

        Returns:
            dict: success, outputs, counters, elapsed, error, exit_code
        """
        try:
            self.start_time = time.time()
            self.logger.info('=== STARTING RECONSTRUCTION ===')

            # Step 1: Validate inputs
            self._log_progress('Validating inputs...', 0)
            errors = self._validate_inputs()
            if errors:
                return self._create_error_result('; '.join(errors), EXIT_USAGE)

            # Step 2: Read dataset
            self._log_progress('Reading dataset...', 5)
            started = time.perf_counter()
            self.dataset = load_dataset(self.dataset_path, self.config.crf_kwargs())
            read_seconds = time.perf_counter() - started
            events, frames = self.dataset.events, self.dataset.frames
            self.tracker = ProgressTracker(0, len(events))
            self.tracker.stage_durations['read'] = read_seconds
            self._check_stream()

            # Step 3: Reference
            self._log_progress('Building reference...', 15)
            self.tracker.start_stage('augment')
            reference = self._build_reference()
            self.tracker.finish_stage('augment')

            # Step 4: Filters and schedule
            timeline = interleave(events, frames, frames_first=self.config.filter.frames_first)
            out = self.config.output
            times = output_schedule(out.schedule, events, frames, out.rate, self.config.explicit_times())
            self.tracker.total_snapshots = len(np.unique(times))
            states, exporters = self._build_states(reference)
            self.logger.info(f'{len(events)} events, {len(frames)} frames, {len(times)} scheduled snapshots, '
                             f'{len(states)} filter state(s)')

            # Step 5: Run
            self._log_progress('Filtering...', 20)
            self._run_schedule(states, exporters, timeline, times)

            # Step 6: Summary
            self._collect_counters(states)
            self._log_progress('Writing summary...', 98)
            self._write_summary()

            self._log_progress('Complete!', 100)
            self.end_time = time.time()
            return self._create_success_result()

        except EvFuseError as e:
            self.logger.error(f'Reconstruction failed: {str(e)}')
            return self._create_error_result(str(e), EXIT_DATA)

        except Exception as e:
            self.logger.error(f'Fatal error during processing: {str(e)}')
            import traceback
            self.logger.error(traceback.format_exc())
            return self._create_error_result(str(e), EXIT_DATA)

    # ========== STEPS ==========

    def _validate_inputs(self):
        """Validate configuration and dataset path, returning the error messages."""
        self.logger.info('Validating inputs...')
        sections = ['filter', 'noise', 'augment', 'output']
        if self.kernel_names is not None:
            sections.append('conv')
        _, errors = InputValidator.validate_all(self.config, sections)
        is_valid, error = InputValidator.validate_dataset_path(self.dataset_path)
        if not is_valid:
            errors.append(error)
        for error in errors:
            self.logger.error(error)
        if not errors:
            self.logger.info('Input validation passed')
        return errors

    def _check_stream(self):
        report = validate_stream(self.dataset.events)
        self.counters['stream'] = report.to_dict()
        self.counters['dropped_zero_polarity'] = self.dataset.dropped_zero_polarity
        if report.out_of_bounds:
            self.logger.warning(f'{report.out_of_bounds} events lie outside the '
                                f'{self.dataset.manifest.width}x{self.dataset.manifest.height} sensor')

    def _build_reference(self):
        params = self.config.filter_params()
        if params.mode is FilterMode.HIGHPASS:
            return None
        d = self.dataset
        return build_reference(d.frames, d.events, d.crf, params.c, self.config.augment_params())

    def _kernels(self) -> Dict[str, Kernel]:
        kernels = {}
        conv = self.config.conv
        for name in self.kernel_names:
            if name == 'gradient':
                kernels['sobelx'] = Kernel.sobel_x()
                kernels['sobely'] = Kernel.sobel_y()
            elif name == 'custom':
                kernels['custom'] = read_kernel(conv.kernel_file)
            else:
                kernels[name] = Kernel.by_name(name, sigma=conv.sigma)
        return kernels

    def _exporter(self, transform):
        out = self.config.output
        return ImageExporter(
            normalization=out.normalization, fixed_range=(out.fixed_lo, out.fixed_hi),
            percentiles=(out.percentile_lo, out.percentile_hi), bit_depth=out.bit_depth,
            write_raw=out.raw, transform=transform, i0=self.config.noise.i0,
            image_format=out.image_format, max_workers=out.writer_threads,
        )

    def _build_states(self, reference):
        """Filter states and their exporters, keyed by output name."""
        d = self.dataset
        params = self.config.filter_params()
        noise = self.config.noise_params()
        t_start, _ = stream_bounds(d.events, d.frames)
        out_dir = self.config.output.directory
        frames_first = self.config.filter.frames_first
        if reference is not None and tuple(reference.shape) != d.events.shape:
            raise GeometryError(f'Reference shape {reference.shape} does not match events {d.events.shape}')

        if self.kernel_names is None:
            impulses = EventImpulses(d.events, params, reference, noise, t_start)
            state = AsyncFilter(params, reference, d.events.shape, impulses,
                                frames_first=frames_first, t_start_micros=t_start)
            exporter = self._exporter('intensity')
            exporter.begin(out_dir)
            return {'reconstruction': state}, {'reconstruction': exporter}

        states, exporters = {}, {}
        for name, kernel in self._kernels().items():
            states[name] = build_convolved_filter(
                d.events, kernel, params, reference, noise, self.config.conv.covariance_rule,
                t_start_micros=t_start, frames_first=frames_first)
            # Unit-sum kernels keep log-intensity semantics
            transform = 'intensity' if abs(kernel.weight_sum - 1.0) < 1e-9 else 'linear'
            exporters[name] = self._exporter(transform)
            exporters[name].begin(os.path.join(out_dir, name))
        return states, exporters

    def _run_schedule(self, states, exporters, timeline, times):
        """Advance all states through the schedule, handing snapshots to the exporters."""
        workers = self.config.conv.workers if self.kernel_names is not None else 1
        gradient = self.kernel_names is not None and 'gradient' in self.kernel_names
        gradient_images, gradient_times = [], []
        unique_times = np.unique(times)
        step = max(1, len(unique_times) // 10)

        self.tracker.start_stage('filter')
        executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(states) > 1 else None
        try:
            for i, t in enumerate(unique_times):
                advance_states(states, timeline, until=int(t), executor=executor)
                snapshots = {name: state.query(int(t)) for name, state in states.items()}
                for name, image in snapshots.items():
                    exporters[name].add(int(t), image)
                if gradient:
                    gradient_images.append(gradient_color_encode(snapshots['sobelx'], snapshots['sobely']))
                    gradient_times.append(int(t))
                processed = next(iter(states.values())).events_processed
                self.tracker.update(i + 1, processed)
                if (i + 1) % step == 0:
                    percent = 20 + int(75 * (i + 1) / len(unique_times))
                    self._log_progress(f'Snapshot {i + 1}/{len(unique_times)} at t={int(t)} us', percent)
        finally:
            if executor is not None:
                executor.shutdown(wait=True)
        self.tracker.finish_stage('filter')

        self.tracker.start_stage('write')
        for name, exporter in exporters.items():
            success, paths, error = exporter.finish()
            self.outputs.extend(paths)
            if not success:
                raise EvFuseError(f'Writing {name} snapshots failed: {error}')
        if gradient:
            colour = ImageExporter(prefix='frame')
            success, paths, error = colour.export_color(
                gradient_images, gradient_times, os.path.join(self.config.output.directory, 'gradient'))
            self.outputs.extend(paths)
            if not success:
                raise EvFuseError(f'Writing gradient images failed: {error}')
        self.tracker.finish_stage('write')

    def _collect_counters(self, states):
        per_state = {name: state.counters() for name, state in states.items()}
        self.counters['filters'] = per_state
        self.counters['state_updates'] = sum(c['state_updates'] for c in per_state.values())
        skipped = max(c['skipped_out_of_bounds'] for c in per_state.values())
        self.counters['skipped_out_of_bounds'] = skipped
        if skipped:
            self.logger.warning(f'Skipped {skipped} out-of-bounds events')
        self.counters['snapshots'] = self.tracker.completed_snapshots

    def _write_summary(self):
        summary = {
            'dataset': os.path.abspath(self.dataset_path),
            'config': self.config.to_dict(),
            'kernels': self.kernel_names,
            'counters': self.counters,
            'progress': self.tracker.get_summary(),
        }
        success, path, error = JSONExporter().export(
            summary, os.path.join(self.config.output.directory, 'summary.json'))
        if success:
            self.outputs.append(path)
        else:
            self.errors.append(f'summary: {error}')

    def _log_progress(self, message, percent):
        """
        Log progress and call callback.

        Args:
            message (str): Progress message
            percent (int): Progress percentage
        """
        self.logger.info(f'[{percent}%] {message}')
        if self.progress_callback:
            self.progress_callback({
                'message': message,
                'percent': percent,
                'completed_snapshots': self.tracker.completed_snapshots if self.tracker else 0,
                'total_snapshots': self.tracker.total_snapshots if self.tracker else 0,
            })

    def _create_success_result(self):
        """Create success result dictionary."""
        elapsed_time = self.end_time - self.start_time if self.end_time else 0
        return {
            'success': True,
            'exit_code': EXIT_OK,
            'outputs': self.outputs,
            'counters': self.counters,
            'elapsed': elapsed_time,
            'error': '',
            'errors': self.errors,
        }

    def _create_error_result(self, error_message, exit_code=EXIT_DATA):
        """Create error result dictionary."""
        return {
            'success': False,
            'exit_code': exit_code,
            'outputs': self.outputs,
            'counters': self.counters,
            'elapsed': time.time() - self.start_time if self.start_time else 0,
            'error': error_message,
            'errors': self.errors,
        }

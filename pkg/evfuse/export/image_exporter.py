"""
Image Exporter for EvFuse

Writes reconstruction snapshots as timestamped images.

Features:
- One image per scheduled time, filename embeds the microsecond timestamp
- Log state exported as intensity exp(L) - I0 (or the raw value for convolved states)
- Fixed-range or per-sequence percentile normalization
- 8/16-bit PNG or PGM, optional float .npy alongside
- Colour-wheel images for gradient fields
- Optional background writer threads

Author: Dragos Gontariu
License: GPL-3.0
"""

import os
from concurrent.futures import ThreadPoolExecutor

import cv2
import numpy as np

from ..algorithms.metrics import intensity_from_log
from ..algorithms.noise import DEFAULT_I0
from ..core.errors import ParameterError
from ..data.frames_io import write_image
from ..data.images_io import snapshot_name, write_raw
from ..utils.logger import Logger

NORMALIZATIONS = ('fixed', 'percentile')
TRANSFORMS = ('intensity', 'linear')


class ImageExporter:
    """
    Export a sequence of log-state snapshots.

    Use export() for a complete sequence, or begin() / add() / finish() to
    hand snapshots over while the filter keeps running. Fixed-range output is
    written as soon as a snapshot arrives; percentile output needs the whole
    sequence and is written by finish().
    """

    def __init__(self, normalization='percentile', fixed_range=(0.0, 1.0), percentiles=(1.0, 99.0),
                 bit_depth=16, write_raw=True, transform='intensity', i0=DEFAULT_I0,
                 image_format='png', prefix='frame', max_workers=1):
        """
        Constructor.

        Args:
            normalization (str): 'fixed' or 'percentile'
            fixed_range (tuple): value range mapped onto [0, 1] in fixed mode
            percentiles (tuple): lower/upper percentile of the sequence in percentile mode
            bit_depth (int): 8 or 16
            write_raw (bool): also store the unnormalized values as .npy
            transform (str): 'intensity' (exp(L) - I0) or 'linear' (L itself)
            i0 (float): intensity offset of the log transform
            image_format (str): 'png' or 'pgm'
            prefix (str): filename prefix
            max_workers (int): writer threads (1 writes inline)
        """
        if normalization not in NORMALIZATIONS:
            raise ParameterError(f'Unknown normalization: {normalization}')
        if transform not in TRANSFORMS:
            raise ParameterError(f'Unknown transform: {transform}')
        if fixed_range[1] <= fixed_range[0]:
            raise ParameterError(f'Invalid fixed range {fixed_range}')
        if not 0.0 <= percentiles[0] < percentiles[1] <= 100.0:
            raise ParameterError(f'Invalid percentiles {percentiles}')
        self.normalization = normalization
        self.fixed_range = (float(fixed_range[0]), float(fixed_range[1]))
        self.percentiles = (float(percentiles[0]), float(percentiles[1]))
        self.bit_depth = int(bit_depth)
        self.write_raw = write_raw
        self.transform = transform
        self.i0 = i0
        self.image_format = image_format
        self.prefix = prefix
        self.max_workers = max(1, int(max_workers))
        self.logger = Logger('ImageExporter')

        self._out_dir = None
        self._pending = []
        self._futures = []
        self._written = set()
        self._paths = []
        self._executor = None
        self._error = ''

    # ========== VALUE MAPPING ==========

    def values(self, log_image):
        """Exported quantity of one snapshot (before normalization)."""
        if self.transform == 'intensity':
            return intensity_from_log(log_image, self.i0)
        return np.asarray(log_image, dtype=np.float64)

    def normalize(self, values, value_range):
        lo, hi = value_range
        if hi <= lo:
            hi = lo + 1.0
        return np.clip((values - lo) / (hi - lo), 0.0, 1.0)

    def sequence_range(self, sequence):
        """Percentile range over every pixel of every snapshot."""
        stacked = np.concatenate([np.ravel(v) for v in sequence])
        lo, hi = np.percentile(stacked, self.percentiles)
        return float(lo), float(hi)

    # ========== STREAMING ==========

    def begin(self, out_dir):
        """Start a sequence in `out_dir` (created if needed)."""
        os.makedirs(out_dir, exist_ok=True)
        self._out_dir = out_dir
        self._pending = []
        self._futures = []
        self._written = set()
        self._paths = []
        self._error = ''
        if self.max_workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.max_workers)

    def _write(self, t_micros, values, value_range):
        paths = []
        if self.write_raw:
            paths.append(write_raw(self._out_dir, t_micros, values, self.prefix))
        name = snapshot_name(t_micros, self.image_format, self.prefix)
        paths.append(write_image(os.path.join(self._out_dir, name), self.normalize(values, value_range),
                                 self.bit_depth))
        return paths

    def _submit(self, t_micros, values, value_range):
        if self._executor is not None:
            self._futures.append(self._executor.submit(self._write, t_micros, values, value_range))
        else:
            self._paths.extend(self._write(t_micros, values, value_range))

    def add(self, t_micros, log_image):
        """
        Hand over the snapshot at t_micros.

        The array is copied, so the caller may keep mutating its state.
        Snapshots repeating an already exported timestamp are skipped.
        """
        if self._out_dir is None:
            raise ParameterError('begin() must be called before add()')
        t_micros = int(t_micros)
        if t_micros in self._written or self._error:
            return
        self._written.add(t_micros)
        try:
            values = np.array(self.values(log_image), dtype=np.float64, copy=True)
            if self.normalization == 'fixed':
                self._submit(t_micros, values, self.fixed_range)
            else:
                self._pending.append((t_micros, values))
        except Exception as e:
            self.logger.error(f'Snapshot at {t_micros} us failed: {str(e)}')
            self._error = str(e)

    def finish(self):
        """
        Write buffered snapshots and wait for background writes.

        Returns:
            tuple: (success, list_of_paths, error_message)
        """
        try:
            if self._pending and not self._error:
                value_range = self.sequence_range([v for _, v in self._pending])
                self.logger.debug(f'Percentile range {value_range[0]:.6g} .. {value_range[1]:.6g}')
                for t_micros, values in self._pending:
                    self._submit(t_micros, values, value_range)
            for future in self._futures:
                self._paths.extend(future.result())
            if self._error:
                return False, list(self._paths), self._error
            self.logger.info(f'Exported {len(self._written)} snapshots to {self._out_dir}')
            return True, list(self._paths), ''

        except Exception as e:
            self.logger.error(f'Image export failed: {str(e)}')
            import traceback
            self.logger.error(traceback.format_exc())
            return False, list(self._paths), str(e)

        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
            self._pending = []
            self._futures = []

    def export(self, log_images, times, out_dir):
        """
        Export a complete sequence.

        Args:
            log_images (list): log-state images
            times (list): microsecond timestamps, one per image
            out_dir (str): output directory

        Returns:
            tuple: (success, list_of_paths, error_message)
        """
        if len(log_images) != len(times):
            return False, [], f'{len(log_images)} images for {len(times)} timestamps'
        try:
            self.begin(out_dir)
        except Exception as e:
            self.logger.error(f'Cannot prepare {out_dir}: {str(e)}')
            return False, [], str(e)
        for t, image in zip(times, log_images):
            self.add(t, image)
        return self.finish()

    # ========== COLOUR ==========

    def export_color(self, rgb_images, times, out_dir):
        """
        Write float RGB images in [0, 1] as 8-bit colour PNGs.

        Returns:
            tuple: (success, list_of_paths, error_message)
        """
        try:
            os.makedirs(out_dir, exist_ok=True)
            paths = []
            for t, rgb in zip(times, rgb_images):
                data = np.round(np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
                path = os.path.join(out_dir, snapshot_name(t, 'png', self.prefix))
                if not cv2.imwrite(path, cv2.cvtColor(data, cv2.COLOR_RGB2BGR)):
                    raise OSError(f'Cannot write {path}')
                paths.append(path)
            self.logger.info(f'Exported {len(paths)} colour images to {out_dir}')
            return True, paths, ''

        except Exception as e:
            self.logger.error(f'Colour export failed: {str(e)}')
            import traceback
            self.logger.error(traceback.format_exc())
            return False, [], str(e)

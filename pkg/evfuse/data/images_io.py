"""
Image Sequence I/O for EvFuse

Snapshot files embed their microsecond timestamp in the name
(`<prefix>_<micros>.<ext>`). Float intensities are stored as .npy,
display images as 8/16-bit PNG or PGM.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os
import re
from typing import Dict

import numpy as np

from ..core.errors import DataFormatError
from .frames_io import read_image

_SNAPSHOT = re.compile(r'^(?P<prefix>.*?)_?(?P<micros>\d+)\.(?P<ext>npy|png|pgm)$', re.IGNORECASE)


def snapshot_name(t_micros, ext='png', prefix='frame'):
    return f'{prefix}_{int(t_micros):012d}.{ext}'


def snapshot_time(filename):
    """Microsecond timestamp embedded in a snapshot filename, or None."""
    match = _SNAPSHOT.match(os.path.basename(filename))
    return int(match.group('micros')) if match else None


def read_image_sequence(directory) -> Dict[int, np.ndarray]:
    """
    Load every snapshot of a directory keyed by timestamp.

    .npy files are taken as raw intensities and win over image files with
    the same timestamp; images are normalized to [0, 1].

    Raises:
        DataFormatError: missing directory or no snapshots
    """
    if not os.path.isdir(directory):
        raise DataFormatError('Image directory not found', directory)
    images = {}
    raw = set()
    for name in sorted(os.listdir(directory)):
        match = _SNAPSHOT.match(name)
        if not match:
            continue
        t = int(match.group('micros'))
        path = os.path.join(directory, name)
        if match.group('ext').lower() == 'npy':
            images[t] = np.load(path).astype(np.float64)
            raw.add(t)
        elif t not in raw:
            images[t] = read_image(path)
    if not images:
        raise DataFormatError('No timestamped images found', directory)
    return images


def write_raw(directory, t_micros, values, prefix='frame'):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, snapshot_name(t_micros, 'npy', prefix))
    np.save(path, np.asarray(values, dtype=np.float64))
    return path

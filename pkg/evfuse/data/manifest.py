"""
Dataset Manifest for EvFuse

A dataset directory is described by a `dataset.cfg` file of "key = value" lines:

    events = events.txt
    frame_dir = frames
    frame_index = frames.csv
    width = 64
    height = 64
    crf = crf.txt          (optional)
    profile = synthetic    (optional)
    ground_truth = ground_truth   (optional)

Relative paths are resolved against the manifest's directory.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os
from dataclasses import dataclass
from typing import Optional

from ..core.errors import DataFormatError

MANIFEST_NAME = 'dataset.cfg'
_PATH_KEYS = ('events', 'frame_dir', 'frame_index', 'crf', 'ground_truth')
_REQUIRED = ('events', 'frame_dir', 'frame_index', 'width', 'height')


@dataclass
class DatasetManifest:
    """Locations and geometry of one dataset (absolute paths)."""

    events: str
    frame_dir: str
    frame_index: str
    width: int
    height: int
    crf: Optional[str] = None
    profile: Optional[str] = None
    ground_truth: Optional[str] = None

    def check(self):
        """
        Verify that every referenced file exists.

        Raises:
            DataFormatError: first missing path
        """
        for key in _PATH_KEYS:
            path = getattr(self, key)
            if path is not None and not os.path.exists(path):
                raise DataFormatError(f'Manifest entry {key!r} points to a missing path', path)
        if self.width <= 0 or self.height <= 0:
            raise DataFormatError(f'Invalid geometry {self.width}x{self.height}')
        return self


def read_manifest(path) -> DatasetManifest:
    """
    Parse a manifest file, or the dataset.cfg inside a directory.

    Raises:
        DataFormatError: missing file, malformed line, unknown or missing key
    """
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DataFormatError('Manifest not found', path)
    base = os.path.dirname(os.path.abspath(path))
    values = {}
    known = set(_PATH_KEYS) | {'width', 'height', 'profile'}
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            text = raw.split('#', 1)[0].strip()
            if not text:
                continue
            if '=' not in text:
                raise DataFormatError(f'Expected "key = value", got {text!r}', path, number)
            key, value = (part.strip() for part in text.split('=', 1))
            if key not in known:
                raise DataFormatError(f'Unknown manifest key {key!r}', path, number)
            values[key] = value
    missing = [key for key in _REQUIRED if key not in values]
    if missing:
        raise DataFormatError(f'Missing manifest keys: {", ".join(missing)}', path)
    for key in _PATH_KEYS:
        if key in values:
            values[key] = os.path.normpath(os.path.join(base, values[key]))
    try:
        values['width'] = int(values['width'])
        values['height'] = int(values['height'])
    except ValueError:
        raise DataFormatError('width and height must be integers', path)
    return DatasetManifest(**values).check()


def write_manifest(directory, manifest: DatasetManifest):
    """Write dataset.cfg with paths relative to `directory`."""
    path = os.path.join(directory, MANIFEST_NAME)
    lines = []
    for key in ('events', 'frame_dir', 'frame_index', 'width', 'height', 'crf', 'profile', 'ground_truth'):
        value = getattr(manifest, key)
        if value is None:
            continue
        if key in _PATH_KEYS:
            value = os.path.relpath(value, directory)
        lines.append(f'{key} = {value}')
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    return path

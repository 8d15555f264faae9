"""
Frame I/O for EvFuse

Frames are grayscale PGM/PNG images (8 or 16 bit) listed in an index file,
one frame per line: "timestamp_mid_seconds, filename, exposure_seconds".
Colour images are converted to luma on read.

Author: Dragos Gontariu
License: GPL-3.0
"""

import itertools
import os
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np
import pandas as pd

from ..core.errors import DataFormatError, GeometryError
from ..core.types import Frame, Timestamp, check_frame_sequence
from ..utils.logger import Logger
from .events_io import format_seconds, parse_seconds

INDEX_COLUMNS = ['timestamp_mid_seconds', 'filename', 'exposure_seconds']

_logger = Logger('FrameIO')


def read_image(path) -> np.ndarray:
    """
    Read an 8- or 16-bit image as responses in [0, 1].

    Raises:
        DataFormatError: unreadable file or unsupported depth
    """
    image = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DataFormatError('Cannot read image', path)
    if image.ndim == 3:
        channels = image.shape[2]
        if channels == 4:
            image = cv2.cvtColor(image, cv2.COLOR_BGRA2GRAY)
        elif channels == 3:
            image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
        else:
            image = image[:, :, 0]
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    if image.dtype == np.uint16:
        return image.astype(np.float64) / 65535.0
    raise DataFormatError(f'Unsupported image depth {image.dtype}', path)


def write_image(path, values, bit_depth=8):
    """Write responses in [0, 1] as an 8- or 16-bit grayscale image."""
    if bit_depth not in (8, 16):
        raise DataFormatError(f'Unsupported bit depth {bit_depth}', path)
    top = 255 if bit_depth == 8 else 65535
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    data = np.round(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * top).astype(dtype)
    if not cv2.imwrite(path, data):
        raise DataFormatError('Cannot write image', path)
    return path


def _source_line(index_path, row):
    """1-based file line of the row-th data row (blank and comment lines skipped)."""
    with open(index_path, 'r', encoding='utf-8') as f:
        data_lines = (number for number, raw in enumerate(f, start=1) if raw.split('#', 1)[0].strip())
        return next(itertools.islice(data_lines, row, None), None)


def read_frame_index(index_path) -> pd.DataFrame:
    """
    Parse a frame index file.

    '#' starts a comment, blank lines are skipped.

    Returns:
        DataFrame with t_micros (int64), filename (str), exposure (float seconds)

    Raises:
        DataFormatError: malformed row (with its line number)
    """
    if not os.path.exists(index_path):
        raise DataFormatError('Frame index not found', index_path)
    try:
        table = pd.read_csv(index_path, header=None, comment='#', dtype=str, skipinitialspace=True,
                            skip_blank_lines=True, keep_default_na=False)
    except pd.errors.EmptyDataError:
        table = pd.DataFrame(columns=INDEX_COLUMNS)
    except pd.errors.ParserError as err:
        raise DataFormatError(f'Malformed frame index: {err}', index_path)
    if table.shape[1] != len(INDEX_COLUMNS):
        raise DataFormatError(f'Expected 3 comma-separated fields, got {table.shape[1]}',
                              index_path, _source_line(index_path, 0))
    table.columns = INDEX_COLUMNS
    table = pd.DataFrame({name: table[name].fillna('').astype(str).str.strip() for name in INDEX_COLUMNS})

    exposure = pd.to_numeric(table['exposure_seconds'], errors='coerce').to_numpy(dtype=np.float64)
    bad = np.flatnonzero(np.isnan(exposure) | (exposure < 0) | (table['filename'] == '').to_numpy())
    if bad.size:
        row = int(bad[0])
        raise DataFormatError(f'Invalid row {table.iloc[row].tolist()}', index_path, _source_line(index_path, row))

    t_micros = []
    for row, text in enumerate(table['timestamp_mid_seconds']):
        try:
            t_micros.append(parse_seconds(text))
        except DataFormatError as err:
            raise DataFormatError(str(err), index_path, _source_line(index_path, row))
    return pd.DataFrame({
        't_micros': np.array(t_micros, dtype=np.int64),
        'filename': table['filename'].tolist(),
        'exposure': exposure,
    })


def read_frames(index_path, frame_dir=None, expected_shape: Optional[Tuple[int, int]] = None) -> List[Frame]:
    """
    Read all frames listed in an index.

    Args:
        index_path: frame index file
        frame_dir: directory holding the images (index directory when None)
        expected_shape: (height, width) the frames must have

    Returns:
        list of Frame sorted as in the index

    Raises:
        DataFormatError, GeometryError, StreamOrderError
    """
    index = read_frame_index(index_path)
    frame_dir = frame_dir or os.path.dirname(os.path.abspath(index_path))
    frames = []
    for row in index.itertuples(index=False):
        response = read_image(os.path.join(frame_dir, row.filename))
        if expected_shape is not None and response.shape != tuple(expected_shape):
            raise GeometryError(f'{row.filename}: shape {response.shape}, expected {tuple(expected_shape)}')
        frames.append(Frame(Timestamp(int(row.t_micros)), float(row.exposure), response))
    check_frame_sequence(frames)
    _logger.debug(f'Read {len(frames)} frames from {index_path}')
    return frames


def write_frames(frames: Sequence[Frame], frame_dir, index_path=None, bit_depth=8, prefix='frame'):
    """
    Write frames as PGM images plus an index file.

    Args:
        frames: frames to write
        frame_dir: image directory (filenames in the index are relative to it)
        index_path: index file, frame_dir/frames.csv when None
        bit_depth: 8 or 16
        prefix: image filename prefix

    Returns:
        path of the index file
    """
    os.makedirs(frame_dir, exist_ok=True)
    lines = [f'# {", ".join(INDEX_COLUMNS)}']
    for k, frame in enumerate(frames):
        name = f'{prefix}_{k:05d}.pgm'
        write_image(os.path.join(frame_dir, name), frame.response, bit_depth)
        lines.append(f'{format_seconds(frame.t_mid.micros)}, {name}, {frame.exposure_micros / 1e6:.6f}')
    index_path = index_path or os.path.join(frame_dir, 'frames.csv')
    with open(index_path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    return index_path

"""
Table File I/O for EvFuse

- CRF tables: 256 lines "irradiance response", both in [0, 1], increasing irradiance
- Kernel files: lines "dx dy weight"

Lines starting with '#' are comments. Values are written with full
precision so that reading back is lossless.

Author: Dragos Gontariu
License: GPL-3.0
"""

import os

import numpy as np

from ..algorithms.conv import Kernel
from ..algorithms.noise import RESPONSE_LEVELS, CrfModel
from ..core.errors import DataFormatError, ParameterError


def _numeric_rows(path, columns, converters):
    if not os.path.exists(path):
        raise DataFormatError('File not found', path)
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            text = raw.split('#', 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != columns:
                raise DataFormatError(f'Expected {columns} values, got {len(parts)}', path, number)
            try:
                rows.append(tuple(conv(part) for conv, part in zip(converters, parts)))
            except ValueError:
                raise DataFormatError(f'Invalid number in {text!r}', path, number)
    return rows


def read_crf_table(path, levels=RESPONSE_LEVELS):
    """
    Read a CRF table.

    Returns:
        (irradiance, response) float64 arrays

    Raises:
        DataFormatError: wrong row count, values outside [0, 1], decreasing irradiance
    """
    rows = _numeric_rows(path, 2, (float, float))
    if len(rows) != levels:
        raise DataFormatError(f'CRF table needs {levels} rows, got {len(rows)}', path)
    table = np.array(rows, dtype=np.float64)
    if table.min() < 0 or table.max() > 1:
        raise DataFormatError('CRF values must lie in [0, 1]', path)
    if np.any(np.diff(table[:, 0]) <= 0):
        raise DataFormatError('CRF irradiance must be strictly increasing', path)
    return table[:, 0], table[:, 1]


def read_crf(path, **kwargs) -> CrfModel:
    """CrfModel from a table file; kwargs go to CrfModel (sigma2_im, f_w_floor, i0)."""
    irradiance, response = read_crf_table(path)
    try:
        return CrfModel.from_table(irradiance, response, **kwargs)
    except ParameterError as e:
        raise DataFormatError(str(e), path)


def write_crf(path, crf: CrfModel, levels=RESPONSE_LEVELS):
    """Write a CRF resampled on `levels` evenly spaced irradiance values."""
    irradiance = np.linspace(0.0, 1.0, levels)
    response = np.clip(crf.forward(irradiance), 0.0, 1.0)
    with open(path, 'w', encoding='utf-8') as f:
        f.write('# irradiance response\n')
        for i, r in zip(irradiance, response):
            f.write(f'{float(i)!r} {float(r)!r}\n')
    return path


def read_kernel(path, name='custom') -> Kernel:
    """Read a custom kernel file."""
    rows = _numeric_rows(path, 3, (int, int, float))
    if not rows:
        raise DataFormatError('Kernel file has no taps', path)
    try:
        return Kernel(rows, name)
    except ParameterError as e:
        raise DataFormatError(str(e), path)


def write_kernel(path, kernel: Kernel):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f'# {kernel.name}: dx dy weight\n')
        for dx, dy, w in kernel.taps:
            f.write(f'{dx} {dy} {w!r}\n')
    return path

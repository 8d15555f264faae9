"""
Event File I/O for EvFuse

Text event files, one event per line: "t x y p".

- t: decimal seconds, at most 6 fractional digits (stored as integer microseconds)
- x, y: 0-based pixel coordinates
- p: 1 for ON, 0 for OFF (mapped to +1 / -1)

Optional header lines:
    # width height
    # polarity signed      (p in {-1, 0, +1}; 0 marks sync records, dropped and counted)

Author: Dragos Gontariu
License: GPL-3.0
"""

import os
import re

import numpy as np

from ..core.errors import DataFormatError
from ..core.types import MICROS_PER_SECOND, EventStream
from ..utils.logger import Logger

_EVENT_LINE = re.compile(r'^\s*(\d+)(?:\.(\d*))?\s+(-?\d+)\s+(-?\d+)\s+([+-]?\d+)\s*$')
_GEOMETRY_LINE = re.compile(r'^#\s*(\d+)\s+(\d+)\s*$')
_SIGNED_LINE = re.compile(r'^#\s*polarity\s+signed\s*$', re.IGNORECASE)


def parse_seconds(text, path=None, line=None) -> int:
    """
    Exact decimal seconds -> integer microseconds.

    Raises:
        DataFormatError: malformed value or sub-microsecond digits
    """
    match = re.fullmatch(r'\s*(\d+)(?:\.(\d*))?\s*', str(text))
    if not match:
        raise DataFormatError(f'Invalid timestamp {text!r}', path, line)
    return _micros(match.group(1), match.group(2), path, line)


def _micros(whole, frac, path, line):
    frac = frac or ''
    if len(frac) > 6:
        if frac[6:].strip('0'):
            raise DataFormatError(f'Sub-microsecond timestamp {whole}.{frac}', path, line)
        frac = frac[:6]
    return int(whole) * MICROS_PER_SECOND + int(frac.ljust(6, '0'))


def format_seconds(micros) -> str:
    """Integer microseconds -> decimal seconds with 6 digits."""
    micros = int(micros)
    return f'{micros // MICROS_PER_SECOND}.{micros % MICROS_PER_SECOND:06d}'


class EventReader:
    """
    Reader for text event files.
    """

    def __init__(self, path, width=None, height=None):
        """
        Constructor.

        Args:
            path (str): event file
            width, height (int): geometry, overriding the header
        """
        self.path = path
        self.width = width
        self.height = height
        self.dropped_zero_polarity = 0
        self.line_count = 0
        self.logger = Logger('EventReader')

    def read(self) -> EventStream:
        """
        Parse the whole file.

        Returns:
            EventStream (file order preserved)

        Raises:
            DataFormatError: missing file or malformed line (with line number)
        """
        if not os.path.exists(self.path):
            raise DataFormatError('Event file not found', self.path)

        t, x, y, p = [], [], [], []
        signed = False
        header_geometry = None
        with open(self.path, 'r', encoding='utf-8') as f:
            for number, raw in enumerate(f, start=1):
                self.line_count = number
                text = raw.strip()
                if not text:
                    continue
                if text.startswith('#'):
                    geometry = _GEOMETRY_LINE.match(text)
                    if geometry and header_geometry is None:
                        header_geometry = (int(geometry.group(1)), int(geometry.group(2)))
                    elif _SIGNED_LINE.match(text):
                        signed = True
                    continue
                match = _EVENT_LINE.match(text)
                if not match:
                    raise DataFormatError(f'Malformed event line: {text!r}', self.path, number)
                polarity = int(match.group(5))
                if signed:
                    if polarity not in (-1, 0, 1):
                        raise DataFormatError(f'Invalid signed polarity {polarity}', self.path, number)
                    if polarity == 0:
                        self.dropped_zero_polarity += 1
                        continue
                else:
                    if polarity not in (0, 1) or match.group(5).startswith(('+', '-')):
                        raise DataFormatError(f'Invalid polarity {match.group(5)}', self.path, number)
                    polarity = 1 if polarity == 1 else -1
                t.append(_micros(match.group(1), match.group(2), self.path, number))
                x.append(int(match.group(3)))
                y.append(int(match.group(4)))
                p.append(polarity)

        width, height = self.width, self.height
        if header_geometry is not None:
            width = header_geometry[0] if width is None else width
            height = header_geometry[1] if height is None else height
        if width is None:
            width = max(x) + 1 if x else 0
        if height is None:
            height = max(y) + 1 if y else 0

        if self.dropped_zero_polarity:
            self.logger.warning(f'Dropped {self.dropped_zero_polarity} zero-polarity records from {self.path}')
        self.logger.debug(f'Read {len(t)} events ({width}x{height}) from {self.path}')
        return EventStream(np.array(t, dtype=np.int64), x, y, p, width, height)


def read_events(path, width=None, height=None) -> EventStream:
    """Read a text event file (see module docstring)."""
    return EventReader(path, width, height).read()


def write_events(path, events: EventStream):
    """
    Write events in the 0/1 polarity format with a geometry header.

    Raises:
        DataFormatError: zero-polarity events cannot be represented
    """
    if np.any(events.polarity == 0):
        raise DataFormatError('Cannot write zero-polarity events', path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f'# {events.width} {events.height}\n')
        for t, x, y, p in zip(events.t, events.x, events.y, events.polarity):
            f.write(f'{format_seconds(t)} {x} {y} {1 if p > 0 else 0}\n')
    return path

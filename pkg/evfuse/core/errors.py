"""
EvFuse Errors

Exception hierarchy shared by all engines.

Author: Dragos Gontariu
License: GPL-3.0
"""


class EvFuseError(Exception):
    """Base class for every error raised by evfuse."""


class ParameterError(EvFuseError, ValueError):
    """A numeric precondition was violated (negative dt, nonpositive covariance, ...)."""


class StreamOrderError(EvFuseError, ValueError):
    """
    An input sequence that must be sorted by time is not.

    Attributes:
        index (int): position of the first element earlier than its predecessor
        source (str): which input was unsorted ('events' or 'frames')
    """

    def __init__(self, index, source='events'):
        self.index = int(index)
        self.source = source
        super().__init__(f'{source} not sorted by time: first violation at index {self.index}')


class DataFormatError(EvFuseError):
    """
    A dataset file could not be parsed.

    Attributes:
        path (str): offending file
        line (int): 1-based line number, or None when not line oriented
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ''
        if path is not None:
            where = f'{path}'
            if line is not None:
                where += f':{line}'
            where += ': '
        super().__init__(f'{where}{message}')


class GeometryError(EvFuseError, ValueError):
    """Image shapes or event coordinates are inconsistent."""


class QueryError(EvFuseError, ValueError):
    """A state or reference was queried outside the time range it can answer."""


class CalibrationError(EvFuseError, ValueError):
    """Contrast threshold calibration had no usable support."""

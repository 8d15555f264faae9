"""
EvFuse Logger

Provides consistent logging throughout the package.

Features:
- Multiple log levels (DEBUG, INFO, WARNING, ERROR)
- Writes to the standard logging hierarchy (evfuse.<name>)
- Optional file logging
- Timestamp support

Author: Dragos Gontariu
License: GPL-3.0
"""

import logging
import os
from datetime import datetime

ROOT_LOGGER_NAME = 'evfuse'
_default_log_file = None


def set_default_log_file(path):
    """Route every Logger without an explicit file to `path` (None stops file logging)."""
    global _default_log_file
    _default_log_file = path
    if path:
        log_dir = os.path.dirname(path)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)


def configure_console(level=logging.INFO):
    """
    Attach a console handler to the package root logger.

    Safe to call more than once: the level is updated, the handler is not duplicated.

    Args:
        level (int): logging level for console output
    """
    root = logging.getLogger(ROOT_LOGGER_NAME)
    root.setLevel(level)
    if not any(getattr(h, '_evfuse_console', False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(levelname)s [%(name)s] %(message)s'))
        handler._evfuse_console = True
        root.addHandler(handler)
    for handler in root.handlers:
        handler.setLevel(level)


class Logger:
    """
    Logger for EvFuse components.
    """

    def __init__(self, name='EvFuse', log_file=None):
        """
        Constructor.

        Args:
            name (str): Logger name (used as tag in messages)
            log_file (str): Optional path to log file
        """
        self.name = name
        self._log_file = log_file
        self._logger = logging.getLogger(f'{ROOT_LOGGER_NAME}.{name}')

        # Create log file directory if specified
        if log_file:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir)

    @property
    def log_file(self):
        """Explicit log file, else the package default set at run time."""
        return self._log_file or _default_log_file

    def debug(self, message):
        """Log debug message."""
        self._log(message, logging.DEBUG, 'DEBUG')

    def info(self, message):
        """Log info message."""
        self._log(message, logging.INFO, 'INFO')

    def warning(self, message):
        """Log warning message."""
        self._log(message, logging.WARNING, 'WARNING')

    def error(self, message):
        """Log error message."""
        self._log(message, logging.ERROR, 'ERROR')

    def _log(self, message, level, level_str):
        """
        Internal logging method.

        Args:
            message (str): Message to log
            level (int): logging level
            level_str (str): Level string for file logging
        """
        self._logger.log(level, message)

        # Log to file if configured
        if self.log_file:
            timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
            log_line = f'[{timestamp}] [{level_str}] [{self.name}] {message}\n'

            try:
                with open(self.log_file, 'a', encoding='utf-8') as f:
                    f.write(log_line)
            except OSError as e:
                self._logger.warning(f'Failed to write to log file: {str(e)}')

"""
Progress Tracker for EvFuse

Tracks and calculates processing progress, ETA, and performance metrics
for a reconstruction run (stages plus scheduled snapshots).

Author: Dragos Gontariu
License: GPL-3.0
"""

import time
from datetime import timedelta

import psutil


class ProgressTracker:
    """
    Track processing progress and calculate statistics.
    """

    def __init__(self, total_snapshots, total_events=0):
        """
        Constructor.

        Args:
            total_snapshots (int): Number of scheduled output snapshots
            total_events (int): Number of events in the stream
        """
        self.total_snapshots = total_snapshots
        self.total_events = total_events

        self.completed_snapshots = 0
        self.processed_events = 0

        self.start_time = time.perf_counter()
        self.stage_start_times = {}
        self.stage_durations = {}

        self._process = psutil.Process()
        self.peak_memory_mb = self.get_memory_mb()

    def start_stage(self, name):
        """
        Mark start of a processing stage.

        Args:
            name (str): Stage name (read, augment, filter, write, ...)
        """
        self.stage_start_times[name] = time.perf_counter()

    def finish_stage(self, name):
        """
        Mark end of a processing stage.

        Args:
            name (str): Stage name
        """
        if name in self.stage_start_times:
            duration = time.perf_counter() - self.stage_start_times[name]
            self.stage_durations[name] = self.stage_durations.get(name, 0.0) + duration
        self.peak_memory_mb = max(self.peak_memory_mb, self.get_memory_mb())

    def update(self, completed_snapshots, processed_events=None):
        """
        Update counters.

        Args:
            completed_snapshots (int): Snapshots produced so far
            processed_events (int): Events consumed so far
        """
        self.completed_snapshots = completed_snapshots
        if processed_events is not None:
            self.processed_events = processed_events

    def get_overall_progress(self):
        """
        Get overall progress percentage.

        Returns:
            int: Progress percentage (0-100)
        """
        if self.total_snapshots == 0:
            return 0
        return int(min(100, (self.completed_snapshots / self.total_snapshots) * 100))

    def get_elapsed_seconds(self):
        return time.perf_counter() - self.start_time

    def get_elapsed_time(self):
        """
        Get elapsed time since start.

        Returns:
            timedelta: Elapsed time
        """
        return timedelta(seconds=int(self.get_elapsed_seconds()))

    def get_eta(self):
        """
        Estimate time remaining.

        Returns:
            timedelta: Estimated time remaining, None before the first snapshot
        """
        if self.completed_snapshots == 0:
            return None
        elapsed = self.get_elapsed_seconds()
        rate = self.completed_snapshots / elapsed if elapsed > 0 else 0.0
        if rate == 0:
            return None
        remaining = max(0, self.total_snapshots - self.completed_snapshots)
        return timedelta(seconds=int(remaining / rate))

    def get_processing_speed(self):
        """
        Get processing speed.

        Returns:
            float: Events processed per second
        """
        elapsed = self.get_elapsed_seconds()
        if self.processed_events == 0 or elapsed == 0:
            return 0.0
        return self.processed_events / elapsed

    def get_memory_mb(self):
        """Resident memory of this process in MiB."""
        return self._process.memory_info().rss / (1024 ** 2)

    def get_summary(self):
        """
        Get progress summary.

        Returns:
            dict: Progress summary (plain numbers, JSON ready)
        """
        return {
            'completed_snapshots': self.completed_snapshots,
            'total_snapshots': self.total_snapshots,
            'processed_events': self.processed_events,
            'total_events': self.total_events,
            'overall_progress': self.get_overall_progress(),
            'elapsed_seconds': round(self.get_elapsed_seconds(), 6),
            'events_per_second': self.get_processing_speed(),
            'stage_seconds': {name: round(d, 6) for name, d in self.stage_durations.items()},
            'memory_mb': round(self.get_memory_mb(), 2),
            'peak_memory_mb': round(max(self.peak_memory_mb, self.get_memory_mb()), 2),
        }

"""Builders shared by several test modules."""

import numpy as np

from evfuse.core.types import EventStream, Frame, Timestamp


def make_frames(times, shape, value=0.5, exposure=0.0):
    """Uniform frames at the given microsecond midpoints."""
    return [Frame(Timestamp(int(t)), exposure, np.full(shape, value)) for t in times]


def random_events(n, width, height, t_max, seed=0, t_min=0):
    """Sorted random in-bounds events."""
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(t_min, t_max, size=n))
    x = rng.integers(0, width, size=n)
    y = rng.integers(0, height, size=n)
    p = rng.choice([-1, 1], size=n)
    return EventStream(t, x, y, p, width, height)

"""
Simulated Dataset Writer for EvFuse

Lays a SimulatedDataset out on disk in the layout the readers expect:

    events.txt
    frames.csv            frame index (filenames relative to frames/)
    frames/frame_00000.pgm ...
    crf.txt
    ground_truth/frame_<micros>.npy   intensity exp(L) - I0 at every frame midpoint
    dataset.cfg

Author: Dragos Gontariu
License: GPL-3.0
"""

import os

import numpy as np

from ..algorithms.simulator import SimulatedDataset
from ..utils.logger import Logger
from .events_io import write_events
from .frames_io import write_frames
from .images_io import write_raw
from .manifest import DatasetManifest, write_manifest
from .tables_io import write_crf

_logger = Logger('SimulatedDataset')


def write_simulated_dataset(dataset: SimulatedDataset, directory, profile='synthetic', bit_depth=8,
                            ground_truth_times=None):
    """
    Write every artifact of a simulation.

    Args:
        dataset: simulation result
        directory: output directory (created)
        profile: sensor profile recorded in the manifest
        bit_depth: frame image depth
        ground_truth_times: microsecond times of the ground-truth images, frame midpoints when None

    Returns:
        DatasetManifest with absolute paths
    """
    os.makedirs(directory, exist_ok=True)
    events_path = write_events(os.path.join(directory, 'events.txt'), dataset.events)
    frame_dir = os.path.join(directory, 'frames')
    index_path = write_frames(dataset.frames, frame_dir, os.path.join(directory, 'frames.csv'), bit_depth)
    crf_path = write_crf(os.path.join(directory, 'crf.txt'), dataset.crf)

    truth_dir = os.path.join(directory, 'ground_truth')
    if ground_truth_times is None:
        ground_truth_times = [f.t_mid.micros for f in dataset.frames]
    for t in ground_truth_times:
        intensity = np.exp(dataset.ground_truth(int(t))) - dataset.crf.i0
        write_raw(truth_dir, int(t), intensity)
    os.makedirs(truth_dir, exist_ok=True)

    height, width = dataset.events.shape
    manifest = DatasetManifest(
        events=events_path, frame_dir=frame_dir, frame_index=index_path,
        width=width, height=height, crf=crf_path, profile=profile, ground_truth=truth_dir,
    )
    write_manifest(directory, manifest)
    _logger.info(f'Wrote {len(dataset.events)} events, {len(dataset.frames)} frames and '
                 f'{len(ground_truth_times)} ground-truth images to {directory}')
    return manifest

"""
Shared fixtures for the EvFuse test suite.

Author: Dragos Gontariu
License: GPL-3.0
"""

import pytest

from evfuse.algorithms.simulator import SimConfig, SinusoidScene, simulate
from evfuse.data.simulated import write_simulated_dataset


@pytest.fixture(scope='session')
def sinusoid_dataset():
    """Small noiseless simulation: 16x16 moving grating, 0.2 s, 30 fps."""
    scene = SinusoidScene(16, 16, mean=-1.0, amplitude=0.3, wavelength=16.0, velocity=40.0)
    config = SimConfig(c_true=0.1, fps=30.0, exposure=0.0, duration=0.2, quantize=True)
    return simulate(scene, config)


@pytest.fixture
def dataset_dir(tmp_path, sinusoid_dataset):
    """The sinusoid simulation written to disk; returns the dataset directory."""
    directory = tmp_path / 'dataset'
    write_simulated_dataset(sinusoid_dataset, str(directory))
    return str(directory)

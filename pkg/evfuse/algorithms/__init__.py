"""
EvFuse Algorithms Package

Contains the numerical engines: noise models, asynchronous filters,
frame augmentation, event-space convolution, simulator and metrics.

Author: Dragos Gontariu
License: GPL-3.0
"""

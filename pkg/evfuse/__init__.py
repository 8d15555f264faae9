"""
EvFuse - Asynchronous Event and Frame Fusion

Continuous-time intensity reconstruction from an event camera stream and
a conventional frame stream with:
- Complementary and asynchronous Kalman filters with per-pixel state
- Event and frame noise models (CRF-weighted frame covariance)
- Frame augmentation: deblurring, event interpolation, threshold calibration
- Spatial convolution computed directly in event space
- A scene simulator with ground truth, and MSE/SSIM evaluation

Author: Dragos Gontariu
License: GPL-3.0
"""

__version__ = '1.0.0'

"""IMU bias modeling with a conditional diffusion model, plus the
classical calibration and strapdown machinery needed to evaluate it."""

__version__ = "0.1.0"

from . import allan, autodiff, dataset, diffusion, evaluation, geometry, imu_model, networks, strapdown  # noqa: F401

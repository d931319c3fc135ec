"""Extrinsic calibration of a LIDAR and a camera from a square planar target."""
from .errors import CalibrationError, DataError, ObservabilityError, SolverError
from .geometry import CameraIntrinsics, Line2, Line3, Plane, RigidTransform
from .solver import CalibrationProblem, CalibrationResult, FramePair, SolverConfig, calibrate
from .target import TargetModel

__version__ = "0.1.0"

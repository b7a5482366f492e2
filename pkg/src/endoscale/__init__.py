"""Metric depth for monocular endoscopy, scaled by a surgical tool shaft of known radius."""
from .errors import EndoscaleError, FrameRejected
from .evaluation import DepthMetrics, PoseErrors, depth_metrics, median_rescaled, pose_errors
from .fusion import FusionConfig, fuse_multires, guided_filter
from .geometry import CameraIntrinsics, CylinderAxis, ImageLine, Pixel, Point3
from .maps import DepthMap, ShaftMask, Unit
from .pose import ShaftObservation, ToolPose, estimate_axis, estimate_pose, extract_shaft_boundaries
from .scale import RecoveryConfig, ScaleParams, apply_scale, fit_scale, recover_frame

__version__ = "0.1.0"

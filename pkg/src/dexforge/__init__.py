"""dexforge: dexterous-hand retargeting, unified action encoding, and tooling.

The pieces, roughly in pipeline order:

* ``handmodel`` -- hand description files and their kinematic structure
* ``kinematics`` / ``retarget`` -- FK, Jacobians, fingertip IK with mimic joints
* ``faas`` -- the 82-d cross-hand action vector and chunk conventions
* ``pointcloud`` -- RGB-D unprojection, hand-surface attach, reprojection
* ``flowmatch`` -- desk-scale conditional flow-matching policy + sampler
* ``dataset`` -- trajectory shards, downsampling, co-training batch mixer
* ``session`` / ``service`` -- interactive calibration sessions over HTTP

Heavy inner loops run in a compiled extension when available; set
DEXFORGE_PURE_PYTHON=1 to force the numpy fallback (see ``_kernels.backend``).
"""

from ._kernels import backend as kernel_backend
from .geometry import Pose
from .handmodel import HandModel, hand_summary, load_hand, parse_hand, serialize_hand
from .kinematics import apply_mimic, fingertip_jacobian, forward_kinematics
from .retarget import CalibrationProfile, IkConfig, retarget_frame, solve_ik

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "HandModel",
    "load_hand",
    "parse_hand",
    "serialize_hand",
    "hand_summary",
    "forward_kinematics",
    "fingertip_jacobian",
    "apply_mimic",
    "solve_ik",
    "retarget_frame",
    "IkConfig",
    "CalibrationProfile",
    "kernel_backend",
    "__version__",
]

"""Two-view change detection by registering and differencing image features.

Typical use::

    from regdiff import GroundTruthPose, detect_changes
    boxes1, boxes2 = detect_changes(img1, img2, depth1, depth2, GroundTruthPose(cam1, cam2))
"""

from .detect import DetectConfig, ScoredBox, detect_changes, run_detection
from .dfrm import (
    GroundTruthPose,
    HomographyEstimated,
    HomographySupplied,
    Identity,
    Transform3DEstimated,
    Transform3DSupplied,
    build_plan,
    warp_and_difference,
)
from .errors import (
    DegenerateConfigurationError,
    GenerationFailure,
    InputDomainError,
    InsufficientDataError,
    InvalidDepthError,
    PointAtInfinityError,
    RegdiffError,
    RegistrationFailure,
)
from .evaluate import average_precision, evaluate_pairs, iou
from .featgrid import FeatureGrid, RenderConfig
from .features import FeatureConfig, extract_pair, extract_pyramid
from .geometry import CameraModel, CorrespondenceSet, DepthMap, Homography2D, RansacConfig, Transform3D
from .synthgen import GeneratorConfig, easy_suite_config, make_change_pair, planar_suite_config

__version__ = "0.1.0"

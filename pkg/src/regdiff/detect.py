"""From masked difference pyramids to scored change boxes in both images."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dfrm import DifferencePyramid, RegistrationPlan, build_plan, warp_and_difference
from .errors import InputDomainError, RegistrationFailure
from .featgrid import RenderConfig
from .features import FeatureConfig, extract_pair
from .geometry import DepthMap

log = logging.getLogger(__name__)

NORM_PERCENTILE = 99.5


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray
    raw_max: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or (v.size and (v.min() < 0 or v.max() > 1)):
            raise InputDomainError("heatmap must be a 2D grid with values in [0, 1]")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScoredBox:
    """Box in pixel-edge coordinates at full image resolution."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InputDomainError(f"degenerate box {self.bbox}")
        if not 0.0 <= self.score <= 1.0:
            raise InputDomainError(f"score {self.score} outside [0, 1]")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_dict(self) -> dict:
        return {"bbox": [round(float(v), 6) for v in self.bbox], "score": round(float(self.score), 6)}


@dataclass(frozen=True)
class DetectConfig:
    heat_threshold: float = 0.35
    min_area: int = 16
    morph_radius: int = 1
    max_boxes: int = 100
    fallback_on_failure: bool = False

    def __post_init__(self):
        if not 0.0 < self.heat_threshold < 1.0:
            raise InputDomainError("heat_threshold must lie strictly between 0 and 1")
        if self.min_area < 0 or self.morph_radius < 0 or self.max_boxes < 0:
            raise InputDomainError("min_area, morph_radius and max_boxes must be non-negative")


def upsample_bilinear(level: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Pixel-centre aligned bilinear resampling of a 2D map to ``target``."""
    h, w = level.shape
    th, tw = target
    if (h, w) == (th, tw):
        return level.copy()
    # centre of target pixel i sits at source coordinate (i + 0.5) * h / th - 0.5
    ys = (np.arange(th) + 0.5) * (h / th) - 0.5
    xs = (np.arange(tw) + 0.5) * (w / tw) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(level, [yy, xx], order=1, mode="nearest")


def fuse_heatmap(diff: DifferencePyramid, target: tuple[int, int]) -> Heatmap:
    """Average the per-level channel norms at full resolution and normalise."""
    if len(diff) == 0:
        raise InputDomainError("cannot fuse an empty difference pyramid")
    acc = np.zeros(target)
    for lvl in diff.levels:
        acc += upsample_bilinear(np.linalg.norm(lvl.diff.data, axis=0), target)
    acc /= len(diff)
    raw_max = float(acc.max())
    if raw_max <= 0:
        return Heatmap(np.zeros(target), 0.0)
    scale = float(np.percentile(acc, NORM_PERCENTILE))
    if scale <= 0:
        scale = raw_max
    return Heatmap(np.clip(acc / scale, 0.0, 1.0), raw_max)


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return r[:, None] ** 2 + r[None, :] ** 2 <= radius * radius


def binary_closing_padded(mask: np.ndarray, radius: int) -> np.ndarray:
    """Closing with a disk, padded so that the image border does not erode blobs."""
    if radius == 0:
        return mask.copy()
    padded = np.pad(mask, radius)
    closed = ndimage.binary_closing(padded, structure=_disk(radius))
    return closed[radius:-radius, radius:-radius]


def heatmap_to_boxes(heat: Heatmap, cfg: DetectConfig = DetectConfig()) -> list[ScoredBox]:
    """Threshold, close, label 8-connected blobs and score each blob's tight box."""
    v = heat.values
    binary = binary_closing_padded(v >= cfg.heat_threshold, cfg.morph_radius)
    labels, n = ndimage.label(binary, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(np.ones_like(v), labels, idx)
    means = ndimage.mean(v, labels, idx)
    slices = ndimage.find_objects(labels)
    calib = min(1.0, heat.raw_max)
    found = []
    for k, (sl, area, mean) in enumerate(zip(slices, areas, means)):
        if area < cfg.min_area:
            continue
        ys, xs = sl
        score = float(np.clip(mean * calib, 0.0, 1.0))
        found.append((-score, k, ScoredBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop), score)))
    found.sort(key=lambda t: (t[0], t[1]))
    return [b for _, _, b in found[:cfg.max_boxes]]


@dataclass
class DetectionResult:
    boxes1: list[ScoredBox]
    boxes2: list[ScoredBox]
    plan: RegistrationPlan | None = None
    diff1: DifferencePyramid | None = None
    diff2: DifferencePyramid | None = None
    heat1: Heatmap | None = None
    heat2: Heatmap | None = None


def run_detection(img1, img2, depth1: DepthMap | None, depth2: DepthMap | None, strategy,
                  feature_cfg: FeatureConfig = FeatureConfig(), render_cfg: RenderConfig = RenderConfig(),
                  detect_cfg: DetectConfig = DetectConfig()) -> DetectionResult:
    """Full pipeline keeping the intermediate products."""
    img1, img2 = np.asarray(img1), np.asarray(img2)
    if img1.shape != img2.shape:
        raise InputDomainError(f"images differ in shape: {img1.shape} vs {img2.shape}")
    size = img1.shape[:2]
    for name, d in (("depth1", depth1), ("depth2", depth2)):
        if d is not None and d.shape != size:
            raise InputDomainError(f"{name} is {d.shape}, image is {size}")
    try:
        plan = build_plan(strategy, depth1, depth2)
    except RegistrationFailure as e:
        if not detect_cfg.fallback_on_failure:
            raise
        log.warning("registration failed, emitting empty predictions: %s", e)
        return DetectionResult([], [])
    if not strategy.needs_depth:
        depth1 = depth2 = None  # 2D warps carry no depth worth testing against
    pyr1, pyr2 = extract_pair(img1, img2, feature_cfg)
    diff1, diff2 = warp_and_difference(pyr1, pyr2, depth1, depth2, plan, render_cfg)
    heat1, heat2 = fuse_heatmap(diff1, size), fuse_heatmap(diff2, size)
    return DetectionResult(heatmap_to_boxes(heat1, detect_cfg), heatmap_to_boxes(heat2, detect_cfg),
                           plan, diff1, diff2, heat1, heat2)


def detect_changes(img1, img2, depth1: DepthMap | None, depth2: DepthMap | None, strategy,
                   feature_cfg: FeatureConfig = FeatureConfig(), render_cfg: RenderConfig = RenderConfig(),
                   detect_cfg: DetectConfig = DetectConfig()) -> tuple[list[ScoredBox], list[ScoredBox]]:
    """Change boxes for image 1 and image 2."""
    res = run_detection(img1, img2, depth1, depth2, strategy, feature_cfg, render_cfg, detect_cfg)
    return res.boxes1, res.boxes2

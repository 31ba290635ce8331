"""Registration plans and masked feature differencing between two views.

For image 1 the difference at every pyramid level is
``H1 = v(2->1) * (G1 - render(warp_2to1(G2)))`` and symmetrically for
image 2, where ``v`` is the soft visibility mask of the splat renderer.

When both depth maps are available the mask is also zeroed where depth
says the comparison is meaningless: target surfaces hidden from the
source camera, farther content that slipped through splat gaps, and a
band around depth discontinuities. Content rendered in front of the
target surface, and target surfaces the source camera sees straight
through, are kept because they are what a removal looks like.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import ndimage

from .errors import DegenerateConfigurationError, InputDomainError, InsufficientDataError, RegistrationFailure
from .featgrid import FeatureGrid, FeaturePointCloud, RenderConfig, downsample_depth, lift_features, splat_render
from .features import FeaturePyramid
from .geometry import (
    IDENTITY,
    CameraModel,
    CorrespondenceSet,
    DepthMap,
    Homography2D,
    RansacConfig,
    Transform3D,
    estimate_homography_dlt,
    grid_normalized,
    normalized_to_pixels,
    ransac_transform,
    relative_pose_transform,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Identity:
    needs_depth = False


@dataclass(frozen=True)
class HomographySupplied:
    homography: Homography2D  # maps view 1 onto view 2
    needs_depth = False


@dataclass(frozen=True)
class HomographyEstimated:
    correspondences: CorrespondenceSet
    needs_depth = False


@dataclass(frozen=True)
class Transform3DSupplied:
    transform: Transform3D  # maps view 1 onto view 2
    needs_depth = True


@dataclass(frozen=True)
class Transform3DEstimated:
    correspondences: CorrespondenceSet
    ransac: RansacConfig = RansacConfig()
    needs_depth = True


@dataclass(frozen=True)
class GroundTruthPose:
    cam1: CameraModel
    cam2: CameraModel
    needs_depth = True


RegistrationStrategy = Union[Identity, HomographySupplied, HomographyEstimated,
                             Transform3DSupplied, Transform3DEstimated, GroundTruthPose]

STRATEGY_NAMES = {
    Identity: "identity",
    HomographySupplied: "homography_supplied",
    HomographyEstimated: "homography_estimated",
    Transform3DSupplied: "transform3d_supplied",
    Transform3DEstimated: "transform3d_estimated",
    GroundTruthPose: "ground_truth_pose",
}


@dataclass
class RegistrationPlan:
    warp_1to2: object
    warp_2to1: object
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DifferenceLevel:
    diff: FeatureGrid
    mask: np.ndarray
    rendered: FeatureGrid


@dataclass(frozen=True)
class DifferencePyramid:
    levels: tuple[DifferenceLevel, ...]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, i: int) -> DifferenceLevel:
        return self.levels[i]


def composition_residual(plan: RegistrationPlan, depth: DepthMap | None, samples: int = 9) -> float:
    """Largest displacement of sampled view-1 points after going 1 -> 2 -> 1."""
    g = np.linspace(-0.8, 0.8, samples)
    x, y = np.meshgrid(g, g)
    x, y = x.ravel(), y.ravel()
    if depth is None:
        d = np.ones_like(x)
    else:
        d, ok = depth.sample(np.column_stack([x, y]))
        x, y, d = x[ok], y[ok], d[ok]
    x2, y2, z2, ok = plan.warp_1to2.warp_normalized(x, y, d)
    x3, y3, _, ok3 = plan.warp_2to1.warp_normalized(x2[ok], y2[ok], z2[ok])
    if not ok3.any():
        return float("nan")
    return float(np.max(np.hypot(x3[ok3] - x[ok][ok3], y3[ok3] - y[ok][ok3])))


def _check_depths(strategy, d1, d2):
    if strategy.needs_depth:
        missing = [name for name, d in (("depth1", d1), ("depth2", d2)) if d is None]
        if missing:
            raise InputDomainError(f"{STRATEGY_NAMES[type(strategy)]} strategy needs {' and '.join(missing)}")
        if d1.shape != d2.shape:
            raise InputDomainError(f"depth maps differ in size: {d1.shape} vs {d2.shape}")


def build_plan(strategy: RegistrationStrategy, d1: DepthMap | None = None, d2: DepthMap | None = None) -> RegistrationPlan:
    """Resolve both directional warps for ``strategy``.

    Estimated strategies fit each direction on its own rather than
    inverting a single fit.
    """
    if type(strategy) not in STRATEGY_NAMES:
        raise InputDomainError(f"unknown registration strategy {strategy!r}")
    _check_depths(strategy, d1, d2)
    diag: dict = {"strategy": STRATEGY_NAMES[type(strategy)]}
    try:
        if isinstance(strategy, Identity):
            w12 = w21 = IDENTITY
        elif isinstance(strategy, HomographySupplied):
            w12, w21 = strategy.homography, strategy.homography.inverse()
        elif isinstance(strategy, Transform3DSupplied):
            w12, w21 = strategy.transform, strategy.transform.inverse()
        elif isinstance(strategy, GroundTruthPose):
            w12 = relative_pose_transform(strategy.cam1, strategy.cam2, d1.shape)
            w21 = w12.inverse()
        elif isinstance(strategy, HomographyEstimated):
            corr = strategy.correspondences
            w12 = estimate_homography_dlt(corr)
            w21 = estimate_homography_dlt(corr.swapped())
            for key, H, c in (("1to2", w12, corr), ("2to1", w21, corr.swapped())):
                xy, _ = H.apply(c.src)
                diag[f"residual_{key}"] = float(np.max(np.linalg.norm(xy - c.dst, axis=1)))
        else:
            corr = strategy.correspondences
            r12 = ransac_transform(corr, d1, d2, strategy.ransac)
            r21 = ransac_transform(corr.swapped(), d2, d1, strategy.ransac)
            w12, w21 = r12.transform, r21.transform
            for key, r in (("1to2", r12), ("2to1", r21)):
                diag[f"inliers_{key}"] = int(r.inliers.sum())
                diag[f"iterations_{key}"] = r.iterations
                diag[f"residual_{key}"] = r.median_error
                diag[f"condition_{key}"] = r.transform.condition
    except (DegenerateConfigurationError, InsufficientDataError) as e:
        raise RegistrationFailure(f"registration failed: {e}", diag) from e
    except np.linalg.LinAlgError as e:
        raise InputDomainError(f"supplied transform is not invertible: {e}") from e
    except RegistrationFailure as e:
        e.diagnostics = {**diag, **e.diagnostics}
        raise
    plan = RegistrationPlan(w12, w21, diag)
    diag["composition_residual"] = composition_residual(plan, d1 if strategy.needs_depth else None)
    log.debug("registration plan: %s", diag)
    return plan


UNSEEN, COVISIBLE, OCCLUDED, VIOLATED = 0, 1, 2, 3
REFERENCE_COVERAGE = 0.5  # mask level from which a target cell feeds the blurred reference


def _back_facing(xs, ys, z, rtol: float) -> np.ndarray:
    """True where the surface patch at a pixel is seen from behind after warping.

    ``xs``/``ys`` hold the warped position of every target pixel (NaN where
    unknown) and ``z`` the target depth. The triangle spanned by a pixel and
    two neighbours keeps its orientation under any warp that sees the patch
    from the front; a flip means the other camera sits behind the surface.
    Neighbours across a depth jump are skipped and the next pair is tried.
    """
    h, w = z.shape
    zp = np.pad(z, 1, constant_values=np.inf)
    xp = np.pad(xs, 1, constant_values=np.nan)
    yp = np.pad(ys, 1, constant_values=np.nan)

    def at(a, dy, dx):
        return a[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]

    def same(dy, dx):
        zn = at(zp, dy, dx)
        with np.errstate(invalid="ignore"):  # inf - inf where both pixels lack depth
            return np.abs(zn - z) <= rtol * np.minimum(zn, z)

    back = np.zeros((h, w), dtype=bool)
    decided = np.zeros((h, w), dtype=bool)
    for sx, sy in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
        ax, ay = at(xp, 0, sx) - xs, at(yp, 0, sx) - ys
        bx, by = at(xp, sy, 0) - xs, at(yp, sy, 0) - ys
        cross = (ax * by - ay * bx) * (sx * sy)
        now = ~decided & same(0, sx) & same(sy, 0) & np.isfinite(cross)
        back |= now & (cross <= 0)
        decided |= now
    return back


def source_visibility(target_depth: DepthMap, source_depth: DepthMap, warp_t2s, rtol: float,
                      margin: int = 0) -> np.ndarray:
    """Classify every target pixel by how the source view sees its surface point.

    The point is carried into the source view and compared with the four
    source depths around its landing spot: ``OCCLUDED`` if all of them are
    nearer or the local surface faces away from the source camera,
    ``VIOLATED`` if all are farther (the source looks through where the
    surface should be), ``COVISIBLE`` otherwise, and ``UNSEEN`` when it lands
    outside the source image or has no valid depth. With ``margin`` > 0 the
    see-through test must hold over that many extra source pixels around the
    landing spot, which absorbs the placement error of decimated depth.
    """
    h, w = target_depth.shape
    sh, sw = source_depth.shape
    x, y = grid_normalized(h, w)
    ok = target_depth.valid
    xs, ys, zs, valid = warp_t2s.warp_normalized(x[ok], y[ok], target_depth.values[ok])
    u, v = normalized_to_pixels(xs, ys, sw, sh)
    inside = valid & np.isfinite(u) & np.isfinite(v) & (u > -1) & (u < sw) & (v > -1) & (v < sh)
    u0 = np.clip(np.floor(np.where(inside, u, 0)).astype(np.int64), 0, sw - 1)
    v0 = np.clip(np.floor(np.where(inside, v, 0)).astype(np.int64), 0, sh - 1)
    u1, v1 = np.minimum(u0 + 1, sw - 1), np.minimum(v0 + 1, sh - 1)
    corners = [(v0, u0), (v0, u1), (v1, u0), (v1, u1)]
    src = np.where(source_depth.valid, source_depth.values, np.nan)
    src_near = src
    if margin:
        src_near = -ndimage.maximum_filter(np.where(np.isnan(src), -np.inf, -src), size=2 * margin + 1, mode="nearest")
        src_near[np.isinf(src_near)] = np.nan
    near = np.fmin.reduce([src_near[c] for c in corners])
    far = np.fmax.reduce([src[c] for c in corners])
    known = inside & np.isfinite(near)
    gx = np.full((h, w), np.nan)
    gy = np.full((h, w), np.nan)
    gx[ok] = np.where(valid, xs, np.nan)
    gy[ok] = np.where(valid, ys, np.nan)
    back = _back_facing(gx, gy, np.where(ok, target_depth.values, np.inf), rtol)[ok]
    violated = known & (near > zs * (1 + rtol))
    codes = np.full(len(zs), UNSEEN, dtype=np.int8)
    codes[known] = COVISIBLE
    codes[(known & (far < zs * (1 - rtol))) | (back & ~violated)] = OCCLUDED
    codes[violated] = VIOLATED
    out = np.full((h, w), UNSEEN, dtype=np.int8)
    out[ok] = codes
    return out


def depth_edge_band(depth: DepthMap, rtol: float, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixels within ``radius`` of a depth jump larger than ``rtol``, and the nearest depth there."""
    z = np.where(depth.valid, depth.values, np.inf)
    size = 2 * radius + 1
    hi = ndimage.maximum_filter(z, size=size, mode="nearest")
    lo = ndimage.minimum_filter(z, size=size, mode="nearest")
    return hi > lo * (1 + rtol), lo


def _warp_level(source: FeatureGrid, depth: DepthMap | None, warp, target: FeatureGrid,
                cfg: RenderConfig, target_depth: DepthMap | None = None, warp_back=None,
                source_full: DepthMap | None = None) -> DifferenceLevel:
    pc = lift_features(source, depth, warp)
    size = (target.height, target.width)
    depth_test = cfg.occlusion_rtol is not None and depth is not None and target_depth is not None
    if not depth_test:
        rendered, mask = splat_render(pc, size, cfg)
    else:
        # render the source depth alongside the features
        both, mask = splat_render(pc.with_features(np.column_stack([pc.features, pc.positions[:, 2]])), size, cfg)
        rendered = FeatureGrid(both.data[:-1])
        zr = both.data[-1]
        tz = np.where(target_depth.valid, target_depth.values, np.inf)
        rtol = cfg.occlusion_rtol
        # classify against the full-resolution source depth; decimated depth misplaces silhouettes
        if source_full is None:
            vis = source_visibility(target_depth, depth, warp_back, rtol)
        else:
            factor = source_full.height // target.height
            vis = source_visibility(target_depth, source_full, warp_back, rtol, margin=factor - 1)
        # content in front of the target surface is evidence of change and always kept
        in_front = (mask > 0) & (zr < tz * (1 - rtol))
        behind = (mask > 0) & (zr > tz * (1 + rtol))
        hidden = (vis == OCCLUDED) & ~in_front
        # farther content is evidence only where the source demonstrably sees past the target
        # surface; elsewhere it came through a splat gap or from outside the source frame
        leaked = behind & (vis != VIOLATED)
        drop = hidden | leaked
        if cfg.edge_band:
            band, nearest = depth_edge_band(target_depth, rtol, cfg.edge_band)
            # in-front content only counts when no nearby target surface accounts for it
            explained = in_front & (nearest <= zr * (1 + rtol))
            drop |= band & (vis != VIOLATED) & (~in_front | explained)
        mask = np.where(drop, 0.0, mask)
    reference = target.data
    if cfg.blur_target:
        reference = _reference(target, target_depth, mask, size, cfg)
    diff = mask[None] * (reference - rendered.data)
    diff[:, mask == 0] = 0.0  # keeps the masking law exact under -0.0 and inf*0 corner cases
    return DifferenceLevel(FeatureGrid(diff), mask, rendered)


def _reference(target: FeatureGrid, depth: DepthMap | None, mask: np.ndarray, size, cfg: RenderConfig) -> np.ndarray:
    """Target features passed through the renderer like the warped source.

    Only cells the warp covers contribute, so that along the rim of a
    dis-occluded region both sides are blurred from the same side.
    """
    pc = lift_features(target, depth)
    keep = (mask.ravel() >= REFERENCE_COVERAGE)[pc.source_index]
    pc = FeaturePointCloud(pc.positions[keep], pc.features[keep], pc.source_dims, pc.source_index[keep])
    ref, covered = splat_render(pc, size, cfg)
    return np.where(covered > 0, ref.data, target.data)


def _level_depth(depth: DepthMap | None, grid: FeatureGrid) -> DepthMap | None:
    if depth is None:
        return None
    factor = depth.height // grid.height
    if factor * grid.height != depth.height or factor * grid.width != depth.width:
        raise InputDomainError(f"depth {depth.shape} is not an integer multiple of level {grid.shape[1:]}")
    return downsample_depth(depth, factor)


def warp_and_difference(pyr1: FeaturePyramid, pyr2: FeaturePyramid, d1: DepthMap | None, d2: DepthMap | None,
                        plan: RegistrationPlan, render_cfg: RenderConfig = RenderConfig()
                        ) -> tuple[DifferencePyramid, DifferencePyramid]:
    """Masked feature differences for image 1 and image 2 at every level."""
    if len(pyr1) != len(pyr2) or len(pyr1) == 0:
        raise InputDomainError(f"pyramids have {len(pyr1)} and {len(pyr2)} levels")
    out1, out2 = [], []
    for g1, g2 in zip(pyr1.levels, pyr2.levels):
        if g1.shape != g2.shape:
            raise InputDomainError(f"level shapes differ: {g1.shape} vs {g2.shape}")
        l1, l2 = _level_depth(d1, g1), _level_depth(d2, g2)
        out1.append(_warp_level(g2, l2, plan.warp_2to1, g1, render_cfg, l1, plan.warp_1to2, d2))
        out2.append(_warp_level(g1, l1, plan.warp_1to2, g2, render_cfg, l2, plan.warp_2to1, d1))
    return DifferencePyramid(tuple(out1)), DifferencePyramid(tuple(out2))


__all__ = [
    "Identity", "HomographySupplied", "HomographyEstimated", "Transform3DSupplied", "Transform3DEstimated",
    "GroundTruthPose", "RegistrationStrategy", "RegistrationPlan", "DifferenceLevel", "DifferencePyramid",
    "build_plan", "warp_and_difference", "composition_residual", "source_visibility", "depth_edge_band",
    "UNSEEN", "COVISIBLE", "OCCLUDED", "VIOLATED",
]

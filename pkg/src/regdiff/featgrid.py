"""Feature grids, lifting them into warped point clouds, and soft splatting.

The renderer deposits every point on a disk of pixels around its projected
location. Each pixel keeps at most ``k_nearest`` contributions, chosen by
depth, and blends them with normalised weights. The visibility mask is the
same splat of the constant 1 through the *unnormalised* weights, so it
fades towards the rim of the covered area and is exactly zero where no
point lands.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputDomainError
from .geometry import IDENTITY, DepthMap, Homography2D, IdentityWarp, grid_normalized, normalized_to_pixels


@dataclass(frozen=True)
class FeatureGrid:
    """``c x h x w`` feature map, channel-major."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) <= 0:
            raise InputDomainError(f"feature grid must be c x h x w with positive dims, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputDomainError("feature grid holds non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FeaturePointCloud:
    """Warped feature points.

    ``positions`` is (n, 3): normalised target coordinates ``x``, ``y`` and the
    depth in the target view. ``features`` is (n, c). ``source_index`` holds
    the flat cell index each point was lifted from; ``dropped`` counts cells
    that produced no point (invalid depth, behind the camera, at infinity).
    """

    positions: np.ndarray
    features: np.ndarray
    source_dims: tuple[int, int] = (0, 0)
    source_index: np.ndarray | None = None
    dropped: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        feat = np.asarray(self.features, dtype=np.float64)
        if feat.ndim != 2 or len(feat) != len(pos):
            raise InputDomainError("positions and features differ in length")
        if not np.all(np.isfinite(pos)):
            raise InputDomainError("point cloud positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feat)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "FeaturePointCloud":
        return FeaturePointCloud(self.positions, features, self.source_dims, self.source_index, self.dropped)


@dataclass(frozen=True)
class RenderConfig:
    """Splatting parameters.

    ``occlusion_rtol`` and ``edge_band`` are not used by the renderer itself.
    When both depth maps are known, the differencing step compares depths
    with this relative tolerance and masks pixels whose comparison is not
    meaningful (``None`` turns that off). ``edge_band`` is the radius in
    level pixels of the band around target depth discontinuities that is
    masked too, since blurred features there mix surfaces at different
    depths; keep it at least ``splat_radius``, 0 disables it.

    With ``blur_target`` the target features are also passed through the
    renderer (identity warp, own depth) before differencing, so both sides
    carry the same splat blur and unchanged content cancels even with wide
    splats.
    """

    splat_radius: float = 1.5
    k_nearest: int = 4
    weight_power: float = 2.0
    depth_sigma: float = 0.05
    occlusion_rtol: float | None = 0.02
    edge_band: int = 2
    blur_target: bool = True

    def __post_init__(self):
        if self.occlusion_rtol is not None and not 0 <= self.occlusion_rtol < 1:
            raise InputDomainError("occlusion_rtol must lie in [0, 1)")
        if not self.splat_radius > 0:
            raise InputDomainError("splat_radius must be positive")
        if self.k_nearest < 1:
            raise InputDomainError("k_nearest must be >= 1")
        if self.edge_band < 0:
            raise InputDomainError("edge_band must be non-negative")
        if not self.depth_sigma > 0:
            raise InputDomainError("depth_sigma must be positive")


def lift_features(grid: FeatureGrid, depth: DepthMap | None, warp=IDENTITY) -> FeaturePointCloud:
    """Lift every grid cell to a warped 3D point carrying its feature vector.

    ``warp`` is any object with ``warp_normalized(x, y, d)``: a
    :class:`~regdiff.geometry.Transform3D`, :class:`~regdiff.geometry.PoseWarp`,
    :class:`~regdiff.geometry.Homography2D` or the identity. Identity and
    homography warps accept ``depth=None`` and then use unit depth.
    """
    c, h, w = grid.shape
    if depth is None:
        if not isinstance(warp, (IdentityWarp, Homography2D)):
            raise InputDomainError(f"{type(warp).__name__} warp needs a depth map")
        d = np.ones((h, w))
        ok = np.ones((h, w), dtype=bool)
    else:
        if depth.shape != (h, w):
            raise InputDomainError(f"depth {depth.shape} does not match grid {(h, w)}")
        d = depth.values
        ok = depth.valid
    x, y = grid_normalized(h, w)
    xs, ys, zs, valid = warp.warp_normalized(x[ok], y[ok], d[ok])
    valid = valid & np.isfinite(xs) & np.isfinite(ys) & (zs > 0)
    flat = np.flatnonzero(ok.ravel())[valid]
    feats = grid.data.reshape(c, -1)[:, flat].T
    pos = np.column_stack([xs[valid], ys[valid], zs[valid]])
    return FeaturePointCloud(pos, feats, (h, w), flat, int(h * w - len(flat)))


def _contributions(pc: FeaturePointCloud, target: tuple[int, int], cfg: RenderConfig):
    """All (pixel, point, weight) splat contributions that survive the K-nearest cut.

    Returned arrays are ordered by pixel, then depth, then point index.
    """
    h, w = target
    r = float(cfg.splat_radius)
    R = int(math.ceil(r))
    z = pc.positions[:, 2]
    u, v = normalized_to_pixels(pc.positions[:, 0], pc.positions[:, 1], w, h)
    near = (u > -r - 1) & (u < w + r) & (v > -r - 1) & (v < h + r)
    idx = np.flatnonzero(near)
    order = idx[np.lexsort((idx, z[idx]))]
    u, v = normalized_to_pixels(pc.positions[order, 0], pc.positions[order, 1], w, h)
    bu = np.floor(u).astype(np.int64)
    bv = np.floor(v).astype(np.int64)
    off = np.arange(-R, R + 1)
    dv, du = np.meshgrid(off, off, indexing="ij")
    du = du.ravel()
    dv = dv.ravel()
    ju = bu[:, None] + du[None, :]
    jv = bv[:, None] + dv[None, :]
    d2 = (ju - u[:, None]) ** 2 + (jv - v[:, None]) ** 2
    keep = (d2 < r * r) & (ju >= 0) & (ju < w) & (jv >= 0) & (jv < h)
    pt = np.broadcast_to(order[:, None], keep.shape)[keep]
    pix = (jv * w + ju)[keep]
    ws = (1.0 - d2[keep] / (r * r)) ** cfg.weight_power
    pos = ws > 0
    pt, pix, ws = pt[pos], pix[pos], ws[pos]

    srt = np.argsort(pix, kind="stable")
    pt, pix, ws = pt[srt], pix[srt], ws[srt]
    if len(pix) == 0:
        return pix, pt, ws
    first = np.r_[True, pix[1:] != pix[:-1]]
    group = np.cumsum(first) - 1
    rank = np.arange(len(pix)) - np.flatnonzero(first)[group]
    sel = rank < cfg.k_nearest
    pt, pix, ws = pt[sel], pix[sel], ws[sel]
    zpt = z[pt]
    # the first surviving entry of each pixel is its nearest contribution
    first = np.r_[True, pix[1:] != pix[:-1]]
    zmin = zpt[np.flatnonzero(first)][np.cumsum(first) - 1]
    wd = np.exp(-(zpt - zmin) / (cfg.depth_sigma * zmin))
    return pix, pt, ws * wd


def splat_render(pc: FeaturePointCloud, target: tuple[int, int], cfg: RenderConfig = RenderConfig()):
    """Render ``pc`` onto an ``(h, w)`` grid.

    Returns the rendered :class:`FeatureGrid` and the soft visibility mask,
    an (h, w) array in [0, 1]. Pixels that receive no point hold the zero
    feature vector and mask 0.
    """
    h, w = int(target[0]), int(target[1])
    if h <= 0 or w <= 0:
        raise InputDomainError("target dims must be positive")
    c = pc.channels
    out = np.zeros((c, h * w))
    if len(pc) == 0:
        return FeatureGrid(out.reshape(c, h, w)), np.zeros((h, w))
    pix, pt, wt = _contributions(pc, (h, w), cfg)
    wsum = np.bincount(pix, wt, minlength=h * w)
    hit = wsum > 0
    for ch in range(c):
        acc = np.bincount(pix, wt * pc.features[pt, ch], minlength=h * w)
        out[ch, hit] = acc[hit] / wsum[hit]
    mask = np.clip(wsum, 0.0, 1.0).reshape(h, w)
    return FeatureGrid(out.reshape(c, h, w)), mask


def render_linearity_check(pc_f: FeaturePointCloud, pc_g: FeaturePointCloud, alpha: float, beta: float,
                           target: tuple[int, int], cfg: RenderConfig = RenderConfig()) -> float:
    """Max abs difference between ``render(a*f + b*g)`` and ``a*render(f) + b*render(g)``.

    With fixed point positions the renderer is linear in the features, so
    the result should be at rounding level.
    """
    if pc_f.positions.shape != pc_g.positions.shape or not np.array_equal(pc_f.positions, pc_g.positions):
        raise InputDomainError("linearity check needs identical point positions")
    mixed = pc_f.with_features(alpha * pc_f.features + beta * pc_g.features)
    rm, mm = splat_render(mixed, target, cfg)
    rf, mf = splat_render(pc_f, target, cfg)
    rg, _ = splat_render(pc_g, target, cfg)
    disc = np.max(np.abs(rm.data - (alpha * rf.data + beta * rg.data))) if rm.data.size else 0.0
    return float(max(disc, np.max(np.abs(mm - mf))))


def downsample_depth(depth: DepthMap, factor: int) -> DepthMap:
    """Nearest decimation keeping the top-left sample of each ``factor x factor`` block."""
    if factor < 1 or factor & (factor - 1):
        raise InputDomainError(f"factor must be a power of two, got {factor}")
    h, w = depth.shape
    if h % factor or w % factor:
        raise InputDomainError(f"factor {factor} does not divide {h}x{w}")
    if factor == 1:
        return depth
    return DepthMap(depth.values[::factor, ::factor], depth.valid[::factor, ::factor])


# ---------------------------------------------------------------------------
# On-disk format: u64 LE header length, JSON header, raw f32 LE payload.
# ---------------------------------------------------------------------------


def save_grid(path, grid: FeatureGrid) -> None:
    c, h, w = grid.shape
    header = json.dumps({"c": c, "h": h, "w": w, "dtype": "f32le"}).encode()
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    Path(path).write_bytes(struct.pack("<Q", len(header)) + header + payload)


def load_grid(path) -> FeatureGrid:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise InputDomainError(f"{path}: truncated feature grid")
    (n,) = struct.unpack("<Q", raw[:8])
    try:
        header = json.loads(raw[8:8 + n])
        c, h, w = int(header["c"]), int(header["h"]), int(header["w"])
    except (ValueError, KeyError) as e:
        raise InputDomainError(f"{path}: bad feature grid header ({e})") from None
    if header.get("dtype") != "f32le":
        raise InputDomainError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    body = raw[8 + n:]
    if len(body) != 4 * c * h * w:
        raise InputDomainError(f"{path}: payload size {len(body)} does not match {c}x{h}x{w}")
    return FeatureGrid(np.frombuffer(body, dtype="<f4").reshape(c, h, w).astype(np.float64))

"""Coordinate conventions, back-projection and transform estimation.

Conventions used throughout the package:

* Pixel ``(u, v)`` is a column/row index. Pixel centres sit at integer
  coordinates, so camera intrinsics map a ray through the centre of pixel
  ``(u, v)`` to exactly ``(u, v)``.
* Normalised coordinates map pixel centres of a ``W x H`` grid into
  ``[-1, 1]`` with ``x = (2u + 1 - W) / W`` and ``y = (2v + 1 - H) / H``.
  The outer pixel edges land on -1 and +1, which makes the mapping
  resolution independent: the same normalised point addresses the same
  image location at every pyramid level.
* Matrices are numpy arrays in row-major (C) order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InputDomainError,
    InsufficientDataError,
    InvalidDepthError,
    PointAtInfinityError,
    RegistrationFailure,
)

# Relative singular-value cutoff for pseudoinverses and rank decisions.
SVD_RTOL = 1e-10
# |k| below this marks a point at infinity after a 4x4 transform.
K_EPS = 1e-12
# Relative depth spread that marks a bilinear neighbourhood as a discontinuity.
DEPTH_EDGE_RTOL = 0.10


class NormalizedPoint2D(NamedTuple):
    x: float
    y: float


# ---------------------------------------------------------------------------
# Normalised coordinates
# ---------------------------------------------------------------------------


def normalize_pixel(u: int, v: int, width: int, height: int) -> NormalizedPoint2D:
    if not (0 <= u < width and 0 <= v < height):
        raise InputDomainError(f"pixel ({u}, {v}) outside {width}x{height} image")
    return NormalizedPoint2D((2 * u + 1 - width) / width, (2 * v + 1 - height) / height)


def denormalize_point(x: float, y: float, width: int, height: int) -> tuple[float, float]:
    """Inverse of :func:`normalize_pixel`; returns continuous pixel coordinates."""
    return (x * width + width - 1) / 2, (y * height + height - 1) / 2


def pixels_to_normalized(u, v, width: int, height: int):
    """Vectorised :func:`normalize_pixel` without the range check."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return (2 * u + 1 - width) / width, (2 * v + 1 - height) / height


def normalized_to_pixels(x, y, width: int, height: int):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (x * width + width - 1) / 2, (y * height + height - 1) / 2


def grid_normalized(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalised centres of every cell of an ``height x width`` grid, each (h, w)."""
    x, y = pixels_to_normalized(np.arange(width), np.arange(height), width, height)
    return np.broadcast_to(x[None, :], (height, width)), np.broadcast_to(y[:, None], (height, width))


# ---------------------------------------------------------------------------
# Back-projection
# ---------------------------------------------------------------------------


def back_project(p, d: float) -> np.ndarray:
    """Homogeneous back-projection ``(d*x, d*y, d, 1)`` of a normalised point."""
    if not d > 0:
        raise InvalidDepthError(f"depth must be positive, got {d}")
    x, y = p
    return np.array([d * x, d * y, d, 1.0])


def back_project_points(xy: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Vectorised :func:`back_project`: ``xy`` is (n, 2), ``d`` is (n,)."""
    xy = np.asarray(xy, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(~(d > 0)):
        raise InvalidDepthError("all depths must be positive")
    return np.column_stack([d * xy[:, 0], d * xy[:, 1], d, np.ones_like(d)])


# ---------------------------------------------------------------------------
# Warps. Every warp exposes warp_normalized(x, y, d) -> (x', y', z', valid)
# where (x', y') are normalised target coordinates and z' the target depth.
# ---------------------------------------------------------------------------


class IdentityWarp:
    def warp_normalized(self, x, y, d):
        x = np.asarray(x, dtype=np.float64)
        return x, np.asarray(y, dtype=np.float64), np.asarray(d, dtype=np.float64), np.ones(x.shape, bool)

    def inverse(self) -> "IdentityWarp":
        return self

    def __repr__(self):
        return "IdentityWarp()"


IDENTITY = IdentityWarp()


@dataclass(frozen=True)
class Transform3D:
    """4x4 map acting on homogeneous back-projected points ``(dx, dy, d, 1)``.

    ``condition`` is the condition number of the source point matrix when the
    transform came out of an estimator, ``None`` otherwise.
    """

    m: np.ndarray
    condition: float | None = None

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InputDomainError(f"Transform3D needs a 4x4 matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InputDomainError("Transform3D has non-finite entries")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Transform3D":
        return cls(np.eye(4))

    @property
    def last_row(self) -> np.ndarray:
        return self.m[3].copy()

    def inverse(self) -> "Transform3D":
        return Transform3D(np.linalg.inv(self.m))

    def apply(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Transform (n, 4) homogeneous points; returns dehomogenised (n, 3) and a validity mask."""
        out = np.asarray(points, dtype=np.float64) @ self.m.T
        k = out[:, 3]
        valid = np.abs(k) >= K_EPS
        safe_k = np.where(valid, k, 1.0)
        return out[:, :3] / safe_k[:, None], valid

    def warp_normalized(self, x, y, d):
        x = np.asarray(x, dtype=np.float64)
        shape = x.shape
        y = np.broadcast_to(np.asarray(y, dtype=np.float64), shape).ravel()
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), shape).ravel()
        pts = np.column_stack([d * x.ravel(), d * y, d, np.ones(x.size)])
        xyz, valid = self.apply(pts)
        z = xyz[:, 2]
        valid &= z > 0
        safe_z = np.where(valid, z, 1.0)
        return (
            (xyz[:, 0] / safe_z).reshape(shape),
            (xyz[:, 1] / safe_z).reshape(shape),
            z.reshape(shape),
            valid.reshape(shape),
        )


def apply_transform(T: Transform3D, p) -> np.ndarray:
    """Apply ``T`` to one homogeneous point and dehomogenise.

    The third component of the result is the point's depth in the target view.
    """
    out = T.m @ np.asarray(p, dtype=np.float64)
    k = out[3]
    if abs(k) < K_EPS:
        raise PointAtInfinityError(f"transformed point has k={k!r}")
    return out[:3] / k


@dataclass(frozen=True)
class Homography2D:
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise InputDomainError("Homography2D needs a finite 3x3 matrix")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography2D":
        return cls(np.eye(3))

    def inverse(self) -> "Homography2D":
        return Homography2D(np.linalg.inv(self.m))

    def apply(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=np.float64)
        p = np.column_stack([xy, np.ones(len(xy))]) @ self.m.T
        valid = np.abs(p[:, 2]) >= K_EPS
        w = np.where(valid, p[:, 2], 1.0)
        return p[:, :2] / w[:, None], valid

    def warp_normalized(self, x, y, d):
        x = np.asarray(x, dtype=np.float64)
        shape = x.shape
        xy, valid = self.apply(np.column_stack([x.ravel(), np.asarray(y, dtype=np.float64).ravel()]))
        return (
            xy[:, 0].reshape(shape),
            xy[:, 1].reshape(shape),
            np.broadcast_to(np.asarray(d, dtype=np.float64), shape).copy(),
            valid.reshape(shape),
        )


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched normalised points; ``src`` lives in image r, ``dst`` in image q."""

    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.float64).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=np.float64).reshape(-1, 2)
        if src.shape != dst.shape:
            raise InputDomainError("correspondence sides differ in length")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
            raise InputDomainError("non-finite correspondence coordinates")
        if np.any(np.abs(src) > 1) or np.any(np.abs(dst) > 1):
            raise InputDomainError("correspondence coordinates must lie in [-1, 1]")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    @property
    def n(self) -> int:
        return len(self.src)

    def __len__(self) -> int:
        return len(self.src)

    def swapped(self) -> "CorrespondenceSet":
        return CorrespondenceSet(self.dst, self.src)

    def subset(self, mask) -> "CorrespondenceSet":
        return CorrespondenceSet(self.src[mask], self.dst[mask])

    @classmethod
    def from_pairs(cls, pairs) -> "CorrespondenceSet":
        arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, :2], arr[:, 2:])

    def to_pairs(self) -> list[list[float]]:
        return np.hstack([self.src, self.dst]).tolist()


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth. ``valid`` flags usable samples; invalid ones are ignored."""

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise InputDomainError("depth map must be a non-empty 2D array")
        ok = np.isfinite(values) & (values > 0)
        if self.valid is None:
            if not ok.all():
                raise InvalidDepthError(
                    f"{int((~ok).sum())} non-positive or non-finite depth values; "
                    "pass an explicit validity mask to keep them"
                )
            valid = ok
        else:
            valid = np.asarray(self.valid, dtype=bool) & ok
            if valid.shape != values.shape:
                raise InputDomainError("validity mask shape differs from depth shape")
            values = np.where(valid, values, 0.0)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def with_mask(cls, values) -> "DepthMap":
        """Build a depth map that flags non-positive entries instead of rejecting them."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.isfinite(values) & (values > 0))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def sample(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear depth at normalised locations ``xy`` (n, 2).

        Returns ``(depth, ok)``. A sample is rejected when any neighbour with
        non-zero weight is invalid or when those neighbours spread by more
        than 10 % relative depth (an occlusion edge).
        """
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        h, w = self.shape
        u, v = normalized_to_pixels(xy[:, 0], xy[:, 1], w, h)
        u = np.clip(u, 0, w - 1)
        v = np.clip(v, 0, h - 1)
        u0 = np.minimum(np.floor(u).astype(int), max(w - 2, 0))
        v0 = np.minimum(np.floor(v).astype(int), max(h - 2, 0))
        fu = u - u0
        fv = v - v0
        u1 = np.minimum(u0 + 1, w - 1)
        v1 = np.minimum(v0 + 1, h - 1)
        corners = [(v0, u0, (1 - fu) * (1 - fv)), (v0, u1, fu * (1 - fv)),
                   (v1, u0, (1 - fu) * fv), (v1, u1, fu * fv)]
        depth = np.zeros(len(xy))
        lo = np.full(len(xy), np.inf)
        hi = np.zeros(len(xy))
        ok = np.ones(len(xy), dtype=bool)
        for vv, uu, wt in corners:
            used = wt > 0
            val = self.values[vv, uu]
            ok &= ~used | self.valid[vv, uu]
            depth += wt * val
            lo = np.where(used, np.minimum(lo, val), lo)
            hi = np.where(used, np.maximum(hi, val), hi)
        ok &= hi <= lo * (1 + DEPTH_EDGE_RTOL)
        return np.where(ok, depth, 0.0), ok


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera; ``R``, ``t`` map world points into the camera frame."""

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise InputDomainError("focal lengths must be positive")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6, rtol=0):
            raise InputDomainError("rotation is not orthonormal within 1e-6")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.R.T @ self.t

    def world_to_camera(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.R.T + self.t

    def camera_to_world(self, P: np.ndarray) -> np.ndarray:
        return (np.asarray(P, dtype=np.float64) - self.t) @ self.R

    def project(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points (n, 3) to pixel ``u``, ``v`` and camera depth ``z``."""
        P = self.world_to_camera(X)
        z = P[:, 2]
        safe = np.where(np.abs(z) > 0, z, 1.0)
        return self.fx * P[:, 0] / safe + self.cx, self.fy * P[:, 1] / safe + self.cy, z

    def unproject(self, u, v, d) -> np.ndarray:
        """Pixels with camera depth to world points, (n, 3)."""
        u = np.asarray(u, dtype=np.float64).ravel()
        v = np.asarray(v, dtype=np.float64).ravel()
        d = np.broadcast_to(np.asarray(d, dtype=np.float64).ravel() if np.ndim(d) else d, u.shape).astype(np.float64)
        P = np.column_stack([(u - self.cx) / self.fx * d, (v - self.cy) / self.fy * d, d])
        return self.camera_to_world(P)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "R": self.R.ravel().tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
                       np.asarray(d["t"], dtype=np.float64))
        except KeyError as e:
            raise InputDomainError(f"camera JSON misses key {e}") from None


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera ``(R, t)`` for a camera at ``eye`` looking at ``target``.

    Camera axes: x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        raise InputDomainError("view direction parallel to up vector")
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.vstack([right, down, fwd])
    return R, -R @ eye


class PoseWarp:
    """Exact warp between two calibrated views of size ``(height, width)``."""

    def __init__(self, cam_r: CameraModel, cam_q: CameraModel, size: tuple[int, int]):
        self.cam_r = cam_r
        self.cam_q = cam_q
        self.size = (int(size[0]), int(size[1]))

    def inverse(self) -> "PoseWarp":
        return PoseWarp(self.cam_q, self.cam_r, self.size)

    def warp_pixels(self, u, v, d):
        """Pixel + depth in view r to pixel + depth in view q, with validity flags."""
        u = np.asarray(u, dtype=np.float64)
        shape = u.shape
        X = self.cam_r.unproject(u, v, d)
        uq, vq, zq = self.cam_q.project(X)
        valid = zq > 0
        return uq.reshape(shape), vq.reshape(shape), zq.reshape(shape), valid.reshape(shape)

    def warp_normalized(self, x, y, d):
        h, w = self.size
        u, v = normalized_to_pixels(x, y, w, h)
        uq, vq, zq, valid = self.warp_pixels(u, v, d)
        xq, yq = pixels_to_normalized(uq, vq, w, h)
        return xq, yq, zq, valid


def relative_pose_transform(cam_r: CameraModel, cam_q: CameraModel, size: tuple[int, int]) -> PoseWarp:
    """Warp for the known-pose path; points landing behind camera q are flagged invalid."""
    return PoseWarp(cam_r, cam_q, size)


def normalization_matrix(width: int, height: int) -> np.ndarray:
    """Pixel (centre convention) to normalised coordinates as a 3x3 matrix."""
    return np.array([[2 / width, 0, (1 - width) / width],
                     [0, 2 / height, (1 - height) / height],
                     [0, 0, 1.0]])


def plane_homography(cam_r: CameraModel, cam_q: CameraModel, size: tuple[int, int]) -> Homography2D:
    """Normalised-coordinate homography induced by the world plane z = 0."""
    h, w = size

    def plane_to_pixels(cam):
        return cam.K @ np.column_stack([cam.R[:, 0], cam.R[:, 1], cam.t])

    N = normalization_matrix(w, h)
    H_pix = plane_to_pixels(cam_q) @ np.linalg.inv(plane_to_pixels(cam_r))
    return Homography2D(N @ H_pix @ np.linalg.inv(N))


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def _pinv_svd(A: np.ndarray, rtol: float = SVD_RTOL) -> tuple[np.ndarray, np.ndarray]:
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rtol * s[0] if s.size and s[0] > 0 else np.zeros_like(s, bool)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T, s


def estimate_transform_lsq(src: np.ndarray, dst: np.ndarray, rank_rtol: float = SVD_RTOL) -> Transform3D:
    """Least-squares 4x4 map with ``T @ src_j ~ dst_j``.

    Solves ``T = (pinv(src) @ dst).T`` with an SVD pseudoinverse. ``src`` must
    have numerical rank 4: its smallest singular value has to exceed
    ``rank_rtol`` times the largest, otherwise the configuration is rejected.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 4 or src.shape != dst.shape:
        raise InputDomainError(f"expected matching (n, 4) arrays, got {src.shape} and {dst.shape}")
    if len(src) < 4:
        raise InsufficientDataError(f"need at least 4 points, got {len(src)}")
    pinv, s = _pinv_svd(src)
    if not (s[0] > 0 and s[-1] > rank_rtol * s[0]):
        raise DegenerateConfigurationError("source points do not span 4 dimensions", singular_values=s)
    return Transform3D((pinv @ dst).T, condition=float(s[0] / s[-1]))


def reprojection_errors(T: Transform3D, src_h: np.ndarray, dst_xy: np.ndarray) -> np.ndarray:
    """Image-space distance between warped ``src_h`` and ``dst_xy``; inf where undefined."""
    xyz, valid = T.apply(src_h)
    z = xyz[:, 2]
    valid &= z > 0
    safe = np.where(valid, z, 1.0)
    proj = xyz[:, :2] / safe[:, None]
    err = np.linalg.norm(proj - dst_xy, axis=1)
    return np.where(valid, err, np.inf)


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 1000
    inlier_threshold: float = 0.01
    min_sample: int = 5
    seed: int = 0
    confidence: float = 0.999
    refine_passes: int = 5

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise InputDomainError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise InputDomainError("max_iterations must be >= 1")
        if self.min_sample < 4:
            raise InputDomainError("min_sample must be >= 4")
        if not 0 < self.confidence < 1:
            raise InputDomainError("confidence must lie in (0, 1)")


@dataclass
class RansacResult:
    transform: Transform3D
    inliers: np.ndarray
    iterations: int
    median_error: float


def estimate_transform_ransac(corr: CorrespondenceSet, d_r: DepthMap, d_q: DepthMap,
                              cfg: RansacConfig = RansacConfig()) -> tuple[Transform3D, np.ndarray]:
    """Robust 3D transform from image r to image q.

    Returns the transform and a boolean inlier mask over ``corr``.
    Correspondences whose depth lookup fails are never inliers.
    """
    res = ransac_transform(corr, d_r, d_q, cfg)
    return res.transform, res.inliers


def ransac_transform(corr: CorrespondenceSet, d_r: DepthMap, d_q: DepthMap,
                     cfg: RansacConfig = RansacConfig()) -> RansacResult:
    n = len(corr)
    s = cfg.min_sample
    if n < s:
        raise InsufficientDataError(f"RANSAC needs at least {s} correspondences, got {n}")
    zr, ok_r = d_r.sample(corr.src)
    zq, ok_q = d_q.sample(corr.dst)
    usable = np.flatnonzero(ok_r & ok_q)
    m = len(usable)
    if m < s:
        raise RegistrationFailure(f"only {m} correspondences have usable depth",
                                  {"usable": m, "total": n})
    src = back_project_points(corr.src[usable], zr[usable])
    dst = back_project_points(corr.dst[usable], zq[usable])
    dst_xy = corr.dst[usable]

    rng = np.random.default_rng(cfg.seed)
    best = None
    best_count = 0
    limit = cfg.max_iterations
    it = 0
    while it < limit:
        it += 1
        pick = rng.choice(m, size=s, replace=False)
        try:
            T = estimate_transform_lsq(src[pick], dst[pick])
        except DegenerateConfigurationError:
            continue
        inl = reprojection_errors(T, src, dst_xy) < cfg.inlier_threshold
        count = int(inl.sum())
        if count > best_count:
            best, best_count = inl, count
            frac = count / m
            if frac >= 1.0:
                limit = it
            else:
                need = math.log(1 - cfg.confidence) / math.log(1 - frac**s)
                limit = min(limit, max(it, math.ceil(need)))
    if best is None or best_count < s:
        raise RegistrationFailure(f"no model reached {s} inliers",
                                  {"usable": m, "best_inliers": best_count, "iterations": it})

    # Local refinement: refit on the consensus set until it stops changing.
    def refit(inl):
        try:
            return estimate_transform_lsq(src[inl], dst[inl])
        except DegenerateConfigurationError as e:
            raise RegistrationFailure("inlier set is degenerate",
                                      {"singular_values": np.asarray(e.singular_values).tolist()}) from e

    for _ in range(cfg.refine_passes):
        T = refit(best)
        new = reprojection_errors(T, src, dst_xy) < cfg.inlier_threshold
        if new.sum() <= best.sum():
            break
        best = new
    else:
        T = refit(best)
    err = reprojection_errors(T, src, dst_xy)
    mask = np.zeros(n, dtype=bool)
    mask[usable[best]] = True
    return RansacResult(T, mask, it, float(np.median(err[best])))


def _hartley(xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = xy.mean(axis=0)
    dist = np.mean(np.linalg.norm(xy - c, axis=1))
    if dist < 1e-12:
        raise DegenerateConfigurationError("points are coincident")
    s = math.sqrt(2) / dist
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    return (xy - c) * s, T


def estimate_homography_dlt(corr: CorrespondenceSet) -> Homography2D:
    """Normalised DLT homography mapping ``corr.src`` onto ``corr.dst``."""
    n = len(corr)
    if n < 4:
        raise InsufficientDataError(f"homography needs 4 correspondences, got {n}")
    a, Ta = _hartley(corr.src)
    b, Tb = _hartley(corr.dst)
    for pts in (a, b):
        s = np.linalg.svd(np.column_stack([pts, np.ones(n)]), compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise DegenerateConfigurationError("points are collinear", singular_values=s)
    A = np.zeros((2 * n, 9))
    x, y = a[:, 0], a[:, 1]
    xp, yp = b[:, 0], b[:, 1]
    A[0::2, 0:3] = np.column_stack([-x, -y, -np.ones(n)])
    A[0::2, 6:9] = np.column_stack([xp * x, xp * y, xp])
    A[1::2, 3:6] = np.column_stack([-x, -y, -np.ones(n)])
    A[1::2, 6:9] = np.column_stack([yp * x, yp * y, yp])
    _, s, Vt = np.linalg.svd(A)
    if s[7] <= 1e-10 * s[0]:
        raise DegenerateConfigurationError("homography is not determined by these points", singular_values=s)
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(Tb, Hn @ Ta)
    if abs(H[2, 2]) <= 1e-12:
        H = H / np.linalg.norm(H)
    return Homography2D(H)

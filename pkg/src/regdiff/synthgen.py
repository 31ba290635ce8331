"""Synthetic before/after scene pairs with exact geometry.

Scenes are a textured ground plane (world ``z = 0``) carrying boxes and
spheres. Two cameras sit on a cylinder around the scene; view 1 sees the
scene before the removals, view 2 after. Everything is ray cast, so depth,
correspondences, co-visibility and change boxes are exact.

Boxes are ``[x0, y0, x1, y1]`` in pixel-edge coordinates: pixel ``(u, v)``
covers ``[u, u+1] x [v, v+1]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GenerationFailure, InputDomainError
from .geometry import CameraModel, CorrespondenceSet, DepthMap, look_at, pixels_to_normalized

SKY = -2
PLANE = -1
FAR_DEPTH = 100.0
SKY_COLOR = np.array([0.62, 0.72, 0.88])
AMBIENT = 0.2
SURFACE_SAMPLES = 400
PLANE_TEXTURE_SCALE = 0.2  # metres per noise cell
OBJECT_TEXTURE_SCALE = 0.12
SUPERSAMPLE = 2  # colour rays per pixel along each axis; depth uses the pixel centre


@dataclass(frozen=True)
class SceneObject:
    shape: str  # "box" or "sphere"
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # full extents for boxes, (r, r, r) for spheres
    yaw: float
    albedo: tuple[float, float, float]
    texture_seed: int

    @property
    def footprint_radius(self) -> float:
        if self.shape == "sphere":
            return self.size[0]
        return 0.5 * math.hypot(self.size[0], self.size[1])


@dataclass(frozen=True)
class SceneSpec:
    plane_seed: int
    plane_colors: tuple[tuple[float, float, float], tuple[float, float, float]]
    objects: tuple[SceneObject, ...]
    light_dir: tuple[float, float, float]


@dataclass(frozen=True)
class GeneratorConfig:
    image_size: tuple[int, int] = (224, 224)
    object_count_range: tuple[int, int] = (3, 6)
    removal_count_range: tuple[int, int] = (1, 1)
    object_size_range: tuple[float, float] = (0.25, 0.5)
    shapes: tuple[str, ...] = ("box", "sphere")
    scene_radius: float = 1.0
    camera_radius_range: tuple[float, float] = (2.0, 4.0)
    camera_height_range: tuple[float, float] = (0.5, 2.5)
    azimuth_delta_range_deg: tuple[float, float] = (10.0, 60.0)
    look_at_jitter: float = 0.2
    fov_deg: float = 55.0
    texture_contrast: float = 0.3
    min_visibility: float = 0.25
    min_box_px: float = 0.0
    min_contrast: float = 0.0
    min_separation: float = 0.05
    n_correspondences: int = 128
    min_off_plane_correspondences: int = 8
    change_mode: str = "covisible"  # or "hidden_in_view2"
    planar: bool = False
    flat_height: float = 0.002

    def __post_init__(self):
        for name in ("object_count_range", "removal_count_range", "object_size_range",
                     "camera_radius_range", "camera_height_range", "azimuth_delta_range_deg"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InputDomainError(f"{name} is empty: {lo} > {hi}")
            object.__setattr__(self, name, (lo, hi))
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if self.removal_count_range[0] < 1:
            raise InputDomainError("at least one object must be removed")
        if self.removal_count_range[1] > self.object_count_range[0]:
            raise InputDomainError("removal count may not exceed the smallest object count")
        if self.change_mode not in ("covisible", "hidden_in_view2"):
            raise InputDomainError(f"unknown change_mode {self.change_mode!r}")
        if not 0.0 <= self.min_visibility < 1.0:
            raise InputDomainError("min_visibility must lie in [0, 1)")
        if self.min_contrast < 0 or self.min_box_px < 0:
            raise InputDomainError("min_contrast and min_box_px must be non-negative")
        if self.n_correspondences < 64:
            raise InputDomainError("n_correspondences must be >= 64")
        if not set(self.shapes) <= {"box", "sphere"} or not self.shapes:
            raise InputDomainError(f"unknown shapes {self.shapes}")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InputDomainError(f"unknown generator options: {sorted(extra)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class GTBox:
    bbox: tuple[float, float, float, float]
    visibility: float
    object_index: int


@dataclass
class ChangePairSample:
    rgb1: np.ndarray
    rgb2: np.ndarray
    depth1: DepthMap
    depth2: DepthMap
    cam1: CameraModel
    cam2: CameraModel
    removed: list[int]
    gt_boxes_1: list[GTBox]
    gt_boxes_2: list[GTBox]
    gt_correspondences: CorrespondenceSet
    seed: int
    scene: SceneSpec
    config: GeneratorConfig
    covis1: np.ndarray = field(repr=False, default=None)  # view-1 pixels also seen by view 2
    covis2: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> tuple[int, int]:
        return self.rgb1.shape[:2]


# ---------------------------------------------------------------------------
# Procedural texture
# ---------------------------------------------------------------------------


class ValueNoise:
    """Smooth lattice value noise on a periodic table, in 2 or 3 dimensions."""

    def __init__(self, seed: int, dims: int, period: int = 64):
        self.table = np.random.default_rng(seed).random((period,) * dims)
        self.dims = dims
        self.period = period

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        base = np.floor(coords)
        f = coords - base
        s = f * f * (3 - 2 * f)
        base = base.astype(np.int64)
        out = np.zeros(len(coords))
        for corner in range(2 ** self.dims):
            offs = [(corner >> k) & 1 for k in range(self.dims)]
            idx = tuple((base[:, k] + offs[k]) % self.period for k in range(self.dims))
            wt = np.ones(len(coords))
            for k in range(self.dims):
                wt *= s[:, k] if offs[k] else 1 - s[:, k]
            out += wt * self.table[idx]
        return out

    def fractal(self, coords: np.ndarray, octaves: int = 2) -> np.ndarray:
        total = np.zeros(len(coords))
        amp, norm = 1.0, 0.0
        for o in range(octaves):
            total += amp * self(coords * 2**o + 17.0 * o)
            norm += amp
            amp *= 0.5
        return total / norm


# ---------------------------------------------------------------------------
# Scene sampling
# ---------------------------------------------------------------------------


def _separation_ok(objs, candidate, min_sep) -> bool:
    for o in objs:
        d = math.hypot(o.center[0] - candidate.center[0], o.center[1] - candidate.center[1])
        if d - o.footprint_radius - candidate.footprint_radius < min_sep:
            return False
    return True


def random_color(rng) -> tuple[float, float, float]:
    # saturated hue with moderate value, far from the greyish ground
    h = rng.uniform(0, 1)
    i = int(h * 6)
    f = h * 6 - i
    v, s = rng.uniform(0.75, 1.0), rng.uniform(0.7, 1.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i % 6]


def generate_scene(cfg: GeneratorConfig, seed: int) -> SceneSpec:
    """Sample object placements until they are pairwise separated."""
    rng = np.random.default_rng([seed, 1])
    n = int(rng.integers(cfg.object_count_range[0], cfg.object_count_range[1] + 1))
    objs: list[SceneObject] = []
    attempts = 0
    while len(objs) < n:
        attempts += 1
        if attempts > 10_000:
            raise GenerationFailure(f"could not place {n} separated objects")
        shape = "box" if cfg.planar else str(rng.choice(cfg.shapes))
        lo, hi = cfg.object_size_range
        ang = rng.uniform(0, 2 * math.pi)
        rad = cfg.scene_radius * math.sqrt(rng.uniform(0, 1))
        cx, cy = rad * math.cos(ang), rad * math.sin(ang)
        if shape == "sphere":
            r = rng.uniform(lo, hi) / 2
            size, center, yaw = (r, r, r), (cx, cy, r), 0.0
        else:
            sx, sy = rng.uniform(lo, hi, size=2)
            sz = cfg.flat_height if cfg.planar else rng.uniform(lo, hi)
            size, center, yaw = (sx, sy, sz), (cx, cy, sz / 2), rng.uniform(0, math.pi / 2)
        cand = SceneObject(shape, tuple(float(c) for c in center), tuple(float(s) for s in size), float(yaw),
                           tuple(float(c) for c in random_color(rng)), int(rng.integers(2**31)))
        if _separation_ok(objs, cand, cfg.min_separation):
            objs.append(cand)
    base = rng.uniform(0.35, 0.55)
    tint = rng.uniform(-0.05, 0.05, size=3)
    c = cfg.texture_contrast / 2
    dark = np.clip(base + tint - c, 0, 1)
    light = np.clip(base + tint + c, 0, 1)
    light_dir = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0])
    light_dir /= np.linalg.norm(light_dir)
    return SceneSpec(int(rng.integers(2**31)), (tuple(map(float, dark)), tuple(map(float, light))),
                     tuple(objs), tuple(map(float, light_dir)))


def _rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def sample_camera(cfg: GeneratorConfig, rng, azimuth: float | None = None, target=None) -> CameraModel:
    h, w = cfg.image_size
    if azimuth is None:
        azimuth = rng.uniform(0, 2 * math.pi)
    r = rng.uniform(*cfg.camera_radius_range)
    z = rng.uniform(*cfg.camera_height_range)
    eye = np.array([r * math.cos(azimuth), r * math.sin(azimuth), z])
    if target is None:
        target = np.zeros(3)
    target = np.asarray(target, dtype=np.float64) + np.r_[rng.uniform(-1, 1, 2) * cfg.look_at_jitter, 0.0]
    R, t = look_at(eye, target)
    f = 0.5 * w / math.tan(math.radians(cfg.fov_deg) / 2)
    return CameraModel(f, f, (w - 1) / 2, (h - 1) / 2, R, t)


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------


@dataclass
class Hits:
    depth: np.ndarray  # camera z of the hit (ray parameter, rays have unit camera z)
    obj: np.ndarray  # object index, PLANE or SKY
    normal: np.ndarray
    point: np.ndarray


def _intersect_sphere(o, d, obj):
    c = np.asarray(obj.center)
    r = obj.size[0]
    oc = o - c
    a = np.einsum("ij,ij->i", d, d)
    b = 2 * d @ oc
    cc = oc @ oc - r * r
    disc = b * b - 4 * a * cc
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    t = np.where(t0 > 1e-9, t0, t1)
    hit &= t > 1e-9
    p = o + t[:, None] * d
    n = (p - c) / r
    return np.where(hit, t, np.inf), n


def _intersect_box(o, d, obj):
    Rz = _rot_z(obj.yaw)
    c = np.asarray(obj.center)
    half = np.asarray(obj.size) / 2
    lo_ = (o - c) @ Rz  # local = Rz^T (o - c)
    ld = d @ Rz
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / ld
        t1 = (-half - lo_) * inv
        t2 = (half - lo_) * inv
    # rays parallel to a slab: inside the slab -> unbounded, outside -> miss
    par = ld == 0
    inside = np.abs(lo_) <= half
    t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    t_near = tmin.max(axis=1)
    t_far = tmax.min(axis=1)
    axis = tmin.argmax(axis=1)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    n_local = np.zeros_like(ld)
    rows = np.arange(len(ld))
    n_local[rows, axis] = -np.sign(ld[rows, axis])
    return np.where(hit, t_near, np.inf), n_local @ Rz.T


def cast_rays(scene: SceneSpec, cam: CameraModel, u, v, active=None) -> Hits:
    """Cast rays through continuous pixel locations ``(u, v)``.

    ``active`` restricts the objects present (indices into ``scene.objects``).
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    n = len(u)
    dcam = np.column_stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones(n)])
    d = dcam @ cam.R  # R^T applied to each row
    o = cam.center
    best = np.full(n, np.inf)
    obj = np.full(n, SKY, dtype=np.int64)
    normal = np.zeros((n, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = -o[2] / d[:, 2]
    plane_hit = (d[:, 2] < 0) & (tp > 0)
    best = np.where(plane_hit, tp, best)
    obj[plane_hit] = PLANE
    normal[plane_hit] = (0, 0, 1.0)
    indices = range(len(scene.objects)) if active is None else active
    for k in indices:
        ob = scene.objects[k]
        t, nrm = (_intersect_sphere if ob.shape == "sphere" else _intersect_box)(o, d, ob)
        closer = t < best
        best = np.where(closer, t, best)
        obj[closer] = k
        normal[closer] = nrm[closer]
    miss = ~np.isfinite(best)
    depth = np.where(miss, FAR_DEPTH, best)
    point = o + depth[:, None] * d
    return Hits(depth, obj, normal, point)


def shade(scene: SceneSpec, hits: Hits, texture_contrast: float = 0.3) -> np.ndarray:
    n = len(hits.depth)
    color = np.tile(SKY_COLOR, (n, 1))
    light = np.asarray(scene.light_dir)
    lam = AMBIENT + (1 - AMBIENT) * np.clip(hits.normal @ light, 0, 1)
    plane = hits.obj == PLANE
    if plane.any():
        noise = ValueNoise(scene.plane_seed, 2).fractal(hits.point[plane, :2] / PLANE_TEXTURE_SCALE)
        dark, lightc = (np.asarray(c) for c in scene.plane_colors)
        color[plane] = (dark + noise[:, None] * (lightc - dark)) * lam[plane, None]
    for k, ob in enumerate(scene.objects):
        sel = hits.obj == k
        if not sel.any():
            continue
        local = (hits.point[sel] - np.asarray(ob.center)) @ _rot_z(ob.yaw)
        noise = ValueNoise(ob.texture_seed, 3).fractal(local / OBJECT_TEXTURE_SCALE + 8.0)
        tex = 1 - 0.5 * texture_contrast + texture_contrast * noise
        color[sel] = np.clip(np.asarray(ob.albedo) * tex[:, None], 0, 1) * lam[sel, None]
    return color


def render_color(scene: SceneSpec, cam: CameraModel, size: tuple[int, int], active=None,
                 texture_contrast: float = 0.3) -> np.ndarray:
    """Supersampled uint8 RGB image, H x W x 3."""
    h, w = size
    vv, uu = np.mgrid[0:h, 0:w]
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    acc = np.zeros((h * w, 3))
    for dv in offs:
        for du in offs:
            hits = cast_rays(scene, cam, uu.ravel() + du, vv.ravel() + dv, active)
            acc += shade(scene, hits, texture_contrast)
    rgb = acc.reshape(h, w, 3) / SUPERSAMPLE**2
    return np.clip(np.round(rgb * 255), 0, 255).astype(np.uint8)


def render_view(scene: SceneSpec, cam: CameraModel, size: tuple[int, int], active=None,
                texture_contrast: float = 0.3) -> tuple[np.ndarray, DepthMap]:
    """Ray-cast an RGB image (uint8, H x W x 3) and its z-depth map."""
    hits = _render_hits(scene, cam, size, active)
    return render_color(scene, cam, size, active, texture_contrast), DepthMap(hits.depth.reshape(size))


def _render_hits(scene, cam, size, active):
    h, w = size
    vv, uu = np.mgrid[0:h, 0:w]
    return cast_rays(scene, cam, uu.ravel(), vv.ravel(), active)


# ---------------------------------------------------------------------------
# Object geometry helpers
# ---------------------------------------------------------------------------


def surface_samples(ob: SceneObject, n: int = SURFACE_SAMPLES) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic surface points and outward normals (bottom faces excluded)."""
    rng = np.random.default_rng([ob.texture_seed, 7])
    c = np.asarray(ob.center)
    if ob.shape == "sphere":
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return c + ob.size[0] * v, v
    sx, sy, sz = ob.size
    faces = [  # (axis, sign, area)
        (0, 1, sy * sz), (0, -1, sy * sz), (1, 1, sx * sz), (1, -1, sx * sz), (2, 1, sx * sy)]
    areas = np.array([f[2] for f in faces])
    which = rng.choice(len(faces), size=n, p=areas / areas.sum())
    local = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.asarray(ob.size)
    normals = np.zeros((n, 3))
    half = np.asarray(ob.size) / 2
    for i, (ax, sg, _) in enumerate(faces):
        sel = which == i
        local[sel, ax] = sg * half[ax]
        normals[sel, ax] = sg
    Rz = _rot_z(ob.yaw)
    return c + local @ Rz.T, normals @ Rz.T


def visibility_fraction(scene: SceneSpec, k: int, cam: CameraModel, size, active=None) -> float:
    """Share of the object's camera-facing surface that is in frame and unoccluded."""
    h, w = size
    pts, nrm = surface_samples(scene.objects[k])
    facing = np.einsum("ij,ij->i", nrm, cam.center - pts) > 0
    u, v, z = cam.project(pts)
    facing &= z > 0
    if not facing.any():
        return 0.0
    inframe = facing & (u >= -0.5) & (u < w - 0.5) & (v >= -0.5) & (v < h - 0.5)
    if not inframe.any():
        return 0.0
    hits = cast_rays(scene, cam, u[inframe], v[inframe], active)
    seen = (hits.obj == k) & (np.abs(hits.depth - z[inframe]) <= 1e-6 * z[inframe] + 1e-9)
    return float(seen.sum() / facing.sum())


def project_extent(ob: SceneObject, cam: CameraModel, size) -> tuple[float, float, float, float] | None:
    """Axis-aligned image hull of the object, clipped, in pixel-edge coordinates."""
    h, w = size
    if ob.shape == "sphere":
        c = cam.world_to_camera(np.asarray(ob.center)[None])[0]
        r = ob.size[0]
        if c[2] <= r:
            return None
        ext = []
        for comp, f, cc in ((c[0], cam.fx, cam.cx), (c[1], cam.fy, cam.cy)):
            den = c[2] ** 2 - r * r
            root = r * math.sqrt(comp**2 + c[2] ** 2 - r * r)
            a = np.array([comp * c[2] - root, comp * c[2] + root]) / den
            ext.append(f * a + cc)
        (u0, u1), (v0, v1) = ext
    else:
        half = np.asarray(ob.size) / 2
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        corners = np.asarray(ob.center) + (signs * half) @ _rot_z(ob.yaw).T
        u, v, z = cam.project(corners)
        if np.any(z <= 1e-6):
            return None
        u0, u1, v0, v1 = u.min(), u.max(), v.min(), v.max()
    box = (max(u0 + 0.5, 0.0), max(v0 + 0.5, 0.0), min(u1 + 0.5, float(w)), min(v1 + 0.5, float(h)))
    if box[0] >= box[2] or box[1] >= box[3]:
        return None
    return tuple(float(b) for b in box)


# ---------------------------------------------------------------------------
# Pair assembly
# ---------------------------------------------------------------------------


def covisibility(hits_q: Hits, cam_q: CameraModel, cam_r: CameraModel, scene_r_active, scene, size) -> np.ndarray:
    """Pixels of view q whose surface point is also visible from camera r."""
    h, w = size
    ok = hits_q.obj != SKY
    u, v, z = cam_r.project(hits_q.point)
    ok &= (z > 0) & (u >= -0.5) & (u < w - 0.5) & (v >= -0.5) & (v < h - 0.5)
    out = np.zeros(len(ok), dtype=bool)
    idx = np.flatnonzero(ok)
    if len(idx):
        hr = cast_rays(scene, cam_r, u[idx], v[idx], scene_r_active)
        out[idx] = np.abs(hr.depth - z[idx]) <= 1e-6 * z[idx] + 1e-9
    return out.reshape(h, w)


def _correspondences(rng, cfg, scene, cam1, cam2, hits1, depth2: DepthMap, static, after):
    h, w = cfg.image_size
    if cfg.planar:
        cand = np.flatnonzero(hits1.obj == PLANE)
    else:
        cand = np.flatnonzero(np.isin(hits1.obj, [PLANE, *static]))
    if len(cand) == 0:
        return None
    pts = hits1.point[cand]
    u2, v2, z2 = cam2.project(pts)
    ok = (z2 > 0) & (u2 >= -0.5) & (u2 <= w - 0.5) & (v2 >= -0.5) & (v2 <= h - 0.5)
    cand, u2, v2, z2 = cand[ok], u2[ok], v2[ok], z2[ok]
    if len(cand) == 0:
        return None
    hv = cast_rays(scene, cam2, u2, v2, after)
    ok = np.abs(hv.depth - z2) <= 1e-6 * z2 + 1e-9
    x2, y2 = pixels_to_normalized(u2, v2, w, h)
    xy2 = np.clip(np.column_stack([x2, y2]), -1, 1)
    _, smooth = depth2.sample(xy2)
    ok &= smooth
    cand, xy2 = cand[ok], xy2[ok]
    on_obj = hits1.obj[cand] != PLANE
    n_total = cfg.n_correspondences
    obj_idx = np.flatnonzero(on_obj)
    plane_idx = np.flatnonzero(~on_obj)
    if not cfg.planar and len(obj_idx) < cfg.min_off_plane_correspondences:
        return None
    if len(cand) < 64:
        return None
    take_obj = min(len(obj_idx), n_total // 2)
    take_plane = min(len(plane_idx), n_total - take_obj)
    take_obj = min(len(obj_idx), n_total - take_plane)
    pick = np.concatenate([rng.choice(obj_idx, take_obj, replace=False),
                           rng.choice(plane_idx, take_plane, replace=False)])
    pick = pick[rng.permutation(len(pick))]
    v1, u1 = np.divmod(cand[pick], w)
    x1, y1 = pixels_to_normalized(u1, v1, w, h)
    return CorrespondenceSet(np.column_stack([x1, y1]), xy2[pick])


def make_change_pair(cfg: GeneratorConfig = GeneratorConfig(), seed: int = 0) -> ChangePairSample:
    """Build one before/after pair with exact annotations."""
    size = cfg.image_size
    scene = generate_scene(cfg, seed)
    n_obj = len(scene.objects)
    rng = np.random.default_rng([seed, 2])
    n_remove = int(rng.integers(cfg.removal_count_range[0], cfg.removal_count_range[1] + 1))
    everything = list(range(n_obj))

    for _attempt in range(50):
        az1 = rng.uniform(0, 2 * math.pi)
        cam1 = sample_camera(cfg, rng, az1)
        vis1 = np.array([visibility_fraction(scene, k, cam1, size) for k in everything])
        ext1 = [project_extent(o, cam1, size) for o in scene.objects]
        if cfg.change_mode == "hidden_in_view2":
            seen1 = [k for k in everything if vis1[k] > cfg.min_visibility and _big_enough(ext1[k], cfg)
                     and _contrast(scene, k) >= cfg.min_contrast]
            if not seen1:
                continue
            k0 = int(rng.choice(seen1))
            c0 = np.asarray(scene.objects[k0].center[:2])
            away = -c0 / (np.linalg.norm(c0) + 1e-9)
            az2 = math.atan2(away[1], away[0]) + rng.uniform(-0.3, 0.3)
            cam2 = sample_camera(cfg, rng, az2, target=np.r_[away * 1.2, 0.0])
            vis2 = np.array([visibility_fraction(scene, k, cam2, size) for k in everything])
            if vis2[k0] > 0:
                continue
            removed = [k0]
            gt_objects: list[int] = []
        else:
            delta = math.radians(rng.uniform(*cfg.azimuth_delta_range_deg)) * rng.choice([-1, 1])
            cam2 = sample_camera(cfg, rng, az1 + delta)
            vis2 = np.array([visibility_fraction(scene, k, cam2, size) for k in everything])
            ext2 = [project_extent(o, cam2, size) for o in scene.objects]
            covis = [k for k in everything
                     if vis1[k] > cfg.min_visibility and vis2[k] > cfg.min_visibility
                     and _big_enough(ext1[k], cfg) and _big_enough(ext2[k], cfg)
                     and _contrast(scene, k) >= cfg.min_contrast]
            if len(covis) < n_remove:
                continue
            removed = sorted(int(k) for k in rng.choice(covis, n_remove, replace=False))
            gt_objects = removed
        after = [k for k in everything if k not in removed]
        hits1 = _render_hits(scene, cam1, size, everything)
        hits2 = _render_hits(scene, cam2, size, after)
        depth1 = DepthMap(hits1.depth.reshape(size))
        depth2 = DepthMap(hits2.depth.reshape(size))
        corr = _correspondences(rng, cfg, scene, cam1, cam2, hits1, depth2, after, after)
        if corr is None:
            continue
        break
    else:
        raise GenerationFailure(f"seed {seed}: no usable camera pair after 50 attempts")

    gt1 = [GTBox(project_extent(scene.objects[k], cam1, size), float(vis1[k]), k) for k in gt_objects]
    gt2 = [GTBox(project_extent(scene.objects[k], cam2, size), float(vis2[k]), k) for k in gt_objects]
    return ChangePairSample(
        rgb1=render_color(scene, cam1, size, everything, cfg.texture_contrast),
        rgb2=render_color(scene, cam2, size, after, cfg.texture_contrast), depth1=depth1, depth2=depth2, cam1=cam1, cam2=cam2,
        removed=removed, gt_boxes_1=gt1, gt_boxes_2=gt2, gt_correspondences=corr, seed=seed,
        scene=scene, config=cfg,
        covis1=covisibility(hits1, cam1, cam2, after, scene, size),
        covis2=covisibility(hits2, cam2, cam1, everything, scene, size),
    )


def _contrast(scene: SceneSpec, k: int) -> float:
    """RGB distance between an object's albedo and the mean plane colour."""
    plane = np.mean(np.asarray(scene.plane_colors), axis=0)
    return float(np.linalg.norm(np.asarray(scene.objects[k].albedo) - plane))


def easy_suite_config(**overrides) -> GeneratorConfig:
    """Benchmark suite: one unoccluded, high-contrast removal of at least 24x24 px."""
    base = dict(min_box_px=24.0, min_visibility=0.9, min_contrast=0.3)
    return GeneratorConfig(**{**base, **overrides})


def planar_suite_config(**overrides) -> GeneratorConfig:
    """Easy suite with flat objects, seen from higher up so that footprints stay large."""
    return easy_suite_config(**{"planar": True, "camera_height_range": (1.5, 3.0), **overrides})


def _big_enough(ext, cfg: GeneratorConfig) -> bool:
    if ext is None:
        return False
    return ext[2] - ext[0] >= cfg.min_box_px and ext[3] - ext[1] >= cfg.min_box_px

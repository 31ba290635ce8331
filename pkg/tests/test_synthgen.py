import math

import numpy as np
import pytest

from regdiff.errors import GenerationFailure, InputDomainError
from regdiff.geometry import CameraModel, look_at, pixels_to_normalized, relative_pose_transform
from regdiff.synthgen import (
    FAR_DEPTH,
    PLANE,
    GeneratorConfig,
    SceneObject,
    SceneSpec,
    cast_rays,
    generate_scene,
    make_change_pair,
    render_view,
)


def empty_scene():
    return SceneSpec(3, ((0.3, 0.3, 0.3), (0.6, 0.6, 0.6)), (), (0.0, 0.0, 1.0))


def down_camera(h):
    R, t = look_at((0.0, 0.0, h), (0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0))
    return CameraModel(40, 40, 15.5, 15.5, R, t)


def test_scene_deterministic():
    cfg = GeneratorConfig()
    assert generate_scene(cfg, 5) == generate_scene(cfg, 5)
    assert generate_scene(cfg, 5) != generate_scene(cfg, 6)


def test_object_count_exact():
    scene = generate_scene(GeneratorConfig(object_count_range=(3, 3)), 0)
    assert len(scene.objects) == 3


def test_separation_and_resting_on_plane():
    cfg = GeneratorConfig()
    worst = math.inf
    for seed in range(100):
        objs = generate_scene(cfg, seed).objects
        for o in objs:
            bottom = o.center[2] - (o.size[0] if o.shape == "sphere" else o.size[2] / 2)
            assert abs(bottom) < 1e-9
        for i, a in enumerate(objs):
            for b in objs[i + 1:]:
                d = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
                worst = min(worst, d - a.footprint_radius - b.footprint_radius)
    assert worst >= 0.05


def test_placement_failure():
    cfg = GeneratorConfig(object_count_range=(40, 40), removal_count_range=(1, 1), scene_radius=0.2)
    with pytest.raises(GenerationFailure):
        generate_scene(cfg, 0)


def test_config_validation():
    with pytest.raises(InputDomainError):
        GeneratorConfig(object_count_range=(4, 3))
    with pytest.raises(InputDomainError):
        GeneratorConfig(object_count_range=(2, 4), removal_count_range=(3, 3))
    with pytest.raises(InputDomainError):
        GeneratorConfig(removal_count_range=(0, 1))
    with pytest.raises(InputDomainError):
        GeneratorConfig.from_dict({"bogus": 1})


def test_empty_scene_from_above_is_flat():
    _, depth = render_view(empty_scene(), down_camera(2.5), (32, 32))
    np.testing.assert_allclose(depth.values, 2.5, rtol=1e-12)


def test_box_is_in_front_of_plane():
    box = SceneObject("box", (0.0, 0.0, 0.25), (0.5, 0.5, 0.5), 0.3, (1.0, 0.0, 0.0), 1)
    scene = SceneSpec(3, ((0.3, 0.3, 0.3), (0.6, 0.6, 0.6)), (box,), (0.0, 0.0, 1.0))
    cam = down_camera(3.0)
    _, with_box = render_view(scene, cam, (32, 32))
    _, plane_only = render_view(empty_scene(), cam, (32, 32))
    on_box = cast_rays(scene, cam, *np.mgrid[0:32, 0:32][::-1].reshape(2, -1)).obj.reshape(32, 32) == 0
    assert on_box.any()
    assert np.all(with_box.values[on_box] < plane_only.values[on_box])
    np.testing.assert_allclose(with_box.values[on_box], 2.5, rtol=1e-12)  # top face at z = 0.5


def test_sky_depth_and_positive_depths(synthetic_pair):
    R, t = look_at((3.0, 0.0, 1.0), (0.0, 0.0, 1.5))
    hits = cast_rays(empty_scene(), CameraModel(40, 40, 15.5, 15.5, R, t), [15.5], [0.0])
    assert hits.obj[0] != PLANE and hits.depth[0] == FAR_DEPTH
    assert synthetic_pair.depth1.values.min() > 0 and synthetic_pair.depth2.values.min() > 0


def test_pair_deterministic():
    a = make_change_pair(GeneratorConfig(), 3)
    b = make_change_pair(GeneratorConfig(), 3)
    assert a.rgb1.tobytes() == b.rgb1.tobytes() and a.rgb2.tobytes() == b.rgb2.tobytes()
    assert a.depth2.values.tobytes() == b.depth2.values.tobytes()
    assert a.gt_correspondences.to_pairs() == b.gt_correspondences.to_pairs()
    assert a.gt_boxes_1 == b.gt_boxes_1


@pytest.mark.parametrize("seed", range(5))
def test_correspondences_reproject_exactly(pair_factory, seed):
    s = pair_factory(seed)
    corr = s.gt_correspondences
    assert corr.n >= 64
    warp = relative_pose_transform(s.cam1, s.cam2, s.size)
    d, ok = s.depth1.sample(corr.src)
    assert ok.all()
    x, y, _, valid = warp.warp_normalized(corr.src[:, 0], corr.src[:, 1], d)
    assert valid.all()
    err = np.hypot(x - corr.dst[:, 0], y - corr.dst[:, 1])
    assert err.max() < 1e-6


def test_depth_pose_consistency_on_covisible_pixels(synthetic_pair):
    s = synthetic_pair
    h, w = s.size
    vv, uu = np.nonzero(s.covis1)
    u2, v2, z2 = s.cam2.project(s.cam1.unproject(uu, vv, s.depth1.values[vv, uu]))
    after = [k for k in range(len(s.scene.objects)) if k not in s.removed]
    hit = cast_rays(s.scene, s.cam2, u2, v2, after)
    np.testing.assert_allclose(hit.depth, z2, rtol=1e-6)
    x2, y2 = pixels_to_normalized(u2, v2, w, h)
    assert np.all(np.abs(x2) <= 1) and np.all(np.abs(y2) <= 1)


@pytest.mark.parametrize("seed", range(4))
def test_box_encloses_pixel_diff(pair_factory, seed):
    s = pair_factory(seed)
    after = [k for k in range(len(s.scene.objects)) if k not in s.removed]
    rgb_after, _ = render_view(s.scene, s.cam1, s.size, after, s.config.texture_contrast)
    diff = np.any(rgb_after != s.rgb1, axis=2)
    vv, uu = np.nonzero(diff)
    assert len(uu)
    x0, y0, x1, y1 = s.gt_boxes_1[0].bbox
    assert uu.min() >= math.floor(x0) and uu.max() + 1 <= math.ceil(x1)
    assert vv.min() >= math.floor(y0) and vv.max() + 1 <= math.ceil(y1)


def test_one_box_per_view_and_visibility(pair_factory):
    for seed in range(6):
        s = pair_factory(seed)
        assert len(s.gt_boxes_1) == len(s.gt_boxes_2) == 1
        for b in s.gt_boxes_1 + s.gt_boxes_2:
            assert b.visibility > 0.25
            x0, y0, x1, y1 = b.bbox
            assert 0 <= x0 < x1 <= s.size[1] and 0 <= y0 < y1 <= s.size[0]


def test_min_box_size(pair_factory):
    s = pair_factory(2, min_box_px=24.0)
    for b in s.gt_boxes_1 + s.gt_boxes_2:
        assert b.bbox[2] - b.bbox[0] >= 24 and b.bbox[3] - b.bbox[1] >= 24


def test_hidden_mode_has_no_gt(pair_factory):
    s = pair_factory(0, change_mode="hidden_in_view2")
    assert s.gt_boxes_1 == [] and s.gt_boxes_2 == [] and len(s.removed) == 1


def test_planar_mode_correspondences_on_plane(pair_factory):
    s = pair_factory(0, planar=True)
    d, _ = s.depth1.sample(s.gt_correspondences.src)
    h, w = s.size
    from regdiff.geometry import normalized_to_pixels

    u, v = normalized_to_pixels(s.gt_correspondences.src[:, 0], s.gt_correspondences.src[:, 1], w, h)
    pts = s.cam1.unproject(u, v, d)
    assert np.max(np.abs(pts[:, 2])) < 1e-9

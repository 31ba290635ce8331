import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regdiff.dfrm import (
    COVISIBLE, OCCLUDED, UNSEEN, VIOLATED,
    GroundTruthPose, HomographySupplied, Identity, Transform3DEstimated, Transform3DSupplied,
    build_plan, composition_residual, source_visibility, warp_and_difference,
)
from regdiff.errors import InputDomainError, RegistrationFailure
from regdiff.featgrid import FeatureGrid, RenderConfig
from regdiff.features import FeatureConfig, FeaturePyramid, extract_pair, extract_pyramid
from regdiff.geometry import CorrespondenceSet, DepthMap, Homography2D, Transform3D


def random_pyramid(seed, size=(32, 32), levels=2, channels=5):
    rng = np.random.default_rng(seed)
    h, w = size
    return FeaturePyramid(tuple(FeatureGrid(rng.normal(size=(channels, h >> i, w >> i))) for i in range(levels)))


def flat_depth(size=(32, 32), z=2.0):
    return DepthMap.with_mask(np.full(size, z))


def small_transform():
    a = 0.05
    m = np.eye(4)
    m[:3, :3] = [[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]]
    m[:3, 3] = [0.05, -0.02, 0.1]
    return Transform3D(m)


def test_identity_plan():
    plan = build_plan(Identity())
    assert plan.diagnostics["composition_residual"] == 0.0


def test_identity_self_difference_is_zero():
    pyr = random_pyramid(0)
    cfg = RenderConfig(splat_radius=0.5, k_nearest=1)
    for d in (None, flat_depth()):
        h1, h2 = warp_and_difference(pyr, pyr, d, d, build_plan(Identity()), cfg)
        for lev in (*h1.levels, *h2.levels):
            assert not lev.diff.data[:, 1:-1, 1:-1].any()


def test_output_shapes_match():
    pyr = random_pyramid(1, size=(32, 48), levels=3)
    h1, h2 = warp_and_difference(pyr, random_pyramid(2, size=(32, 48), levels=3), None, None,
                                 build_plan(Identity()))
    assert [lv.diff.shape for lv in h1.levels] == [lv.diff.shape for lv in h2.levels]
    assert [lv.mask.shape for lv in h1.levels] == [(32, 48), (16, 24), (8, 12)]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.4, 0.6), st.floats(-0.4, 0.4), st.floats(0.8, 1.0))
def test_masking_law(seed, tx, ty, s):
    H = Homography2D(np.array([[s, 0.1, tx], [-0.05, s, ty], [0.02, 0.0, 1.0]]))
    p1, p2 = random_pyramid(seed), random_pyramid(seed + 1)
    h1, h2 = warp_and_difference(p1, p2, None, None, build_plan(HomographySupplied(H)))
    for lev in (*h1.levels, *h2.levels):
        zero = lev.mask == 0
        assert zero.any()
        assert not lev.diff.data[:, zero].any()
        assert np.all(np.signbit(lev.diff.data[:, zero]) == 0)


def test_masking_law_with_depth_masking(synthetic_pair):
    s = synthetic_pair
    p1, p2 = extract_pair(s.rgb1, s.rgb2, FeatureConfig())
    plan = build_plan(GroundTruthPose(s.cam1, s.cam2), s.depth1, s.depth2)
    for pyr in warp_and_difference(p1, p2, s.depth1, s.depth2, plan):
        for lev in pyr.levels:
            assert not lev.diff.data[:, lev.mask == 0].any()
            assert lev.mask.min() >= 0 and lev.mask.max() <= 1


def test_ground_truth_pose_reprojects_correspondences(synthetic_pair):
    s = synthetic_pair
    plan = build_plan(GroundTruthPose(s.cam1, s.cam2), s.depth1, s.depth2)
    c = s.gt_correspondences
    d, ok = s.depth1.sample(c.src)
    assert ok.all()
    x, y, _, valid = plan.warp_1to2.warp_normalized(c.src[:, 0], c.src[:, 1], d)
    assert valid.all()
    err = np.hypot(x - c.dst[:, 0], y - c.dst[:, 1])
    assert err.max() < 1e-6
    assert plan.diagnostics["composition_residual"] < 1e-9


def test_three_correspondences_fail_registration():
    corr = CorrespondenceSet(np.array([[0.0, 0.0], [0.5, 0.1], [-0.3, 0.4]]),
                             np.array([[0.1, 0.0], [0.6, 0.1], [-0.2, 0.4]]))
    with pytest.raises(RegistrationFailure) as exc:
        build_plan(Transform3DEstimated(corr), flat_depth(), flat_depth())
    assert exc.value.diagnostics["strategy"] == "transform3d_estimated"


def plane_depth(size, inv):
    # a plane in camera space has inverse depth affine in normalised coordinates
    from regdiff.geometry import grid_normalized
    x, y = grid_normalized(*size)
    return DepthMap.with_mask(1.0 / (inv[0] * x + inv[1] * y + inv[2]))


def test_estimated_plan_recovers_supplied_transform():
    T = small_transform()
    size = (32, 32)
    d1 = plane_depth(size, (0.05, 0.1, 0.4))
    xs, ys = np.meshgrid(np.linspace(-0.8, 0.8, 12), np.linspace(-0.8, 0.8, 12))
    src = np.column_stack([xs.ravel(), ys.ravel()])
    d, _ = d1.sample(src)
    x2, y2, z2, _ = T.warp_normalized(src[:, 0], src[:, 1], d)
    inv = np.linalg.lstsq(np.column_stack([x2, y2, np.ones_like(x2)]), 1.0 / z2, rcond=None)[0]
    d2 = plane_depth(size, inv)
    corr = CorrespondenceSet(src, np.column_stack([x2, y2]))
    plan = build_plan(Transform3DEstimated(corr), d1, d2)
    x3, y3, _, _ = plan.warp_1to2.warp_normalized(src[:, 0], src[:, 1], d)
    assert np.max(np.hypot(x3 - x2, y3 - y2)) < 1e-4
    assert plan.diagnostics["inliers_1to2"] == len(src)
    assert plan.diagnostics["composition_residual"] < 1e-3


def test_depth_required_for_3d_strategies():
    with pytest.raises(InputDomainError, match="depth2"):
        build_plan(Transform3DSupplied(small_transform()), flat_depth(), None)
    with pytest.raises(InputDomainError, match="depth1 and depth2"):
        build_plan(Transform3DSupplied(small_transform()))


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.2, 0.2), st.floats(1.5, 4.0))
def test_plan_invertibility(tx, ty, a, z):
    m = np.eye(4)
    m[:2, :2] = [[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]]
    m[:3, 3] = [tx, ty, 0.1]
    d = flat_depth(z=z)
    plan = build_plan(Transform3DSupplied(Transform3D(m)), d, d)
    assert composition_residual(plan, d) < 1e-4
    H = Homography2D(np.array([[1.0 + a, 0.1, tx], [0.0, 1.0, ty], [0.05, 0.0, 1.0]]))
    assert composition_residual(build_plan(HomographySupplied(H)), None) < 1e-4


def test_level_mismatch():
    with pytest.raises(InputDomainError):
        warp_and_difference(random_pyramid(0, levels=2), random_pyramid(1, levels=3), None, None,
                            build_plan(Identity()))
    with pytest.raises(InputDomainError):
        warp_and_difference(random_pyramid(0, size=(32, 32)), random_pyramid(1, size=(32, 48)), None, None,
                            build_plan(Identity()))


def test_depth_not_multiple_of_level():
    pyr = random_pyramid(0, size=(32, 32))
    with pytest.raises(InputDomainError):
        warp_and_difference(pyr, pyr, flat_depth((33, 32)), flat_depth((33, 32)), build_plan(Identity()))


def test_visibility_codes_on_planes():
    size = (16, 16)
    ident = build_plan(Identity()).warp_1to2
    assert (source_visibility(flat_depth(size), flat_depth(size), ident, 0.02) == COVISIBLE).all()
    # source surface nearer than the target point everywhere: target point is hidden
    assert (source_visibility(flat_depth(size, 2.0), flat_depth(size, 1.0), ident, 0.02) == OCCLUDED).all()
    # source sees past where the target surface should be
    assert (source_visibility(flat_depth(size, 2.0), flat_depth(size, 3.0), ident, 0.02) == VIOLATED).all()
    holes = DepthMap(np.full(size, 2.0), np.zeros(size, bool))
    assert (source_visibility(holes, flat_depth(size), ident, 0.02) == UNSEEN).all()


def test_visibility_outside_frame_is_unseen():
    size = (16, 16)
    shift = Homography2D(np.array([[1.0, 0, 1.0], [0, 1.0, 0], [0, 0, 1.0]]))
    vis = source_visibility(flat_depth(size), flat_depth(size), shift, 0.02)
    assert (vis[:, 8:] == UNSEEN).all()
    assert (vis[:, :7] == COVISIBLE).all()


def test_visibility_back_facing():
    size = (16, 16)
    # mirror the image: every patch flips orientation as if seen from behind
    mirror = Homography2D(np.diag([-1.0, 1.0, 1.0]))
    vis = source_visibility(flat_depth(size), flat_depth(size), mirror, 0.02)
    assert (vis[:-1, :-1] == OCCLUDED).all()


@pytest.mark.parametrize("seed", [3, 5, 8])
def test_change_concentrates_in_gt_box(pair_factory, seed):
    s = pair_factory(seed, min_visibility=0.9, min_box_px=24.0, min_contrast=0.3)
    p1, p2 = extract_pair(s.rgb1, s.rgb2, FeatureConfig())
    plan = build_plan(GroundTruthPose(s.cam1, s.cam2), s.depth1, s.depth2)
    h1, _ = warp_and_difference(p1, p2, s.depth1, s.depth2, plan)
    norm = np.linalg.norm(h1[0].diff.data, axis=0)
    inside = np.zeros(norm.shape, bool)
    for b in s.gt_boxes_1:
        x0, y0, x1, y1 = (int(round(v)) for v in b.bbox)
        inside[y0:y1, x0:x1] = True
    assert inside.any()
    assert norm[inside].mean() >= 5 * norm[~inside].mean()


def test_levels_independent_of_each_other():
    img = np.random.default_rng(5).uniform(size=(32, 32, 3))
    full = extract_pyramid(img, FeatureConfig(levels=2))
    one = FeaturePyramid(full.levels[:1])
    a, _ = warp_and_difference(full, full, None, None, build_plan(Identity()))
    b, _ = warp_and_difference(one, one, None, None, build_plan(Identity()))
    assert a[0].diff.data.tobytes() == b[0].diff.data.tobytes()


def test_default_splats_cancel_on_identical_input():
    pyr = random_pyramid(6)
    plan = build_plan(Identity())
    h1, _ = warp_and_difference(pyr, pyr, None, None, plan, RenderConfig())
    assert all(not lv.diff.data.any() for lv in h1.levels)
    # without blurring the target the wide splats leave residue
    h1, _ = warp_and_difference(pyr, pyr, None, None, plan, RenderConfig(blur_target=False))
    assert h1[0].diff.data.any()

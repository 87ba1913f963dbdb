import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import level_camera, make_box, random_camera
from oracles import (
    bev_oracle,
    corners_scalar,
    footprint_area_by_rays,
    mask_oracle,
    overlap_exact,
    overlap_grid,
    project_homogeneous,
)
from v2xkit.errors import DegenerateFov, DepthNearZero, OutOfRange, ValidationError
from v2xkit.geometry import (
    BevParams,
    CameraPose,
    FootprintPolygon,
    Scene,
    SceneObject,
    Agent,
    bev_discretize,
    bev_render,
    box_corners,
    convex_hull,
    footprints_overlap,
    frustum_footprint,
    point_in_convex,
    polygon_area,
    project_point,
    project_points,
    rasterize_fpv_mask,
    unproject,
)

finite = st.floats(-50, 50, allow_nan=False)


# -- box corners -------------------------------------------------------------


def test_corners_axis_aligned_cube():
    obj = SceneObject(0, (0, 0, 0), (2, 2, 2), 0.0, "car", {0})
    expected = [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1], [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]]
    assert np.array_equal(box_corners(obj), np.array(expected, dtype=float))


def test_corners_square_cube_rotation_maps_set_onto_itself():
    obj = SceneObject(0, (5, 0, 0), (2, 2, 2), math.pi / 2, "car", {0})
    got = {tuple(np.round(c, 12)) for c in box_corners(obj)}
    want = {(5 + sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)}
    assert got == {tuple(float(v) for v in w) for w in want}


def test_corners_match_composition_oracle():
    obj = SceneObject(0, (1, 2, 0.5), (4, 2, 1.5), 0.3, "van", {0})
    assert np.allclose(box_corners(obj), corners_scalar(obj.center, obj.size, obj.yaw), atol=1e-12)


@given(finite, finite, finite, st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-7, 7))
def test_corners_preserve_centroid(x, y, z, a, b, c, yaw):
    obj = SceneObject(0, (x, y, z), (a, b, c), yaw, "bus", {0})
    assert np.allclose(box_corners(obj).mean(axis=0), obj.center, atol=1e-12)


# -- projection --------------------------------------------------------------


def test_principal_point_on_axis():
    K = np.array([[500.0, 0, 200], [0, 500, 100], [0, 0, 1]])
    cam = CameraPose(K, np.eye(3), np.zeros(3), 400, 200)
    assert project_point((0, 0, 7), cam) == (200.0, 100.0, 7.0)


def test_pinhole_by_hand():
    f = 300.0
    cam = CameraPose(np.diag([f, f, 1.0]), np.eye(3), np.zeros(3), 10, 10)
    u, v, d = project_point((1, 1, 2), cam)
    assert (u, v, d) == (f / 2, f / 2, 2.0)


def test_depth_near_zero_raises():
    cam = CameraPose(np.diag([300.0, 300.0, 1.0]), np.eye(3), np.zeros(3), 10, 10)
    with pytest.raises(DepthNearZero):
        project_point((1, 1, 0), cam)


def test_random_projection_matches_homogeneous_oracle(rng):
    for _ in range(500):
        cam = random_camera(rng)
        p = rng.normal(scale=20, size=3)
        want = project_homogeneous(cam.intrinsics, cam.rotation, cam.translation, p)
        if abs(want[2]) < 1e-6:
            continue
        assert np.allclose(project_point(p, cam), want, rtol=0, atol=1e-9 * max(1, np.abs(want).max()))


def test_vectorized_projection_agrees(rng):
    cam = random_camera(rng)
    pts = rng.normal(scale=20, size=(50, 3))
    uv, depth = project_points(pts, cam)
    for p, (u, v), d in zip(pts, uv, depth):
        assert np.allclose(project_point(p, cam), (u, v, d), atol=1e-9)


def test_unproject_roundtrip(rng):
    for _ in range(200):
        cam = random_camera(rng)
        u, v, d = rng.uniform(0, 480), rng.uniform(0, 272), rng.uniform(0.5, 80)
        assert np.allclose(project_point(unproject(u, v, d, cam), cam), (u, v, d), atol=1e-9)


def test_camera_pose_rejects_non_orthonormal():
    with pytest.raises(ValidationError):
        CameraPose(np.eye(3), np.eye(3) * 2, np.zeros(3), 10, 10)
    with pytest.raises(ValidationError):
        CameraPose(np.diag([1.0, 1.0, 1.0]), np.diag([1.0, 1.0, -1.0]), np.zeros(3), 10, 10)
    with pytest.raises(ValidationError):
        CameraPose(np.diag([-1.0, 1.0, 1.0]), np.eye(3), np.zeros(3), 10, 10)
    with pytest.raises(ValidationError):
        CameraPose(np.eye(3), np.eye(3), np.zeros(3), 0, 10)


# -- polygons ----------------------------------------------------------------


def test_hull_is_ccw_and_drops_collinear():
    pts = np.array([[0, 0], [2, 0], [1, 0], [2, 2], [0, 2], [1, 1]])
    hull = convex_hull(pts)
    assert len(hull) == 4
    assert polygon_area(hull) == 4.0


def test_point_in_convex_is_inclusive():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert point_in_convex(sq, (0, 0.5))
    assert point_in_convex(sq, (1, 1))
    assert not point_in_convex(sq, (1.0000001, 0.5))


# -- FPV masks ---------------------------------------------------------------


def test_empty_mask():
    cam = level_camera()
    mask = rasterize_fpv_mask([], cam, 480, 272)
    assert mask.cells.dtype == np.uint16 and not mask.cells.any()


def test_centered_box_matches_pixel_oracle():
    cam = level_camera()
    obj = make_box(0, 15.0, 0.0)
    mask = rasterize_fpv_mask([obj], cam, 480, 272)
    assert mask.cells.any()
    assert np.array_equal(mask.cells, mask_oracle([obj], cam, 480, 272))


def test_painter_order_nearer_wins():
    cam = level_camera()
    far = make_box(0, 10.0, 0.0, cls="car")
    near = make_box(1, 5.0, 0.0, cls="van")
    mask = rasterize_fpv_mask([near, far], cam, 480, 272)
    far_only = rasterize_fpv_mask([far], cam, 480, 272).cells != 0
    near_only = rasterize_fpv_mask([near], cam, 480, 272).cells != 0
    both = far_only & near_only
    assert both.any()
    assert np.all(mask.cells[both] == 2)


def test_box_behind_camera_skipped():
    cam = level_camera()
    assert not rasterize_fpv_mask([make_box(0, -10.0, 0.0)], cam, 480, 272).cells.any()


def test_partially_behind_box_uses_front_corners():
    cam = level_camera()
    obj = make_box(0, 0.5, 0.0, size=(6, 2, 1.6))
    assert np.array_equal(rasterize_fpv_mask([obj], cam, 480, 272).cells, mask_oracle([obj], cam, 480, 272))


def test_downscaled_raster_matches_oracle(rng):
    cam = level_camera(fov=100)
    objs = [make_box(i, rng.uniform(3, 40), rng.uniform(-20, 20), yaw=rng.uniform(-3, 3)) for i in range(10)]
    mask = rasterize_fpv_mask(objs, cam, 120, 68)
    assert np.array_equal(mask.cells, mask_oracle(objs, cam, 120, 68))


def test_mask_rejects_bad_size():
    with pytest.raises(ValidationError):
        rasterize_fpv_mask([], level_camera(), 0, 10)


# -- footprints --------------------------------------------------------------


def _same_vertex_set(a, b):
    return sorted(map(tuple, np.round(a, 9))) == sorted(map(tuple, np.round(b, 9)))


def test_footprint_90_degrees():
    cam = level_camera(0, 0, 1.6, heading=0.0, fov=90)
    fp = frustum_footprint(cam, 10)
    assert _same_vertex_set(fp.vertices, [[0, 0], [10, 10], [10, -10]])
    assert polygon_area(fp.vertices) > 0


def test_footprint_rotated_180_is_mirrored():
    a = frustum_footprint(level_camera(heading=0.0, fov=90), 10)
    b = frustum_footprint(level_camera(heading=math.pi, fov=90), 10)
    assert _same_vertex_set(-a.vertices, b.vertices)


def test_footprint_area_matches_ray_integration(rng):
    for _ in range(20):
        cam = level_camera(rng.uniform(-20, 20), rng.uniform(-20, 20), 1.6, rng.uniform(-3, 3), rng.uniform(20, 150))
        r = rng.uniform(5, 60)
        area = frustum_footprint(cam, r).area
        assert abs(area - footprint_area_by_rays(cam, r, 4000)) <= 0.01 * area


def test_footprint_vertical_axis_is_degenerate():
    R = np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]])  # optical axis along world z
    cam = CameraPose(np.diag([300.0, 300.0, 1.0]), R, np.zeros(3), 480, 272)
    with pytest.raises(DegenerateFov):
        frustum_footprint(cam, 50)


def test_footprint_rejects_nonpositive_range():
    with pytest.raises(ValidationError):
        frustum_footprint(level_camera(), 0)


def _square(x, y, s=1.0):
    return FootprintPolygon(np.array([[x, y], [x + s, y], [x + s, y + s], [x, y + s]], dtype=float))


def test_overlap_trivial_cases():
    a = _square(0, 0)
    assert footprints_overlap(a, a)
    assert not footprints_overlap(a, _square(10, 0))
    assert not footprints_overlap(a, _square(1, 0))  # shared edge only
    assert not footprints_overlap(a, _square(1, 1))  # shared corner only
    assert footprints_overlap(a, _square(0.5, 0.5))


def _random_convex(rng, n=None):
    n = n or rng.integers(3, 7)
    pts = rng.normal(size=(n, 2)) * rng.uniform(0.5, 3) + rng.uniform(-3, 3, size=2)
    hull = convex_hull(pts)
    return FootprintPolygon(hull) if len(hull) >= 3 else None


def test_overlap_agrees_with_exact_and_grid_oracles(rng):
    checked = 0
    while checked < 300:
        a, b = _random_convex(rng), _random_convex(rng)
        if a is None or b is None:
            continue
        got = footprints_overlap(a, b)
        assert got == footprints_overlap(b, a)
        assert got == overlap_exact(a.vertices, b.vertices)
        if overlap_grid(a.vertices, b.vertices, 120) > 0:
            assert got
        checked += 1


# -- BEV ---------------------------------------------------------------------


def test_bev_discretize_examples():
    assert bev_discretize((-50, -50)) == (0, 0)
    assert bev_discretize((0, 0)) == (100, 100)
    assert bev_discretize((-49.75, 49.9)) == (0, 199)
    with pytest.raises(OutOfRange):
        bev_discretize((50, 0))


@given(st.floats(-50, 49.999, allow_nan=False), st.floats(-50, 49.999, allow_nan=False))
def test_bev_discretize_inverts_to_lower_corner(x, y):
    u, v = bev_discretize((x, y))
    assert -50 + u * 0.5 <= x + 1e-9 and x - (-50 + u * 0.5) < 0.5 + 1e-9
    assert -50 + v * 0.5 <= y + 1e-9 and y - (-50 + v * 0.5) < 0.5 + 1e-9


def _scene(objs):
    cams = (level_camera(),)
    return Scene((Agent(0, (0, 0, 1.6, 0), cams),), tuple(objs))


def test_bev_empty_scene():
    assert not bev_render(_scene([])).cells.any()


def test_bev_unit_box_at_origin_fills_four_cells():
    grid = bev_render(_scene([SceneObject(0, (0, 0, 0.5), (1, 1, 1), 0.0, "car", {0})]))
    assert set(zip(*np.nonzero(grid.cells))) == {(99, 99), (99, 100), (100, 99), (100, 100)}


def test_bev_rotated_boxes_match_cell_oracle(rng):
    objs = [
        make_box(i, rng.uniform(-45, 45), rng.uniform(-45, 45), cls=str(rng.choice(["car", "bus", "pedestrian"])),
                 size=(rng.uniform(0.5, 12), rng.uniform(0.5, 3), 1.5), yaw=rng.uniform(-3, 3))
        for i in range(8)
    ]
    grid = bev_render(_scene(objs))
    assert np.array_equal(grid.cells, bev_oracle(objs))


def test_bev_custom_params():
    params = BevParams(40, 20, -10.0, -5.0, 0.5)
    grid = bev_render(_scene([make_box(0, 0, 0, size=(1, 1, 1))]), params)
    assert grid.cells.shape == (20, 40)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.1, 3.1), st.floats(30, 160), st.floats(1, 80))
def test_footprint_is_ccw_triangle(heading, fov, r):
    fp = frustum_footprint(level_camera(heading=heading, fov=fov), r)
    assert len(fp.vertices) == 3 and polygon_area(fp.vertices) > 0

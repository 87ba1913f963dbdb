import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import GOLDEN, make_box, two_agent_scene
from oracles import corners_scalar, label_oracle
from v2xkit.conditioning import (
    BACKGROUND,
    OBJECT,
    VSTAR_OBJECT,
    LinearEncoder,
    encode_condition,
    enriched_class_embedding,
    fourier_encode,
    fuse_fpv_bev,
    label_tokens,
    make_object_token,
    one_hot,
)
from v2xkit.errors import ShapeMismatch, UnknownClass, ValidationError
from v2xkit.geometry import BevGrid, BevParams, FpvMask, SceneObject
from v2xkit.io import load_scene
from v2xkit.pipeline import camera_rasters, condition_features, object_tokens


def fourier_scalar(corners, bands):
    out = []
    for corner in corners:
        for x in corner:
            for b in range(bands):
                out += [math.sin(2**b * x), math.cos(2**b * x)]
    return np.array(out)


CLASSES = {"car": np.array([1.0, 0.0, 0.0]), "bus": np.array([0.0, 1.0, 0.5])}
VSTAR = np.array([0.25, -0.5, 2.0])


# -- Fourier encoding --------------------------------------------------------


def test_fourier_zero_corners():
    enc = fourier_encode(np.zeros((8, 3)), 4)
    assert len(enc) == 8 * 3 * 2 * 4
    assert np.all(enc[0::2] == 0) and np.all(enc[1::2] == 1)


def test_fourier_single_pi():
    assert np.allclose(fourier_encode([[math.pi]], 1), [0.0, -1.0], atol=1e-12)


def test_fourier_matches_scalar_loop(rng):
    corners = rng.normal(scale=10, size=(8, 3))
    assert np.allclose(fourier_encode(corners, 8), fourier_scalar(corners, 8), atol=1e-12)


def test_fourier_rejects_zero_bands():
    with pytest.raises(ValidationError):
        fourier_encode(np.zeros((8, 3)), 0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=24), st.integers(1, 10))
def test_fourier_unit_circle(xs, bands):
    enc = fourier_encode(np.array(xs), bands).reshape(-1, 2)
    assert np.allclose((enc**2).sum(axis=1), 1.0, atol=1e-12)


# -- object tokens -----------------------------------------------------------


def test_unshared_class_embedding_is_raw():
    obj = make_box(0, 5, 0, observers=(0,))
    assert np.array_equal(enriched_class_embedding(obj, CLASSES, VSTAR), CLASSES["car"])


def test_unknown_class():
    obj = make_box(0, 5, 0, cls="van")
    with pytest.raises(UnknownClass):
        enriched_class_embedding(obj, CLASSES, VSTAR)


def test_vstar_difference_under_identity_projection():
    bands = 2
    n_f = 8 * 3 * 2 * bands
    proj = np.eye(n_f + 3)
    shared = make_box(0, 5, 0, observers=(0, 1))
    single = make_box(0, 5, 0, observers=(0,))
    a = make_object_token(shared, CLASSES, VSTAR, proj, bands)
    b = make_object_token(single, CLASSES, VSTAR, proj, bands)
    assert np.array_equal(a.vector[n_f:] - b.vector[n_f:], VSTAR)
    assert a.is_shared and not b.is_shared


def test_token_matches_concat_multiply_oracle(rng):
    obj = make_box(3, 2, 1, cls="bus", yaw=0.4, observers=(0, 2))
    bands = 3
    proj = rng.normal(size=(7, 8 * 3 * 2 * bands + 3))
    x = np.concatenate([fourier_scalar(corners_scalar(obj.center, obj.size, obj.yaw), bands), CLASSES["bus"] + VSTAR])
    tok = make_object_token(obj, CLASSES, VSTAR, proj, bands)
    assert np.allclose(tok.vector, proj @ x, atol=1e-9)
    assert tok.object_id == 3


def test_token_projection_shape_checked(rng):
    with pytest.raises(ShapeMismatch):
        make_object_token(make_box(0, 5, 0), CLASSES, VSTAR, rng.normal(size=(4, 5)), 2)


# -- fusion and encoders -----------------------------------------------------


def test_fuse_eta_zero_is_bit_exact(rng):
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    out = fuse_fpv_bev(a, b, 0.0)
    assert out.tobytes() == a.tobytes()


def test_fuse_default_eta(rng):
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    out = fuse_fpv_bev(a, b)
    for i in range(5):
        for j in range(4):
            assert abs(out[i, j] - (a[i, j] + 0.1 * b[i, j])) <= 1e-12


def test_fuse_zero_fpv_unit_eta(rng):
    b = rng.normal(size=(3, 3))
    assert np.array_equal(fuse_fpv_bev(np.zeros((3, 3)), b, 1.0), b)


def test_fuse_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        fuse_fpv_bev(np.zeros((2, 2)), np.zeros((2, 3)))


def test_fuse_is_linear(rng):
    a1, a2, b1, b2 = (rng.normal(size=(4, 4)) for _ in range(4))
    lhs = fuse_fpv_bev(a1 + 2 * a2, b1 + 2 * b2, 0.3)
    rhs = fuse_fpv_bev(a1, b1, 0.3) + 2 * fuse_fpv_bev(a2, b2, 0.3)
    assert np.allclose(lhs, rhs, atol=1e-12)


def _mask(cells):
    cells = np.asarray(cells, dtype=np.uint16)
    return FpvMask(cells.shape[1], cells.shape[0], cells)


def test_identity_encoders_give_one_hot(rng):
    cells = rng.integers(0, 6, size=(4, 4))
    grid = BevGrid(np.zeros((4, 4), dtype=np.uint16), BevParams(4, 4))
    enc = LinearEncoder(np.eye(6))
    out = encode_condition(_mask(cells), grid, enc, enc, 0.0)
    assert np.array_equal(out, one_hot(cells))


def test_zero_inputs_give_zero_feature(rng):
    w = rng.normal(size=(6, 3))
    w[0] = 0.0  # background row
    grid = BevGrid(np.zeros((4, 4), dtype=np.uint16), BevParams(4, 4))
    out = encode_condition(_mask(np.zeros((4, 4))), grid, LinearEncoder(w), LinearEncoder(w))
    assert not out.any()


def test_encoders_match_two_step_oracle(rng):
    cells = rng.integers(0, 6, size=(6, 8))
    bev = rng.integers(0, 6, size=(12, 16))
    ef, eb = LinearEncoder(rng.normal(size=(6, 5))), LinearEncoder(rng.normal(size=(6, 5)), (2, 2))
    grid = BevGrid(bev.astype(np.uint16), BevParams(16, 12))
    got = encode_condition(_mask(cells), grid, ef, eb, 0.1)
    f = np.array([[ef.weight[c].tolist() for c in row] for row in cells]).reshape(-1, 5)
    b = np.zeros((48, 5))
    for r in range(6):
        for c in range(8):
            block = bev[2 * r: 2 * r + 2, 2 * c: 2 * c + 2].ravel()
            b[r * 8 + c] = np.mean([eb.weight[v] for v in block], axis=0)
    assert np.allclose(got, f + 0.1 * b, atol=1e-12)


def test_one_hot_range_checked():
    with pytest.raises(ValidationError):
        one_hot(np.array([[7]]))


# -- token labeling ----------------------------------------------------------


def test_all_background():
    lab = label_tokens(_mask(np.zeros((4, 6))), np.full((4, 6), -1), 2, 3, set())
    assert np.all(lab.categories == BACKGROUND) and np.all(lab.object_ids == -1)


def test_full_shared_object():
    lab = label_tokens(_mask(np.ones((4, 6))), np.full((4, 6), 7), 2, 3, {7})
    assert np.all(lab.categories == VSTAR_OBJECT) and np.all(lab.object_ids == 7)


def test_half_split_tie_picks_smaller_id():
    cells = np.ones((2, 2))
    ids = np.array([[9, 9], [4, 4]])
    lab = label_tokens(_mask(cells), ids, 1, 1, set())
    assert lab.object_ids[0] == 4 and lab.categories[0] == OBJECT


def test_labeling_matches_counting_oracle(rng):
    for _ in range(20):
        cells = (rng.random((12, 12)) < 0.6).astype(np.uint16)
        ids = np.where(cells > 0, rng.integers(0, 4, size=(12, 12)), -1)
        shared = {0, 2}
        lab = label_tokens(_mask(cells), ids, 3, 4, shared)
        cats, out = label_oracle(cells, ids, 3, 4, shared)
        assert lab.categories.tolist() == cats and lab.object_ids.tolist() == out


def test_labeling_shape_checks():
    with pytest.raises(ShapeMismatch):
        label_tokens(_mask(np.zeros((4, 6))), np.zeros((4, 6)), 3, 3, set())
    with pytest.raises(ShapeMismatch):
        label_tokens(_mask(np.zeros((4, 6))), np.zeros((4, 5)), 2, 3, set())


def test_labeling_permutation_stable(rng):
    cells = np.ones((8, 8), dtype=np.uint16)
    ids = rng.integers(10, 14, size=(8, 8))
    # an order-preserving bijection keeps tie-breaking identical
    relabel = {10: 20, 11: 25, 12: 31, 13: 40}
    ids2 = np.vectorize(relabel.get)(ids)
    a = label_tokens(_mask(cells), ids, 4, 4, {11})
    b = label_tokens(_mask(cells), ids2, 4, 4, {25})
    assert np.array_equal(a.categories, b.categories)
    assert [relabel[i] for i in a.object_ids] == b.object_ids.tolist()


def test_condition_features_are_linear_in_eta():
    scene = load_scene(GOLDEN / "scene.json")
    rasters = camera_rasters(scene)
    f0, f1, f2 = (condition_features(scene, rasters, 4, 3, eta) for eta in (0.0, 0.1, 0.2))
    for v in f0:
        assert np.abs((f2[v] - f0[v]) - 2 * (f1[v] - f0[v])).max() <= 1e-12


def test_object_tokens_shared_difference_is_projected_vstar():
    a = SceneObject(0, (10, 0, 1), (4, 2, 1.5), 0.0, "car", {0, 1})
    b = SceneObject(0, (10, 0, 1), (4, 2, 1.5), 0.0, "car", {0})
    ta, tb = object_tokens(two_agent_scene([a]), 5, 9, 2)[0], object_tokens(two_agent_scene([b]), 5, 9, 2)[0]
    assert ta.is_shared and not tb.is_shared
    assert not np.array_equal(ta.vector, tb.vector)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casesim import simimage as S
from casesim.errors import EmptyCase, ZeroVector


def case(cid, vectors, codes=None):
    vectors = np.asarray(vectors, dtype=float)
    codes = codes if codes is not None else [1] * len(vectors)
    return S.CaseDisputes(cid, [f"{cid}{i}" for i in range(len(vectors))], vectors, codes)


# ---------------------------------------------------------------- cosine

def test_cosine_examples():
    assert S.cosine_similarity([3.0, 4.0], [3.0, 4.0]) == 1.0
    assert S.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert math.isclose(S.cosine_similarity([1.0, 1.0], [1.0, 0.0]), 0.70711, abs_tol=1e-5)


def test_cosine_zero_vector():
    with pytest.raises(ZeroVector):
        S.cosine_similarity([0.0, 0.0], [1.0, 0.0])


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(0.01, 100))
def test_cosine_scale_invariant(v, c):
    v = np.array(v)
    if np.linalg.norm(v) < 1e-3:
        return
    assert math.isclose(S.cosine_similarity(v, c * v), 1.0, abs_tol=1e-9)


# -------------------------------------------------------------- reorder

def test_reorder_stable_sort():
    assert [i + 1 for i in S.reorder_by_cluster([3, 1, 2, 1])] == [2, 4, 3, 1]
    assert S.reorder_by_cluster([2, 2, 2]) == [0, 1, 2]
    assert S.reorder_by_cluster([0, 1, 1, 4]) == [0, 1, 2, 3]


# ---------------------------------------------------------------- build_z

def test_build_z_trivial():
    np.testing.assert_allclose(S.build_z(case("a", [[1, 2]]), case("b", [[2, 4]])), [[1, 1], [1, 1]])
    np.testing.assert_allclose(S.build_z(case("a", [[1, 0]]), case("b", [[0, 1]])), [[1, 0], [0, 1]])


def test_build_z_hand_case_with_reorder():
    # case a has codes [2, 1], so its rows swap before concatenation
    a = case("a", [[1, 0], [1, 1]], [2, 1])
    b = case("b", [[0, 1]], [1])
    k = [np.array([1.0, 1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    oracle = np.array([[x @ y / (np.linalg.norm(x) * np.linalg.norm(y)) for y in k] for x in k])
    np.testing.assert_allclose(S.build_z(a, b), oracle, atol=1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
@settings(max_examples=40)
def test_z_symmetric_and_swap_is_block_permutation(u, v, seed):
    rng = np.random.default_rng(seed)
    a = case("a", rng.normal(size=(u, 4)), rng.integers(0, 3, u).tolist())
    b = case("b", rng.normal(size=(v, 4)), rng.integers(0, 3, v).tolist())
    z = S.build_z(a, b)
    assert z.shape == (u + v, u + v)
    assert np.all(np.diag(z) == 1.0) and np.array_equal(z, z.T)
    perm = list(range(u, u + v)) + list(range(u))
    np.testing.assert_allclose(S.build_z(b, a), z[np.ix_(perm, perm)], atol=1e-12)


# ------------------------------------------------------------- grey levels

def test_project_grey_anchors():
    z = np.array([[0.0, 0.8], [0.9, 1.0]])
    np.testing.assert_array_equal(S.project_grey(z, 0.8), [[0, 127], [191, 255]])


def test_project_grey_monotone_and_bounded():
    z = np.linspace(-0.3, 1.0, 101).reshape(1, -1)
    g = S.project_grey(z, S.image_epsilon(z)).ravel()
    assert g[0] == 0 and g[-1] == 255
    assert np.all(np.diff(g.astype(int)) >= 0)


def test_project_grey_degenerate_matrix():
    z = np.full((3, 3), 0.5)
    g = S.project_grey(z, 0.5)
    assert g.min() >= 0 and g.max() <= 255


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
@settings(max_examples=40)
def test_image_pixels_in_range(u, v, seed):
    rng = np.random.default_rng(seed)
    img = S.make_image(case("a", rng.normal(size=(u, 8))), case("b", rng.normal(size=(v, 8))))
    assert img.pixels.shape == (32, 32) and img.pixels.dtype == np.uint8
    assert img.raw_side == u + v
    assert np.array_equal(img.raw_pixels, img.raw_pixels.T)


def test_self_pair_bright_diagonal():
    rng = np.random.default_rng(4)
    a = case("a", rng.normal(size=(5, 8)))
    img = S.make_image(a, a)
    assert np.all(np.diag(img.raw_pixels) == 255)


def test_raw_side_32_is_not_resampled():
    rng = np.random.default_rng(5)
    img = S.make_image(case("a", rng.normal(size=(20, 8))), case("b", rng.normal(size=(12, 8))))
    np.testing.assert_array_equal(img.pixels, img.raw_pixels)


def test_resize_identity_and_constant():
    g = np.arange(32 * 32).reshape(32, 32) % 256
    np.testing.assert_array_equal(S.resize_grey(g), g)
    np.testing.assert_array_equal(S.resize_grey(np.full((5, 5), 77)), np.full((32, 32), 77))


def test_round_half_away():
    np.testing.assert_array_equal(S.round_half_away(np.array([0.5, 1.49, 2.5, 254.5])), [1, 1, 3, 255])


def test_empty_case():
    with pytest.raises(EmptyCase):
        S.make_image(case("a", np.zeros((0, 3))), case("b", [[1, 0, 0]]))


# ---------------------------------------------------------------- storage

def test_pgm_roundtrip(tmp_path):
    px = np.random.default_rng(0).integers(0, 256, size=(7, 9)).astype(np.uint8)
    S.write_pgm(tmp_path / "x.pgm", px)
    np.testing.assert_array_equal(S.read_pgm(tmp_path / "x.pgm"), px)


def test_image_cache(tmp_path):
    rng = np.random.default_rng(2)
    img = S.make_image(case("a", rng.normal(size=(3, 4))), case("b", rng.normal(size=(2, 4))), label=1)
    cache = S.ImageCache(tmp_path)
    assert cache.get(img.pair_id, "m", "c") is None
    cache.put(img, "m", "c")
    got = cache.get(img.pair_id, "m", "c")
    np.testing.assert_array_equal(got.pixels, img.pixels)
    assert (got.raw_side, got.label, got.epsilon_used) == (5, 1, img.epsilon_used)
    assert cache.get(img.pair_id, "m2", "c") is None

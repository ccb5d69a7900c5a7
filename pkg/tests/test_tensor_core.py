import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorhalving.errors import InvalidArgument, NumericFailure, ParseError
from tensorhalving.tensor_core import (TuckerFactors, fold, format_tns, frobenius_norm,
                                       hosvd_truncate, mode_product, multilinear_rank, parse_tns,
                                       read_tns, sup_norm, sup_norm_levels, svd_top_r, subtensor,
                                       tucker_reconstruct, unfold, write_tns)

from .helpers import random_tucker


def example_222():
    # t[i,j,k] = i + 2(j-1) + 4(k-1), 1-based, so Fortran order gives 1..8
    return np.arange(1, 9, dtype=float).reshape((2, 2, 2), order="F")


def test_unfold_mode1_example():
    np.testing.assert_array_equal(unfold(example_222(), 0), [[1, 3, 5, 7], [2, 4, 6, 8]])


def test_unfold_other_modes_follow_kolda_bader():
    t = example_222()
    # mode 2: columns run over (i, k) with i fastest
    np.testing.assert_array_equal(unfold(t, 1), [[1, 2, 5, 6], [3, 4, 7, 8]])
    np.testing.assert_array_equal(unfold(t, 2), [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_unfold_bad_mode():
    with pytest.raises(InvalidArgument):
        unfold(example_222(), 3)
    with pytest.raises(InvalidArgument):
        unfold(example_222(), -1)


def test_rank_one_unfoldings():
    rng = np.random.default_rng(0)
    t = np.einsum("i,j,k->ijk", rng.normal(size=4), rng.normal(size=3), rng.normal(size=5))
    for k in range(3):
        assert np.linalg.matrix_rank(unfold(t, k)) == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=4), st.integers(0, 2**31 - 1))
def test_fold_inverts_unfold(dims, seed):
    t = np.random.default_rng(seed).normal(size=dims)
    for k in range(len(dims)):
        assert np.array_equal(fold(unfold(t, k), k, t.shape), t)


def test_degenerate_mode_unfolds_to_one_row():
    t = np.ones((1, 3, 2))
    assert unfold(t, 0).shape == (1, 6)


def test_mode_product_identity_and_sum_example():
    t = example_222()
    np.testing.assert_array_equal(mode_product(t, np.eye(2), 1), t)
    out = mode_product(t, np.array([[1.0, 1.0]]), 0)
    assert out.shape == (1, 2, 2)
    np.testing.assert_array_equal(out.ravel(order="F"), [3, 7, 11, 15])


def test_mode_product_shape_mismatch():
    with pytest.raises(InvalidArgument):
        mode_product(example_222(), np.ones((2, 3)), 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mode_product_unfolding_identity_and_commutation(seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(3, 4, 2))
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(2, 4))
    lhs = unfold(mode_product(t, a, 0), 0)
    np.testing.assert_allclose(lhs, a @ unfold(t, 0), rtol=1e-12, atol=1e-12)
    ab = mode_product(mode_product(t, a, 0), b, 1)
    ba = mode_product(mode_product(t, b, 1), a, 0)
    np.testing.assert_allclose(ab, ba, rtol=1e-12, atol=1e-12)


def test_tucker_reconstruct_rank_one_and_zero_core():
    rng = np.random.default_rng(1)
    us = [np.linalg.qr(rng.normal(size=(d, 1)))[0] for d in (4, 3, 5)]
    f = TuckerFactors(np.full((1, 1, 1), 2.5), tuple(us))
    expected = 2.5 * np.einsum("i,j,k->ijk", us[0][:, 0], us[1][:, 0], us[2][:, 0])
    np.testing.assert_allclose(tucker_reconstruct(f), expected, atol=1e-14)
    zero = TuckerFactors(np.zeros((1, 1, 1)), tuple(us))
    assert not np.any(tucker_reconstruct(zero))


def test_tucker_factors_validate_shapes():
    with pytest.raises(InvalidArgument):
        TuckerFactors(np.zeros((2, 2)), (np.eye(3)[:, :2], np.eye(3)[:, :1]))


def test_hosvd_round_trip_exact_rank():
    for seed in range(10):
        t = random_tucker((8, 7, 6), (2, 3, 2), seed)
        f = hosvd_truncate(t, (2, 3, 2))
        err = np.linalg.norm(f.full() - t) / np.linalg.norm(t)
        assert err <= 1e-10
        for u in f.factors:
            np.testing.assert_allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-10)


def test_hosvd_rank_one_full_rank_and_perturbed():
    rng = np.random.default_rng(3)
    t1 = np.einsum("i,j,k->ijk", *(rng.normal(size=d) for d in (4, 5, 3)))
    assert np.linalg.norm(hosvd_truncate(t1, (1, 1, 1)).full() - t1) <= 1e-10 * np.linalg.norm(t1)
    dense = rng.normal(size=(4, 4, 4))
    np.testing.assert_allclose(hosvd_truncate(dense, (4, 4, 4)).full(), dense, atol=1e-12)
    t = random_tucker((8, 8, 8), (2, 2, 2), 4)
    noisy = t + 1e-9 * rng.normal(size=t.shape)
    assert np.linalg.norm(hosvd_truncate(noisy, (2, 2, 2)).full() - t) / np.linalg.norm(t) <= 1e-6


def test_hosvd_rank_exceeding_columns_still_orthonormal():
    # mode-0 unfolding of 4x1x1 has a single column; rank 3 needs basis completion
    t = np.arange(1.0, 5.0).reshape(4, 1, 1)
    f = hosvd_truncate(t, (3, 1, 1))
    u = f.factors[0]
    np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(f.full(), t, atol=1e-12)


def test_hosvd_rank_out_of_range():
    with pytest.raises(InvalidArgument):
        hosvd_truncate(np.ones((2, 2, 2)), (3, 1, 1))
    with pytest.raises(InvalidArgument):
        hosvd_truncate(np.ones((2, 2, 2)), (0, 1, 1))


def test_norms():
    assert frobenius_norm(np.zeros((2, 2))) == 0
    one_hot = np.zeros((2, 3))
    one_hot[1, 2] = 3.0
    assert frobenius_norm(one_hot) == 3.0
    assert frobenius_norm(np.ones((2, 2))) == 2.0
    assert sup_norm(np.zeros((2, 2))) == 0
    t = np.array([[-5.0, 2.0]])
    assert sup_norm(t, [(0, 0)]) == 5.0
    assert sup_norm(t, [(0, 1)]) == 2.0
    with pytest.raises(InvalidArgument):
        sup_norm(t, [])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 10))
def test_restricted_sup_norm_never_exceeds_full(seed, n):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(3, 4, 2))
    cells = [tuple(int(rng.integers(d)) for d in t.shape) for _ in range(n)]
    assert sup_norm(t, cells) <= sup_norm(t)
    sets = [sorted(set(rng.choice(d, size=rng.integers(1, d + 1), replace=False).tolist()))
            for d in t.shape]
    assert sup_norm_levels(t, sets) <= sup_norm(t)


def test_svd_top_r_examples():
    _, s = svd_top_r(np.eye(3), 2)
    np.testing.assert_allclose(s, [1, 1])
    _, s = svd_top_r(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(s, [3, 2])
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 2)) @ rng.normal(size=(2, 4))
    u, s = svd_top_r(a, 2)
    np.testing.assert_allclose(u.T @ u, np.eye(2), atol=1e-10)
    assert np.all(np.diff(s) <= 0)
    assert np.linalg.norm(a - u @ (u.T @ a)) <= 1e-10 * np.linalg.norm(a)
    with pytest.raises(InvalidArgument):
        svd_top_r(a, 5)
    with pytest.raises(InvalidArgument):
        svd_top_r(a, 0)


def test_svd_top_r_non_finite_is_numeric_failure():
    a = np.eye(3)
    a[0, 0] = np.nan
    with pytest.raises(NumericFailure):
        svd_top_r(a, 1)


def test_multilinear_rank_examples():
    rng = np.random.default_rng(2)
    t1 = np.einsum("i,j,k->ijk", *(rng.normal(size=d) for d in (3, 4, 5)))
    assert multilinear_rank(t1) == (1, 1, 1)
    assert multilinear_rank(random_tucker((6, 5, 4), (2, 2, 2), 5)) == (2, 2, 2)
    assert multilinear_rank(np.zeros((2, 3, 4))) == (0, 0, 0)


def test_subtensor_examples():
    t = example_222()
    np.testing.assert_array_equal(subtensor(t, [[0, 1], [0, 1], [0, 1]]), t)
    single = subtensor(t, [[1], [0], [1]])
    assert single.shape == (1, 1, 1) and single[0, 0, 0] == t[1, 0, 1]
    big = random_tucker((8, 8, 8), (2, 2, 2), 7)
    sub = subtensor(big, [[0, 2, 5, 7], [1, 2, 3, 4], [0, 3, 4, 6]])
    assert all(r <= 2 for r in multilinear_rank(sub))


@pytest.mark.parametrize("sets", [[[], [0], [0]], [[0, 2], [0], [0]], [[1, 0], [0], [0]],
                                  [[0], [0]]])
def test_subtensor_rejects_bad_level_sets(sets):
    with pytest.raises(InvalidArgument):
        subtensor(example_222(), sets)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=4), st.integers(0, 2**31 - 1))
def test_tns_round_trip_bit_exact(dims, seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=dims) * 10.0 ** int(rng.integers(-300, 300))
    back = parse_tns(format_tns(t))
    assert back.shape == t.shape
    assert np.array_equal(back, t)


def test_tns_file_round_trip(tmp_path):
    t = example_222() / 3.0
    write_tns(tmp_path / "t.tns", t)
    text = (tmp_path / "t.tns").read_text().splitlines()
    assert text[:3] == ["TNS 1", "3", "2 2 2"]
    assert np.array_equal(read_tns(tmp_path / "t.tns"), t)


@pytest.mark.parametrize("text, line", [
    ("TNS 2\n2\n1 1\n0\n", 1),
    ("TNS 1\nx\n1 1\n0\n", 2),
    ("TNS 1\n2\n1 2\n0\n", None),
    ("TNS 1\n2\n1 1\nabc\n", 4),
])
def test_tns_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_tns(text, "f.tns")
    if line is not None:
        assert f"f.tns:{line}:" in str(info.value)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorhalving.diagnostics import (REPORTED_DF, d_min, degrees_of_freedom, df_report, diagnose,
                                       factor_incoherence, format_diagnostics, gap_profile,
                                       good_counts, h2_from_gaps, halving_size, hardness_h2,
                                       incoherence, marginal_contributions, modewise_gaps,
                                       pivot_round, pivot_rounds, row_surrogates, simple_regret,
                                       spectrum, stage2_surrogates, tail_start)
from tensorhalving.errors import InvalidArgument
from tensorhalving.ingestion import fixture_truth

from .helpers import (oracle_gaps, oracle_global_gaps, oracle_good_counts, oracle_h2,
                      oracle_marginal, oracle_pivot_rounds, oracle_regret, oracle_row, random_tucker)


def example_222():
    return np.arange(1, 9, dtype=float).reshape((2, 2, 2), order="F")


def column(scores):
    # a d x 1 tensor whose mode-0 scores are exactly ``scores``
    return np.asarray(scores, dtype=float).reshape(-1, 1)


def superdiagonal(values, factors):
    r = len(values)
    core = np.zeros((r,) * len(factors))
    for i, v in enumerate(values):
        core[(i,) * len(factors)] = v
    t = core
    for k, u in enumerate(factors):
        t = np.moveaxis(np.tensordot(u, t, axes=(1, k)), 0, k)
    return t


# ---------------------------------------------------------------- gaps

def test_marginal_examples():
    np.testing.assert_array_equal(marginal_contributions(example_222(), 0), [7, 8])
    np.testing.assert_array_equal(marginal_contributions(np.full((3, 2, 2), 0.4), 1), [0.4, 0.4])
    one_hot = np.zeros((3, 2, 4))
    one_hot[0, 0, 0] = 2.5
    np.testing.assert_array_equal(marginal_contributions(one_hot, 2), [2.5, 0, 0, 0])


def test_gap_examples():
    per, glob = gap_profile(np.full((3, 4, 2), 1.3))
    assert all(not np.any(g) for g in per) and not np.any(glob)
    np.testing.assert_array_equal(modewise_gaps(column([5, 3, 1]), 0), [0, 2, 4])
    t = random_tucker((6, 5, 4), (2, 2, 2), 0)
    per, glob = gap_profile(t)
    assert len(glob) == 4
    for g in per:
        assert np.all(glob <= g[:4])


def test_good_count_examples():
    t = random_tucker((6, 5, 4), (2, 2, 2), 1)
    assert good_counts(t, 0.0) == ((1, 1, 1), 1)
    assert good_counts(t, 1e9) == ((6, 5, 4), 6)
    assert good_counts(column([5, 4.5, 1]), 1.0)[0][0] == 2
    with pytest.raises(InvalidArgument):
        good_counts(t, -0.1)


def test_pivot_examples():
    t = random_tucker((8, 8, 8), (2, 2, 2), 2)
    eps = 0.5 * min(modewise_gaps(t, k)[1] for k in range(3))
    assert pivot_rounds(t, eps) == (1, 1, 1)
    assert pivot_round(t, eps) == 1
    assert pivot_round(t, 1e9) is None
    assert pivot_rounds(t, 1e9) == (None, None, None)
    u = random_tucker((16, 16, 16), (2, 2, 2), 3)
    rounds = pivot_rounds(u, 0.0)
    assert rounds == (2, 2, 2) and pivot_round(u, 0.0) == 2


def test_halving_size_and_d_min():
    assert [halving_size(21, ell) for ell in (1, 2, 3, 4)] == [21, 11, 6, 3]
    assert d_min((21, 10, 8), 2) == 4
    with pytest.raises(InvalidArgument):
        d_min((8, 8), 0)


# ---------------------------------------------------------------- hardness

def test_h2_examples():
    assert h2_from_gaps([0, 0.5, 1]) == 8
    assert hardness_h2(np.full((3, 3, 3), 2.0)) == math.inf
    assert h2_from_gaps([0, 0, 0]) == math.inf


def test_h2_uses_the_global_gaps():
    # mode 1 is almost flat, so it dominates the min and drives H2
    rng = np.random.default_rng(4)
    t = rng.uniform(size=(5, 5, 5))
    t[:, :, :] += np.linspace(0, 3, 5)[None, :, None]
    assert hardness_h2(t) == oracle_h2(oracle_global_gaps(t))
    assert hardness_h2(t) >= h2_from_gaps(oracle_gaps(t, 1))


def test_row_surrogate_examples():
    gaps = [0, 0.5, 1, 2]
    m_row, h_row = row_surrogates(gaps, 1, 1)
    assert m_row == max(t / gaps[t - 1] ** 2 for t in range(2, 5))
    assert h_row == m_row
    t = np.array([[4.0, 1.0, 0.5, 0.0], [3.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.2, 0.0, 0.3]])
    for eps in (0.1, 0.5, 1.0, 2.5):
        assert stage2_surrogates(t, eps) == pytest.approx(oracle_row(t, eps), rel=1e-15)
    # eps huge: every level is good, tail starts at ceil(sqrt(4 + 1)) = 3
    assert tail_start(4, 2) == 3
    m_row, _ = stage2_surrogates(t, 1e9)
    g = gap_profile(t)[1]
    assert m_row == max(s ** 2 / g[s - 1] ** 2 for s in (3, 4) if g[s - 1] > 0)
    with pytest.raises(InvalidArgument):
        stage2_surrogates(t, 0.0)


def test_empty_tail_gives_zero():
    assert row_surrogates([0, 1], 8, 1) == (0.0, 0.0)


# ---------------------------------------------------------------- spectrum / incoherence / df

def test_spectrum_examples():
    rng = np.random.default_rng(0)
    us = [np.linalg.qr(rng.normal(size=(d, 1)))[0] for d in (4, 5, 3)]
    lmin, lmax, kappa = spectrum(superdiagonal([2.5], us))
    assert lmin == pytest.approx(2.5) and lmax == pytest.approx(2.5) and kappa == pytest.approx(1)
    us = [np.linalg.qr(rng.normal(size=(d, 3)))[0] for d in (6, 5, 4)]
    lmin, lmax, kappa = spectrum(superdiagonal([3.0, 2.0, 0.5], us))
    assert lmin == pytest.approx(0.5) and lmax == pytest.approx(3.0) and kappa == pytest.approx(6.0)
    with pytest.raises(InvalidArgument):
        spectrum(np.zeros((2, 2, 2)))


def test_fixture_spectrum_is_sane():
    t = fixture_truth().tensor
    lmin, lmax, kappa = spectrum(t, (2, 2, 2))
    assert lmin > 0 and kappa >= 1 and lmax >= lmin


def test_incoherence_examples():
    spiky = [np.eye(d)[:, :2] for d in (6, 4, 8)]
    t = superdiagonal([2.0, 1.0], spiky)
    assert incoherence(t, (2, 2, 2)) == pytest.approx(4.0)
    h = np.array([[1, 1], [1, -1], [1, 1], [1, -1]]) / 2.0
    flat = superdiagonal([2.0, 1.0], [h, h, h])
    assert incoherence(flat, (2, 2, 2)) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = np.linalg.qr(rng.normal(size=(64, 2)))[0]
        assert 1 - 1e-12 <= factor_incoherence(u) <= 32
    with pytest.raises(InvalidArgument):
        incoherence(t, (7, 2, 2))


def test_degrees_of_freedom():
    assert degrees_of_freedom((8, 8, 8), (2, 2, 2)) == 44
    assert degrees_of_freedom((4, 4, 4), (4, 4, 4)) == 64
    assert degrees_of_freedom((21, 10, 8), (2, 2, 2)) == 74
    report = df_report((21, 10, 8), (2, 2, 2))
    assert report["df_formula"] == 74 and report["df_reported"] == REPORTED_DF == 122
    assert "df_reported" not in df_report((8, 8, 8), (2, 2, 2))


def test_simple_regret_examples():
    t = example_222()
    assert simple_regret(t, (1, 1, 1)) == 0
    assert simple_regret(np.full((2, 3), 4.0), (1, 2)) == 0
    assert simple_regret(t, (0, 0, 1)) == 3
    with pytest.raises(InvalidArgument):
        simple_regret(t, (2, 0, 0))


# ---------------------------------------------------------------- brute-force consistency

small_shapes = st.lists(st.integers(1, 6), min_size=2, max_size=3).filter(
    lambda s: math.prod(s) <= 256)


@settings(max_examples=60, deadline=None)
@given(small_shapes, st.integers(0, 2**31 - 1), st.sampled_from([0.0, 0.05, 0.2, 0.5, 2.0]))
def test_diagnostics_match_oracles(shape, seed, eps):
    rng = np.random.default_rng(seed)
    # coarse values so ties occur
    t = rng.integers(0, 6, size=shape) / 5.0
    for k in range(t.ndim):
        assert list(marginal_contributions(t, k)) == oracle_marginal(t, k)
        assert list(modewise_gaps(t, k)) == oracle_gaps(t, k)
    assert list(gap_profile(t)[1]) == oracle_global_gaps(t)
    assert good_counts(t, eps) == oracle_good_counts(t, eps)
    assert pivot_rounds(t, eps) == oracle_pivot_rounds(t, eps)
    assert hardness_h2(t) == oracle_h2(oracle_global_gaps(t))
    if eps > 0:
        assert stage2_surrogates(t, eps) == oracle_row(t, eps)
    cell = tuple(int(rng.integers(d)) for d in shape)
    assert simple_regret(t, cell) == oracle_regret(t, cell)


def test_top_score_is_global_max_in_every_mode():
    rng = np.random.default_rng(9)
    for _ in range(100):
        t = rng.normal(size=tuple(rng.integers(1, 7, size=3)))
        for k in range(3):
            assert marginal_contributions(t, k).max() == t.max()
            assert modewise_gaps(t, k)[0] == 0
            assert np.all(np.diff(modewise_gaps(t, k)) >= 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([-3.0, 0.5, 10.0]))
def test_translation_invariance(seed, shift):
    t = np.random.default_rng(seed).integers(0, 8, size=(4, 4, 4)) / 8.0
    u = t + shift
    # shifts by dyadic constants keep every entry and gap exact
    assert hardness_h2(u) == hardness_h2(t)
    for eps in (0.125, 0.5):
        assert good_counts(u, eps) == good_counts(t, eps)
        assert pivot_rounds(u, eps) == pivot_rounds(t, eps)
        assert stage2_surrogates(u, eps) == stage2_surrogates(t, eps)


def test_scaling_behaviour():
    t = random_tucker((6, 5, 4), (2, 2, 2), 5)
    c = 3.0
    l1, u1, k1 = spectrum(t, (2, 2, 2))
    l2, u2, k2 = spectrum(c * t, (2, 2, 2))
    assert l2 == pytest.approx(c * l1) and u2 == pytest.approx(c * u1) and k2 == pytest.approx(k1)
    assert incoherence(c * t, (2, 2, 2)) == pytest.approx(incoherence(t, (2, 2, 2)))
    np.testing.assert_allclose(gap_profile(c * t)[1], c * gap_profile(t)[1])
    assert hardness_h2(c * t) == pytest.approx(hardness_h2(t) / c ** 2)


# ---------------------------------------------------------------- report

def test_diagnose_report():
    t = fixture_truth().tensor
    diag = diagnose(t, eps_values=(0.05, 0.2), ranks=(2, 2, 2), switch_round=2)
    text = format_diagnostics(diag)
    assert "df_formula=74" in text and "df_reported=122" in text
    assert "switch_round=2\nd_min=4\n" in text
    assert "[eps=0.05]" in text and "ranks=2,2,2" in text
    assert diag.d_min == 4
    assert len(diag.per_eps) == 2
    assert diag.per_eps[0].g_max <= diag.per_eps[1].g_max
    assert "np.float64" not in text
    const = diagnose(np.full((2, 2, 2), 0.5))
    assert const.h2 == math.inf
    assert "H2_I=inf" in format_diagnostics(const)

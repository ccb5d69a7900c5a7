"""Independent constructions and brute-force oracles shared by the tests."""
import itertools
import math

import numpy as np


def random_tucker(dims, ranks, seed):
    """Gaussian core times QR-orthonormalized Gaussian factors, built with einsum."""
    rng = np.random.default_rng(seed)
    us = [np.linalg.qr(rng.normal(size=(d, r)))[0] for d, r in zip(dims, ranks)]
    core = rng.normal(size=ranks)
    letters = "abcdefgh"[:len(dims)]
    idx = "ijklmnop"[:len(dims)]
    expr = letters + "," + ",".join(i + a for i, a in zip(idx, letters)) + "->" + idx
    return np.einsum(expr, core, *us)


def cells_of(shape):
    return list(itertools.product(*(range(d) for d in shape)))


def oracle_marginal(t, mode):
    out = []
    for i in range(t.shape[mode]):
        out.append(max(t[c] for c in cells_of(t.shape) if c[mode] == i))
    return out


def oracle_gaps(t, mode):
    s = sorted(oracle_marginal(t, mode), reverse=True)
    return [s[0] - v for v in s]


def oracle_global_gaps(t):
    n = min(t.shape)
    per = [oracle_gaps(t, k) for k in range(t.ndim)]
    return [min(g[j] for g in per) for j in range(n)]


def oracle_good_counts(t, eps):
    counts = []
    for k in range(t.ndim):
        mu = oracle_marginal(t, k)
        counts.append(sum(1 for v in mu if v >= max(mu) - eps))
    return tuple(counts), max(counts)


def oracle_pivot_rounds(t, eps):
    out = []
    for k, d in enumerate(t.shape):
        gaps = oracle_gaps(t, k)
        best = None
        ell = 1
        while ell <= math.log2(d) - 2:
            pos = math.ceil(d / 2 ** (ell + 1))
            if gaps[pos - 1] > eps:
                best = ell
            ell += 1
        out.append(best)
    return tuple(out)


def oracle_h2(gaps):
    vals = [t / gaps[t - 1] ** 2 for t in range(2, len(gaps) + 1) if gaps[t - 1] > 0]
    return max(vals) if vals else math.inf


def oracle_row(t, eps):
    m = t.ndim
    _, g_max = oracle_good_counts(t, eps / 2)
    gaps = oracle_global_gaps(t)
    start = 1
    while start ** m < g_max + 1:
        start += 1
    ts = list(range(start, len(gaps) + 1))
    if not ts:
        m_row = 0.0
    else:
        vals = [s ** m / gaps[s - 1] ** 2 for s in ts if gaps[s - 1] > 0]
        m_row = max(vals) if vals else math.inf
    return m_row, m_row / g_max


def oracle_flmc(t, level_sets, mode):
    out = []
    for i in level_sets[mode]:
        best = -math.inf
        for c in itertools.product(*level_sets):
            if c[mode] == i:
                best = max(best, t[c])
        out.append((i, best))
    return out


def oracle_regret(t, cell):
    return max(t[c] for c in cells_of(t.shape)) - t[tuple(cell)]

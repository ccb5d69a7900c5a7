"""Low-Tucker-rank tensor completion by Riemannian gradient descent.

The estimator starts from a spectral initialization with diagonal deletion and
iterates ``X <- HOSVD_r(X - (step/p) P_T(P_Omega(X) - Y))`` where ``P_T`` is the
orthogonal projection onto the tangent space of the fixed-rank Tucker manifold
at ``X`` and ``Y`` holds per-cell averaged observations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, NumericFailure, ParseError
from .tensor_core import (
    TuckerFactors,
    fold,
    hosvd_truncate,
    multi_mode_product,
    unfold,
)

# core Gram matrices beyond this condition number get the ridge
GRAM_COND_LIMIT = 1e8


class ObservationLog:
    """Noisy observations of cells of a tensor with per-cell running sums.

    Cells are 0-based index tuples.  Repeated draws of a cell are averaged and
    the cell counts once toward the sampling rate.
    """

    def __init__(self, shape):
        self.shape = tuple(int(d) for d in shape)
        self._sum = {}
        self._count = {}
        self.total_draws = 0

    def _check(self, cell):
        cell = tuple(int(i) for i in cell)
        if len(cell) != len(self.shape) or any(not 0 <= i < d for i, d in zip(cell, self.shape)):
            raise InvalidArgument(f"cell {cell} out of range for shape {self.shape}")
        return cell

    def add(self, cell, value, count=1):
        """Record ``count`` draws of ``cell`` whose values sum to ``value``."""
        cell = self._check(cell)
        if count < 1:
            raise InvalidArgument("count must be >= 1")
        self._sum[cell] = self._sum.get(cell, 0.0) + float(value)
        self._count[cell] = self._count.get(cell, 0) + int(count)
        self.total_draws += int(count)

    def extend(self, pairs):
        for cell, value in pairs:
            self.add(cell, value)
        return self

    def __len__(self):
        return len(self._count)

    def __contains__(self, cell):
        return tuple(cell) in self._count

    def __eq__(self, other):
        if not isinstance(other, ObservationLog):
            return NotImplemented
        return (self.shape == other.shape and self._sum == other._sum
                and self._count == other._count and self.total_draws == other.total_draws)

    def cells(self):
        return sorted(self._count)

    def count(self, cell):
        return self._count.get(tuple(cell), 0)

    def value_sum(self, cell):
        return self._sum.get(tuple(cell), 0.0)

    def mean(self, cell):
        cell = tuple(cell)
        return self._sum[cell] / self._count[cell]

    @property
    def size(self):
        return math.prod(self.shape)

    @property
    def sampling_rate(self):
        """Fraction of distinct observed cells."""
        return len(self) / self.size

    def arrays(self):
        """Return ``(mask, averaged)`` dense arrays."""
        mask = np.zeros(self.shape, dtype=bool)
        avg = np.zeros(self.shape)
        if self._count:
            cells = list(self._count)
            idx = tuple(np.array(col) for col in zip(*cells))
            mask[idx] = True
            avg[idx] = [self._sum[c] / self._count[c] for c in cells]
        return mask, avg

    def restrict(self, level_sets):
        """Observations inside a Cartesian active set, relabeled to its coordinates."""
        maps = [{int(lv): j for j, lv in enumerate(levels)} for levels in level_sets]
        out = ObservationLog(tuple(len(levels) for levels in level_sets))
        for cell in self.cells():
            try:
                new = tuple(mp[i] for mp, i in zip(maps, cell))
            except KeyError:
                continue
            out.add(new, self._sum[cell], self._count[cell])
        return out

    def without(self, cells):
        drop = {tuple(c) for c in cells}
        out = ObservationLog(self.shape)
        for cell in self.cells():
            if cell not in drop:
                out.add(cell, self._sum[cell], self._count[cell])
        return out

    def copy(self):
        return self.without(())

    # OBS v1 text format -------------------------------------------------

    def to_text(self) -> str:
        lines = ["OBS 1", " ".join(str(x) for x in (len(self.shape),) + self.shape)]
        for cell in self.cells():
            idx = " ".join(str(i + 1) for i in cell)
            lines.append(f"{idx} {self._count[cell]} {self._sum[cell]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, path=None) -> "ObservationLog":
        lines = text.splitlines()
        if not lines or lines[0].strip() != "OBS 1":
            raise ParseError("expected header 'OBS 1'", 1, path)
        try:
            head = [int(x) for x in lines[1].split()]
        except (IndexError, ValueError):
            raise ParseError("expected order and dimensions", 2, path) from None
        if not head or len(head) != head[0] + 1:
            raise ParseError("order does not match number of dimensions", 2, path)
        m = head[0]
        log = cls(head[1:])
        for lineno, line in enumerate(lines[2:], start=3):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != m + 2:
                raise ParseError(f"expected {m + 2} fields, got {len(parts)}", lineno, path)
            try:
                cell = tuple(int(x) - 1 for x in parts[:m])
                count = int(parts[m])
                total = float(parts[m + 1])
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            try:
                log.add(cell, total, count)
            except InvalidArgument as exc:
                raise ParseError(str(exc), lineno, path) from None
        return log

    def write(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path):
        return cls.from_text(Path(path).read_text(), path=str(path))


@dataclass(frozen=True)
class CompletionConfig:
    """Settings for :func:`complete`.

    ``ridge_scale`` regularizes the core pseudoinverse with
    ``ridge_scale * ||core||_F^2`` in modes whose core Gram matrix is ill
    conditioned (see :func:`tangent_project`).  ``step`` multiplies the ``1/p`` gradient
    scaling; 1.0 oscillates without converging on a sizable share of random
    instances, 0.7 does not.

    ``divergence_factor`` stops the iteration once the residual on observed
    cells exceeds that factor times the smallest residual seen so far; the
    iterate with the smallest residual is returned.  At sampling rates far
    below the model's degrees of freedom the fixed step overshoots and the
    iterates blow up geometrically.  ``None`` disables the guard.
    """

    ranks: tuple
    max_iters: int = 300
    rel_tol: float = 1e-8
    ridge_scale: float = 1e-12
    step: float = 0.7
    divergence_factor: float | None = 2.0

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise InvalidArgument("rel_tol must be positive")
        if self.ridge_scale < 0:
            raise InvalidArgument("ridge_scale must be nonnegative")
        if not self.step > 0:
            raise InvalidArgument("step must be positive")
        if self.divergence_factor is not None and not self.divergence_factor > 1:
            raise InvalidArgument("divergence_factor must exceed 1")


@dataclass
class CompletionResult:
    estimate: np.ndarray
    factors: TuckerFactors
    iterations_used: int
    final_rel_change: float
    sampling_rate: float
    diverged: bool = False


def mask_apply(t, obs: ObservationLog) -> np.ndarray:
    """Keep ``t`` on observed cells, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    if t.shape != obs.shape:
        raise InvalidArgument(f"tensor shape {t.shape} != observation shape {obs.shape}")
    mask, _ = obs.arrays()
    return np.where(mask, t, 0.0)


def averaged_tensor(obs: ObservationLog) -> np.ndarray:
    return obs.arrays()[1]


def _check_ranks(shape, ranks):
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise InvalidArgument(f"need {len(shape)} ranks, got {len(ranks)}")
    for k, (r, d) in enumerate(zip(ranks, shape)):
        if not 1 <= r <= d:
            raise InvalidArgument(f"rank {r} out of range for mode {k} of size {d}")
    return ranks


def _spectral_init(y: np.ndarray, ranks, p: float) -> TuckerFactors:
    factors = []
    for k, r in enumerate(ranks):
        t_k = unfold(y, k)
        gram = t_k @ t_k.T
        np.fill_diagonal(gram, 0.0)
        try:
            _, vecs = np.linalg.eigh(gram)
        except np.linalg.LinAlgError as exc:
            raise NumericFailure(f"eigendecomposition failed: {exc}") from exc
        # eigh sorts ascending by value; take the r largest, largest first
        factors.append(vecs[:, ::-1][:, :r].copy())
    core = multi_mode_product(y, factors, transpose=True) / p
    return TuckerFactors(core, tuple(factors))


def spectral_init(obs: ObservationLog, ranks, p: float) -> TuckerFactors:
    """Spectral initialization with diagonal deletion of the mode Gram matrices."""
    if not 0 < p <= 1:
        raise InvalidArgument(f"sampling rate must lie in (0, 1], got {p}")
    ranks = _check_ranks(obs.shape, ranks)
    return _spectral_init(averaged_tensor(obs), ranks, p)


def tangent_project(point: TuckerFactors, z, ridge=None, ridge_scale: float = 1e-12) -> np.ndarray:
    """Orthogonal projection of ``z`` onto the tangent space at ``point``.

    ``ridge`` is an absolute Tikhonov term added to ``M_k(G) M_k(G)^T``
    before inversion in every mode; a singular core with ``ridge=0`` raises
    :class:`NumericFailure`.  With ``ridge=None`` the Gram matrix is inverted
    exactly and ``ridge_scale * ||G||_F^2`` is added only in modes whose Gram
    condition number exceeds ``GRAM_COND_LIMIT``, where an exact inverse
    would amplify rounding without bound.
    """
    z = np.asarray(z, dtype=float)
    core, xs = point.core, point.factors
    if z.shape != point.shape:
        raise InvalidArgument(f"direction shape {z.shape} != point shape {point.shape}")
    if not (np.all(np.isfinite(core)) and np.all(np.isfinite(z))):
        raise NumericFailure("non-finite core or direction")
    out = multi_mode_product(multi_mode_product(z, xs, transpose=True), xs)
    if not np.any(core):
        # zero core: every G x_k W_k term vanishes
        if ridge == 0.0:
            raise NumericFailure("core is zero and ridge is 0")
        return out
    fallback = ridge_scale * float(np.sum(core * core))
    for k in range(core.ndim):
        g_k = unfold(core, k)
        gram = g_k @ g_k.T
        if ridge is None:
            eig = np.linalg.eigvalsh(gram)
            lam = fallback if eig[0] <= eig[-1] / GRAM_COND_LIMIT else 0.0
        else:
            lam = ridge
        if lam > 0:
            gram = gram + lam * np.eye(gram.shape[0])
        elif np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise NumericFailure(f"core unfolding {k} is rank deficient and ridge is 0")
        try:
            g_pinv = np.linalg.solve(gram, g_k).T
        except np.linalg.LinAlgError as exc:
            raise NumericFailure(f"singular core unfolding in mode {k}") from exc
        b_k = unfold(multi_mode_product(z, xs, skip=k, transpose=True), k)
        x_k = xs[k]
        w_k = b_k @ g_pinv
        w_k = w_k - x_k @ (x_k.T @ w_k)
        shape = core.shape[:k] + (x_k.shape[0],) + core.shape[k + 1:]
        term = fold(w_k @ g_k, k, shape)
        out = out + multi_mode_product(term, xs, skip=k)
    return out


def _rgm_step(current: TuckerFactors, mask, y, p, ranks, ridge_scale, step):
    with np.errstate(over="ignore", invalid="ignore"):
        x = current.full()
        residual = np.where(mask, x, 0.0) - y
        z = x - (step / p) * tangent_project(current, residual, ridge_scale=ridge_scale)
    if not np.all(np.isfinite(z)):
        raise NumericFailure("Riemannian gradient step produced non-finite values")
    return hosvd_truncate(z, ranks)


def rgm_step(current: TuckerFactors, obs: ObservationLog, p: float,
             config: CompletionConfig) -> TuckerFactors:
    """One Riemannian gradient step followed by HOSVD retraction."""
    if not p > 0:
        raise InvalidArgument("sampling rate must be positive")
    if current.shape != obs.shape:
        raise InvalidArgument(f"point shape {current.shape} != observation shape {obs.shape}")
    ranks = _check_ranks(obs.shape, config.ranks)
    mask, y = obs.arrays()
    return _rgm_step(current, mask, y, p, ranks, config.ridge_scale, config.step)


def complete(obs: ObservationLog, config: CompletionConfig) -> CompletionResult:
    """Estimate the full tensor from ``obs`` at the configured multilinear rank."""
    if len(obs) == 0:
        raise InvalidArgument("cannot complete a tensor from zero observations")
    ranks = _check_ranks(obs.shape, config.ranks)
    p = obs.sampling_rate
    mask, y = obs.arrays()
    guard = config.divergence_factor
    factors = _spectral_init(y, ranks, p)
    x = factors.full()
    best = (float(np.linalg.norm(np.where(mask, x, 0.0) - y)), factors, x, 0)
    rel_change = math.inf
    iters = 0
    for iters in range(1, config.max_iters + 1):
        try:
            factors = _rgm_step(factors, mask, y, p, ranks, config.ridge_scale, config.step)
        except NumericFailure:
            if guard is None:
                raise
            return CompletionResult(best[2], best[1], best[3], rel_change, p, True)
        x_new = factors.full()
        rel_change = float(np.linalg.norm(x_new - x) / max(1.0, np.linalg.norm(x)))
        x = x_new
        if guard is not None:
            res = float(np.linalg.norm(np.where(mask, x, 0.0) - y))
            if res <= best[0]:
                best = (res, factors, x, iters)
            elif res > guard * best[0]:
                return CompletionResult(best[2], best[1], best[3], rel_change, p, True)
        if rel_change < config.rel_tol:
            break
    return CompletionResult(x, factors, iters, rel_change, p)

"""Simulated experimentation environment and ground-truth generators."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BudgetExhausted, InvalidArgument, ParseError
from .tensor_core import TuckerFactors, as_tensor, read_tns, write_tns


@dataclass
class GroundTruth:
    tensor: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)
    normalized: bool = False

    @property
    def shape(self):
        return self.tensor.shape


def normalize_unit_interval(t) -> np.ndarray:
    """Affine map onto [0, 1]; a constant tensor maps to zeros."""
    t = np.asarray(t, dtype=float)
    lo, hi = float(t.min()), float(t.max())
    if hi == lo:
        return np.zeros_like(t)
    return (t - lo) / (hi - lo)


def orthonormal_columns(g: np.ndarray) -> np.ndarray:
    """QR orthonormalization; each column's largest-magnitude entry is made positive."""
    q, _ = np.linalg.qr(g)
    idx = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[idx, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    return q * signs


def _dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidArgument(f"need at least two positive dimensions, got {dims}")
    return dims


def gen_additive(dims, seed, normalize=False) -> GroundTruth:
    """``mu + sum_k effect_k[i_k]`` with standard Gaussian intercept and effects."""
    dims = _dims(dims)
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal()
    t = np.full(dims, mu)
    for k, d in enumerate(dims):
        shape = [1] * len(dims)
        shape[k] = d
        t = t + rng.standard_normal(d).reshape(shape)
    if normalize:
        t = normalize_unit_interval(t)
    return GroundTruth(t, "additive", {"seed": seed}, normalize)


def gen_cp(dims, rank, seed, weights=None, normalize=False) -> GroundTruth:
    """Sum of ``rank`` weighted outer products of Gaussian columns."""
    dims = _dims(dims)
    if rank < 1:
        raise InvalidArgument("CP rank must be >= 1")
    rng = np.random.default_rng(seed)
    factors = [rng.standard_normal((d, rank)) for d in dims]
    if weights is None:
        weights = rng.uniform(0.5, 1.5, size=rank)
    weights = np.asarray(weights, dtype=float)
    t = np.zeros(dims)
    for r in range(rank):
        comp = weights[r]
        for a in factors:
            comp = np.multiply.outer(comp, a[:, r])
        t = t + comp
    if normalize:
        t = normalize_unit_interval(t)
    return GroundTruth(t, "cp", {"rank": rank, "seed": seed}, normalize)


def gen_tucker(dims, ranks, seed, normalize=False) -> GroundTruth:
    """Random Tucker tensor with orthonormalized Gaussian factors and Gaussian core.

    With ``normalize`` the constant vector is placed in every factor span, so
    the min-max shift stays inside the model and the multilinear rank is kept.
    """
    dims = _dims(dims)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims) or any(not 1 <= r <= d for r, d in zip(ranks, dims)):
        raise InvalidArgument(f"ranks {ranks} incompatible with dims {dims}")
    rng = np.random.default_rng(seed)
    factors = []
    for d, r in zip(dims, ranks):
        g = rng.standard_normal((d, r))
        if normalize:
            g[:, 0] = 1.0
        factors.append(orthonormal_columns(g))
    core = rng.standard_normal(ranks)
    t = TuckerFactors(core, tuple(factors)).full()
    if normalize:
        t = normalize_unit_interval(t)
    return GroundTruth(t, "tucker", {"ranks": ranks, "seed": seed}, normalize)


def save_truth(path, truth: GroundTruth) -> None:
    """Write the tensor as TNS v1 and a ``.meta`` sidecar of key=value lines."""
    path = Path(path)
    write_tns(path, truth.tensor)
    lines = [f"kind={truth.kind}", f"normalized={str(truth.normalized).lower()}"]
    for key in sorted(truth.meta):
        value = truth.meta[key]
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    meta_path(path).write_text("\n".join(lines) + "\n")


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def load_truth(path) -> GroundTruth:
    path = Path(path)
    t = read_tns(path)
    mp = meta_path(path)
    meta = {}
    if mp.exists():
        for lineno, line in enumerate(mp.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            if "=" not in line:
                raise ParseError("expected key=value", lineno, str(mp))
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    kind = meta.pop("kind", "ingested")
    normalized = meta.pop("normalized", "false") == "true"
    return GroundTruth(t, kind, meta, normalized)


class Environment:
    """Noisy oracle over a ground-truth tensor with a hard draw budget.

    Noise is ``sigma * N(0, 1)`` from a PCG64 stream seeded by ``seed``; the
    k-th random number consumed is a function of ``(seed, k)`` only, so a
    fixed call sequence reproduces observations bit for bit.
    """

    def __init__(self, truth, sigma: float, budget: int, seed):
        if isinstance(truth, GroundTruth):
            truth = truth.tensor
        self.truth = as_tensor(truth)
        if sigma < 0:
            raise InvalidArgument("sigma must be nonnegative")
        if budget < 0:
            raise InvalidArgument("budget must be nonnegative")
        self.sigma = float(sigma)
        self.initial_budget = int(budget)
        self.remaining = int(budget)
        self.draws = 0
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    @property
    def shape(self):
        return self.truth.shape

    def _check_cell(self, cell):
        cell = tuple(int(i) for i in cell)
        if len(cell) != self.truth.ndim or any(not 0 <= i < d for i, d in zip(cell, self.truth.shape)):
            raise InvalidArgument(f"cell {cell} out of range for shape {self.truth.shape}")
        return cell

    def draw(self, cell) -> float:
        cell = self._check_cell(cell)
        if self.remaining < 1:
            raise BudgetExhausted(f"budget of {self.initial_budget} draws exhausted")
        value = self.truth[cell] + self.sigma * self.rng.standard_normal()
        self.remaining -= 1
        self.draws += 1
        return float(value)

    def draw_uniform(self, level_sets, n: int):
        """``n`` cells uniform with replacement over the Cartesian product of ``level_sets``."""
        level_sets = getattr(level_sets, "level_sets", level_sets)
        if n < 0:
            raise InvalidArgument("n must be nonnegative")
        if n > self.remaining:
            raise BudgetExhausted(f"requested {n} draws, {self.remaining} remain")
        sets = [list(levels) for levels in level_sets]
        if len(sets) != self.truth.ndim or any(not s for s in sets):
            raise InvalidArgument("need one nonempty level set per mode")
        out = []
        for _ in range(n):
            cell = tuple(s[int(self.rng.integers(len(s)))] for s in sets)
            out.append((cell, self.draw(cell)))
        return out


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary printable parts."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")

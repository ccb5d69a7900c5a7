"""Dense tensor algebra: unfoldings, mode products, HOSVD and rank measurement.

Tensors are plain ``numpy.ndarray`` objects of order ``m >= 2``.  Modes are
numbered from 0 like numpy axes.  The canonical linearization (used by the
TNS file format) lets the first index vary fastest, i.e. ``t.ravel(order="F")``,
and the mode-k unfolding orders its columns with the smallest remaining mode
varying fastest (Kolda & Bader).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, NumericFailure, ParseError

DEFAULT_RANK_TOL = 1e-8


def as_tensor(t) -> np.ndarray:
    """Validate and return ``t`` as a float64 array of order >= 2."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim < 2:
        raise InvalidArgument(f"tensor order must be >= 2, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise InvalidArgument(f"every dimension must be >= 1, got {arr.shape}")
    return arr


def _check_mode(t: np.ndarray, mode: int) -> int:
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < t.ndim:
        raise InvalidArgument(f"mode {mode} out of range for order-{t.ndim} tensor")
    return int(mode)


def unfold(t, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(d_mode, prod of other dims)``."""
    t = np.asarray(t, dtype=float)
    mode = _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape((t.shape[mode], -1), order="F")


matricize = unfold


def fold(mat, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    shape = tuple(int(s) for s in shape)
    mat = np.asarray(mat, dtype=float)
    if not 0 <= mode < len(shape):
        raise InvalidArgument(f"mode {mode} out of range for order-{len(shape)} tensor")
    rest = shape[:mode] + shape[mode + 1:]
    if mat.shape != (shape[mode], math.prod(rest)):
        raise InvalidArgument(f"matrix of shape {mat.shape} cannot fold into {shape}")
    return np.moveaxis(mat.reshape((shape[mode],) + rest, order="F"), 0, mode)


def mode_product(t, a, mode: int) -> np.ndarray:
    """Mode-``mode`` product ``t x_mode a``; ``a`` has shape ``(J, d_mode)``."""
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    mode = _check_mode(t, mode)
    if a.ndim != 2 or a.shape[1] != t.shape[mode]:
        raise InvalidArgument(
            f"matrix of shape {a.shape} incompatible with mode {mode} of size {t.shape[mode]}"
        )
    out = np.tensordot(a, t, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def multi_mode_product(t, matrices, skip=None, transpose=False) -> np.ndarray:
    """Apply ``matrices[k]`` along every mode ``k`` except ``skip``.

    With ``transpose=True`` each matrix is applied transposed, which is the
    usual projection onto factor coordinates.
    """
    out = np.asarray(t, dtype=float)
    for k, a in enumerate(matrices):
        if k == skip or a is None:
            continue
        out = mode_product(out, a.T if transpose else a, k)
    return out


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus orthonormal factor matrices ``U_k`` of shape ``(d_k, r_k)``."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(np.asarray(u, dtype=float) for u in self.factors))
        core = np.asarray(self.core, dtype=float)
        object.__setattr__(self, "core", core)
        if core.ndim != len(self.factors):
            raise InvalidArgument(f"core order {core.ndim} != number of factors {len(self.factors)}")
        for k, u in enumerate(self.factors):
            if u.ndim != 2 or u.shape[1] != core.shape[k]:
                raise InvalidArgument(f"factor {k} has shape {u.shape}, core mode size {core.shape[k]}")
            if u.shape[1] > u.shape[0]:
                raise InvalidArgument(f"factor {k}: rank {u.shape[1]} exceeds dimension {u.shape[0]}")

    @property
    def shape(self) -> tuple:
        return tuple(u.shape[0] for u in self.factors)

    @property
    def ranks(self) -> tuple:
        return tuple(u.shape[1] for u in self.factors)

    def full(self) -> np.ndarray:
        return tucker_reconstruct(self)


def tucker_reconstruct(f: TuckerFactors) -> np.ndarray:
    """``core x_1 U_1 ... x_m U_m``."""
    return multi_mode_product(f.core, f.factors)


def frobenius_norm(t) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=float).ravel()))


def sup_norm(t, restrict=None) -> float:
    """Max absolute entry, optionally over an iterable of index tuples.

    For a Cartesian active set use :func:`sup_norm_levels`.
    """
    t = np.asarray(t, dtype=float)
    if restrict is None:
        return float(np.max(np.abs(t))) if t.size else 0.0
    cells = [tuple(int(i) for i in c) for c in restrict]
    if not cells:
        raise InvalidArgument("empty restriction set")
    for c in cells:
        if len(c) != t.ndim or any(not 0 <= i < d for i, d in zip(c, t.shape)):
            raise InvalidArgument(f"cell {c} out of range for shape {t.shape}")
    idx = tuple(np.array(col) for col in zip(*cells))
    return float(np.max(np.abs(t[idx])))


def sup_norm_levels(t, level_sets) -> float:
    """Max absolute entry over the Cartesian product of ``level_sets``."""
    return sup_norm(subtensor(t, level_sets))


def svd_top_r(a, r: int):
    """Top-``r`` left singular vectors and singular values of a matrix.

    Returns
    -------
    (ndarray, ndarray)
        ``U`` of shape ``(rows, r)`` with orthonormal columns and the ``r``
        largest singular values in nonincreasing order.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise InvalidArgument("svd_top_r expects a matrix")
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= min(a.shape):
        raise InvalidArgument(f"rank {r} out of range for matrix {a.shape}")
    try:
        u, s, _ = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD did not converge: {exc}") from exc
    return u[:, :r], s[:r]


def singular_values(t, mode: int) -> np.ndarray:
    try:
        return np.linalg.svd(unfold(t, mode), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD did not converge: {exc}") from exc


def multilinear_rank(t, tol: float = DEFAULT_RANK_TOL) -> tuple:
    """Per-mode count of singular values above ``tol * sigma_max`` of that unfolding."""
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    t = as_tensor(t)
    ranks = []
    for k in range(t.ndim):
        s = singular_values(t, k)
        ranks.append(int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0)
    return tuple(ranks)


def _check_level_sets(shape, level_sets):
    if len(level_sets) != len(shape):
        raise InvalidArgument(f"need {len(shape)} level sets, got {len(level_sets)}")
    out = []
    for k, (levels, d) in enumerate(zip(level_sets, shape)):
        levels = [int(i) for i in levels]
        if not levels:
            raise InvalidArgument(f"level set for mode {k} is empty")
        if any(not 0 <= i < d for i in levels):
            raise InvalidArgument(f"level set for mode {k} out of range [0, {d})")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise InvalidArgument(f"level set for mode {k} must be strictly increasing")
        out.append(levels)
    return out


def subtensor(t, level_sets) -> np.ndarray:
    """Restrict every mode to the given strictly increasing index subset."""
    t = np.asarray(t, dtype=float)
    sets = _check_level_sets(t.shape, level_sets)
    return t[np.ix_(*sets)]


def hosvd_truncate(t, ranks) -> TuckerFactors:
    """Truncated HOSVD: per-mode top singular subspaces, core by projection."""
    t = as_tensor(t)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != t.ndim:
        raise InvalidArgument(f"need {t.ndim} ranks, got {len(ranks)}")
    for k, (r, d) in enumerate(zip(ranks, t.shape)):
        if not 1 <= r <= d:
            raise InvalidArgument(f"rank {r} out of range for mode {k} of size {d}")
    factors = []
    for k, r in enumerate(ranks):
        m = unfold(t, k)
        if r > m.shape[1]:
            # more requested columns than the unfolding can supply
            u = _complete_basis(svd_top_r(m, m.shape[1])[0], r)
        else:
            u = svd_top_r(m, r)[0]
        factors.append(u)
    core = multi_mode_product(t, factors, transpose=True)
    return TuckerFactors(core, tuple(factors))


def _complete_basis(u: np.ndarray, r: int) -> np.ndarray:
    """Extend orthonormal columns ``u`` to ``r`` columns."""
    d = u.shape[0]
    q, _ = np.linalg.qr(np.hstack([u, np.eye(d)]))
    extra = q[:, u.shape[1]:]
    # drop directions already spanned by u
    extra = extra - u @ (u.T @ extra)
    q2, _ = np.linalg.qr(extra)
    return np.hstack([u, q2[:, : r - u.shape[1]]])


# ---------------------------------------------------------------------------
# TNS v1 text format

def format_tns(t) -> str:
    t = as_tensor(t)
    lines = ["TNS 1", str(t.ndim), " ".join(str(d) for d in t.shape)]
    lines.extend(repr(float(v)) for v in t.ravel(order="F"))
    return "\n".join(lines) + "\n"


def parse_tns(text: str, path=None) -> np.ndarray:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "TNS 1":
        raise ParseError("expected header 'TNS 1'", 1, path)
    try:
        m = int(lines[1])
    except (IndexError, ValueError):
        raise ParseError("expected tensor order", 2, path) from None
    try:
        dims = tuple(int(x) for x in lines[2].split())
    except (IndexError, ValueError):
        raise ParseError("expected dimensions", 3, path) from None
    if len(dims) != m or m < 2 or any(d < 1 for d in dims):
        raise ParseError(f"bad dimensions {dims} for order {m}", 3, path)
    body = lines[3:]
    n = math.prod(dims)
    values = np.empty(n)
    count = 0
    for offset, line in enumerate(body):
        s = line.strip()
        if not s:
            continue
        if count >= n:
            raise ParseError("too many values", offset + 4, path)
        try:
            values[count] = float(s)
        except ValueError:
            raise ParseError(f"not a number: {s!r}", offset + 4, path) from None
        count += 1
    if count != n:
        raise ParseError(f"expected {n} values, found {count}", len(lines), path)
    return values.reshape(dims, order="F")


def write_tns(path, t) -> None:
    Path(path).write_text(format_tns(t))


def read_tns(path) -> np.ndarray:
    return parse_tns(Path(path).read_text(), path=str(path))

"""Ground-truth tensors from interaction event logs.

EVT v1 is a text format: a header ``EVT 1 m d_1 .. d_m`` followed by one
event per line, ``user_id,i_1,...,i_m`` with 1-based level indices.  A cell's
value is the number of distinct users whose events hit it.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import GroundTruth, normalize_unit_interval, save_truth
from .errors import InvalidArgument, ParseError
from .tensor_core import as_tensor, singular_values, unfold


@dataclass(frozen=True)
class InteractionEvent:
    user_id: str
    level: tuple


@dataclass
class IngestReport:
    tensor: np.ndarray
    raw_counts: np.ndarray
    distinct_users_total: int
    estimated_ranks: tuple
    cpv_threshold: float


def parse_header(line: str, path=None):
    parts = line.split()
    if len(parts) < 3 or parts[0] != "EVT" or parts[1] != "1":
        raise ParseError("expected header 'EVT 1 m d_1 .. d_m'", 1, path)
    try:
        m = int(parts[2])
        dims = tuple(int(x) for x in parts[3:])
    except ValueError:
        raise ParseError("non-integer order or dimension in header", 1, path) from None
    if m < 2 or len(dims) != m or any(d < 1 for d in dims):
        raise ParseError(f"header declares order {m} with dims {dims}", 1, path)
    return dims


def iter_events(lines, dims, path=None, first_lineno=2):
    """Yield ``(lineno, InteractionEvent)`` with 0-based levels, validating each row."""
    m = len(dims)
    for lineno, line in enumerate(lines, start=first_lineno):
        s = line.strip()
        if not s:
            continue
        fields = [f.strip() for f in s.split(",")]
        if len(fields) != m + 1 or not fields[0]:
            raise ParseError(f"expected user_id and {m} indices", lineno, path)
        try:
            level = tuple(int(f) - 1 for f in fields[1:])
        except ValueError:
            raise ParseError("non-integer level index", lineno, path) from None
        for k, (i, d) in enumerate(zip(level, dims)):
            if not 0 <= i < d:
                where = f"{path}:{lineno}" if path else f"line {lineno}"
                raise InvalidArgument(f"{where}: level {i + 1} out of range 1..{d} in mode {k + 1}")
        yield lineno, InteractionEvent(fields[0], level)


def read_events(path):
    """Return ``(dims, events)`` from an EVT v1 file."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise InvalidArgument(f"{path}: empty event file")
    dims = parse_header(lines[0], str(path))
    events = [ev for _, ev in iter_events(lines[1:], dims, str(path))]
    return dims, events


def format_events(events, dims) -> str:
    lines = ["EVT 1 " + " ".join(str(x) for x in (len(dims),) + tuple(dims))]
    for ev in events:
        lines.append(",".join([ev.user_id] + [str(i + 1) for i in ev.level]))
    return "\n".join(lines) + "\n"


def write_events(path, events, dims) -> None:
    Path(path).write_text(format_events(events, dims))


def build_tensor(events, dims) -> np.ndarray:
    """Distinct-user count per cell; ``events`` carry 0-based levels."""
    dims = tuple(int(d) for d in dims)
    seen = set()
    counts = np.zeros(dims)
    for ev in events:
        level = tuple(ev.level)
        if len(level) != len(dims) or any(not 0 <= i < d for i, d in zip(level, dims)):
            raise InvalidArgument(f"event level {level} out of range for dims {dims}")
        key = (ev.user_id, level)
        if key not in seen:
            seen.add(key)
            counts[level] += 1
    return counts


def cpv_rank(t, eta: float = 0.95) -> tuple:
    """Per mode, the smallest rank whose squared singular values reach ``eta`` of the energy."""
    if not 0 < eta <= 1:
        raise InvalidArgument("eta must lie in (0, 1]")
    t = as_tensor(t)
    if not np.any(t):
        raise InvalidArgument("CPV rank of the zero tensor is undefined")
    ranks = []
    for k in range(t.ndim):
        energy = np.cumsum(singular_values(t, k) ** 2)
        frac = energy / energy[-1]
        ranks.append(min(int(np.searchsorted(frac, eta - 1e-12)) + 1, len(frac)))
    return tuple(ranks)


def ingest(path, eta: float = 0.95, out=None, dims=None, unfold_csv=None) -> IngestReport:
    """Build, normalize and rank-estimate a tensor from an EVT v1 file.

    When ``out`` is given the normalized tensor is written as TNS v1 with a
    ``.meta`` sidecar; ``unfold_csv`` receives the mode-1 unfolding of the
    raw counts for plotting.
    """
    file_dims, events = read_events(path)
    if dims is not None and tuple(dims) != file_dims:
        raise InvalidArgument(f"{path}: header dims {file_dims} differ from requested {tuple(dims)}")
    if not events:
        raise InvalidArgument(f"{path}: no events")
    counts = build_tensor(events, file_dims)
    tensor = normalize_unit_interval(counts)
    ranks = cpv_rank(counts, eta)
    users = len({ev.user_id for ev in events})
    report = IngestReport(tensor, counts, users, ranks, eta)
    if out is not None:
        save_truth(out, GroundTruth(tensor, "ingested",
                                    {"ranks": ranks, "eta": eta, "source": Path(path).name,
                                     "distinct_users": users}, True))
    if unfold_csv is not None:
        np.savetxt(unfold_csv, unfold(counts, 0), delimiter=",", fmt="%d")
    return report


def planted_intensity(dims=(21, 10, 8), seed=0, peak=200.0) -> np.ndarray:
    """Nonnegative rank-(2,...,2) Tucker intensity for a bundling-style log.

    Mode factors pair a Zipf(1/2) popularity profile over the levels with a
    cluster membership profile (30% of the levels at 1, the rest at 0.1).
    The core couples popularity with popularity and cluster with cluster,
    plus weak cross terms.
    """
    rng = np.random.default_rng(seed)
    factors = []
    for d in dims:
        pop = (np.arange(1, d + 1) ** -0.5)[rng.permutation(d)]
        cluster = np.full(d, 0.1)
        cluster[rng.choice(d, max(1, int(round(0.3 * d))), replace=False)] = 1.0
        factors.append(np.column_stack([pop, cluster]))
    core = np.full((2,) * len(dims), 0.05)
    core[(0,) * len(dims)] = 1.0
    core[(1,) * len(dims)] = 0.6
    t = core
    for k, a in enumerate(factors):
        t = np.moveaxis(np.tensordot(a, t, axes=(1, k)), 0, k)
    return peak * t / t.max()


def synthetic_events(dims=(21, 10, 8), seed=0, peak=200.0, n_users=5000, repeat_rate=0.3):
    """Event log whose distinct-user counts are Poisson around :func:`planted_intensity`.

    A fraction ``repeat_rate`` of events is duplicated to exercise distinct
    counting.  Events come back shuffled.
    """
    rng = np.random.default_rng(seed)
    lam = planted_intensity(dims, seed, peak)
    counts = rng.poisson(lam)
    events = []
    for cell in np.ndindex(*dims):
        c = int(counts[cell])
        if c == 0:
            continue
        users = rng.choice(n_users, size=min(c, n_users), replace=False)
        for u in users:
            ev = InteractionEvent(f"u{u:05d}", tuple(int(i) for i in cell))
            events.append(ev)
            if rng.uniform() < repeat_rate:
                events.append(ev)
    order = rng.permutation(len(events))
    return [events[i] for i in order]


def fixture_truth(dims=(21, 10, 8), seed=0, eta=0.95) -> GroundTruth:
    """Normalized distinct-user tensor of the synthetic bundling event log."""
    counts = build_tensor(synthetic_events(dims, seed), dims)
    return GroundTruth(normalize_unit_interval(counts), "ingested",
                       {"ranks": cpv_rank(counts, eta), "seed": seed, "source": "synthetic"}, True)

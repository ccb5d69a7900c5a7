"""Experimentation policies: two-stage screening, one-shot completion, vector SH."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .completion import CompletionConfig, CompletionResult, ObservationLog, complete
from .environment import derive_seed
from .errors import InvalidArgument
from .tensor_core import subtensor


@dataclass(frozen=True)
class ActiveDesign:
    """Per-mode surviving levels (0-based, strictly increasing) at round ``round``."""

    level_sets: tuple
    round: int = 1

    def __post_init__(self):
        sets = tuple(tuple(int(i) for i in s) for s in self.level_sets)
        for k, s in enumerate(sets):
            if not s:
                raise InvalidArgument(f"level set for mode {k} is empty")
            if any(b <= a for a, b in zip(s, s[1:])):
                raise InvalidArgument(f"level set for mode {k} must be strictly increasing")
        object.__setattr__(self, "level_sets", sets)

    @classmethod
    def full(cls, shape):
        return cls(tuple(tuple(range(d)) for d in shape))

    @property
    def sizes(self):
        return tuple(len(s) for s in self.level_sets)

    @property
    def size(self):
        return math.prod(self.sizes)

    def cells(self):
        """Active cells in lexicographic order."""
        return [tuple(self.level_sets[k][j] for k, j in enumerate(idx))
                for idx in np.ndindex(*self.sizes)]

    def to_global(self, local_cell):
        return tuple(self.level_sets[k][j] for k, j in enumerate(local_cell))


@dataclass
class PolicyOutcome:
    selected: tuple
    draws_used: int
    trajectory: list = field(default_factory=list)


def argmax_cell(t) -> tuple:
    """Index of the maximum entry; ties go to the lexicographically smallest."""
    t = np.asarray(t)
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(t)), t.shape))


def _restricted(estimate, design):
    estimate = np.asarray(estimate, dtype=float)
    if estimate.shape == design.sizes:
        return estimate
    return subtensor(estimate, design.level_sets)


def flmc(estimate, design: ActiveDesign, mode: int):
    """Factor-level ceiling: best estimate over active combinations containing each level.

    ``estimate`` may cover the full grid or only the active subtensor.
    Returns ``[(level, score), ...]`` for the active levels of ``mode``.
    """
    sub = _restricted(estimate, design)
    if sub.size == 0:
        raise InvalidArgument("empty active cross-product")
    if not 0 <= mode < sub.ndim:
        raise InvalidArgument(f"mode {mode} out of range")
    scores = np.moveaxis(sub, mode, 0).reshape(sub.shape[mode], -1).max(axis=1)
    return [(lv, float(s)) for lv, s in zip(design.level_sets[mode], scores)]


def prune_by_median(scores, keep=None, maximizer_level=None):
    """Keep the ``ceil(n/2)`` best-scoring levels.

    Ties at the cutoff favour ``maximizer_level`` and then smaller levels.
    """
    n = len(scores)
    if keep is None:
        keep = math.ceil(n / 2)
    ranked = sorted(scores, key=lambda ls: (-ls[1], ls[0] != maximizer_level, ls[0]))
    return sorted(lv for lv, _ in ranked[:keep])


def _pooled_noise_sd(raw, cells):
    ss, dof = 0.0, 0
    for c in cells:
        vals = raw.get(c)
        if vals is not None and len(vals) > 1:
            v = np.asarray(vals)
            ss += float(np.sum((v - v.mean()) ** 2))
            dof += len(v) - 1
    return math.sqrt(ss / dof) if dof else None


@dataclass
class RoundResult:
    design: ActiveDesign
    completion: CompletionResult
    validation_rmse: float | None
    draws: int


def tensor_stage_round(env, design: ActiveDesign, round_budget: int, ranks,
                       validation_fraction: float = 0.0, log: ObservationLog | None = None,
                       raw=None, rng=None, completion: CompletionConfig | None = None):
    """Sample, complete on the active subtensor, and halve every mode by FLMC.

    ``log`` (global coordinates) accumulates observations across rounds and
    ``raw`` keeps per-cell value lists for the noise-scale estimate; both are
    updated in place when supplied.
    """
    if round_budget < 1:
        raise InvalidArgument("round budget must be >= 1")
    if log is None:
        log = ObservationLog(env.shape)
    if raw is None:
        raw = {}
    if rng is None:
        rng = np.random.default_rng(0)
    pairs = env.draw_uniform(design, round_budget)
    for cell, value in pairs:
        log.add(cell, value)
        raw.setdefault(cell, []).append(value)

    sizes = design.sizes
    fit_ranks = tuple(min(int(r), d) for r, d in zip(ranks, sizes))
    config = completion or CompletionConfig(fit_ranks)
    config = replace(config, ranks=fit_ranks)
    local = log.restrict(design.level_sets)

    rmse = None
    if validation_fraction > 0:
        fresh = sorted({cell for cell, _ in pairs})
        n_hold = math.ceil(validation_fraction * len(fresh))
        if 0 < n_hold < len(local):
            pick = rng.choice(len(fresh), size=n_hold, replace=False)
            hold = [fresh[i] for i in sorted(pick)]
            maps = [{lv: j for j, lv in enumerate(s)} for s in design.level_sets]
            hold_local = [tuple(mp[i] for mp, i in zip(maps, c)) for c in hold]
            fit = complete(local.without(hold_local), config)
            resid = np.array([log.mean(c) - fit.estimate[hc] for c, hc in zip(hold, hold_local)])
            raw_rmse = float(np.sqrt(np.mean(resid ** 2)))
            scale = _pooled_noise_sd(raw, design.cells())
            if scale is None and len(resid) > 1:
                scale = float(np.std(resid, ddof=1))
            rmse = raw_rmse / scale if scale else raw_rmse

    result = complete(local, config)
    est = result.estimate
    best_local = np.unravel_index(int(np.argmax(est)), est.shape)
    new_sets = []
    for k in range(len(sizes)):
        if sizes[k] == 1:
            new_sets.append(design.level_sets[k])
            continue
        hint = design.level_sets[k][best_local[k]]
        new_sets.append(tuple(prune_by_median(flmc(est, design, k), maximizer_level=hint)))
    return RoundResult(ActiveDesign(tuple(new_sets), design.round + 1), result, rmse, len(pairs))


def sequential_halving(env, arms, budget: int, seed=None):
    """Fixed-budget sequential halving over ``arms`` (cells); returns the winner.

    Arm means accumulate across rounds.  When a round cannot afford one pull
    per surviving arm, its ``budget // L`` share is spent round-robin over the
    survivors in list order, starting from the head each round; arms never
    pulled rank below every pulled arm and ties go to the earlier arm.  The
    schedule is deterministic, so ``seed`` only names the call in logs.
    """
    arms = [tuple(a) for a in arms]
    if not arms:
        raise InvalidArgument("sequential halving needs at least one arm")
    k = len(arms)
    if k == 1:
        return arms[0]
    n_rounds = math.ceil(math.log2(k))
    sums = np.zeros(k)
    counts = np.zeros(k, dtype=int)
    survivors = list(range(k))
    for _ in range(n_rounds):
        per_arm = budget // (len(survivors) * n_rounds)
        if per_arm >= 1:
            for a in survivors:
                for _ in range(per_arm):
                    sums[a] += env.draw(arms[a])
                counts[a] += per_arm
        else:
            share = min(budget // n_rounds, env.remaining)
            for j in range(share):
                a = survivors[j % len(survivors)]
                sums[a] += env.draw(arms[a])
                counts[a] += 1
        means = np.divide(sums, counts, out=np.zeros(k), where=counts > 0)
        survivors.sort(key=lambda a: (counts[a] == 0, -means[a], arms[a]))
        survivors = sorted(survivors[: math.ceil(len(survivors) / 2)])
    return arms[survivors[0]]


@dataclass(frozen=True)
class TwoStageConfig:
    """Budget split and schedule for :func:`two_stage`.

    ``switch_round`` is a positive int or ``"adaptive"``.  In adaptive mode
    Stage I validates on a held-out ``validation_fraction`` of fresh cells and
    stops once the normalized RMSE fails to improve by ``tolerance`` for
    ``patience`` consecutive rounds.
    """

    total_budget: int
    stage1_fraction: float = 0.5
    switch_round: int | str = 2
    ranks: tuple = (2, 2, 2)
    validation_fraction: float | None = None
    tolerance: float = 0.02
    patience: int = 2
    seed: int = 0
    completion: CompletionConfig | None = None

    def __post_init__(self):
        if self.total_budget < 2:
            raise InvalidArgument("total budget must be >= 2")
        if not 0 < self.stage1_fraction < 1:
            raise InvalidArgument("stage1_fraction must lie in (0, 1)")
        if self.switch_round != "adaptive":
            if not isinstance(self.switch_round, (int, np.integer)) or self.switch_round < 1:
                raise InvalidArgument("switch_round must be >= 1 or 'adaptive'")

    @property
    def adaptive(self):
        return self.switch_round == "adaptive"

    @property
    def stage1_budget(self):
        return int(round(self.stage1_fraction * self.total_budget))

    @property
    def stage2_budget(self):
        return self.total_budget - self.stage1_budget

    def round_budgets(self, shape):
        """Equal split of the Stage-I budget, remainder to the first round."""
        n_rounds = max_rounds(shape) if self.adaptive else int(self.switch_round)
        base, extra = divmod(self.stage1_budget, n_rounds)
        return [base + (extra if i == 0 else 0) for i in range(n_rounds)]

    def alpha(self):
        if self.validation_fraction is not None:
            return self.validation_fraction
        return 0.1 if self.adaptive else 0.0


def max_rounds(shape):
    """Halving rounds needed to shrink every mode to a single level."""
    return max(1, max(math.ceil(math.log2(d)) for d in shape))


def surviving_sizes(shape, rounds):
    sizes = list(shape)
    for _ in range(rounds):
        sizes = [math.ceil(s / 2) for s in sizes]
    return tuple(sizes)


def two_stage(env, config: TwoStageConfig) -> PolicyOutcome:
    """Tensor screening with FLMC median pruning, then sequential halving."""
    start = env.draws
    rng = np.random.default_rng(derive_seed(config.seed, "two_stage"))
    design = ActiveDesign.full(env.shape)
    log = ObservationLog(env.shape)
    raw = {}
    alpha = config.alpha()
    trajectory = []
    rmses = []
    stalls = 0
    for n_round in config.round_budgets(env.shape):
        if design.size <= 1 or n_round < 1:
            break
        res = tensor_stage_round(env, design, n_round, config.ranks, alpha, log, raw, rng,
                                 config.completion)
        trajectory.append({
            "stage": 1,
            "round": design.round,
            "active_sizes": design.sizes,
            "budget": res.draws,
            "iterations": res.completion.iterations_used,
            "validation_rmse": res.validation_rmse,
        })
        design = res.design
        if config.adaptive and res.validation_rmse is not None:
            if rmses and res.validation_rmse >= (1 - config.tolerance) * rmses[-1]:
                stalls += 1
            else:
                stalls = 0
            rmses.append(res.validation_rmse)
            if stalls >= config.patience:
                break
    arms = design.cells()
    stage2 = config.total_budget - (env.draws - start)
    if stage2 < len(arms) and len(arms) > 1:
        warnings.warn(f"Stage-II budget {stage2} is below the {len(arms)} surviving arms",
                      RuntimeWarning, stacklevel=2)
    winner = sequential_halving(env, arms, stage2, seed=derive_seed(config.seed, "stage2"))
    trajectory.append({"stage": 2, "active_sizes": design.sizes, "arms": len(arms),
                       "budget": env.draws - start - sum(r["budget"] for r in trajectory)})
    return PolicyOutcome(winner, env.draws - start, trajectory)


def one_shot(env, budget: int, ranks, completion: CompletionConfig | None = None) -> PolicyOutcome:
    """Spend the whole budget on one uniform batch, complete once, take the argmax."""
    if budget < 1:
        raise InvalidArgument("budget must be >= 1")
    start = env.draws
    design = ActiveDesign.full(env.shape)
    log = ObservationLog(env.shape).extend(env.draw_uniform(design, budget))
    fit_ranks = tuple(min(int(r), d) for r, d in zip(ranks, env.shape))
    config = replace(completion, ranks=fit_ranks) if completion else CompletionConfig(fit_ranks)
    result = complete(log, config)
    trajectory = [{"stage": 1, "active_sizes": design.sizes, "budget": budget,
                   "iterations": result.iterations_used}]
    return PolicyOutcome(argmax_cell(result.estimate), env.draws - start, trajectory)


def vector_sh(env, budget: int, seed=None) -> PolicyOutcome:
    """Sequential halving with every cell of the grid as an independent arm."""
    if budget < 1:
        raise InvalidArgument("budget must be >= 1")
    start = env.draws
    arms = [tuple(int(i) for i in idx) for idx in np.ndindex(*env.shape)]
    if seed is None:
        seed = derive_seed(env.seed, "vector_sh")
    winner = sequential_halving(env, arms, budget, seed=seed)
    return PolicyOutcome(winner, env.draws - start, [{"stage": 2, "arms": len(arms), "budget": env.draws - start}])

"""Monte Carlo benchmark runner: policies x noise levels x budgets x trials.

Configs are plain text, one ``key = value`` per line, lists comma-separated,
``#`` starts a comment.  Every (policy, sigma, budget, trial) gets its own
environment seeded from ``derive_seed(base_seed, policy, sigma, budget,
trial)``, so any single row can be rerun in isolation.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import REPORTED_DF, degrees_of_freedom, simple_regret
from .environment import (Environment, GroundTruth, derive_seed, gen_additive, gen_cp,
                          gen_tucker, load_truth)
from .errors import InvalidArgument, ParseError
from .ingestion import fixture_truth
from .policies import TwoStageConfig, one_shot, two_stage, vector_sh

POLICIES = ("two_stage", "one_shot", "vector_sh")
TRUTH_KINDS = ("fixture", "tucker", "cp", "additive", "file")
CSV_HEADER = ["policy", "sigma", "budget", "trial", "seed", "regret",
              "selected_index", "draws_used", "wall_time_ms"]
STUDY_SIGMAS = (0.1, 0.3, 0.5, 0.7, 0.9)
STUDY_FRACTIONS = (0.3, 0.5, 0.7, 0.8, 0.9)
STUDY_MULTIPLIERS = (2, 5, 10, 20, 30, 50, 70, 100)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything :func:`run_experiment` needs.

    ``stage1_fractions`` holds either one fraction for every sigma or one per
    entry of ``sigma_grid``.  It is ignored (and must stay unset in config
    files) when ``switch_round`` is ``"adaptive"``.
    """

    sigma_grid: tuple
    budget_grid: tuple
    policies: tuple = POLICIES
    trials: int = 50
    base_seed: int = 0
    truth: str = "fixture"
    truth_path: str | None = None
    dims: tuple = (21, 10, 8)
    truth_ranks: tuple = (2, 2, 2)
    truth_seed: int = 0
    normalize: bool = True
    ranks: tuple = (2, 2, 2)
    stage1_fractions: tuple = (0.5,)
    switch_round: int | str = 2
    validation_fraction: float | None = None
    tolerance: float = 0.02
    patience: int = 2
    record_wall_time: bool = False

    def __post_init__(self):
        for name in ("sigma_grid", "budget_grid", "policies", "dims", "truth_ranks", "ranks",
                     "stage1_fractions"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "budget_grid", tuple(int(b) for b in self.budget_grid))
        object.__setattr__(self, "stage1_fractions", tuple(float(f) for f in self.stage1_fractions))
        if self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        if not self.sigma_grid or any(s < 0 for s in self.sigma_grid):
            raise InvalidArgument("sigma_grid must be a nonempty list of nonnegative values")
        if not self.budget_grid or any(b < 1 for b in self.budget_grid):
            raise InvalidArgument("budgets must be >= 1")
        unknown = [p for p in self.policies if p not in POLICIES]
        if not self.policies or unknown:
            raise InvalidArgument(f"policies must be a nonempty subset of {POLICIES}, got {unknown}")
        if self.truth not in TRUTH_KINDS:
            raise InvalidArgument(f"truth must be one of {TRUTH_KINDS}")
        if self.truth == "file" and not self.truth_path:
            raise InvalidArgument("truth = file needs truth_path")
        if len(self.stage1_fractions) not in (1, len(self.sigma_grid)):
            raise InvalidArgument("stage1_fractions needs one value or one per sigma")
        if any(not 0 < f < 1 for f in self.stage1_fractions):
            raise InvalidArgument("stage1 fractions must lie in (0, 1)")
        if self.switch_round != "adaptive" and int(self.switch_round) < 1:
            raise InvalidArgument("switch_round must be >= 1 or 'adaptive'")

    def stage1_fraction(self, sigma: float) -> float:
        if len(self.stage1_fractions) == 1:
            return self.stage1_fractions[0]
        return self.stage1_fractions[self.sigma_grid.index(sigma)]

    def two_stage_config(self, sigma: float, budget: int, seed: int) -> TwoStageConfig:
        return TwoStageConfig(budget, self.stage1_fraction(sigma), self.switch_round, self.ranks,
                              self.validation_fraction, self.tolerance, self.patience, seed)

    def to_text(self) -> str:
        """Config file text that parses back to an equal config."""
        def fmt(v):
            if isinstance(v, bool):
                return str(v).lower()
            if isinstance(v, tuple):
                return ",".join(fmt(x) for x in v)
            if isinstance(v, float):
                return repr(v)
            return str(v)

        items = [
            ("truth", self.truth), ("truth_path", self.truth_path), ("dims", self.dims),
            ("truth_ranks", self.truth_ranks), ("truth_seed", self.truth_seed),
            ("normalize", self.normalize), ("sigma_grid", self.sigma_grid),
            ("budget_grid", self.budget_grid), ("policies", self.policies),
            ("trials", self.trials), ("base_seed", self.base_seed), ("ranks", self.ranks),
            ("switch_round", self.switch_round),
            ("stage1_fractions", None if self.switch_round == "adaptive" else self.stage1_fractions),
            ("validation_fraction", self.validation_fraction), ("tolerance", self.tolerance),
            ("patience", self.patience), ("record_wall_time", self.record_wall_time),
        ]
        return "".join(f"{k} = {fmt(v)}\n" for k, v in items if v is not None)


def _ints(v):
    return tuple(int(x) for x in v.split(","))


def _floats(v):
    return tuple(float(x) for x in v.split(","))


def _bool(v):
    if v.lower() not in ("true", "false"):
        raise ValueError(f"expected true or false, got {v!r}")
    return v.lower() == "true"


def _switch(v):
    return "adaptive" if v == "adaptive" else int(v)


_KEYS = {
    "truth": str, "truth_path": str, "dims": _ints, "truth_ranks": _ints, "truth_seed": int,
    "normalize": _bool, "sigma_grid": _floats, "budget_grid": _ints,
    "policies": lambda v: tuple(x.strip() for x in v.split(",")), "trials": int,
    "base_seed": int, "ranks": _ints, "stage1_fractions": _floats, "switch_round": _switch,
    "validation_fraction": float, "tolerance": float, "patience": int,
    "record_wall_time": _bool,
}


def parse_config(text: str, path=None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ParseError("expected key = value", lineno, path)
        key, value = (x.strip() for x in s.split("=", 1))
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", lineno, path)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno, path)
        try:
            values[key] = _KEYS[key](value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno, path) from None
    if values.get("switch_round") == "adaptive" and "stage1_fractions" in values:
        raise InvalidArgument("stage1_fractions and switch_round = adaptive are mutually exclusive")
    for key in ("sigma_grid", "budget_grid"):
        if key not in values:
            raise InvalidArgument(f"config needs {key}")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def default_paper_config(trials: int = 50, base_seed: int = 0) -> ExperimentConfig:
    """Bundling study grid: five noise levels, eight budgets from 2 to 100 times df = 122."""
    return ExperimentConfig(
        sigma_grid=STUDY_SIGMAS,
        budget_grid=tuple(sorted(m * REPORTED_DF for m in STUDY_MULTIPLIERS)),
        policies=POLICIES,
        trials=trials,
        base_seed=base_seed,
        truth="fixture",
        dims=(21, 10, 8),
        ranks=(2, 2, 2),
        stage1_fractions=STUDY_FRACTIONS,
        switch_round=2,
    )


def build_truth(config: ExperimentConfig) -> GroundTruth:
    kind = config.truth
    if kind == "file":
        return load_truth(config.truth_path)
    if kind == "fixture":
        return fixture_truth(config.dims, config.truth_seed)
    if kind == "tucker":
        return gen_tucker(config.dims, config.truth_ranks, config.truth_seed, config.normalize)
    if kind == "cp":
        return gen_cp(config.dims, config.truth_ranks[0], config.truth_seed, normalize=config.normalize)
    return gen_additive(config.dims, config.truth_seed, config.normalize)


@dataclass
class ResultRow:
    policy: str
    sigma: float
    budget: int
    trial: int
    seed: int
    regret: float
    selected_index: tuple | None
    draws_used: int
    wall_time_ms: float
    error: str | None = None

    def key(self):
        return (self.policy, self.sigma, self.budget, self.trial)


def run_policy(policy: str, env: Environment, config: ExperimentConfig, sigma: float,
               budget: int, seed: int):
    if policy == "two_stage":
        return two_stage(env, config.two_stage_config(sigma, budget, seed))
    if policy == "one_shot":
        return one_shot(env, budget, config.ranks)
    return vector_sh(env, budget, seed=seed)


def run_experiment(config: ExperimentConfig, truth: GroundTruth | None = None,
                   progress=None) -> list:
    """One row per (policy, sigma, budget, trial), canonically sorted.

    A policy that raises yields a row with ``error`` set, ``regret`` NaN and
    no selected index; the sweep continues.
    """
    if truth is None:
        truth = build_truth(config)
    t = truth.tensor
    rows = []
    for policy in config.policies:
        for sigma in config.sigma_grid:
            for budget in config.budget_grid:
                for trial in range(config.trials):
                    seed = derive_seed(config.base_seed, policy, sigma, budget, trial)
                    env = Environment(t, sigma, budget, seed)
                    start = time.perf_counter()
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", RuntimeWarning)
                            outcome = run_policy(policy, env, config, sigma, budget, seed)
                    except Exception as exc:  # noqa: BLE001 - recorded as an error row
                        row = ResultRow(policy, sigma, budget, trial, seed, math.nan, None,
                                        env.draws, 0.0, f"{type(exc).__name__}: {exc}")
                    else:
                        ms = (time.perf_counter() - start) * 1e3 if config.record_wall_time else 0.0
                        row = ResultRow(policy, sigma, budget, trial, seed,
                                        simple_regret(t, outcome.selected), tuple(outcome.selected),
                                        outcome.draws_used, ms)
                    rows.append(row)
                    if progress is not None:
                        progress(row)
    rows.sort(key=ResultRow.key)
    return rows


def format_index(cell) -> str:
    return "-".join(str(int(i) + 1) for i in cell)


def parse_index(text: str) -> tuple:
    return tuple(int(x) - 1 for x in text.split("-"))


def _num(v) -> str:
    return repr(float(v))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.policy, _num(r.sigma), r.budget, r.trial, r.seed, _num(r.regret),
                    "error" if r.error else format_index(r.selected_index), r.draws_used,
                    f"{r.wall_time_ms:.3f}"])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    out = []
    for r in rows:
        out.append({
            "policy": r.policy, "sigma": r.sigma, "budget": r.budget, "trial": r.trial,
            "seed": r.seed, "regret": None if r.error else r.regret,
            "selected_index": None if r.error else format_index(r.selected_index),
            "draws_used": r.draws_used, "wall_time_ms": r.wall_time_ms, "error": r.error,
        })
    return json.dumps(out, indent=1, sort_keys=True) + "\n"


def read_rows(path) -> list:
    """Rows back from a CSV or JSON results file (by extension, CSV otherwise)."""
    path = Path(path)
    text = path.read_text()
    rows = []
    if path.suffix == ".json":
        for d in json.loads(text):
            idx = d["selected_index"]
            rows.append(ResultRow(d["policy"], float(d["sigma"]), int(d["budget"]), int(d["trial"]),
                                  int(d["seed"]), math.nan if d["regret"] is None else float(d["regret"]),
                                  None if idx is None else parse_index(idx), int(d["draws_used"]),
                                  float(d["wall_time_ms"]), d.get("error")))
        return rows
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)}", 1, str(path))
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(CSV_HEADER):
            raise ParseError(f"expected {len(CSV_HEADER)} fields", lineno, str(path))
        err = rec[6] == "error"
        rows.append(ResultRow(rec[0], float(rec[1]), int(rec[2]), int(rec[3]), int(rec[4]),
                              float(rec[5]), None if err else parse_index(rec[6]), int(rec[7]),
                              float(rec[8]), "error" if err else None))
    return rows


@dataclass
class SummaryRow:
    policy: str
    sigma: float
    budget: int
    trials: int
    errors: int
    mean_regret: float
    se_regret: float


def summarize(rows) -> list:
    """Mean regret and standard error per (policy, sigma, budget); error rows are counted apart."""
    groups = {}
    for r in rows:
        groups.setdefault((r.policy, r.sigma, r.budget), []).append(r)
    out = []
    for (policy, sigma, budget), members in sorted(groups.items()):
        regrets = np.array([r.regret for r in members if not r.error])
        n = len(regrets)
        if n == 0:
            mean = se = math.nan
        else:
            mean = float(regrets.mean())
            se = float(regrets.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append(SummaryRow(policy, sigma, budget, n, len(members) - n, mean, se))
    return out


def summary_to_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "sigma", "budget", "trials", "errors", "mean_regret", "se_regret"])
    for s in summary:
        w.writerow([s.policy, _num(s.sigma), s.budget, s.trials, s.errors,
                    _num(s.mean_regret), _num(s.se_regret)])
    return buf.getvalue()


def summary_to_json(summary) -> str:
    return json.dumps([s.__dict__ for s in summary], indent=1, sort_keys=True) + "\n"


def df_banner(config: ExperimentConfig) -> str:
    """Both df values for the configured instance, for run logs."""
    line = f"df_formula={degrees_of_freedom(config.dims, config.ranks)}"
    if tuple(config.dims) == (21, 10, 8) and tuple(config.ranks) == (2, 2, 2):
        line += f" df_reported={REPORTED_DF} (budget grid multiples use {REPORTED_DF})"
    return line

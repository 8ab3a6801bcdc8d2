"""Budgeted random-search over hyperparameter grids with k-fold CV.

The candidate stream is a pure function of (seed, space): uniform draws
from the grid cross-product, deduplicated, invalid combinations skipped.
A smaller budget therefore evaluates a prefix of a larger budget's
trials, and results do not depend on scheduling order. The selection
objective is the discretized circuit's cross-validated MSE, the same
quantity the final model is judged by.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional

import numpy as np

from .data import Dataset, default_fold_count, make_folds
from .errors import ConfigError
from .training import TrainConfig, train


@dataclass
class SearchSpace:
    tau_init: List[float] = field(default_factory=lambda: [1.0, 2.0])
    gamma: List[float] = field(default_factory=lambda: [0.9, 0.95])
    tau_min: List[float] = field(default_factory=lambda: [0.05, 0.02])
    learning_rate: List[float] = field(default_factory=lambda: [0.01, 0.03, 0.1])
    epochs: List[int] = field(default_factory=lambda: [30, 60, 100])
    layer_width: List[int] = field(default_factory=lambda: [16, 32, 64])
    n_logic_layers: List[int] = field(default_factory=lambda: [1, 2])
    thresholds_per_feature: List[int] = field(default_factory=lambda: [6, 10])
    subspace_size: List[int] = field(default_factory=lambda: [4, 8])

    def __post_init__(self):
        for f in fields(self):
            grid = getattr(self, f.name)
            if not isinstance(grid, (list, tuple)) or len(grid) == 0:
                raise ConfigError(f"search grid {f.name} must be nonempty")
            setattr(self, f.name, list(grid))

    def grid_sizes(self) -> List[int]:
        return [len(getattr(self, f.name)) for f in fields(self)]

    def total_combinations(self) -> int:
        out = 1
        for s in self.grid_sizes():
            out *= s
        return out

    def config_at(self, idx_tuple, base: TrainConfig) -> Optional[TrainConfig]:
        """TrainConfig for one grid point, or None if the combination is
        invalid (e.g. tau_min above tau_init)."""
        kw = {}
        for f, i in zip(fields(self), idx_tuple):
            kw[f.name] = getattr(self, f.name)[i]
        try:
            return replace(base, **kw)
        except ConfigError:
            return None

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_json(d: dict) -> "SearchSpace":
        known = {f.name for f in fields(SearchSpace)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown search-space keys: {sorted(unknown)}")
        defaults = SearchSpace()
        kw = {name: d.get(name, getattr(defaults, name)) for name in known}
        return SearchSpace(**kw)


def default_search_space() -> SearchSpace:
    return SearchSpace()


@dataclass
class TrialResult:
    index: int
    config: TrainConfig
    fold_mses: List[float]
    mean_cv_mse: float
    wall_time: float

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "config": self.config.to_json(),
            "fold_mses": self.fold_mses,
            "mean_cv_mse": self.mean_cv_mse,
            "wall_time": self.wall_time,
        }


def sample_configs(space: SearchSpace, budget: int, seed: int,
                   base: Optional[TrainConfig] = None) -> List[TrainConfig]:
    """First `budget` distinct valid grid points of the deterministic
    stream for `seed`; the whole (filtered) grid when budget covers it."""
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    base = base if base is not None else TrainConfig()
    sizes = space.grid_sizes()
    total = space.total_combinations()

    def enumerate_all():
        out = []
        for flat in range(total):
            idx = []
            rem = flat
            for s in reversed(sizes):
                idx.append(rem % s)
                rem //= s
            cfg = space.config_at(tuple(reversed(idx)), base)
            if cfg is not None:
                out.append(cfg)
        return out

    if budget >= total:
        return enumerate_all()

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    picked = []
    seen = set()
    attempts = 0
    cap = 200 * budget + 1000
    while len(picked) < budget and attempts < cap:
        attempts += 1
        idx = tuple(int(rng.integers(s)) for s in sizes)
        if idx in seen:
            continue
        seen.add(idx)
        cfg = space.config_at(idx, base)
        if cfg is not None:
            picked.append(cfg)
    if len(picked) < budget:
        # sparse valid set: top up deterministically from full enumeration
        have = {json.dumps(c.to_json(), sort_keys=True) for c in picked}
        for cfg in enumerate_all():
            if len(picked) >= budget:
                break
            key = json.dumps(cfg.to_json(), sort_keys=True)
            if key not in have:
                have.add(key)
                picked.append(cfg)
    return picked


def _trial_seed(seed: int, trial: int, fold: int) -> int:
    return int(np.random.SeedSequence((seed, trial, fold)).generate_state(1)[0])


def run_search(dataset: Dataset, space: SearchSpace, budget: int, seed: int,
               base_config: Optional[TrainConfig] = None,
               on_trial=None):
    """Evaluate sampled configs by k-fold CV; returns (best, all trials).

    Ties on mean CV MSE go to the lowest trial index. on_trial, when
    given, is called with each TrialResult as it completes.
    """
    if dataset.n_rows < 2:
        raise ConfigError("need at least 2 rows to cross-validate")
    configs = sample_configs(space, budget, seed, base_config)
    k = default_fold_count(dataset.n_rows)
    plan = make_folds(dataset, k, seed=_trial_seed(seed, 0, 0))
    trials = []
    for t, cfg in enumerate(configs):
        t0 = time.perf_counter()
        fold_mses = []
        for f in range(k):
            train_idx, val_idx = plan.split_indices(f)
            cfg_f = replace(cfg, seed=_trial_seed(seed, t + 1, f + 1))
            _, report = train(dataset.subset(train_idx), cfg_f,
                              val_dataset=dataset.subset(val_idx))
            fold_mses.append(float(report.val_mse))
        trial = TrialResult(
            index=t,
            config=cfg,
            fold_mses=fold_mses,
            mean_cv_mse=float(np.mean(fold_mses)),
            wall_time=time.perf_counter() - t0,
        )
        trials.append(trial)
        if on_trial is not None:
            on_trial(trial)
    return select_best(trials), trials


def select_best(trials: List[TrialResult]) -> TrialResult:
    """Lowest mean CV MSE; ties go to the earliest trial index."""
    if not trials:
        raise ConfigError("no trials to select from")
    best = trials[0]
    for trial in trials[1:]:
        if trial.mean_cv_mse < best.mean_cv_mse:
            best = trial
    return best


def final_fit(dataset: Dataset, config: TrainConfig, seed: int):
    """Retrain on the full training data with the winning config."""
    cfg = replace(config, seed=seed)
    params, _ = train(dataset, cfg)
    return params

"""Training: initialization, Adam over the seven parameter groups,
temperature annealing, and metric evaluation.

All parameters train jointly in one phase by default. The two_phase flag
reproduces the ablation schedule: first half of the epochs updates gate
logits, thresholds and coefficients (W, b, s, C) with link parameters
frozen, second half updates the link side (U, V, S).
"""

from __future__ import annotations

import heapq
import json
import sys
from dataclasses import dataclass, field, fields
from typing import List, Optional, Union

import numpy as np

from .data import CATEGORICAL, Dataset
from .errors import ConfigError, DataError, DivergenceError
from .network import (
    LogicLayerParams,
    NetworkParams,
    STEConfig,
    SumParams,
    ThresholdParams,
    network_backward,
    network_forward_soft,
)

PER_EPOCH = "per_epoch"
PER_BATCH = "per_batch"


@dataclass
class TrainConfig:
    tau_init: float = 1.0
    gamma: float = 0.95
    tau_min: float = 0.05
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    decay_granularity: str = PER_EPOCH
    ste: STEConfig = field(default_factory=STEConfig.all_on)
    two_phase: bool = False
    concat_inputs: bool = True
    subspace_size: int = 8
    thresholds_per_feature: int = 6
    n_logic_layers: int = 2
    layer_width: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.tau_init <= 0 or self.tau_min <= 0:
            raise ConfigError("temperatures must be positive")
        if self.tau_min > self.tau_init:
            raise ConfigError("tau_min must not exceed tau_init")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.decay_granularity not in (PER_EPOCH, PER_BATCH):
            raise ConfigError(f"unknown decay granularity {self.decay_granularity!r}")
        if self.subspace_size not in (4, 8, 16):
            raise ConfigError("subspace_size must be one of 4, 8, 16")
        if self.thresholds_per_feature < 1:
            raise ConfigError("thresholds_per_feature must be >= 1")
        if self.n_logic_layers < 0:
            raise ConfigError("n_logic_layers must be >= 0")
        if self.layer_width < 1:
            raise ConfigError("layer_width must be >= 1")

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_json() if isinstance(v, STEConfig) else v
        return out

    @staticmethod
    def from_json(d: dict) -> "TrainConfig":
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "ste" in kw and isinstance(kw["ste"], dict):
            kw["ste"] = STEConfig.from_json(kw["ste"])
        return TrainConfig(**kw)


@dataclass
class LossReport:
    train_mse: List[float]
    val_mse: Optional[float]
    tau_trajectory: List[float]

    def to_json(self) -> dict:
        return {
            "train_mse": self.train_mse,
            "val_mse": self.val_mse,
            "tau_trajectory": self.tau_trajectory,
        }


@dataclass
class Metrics:
    """r2 is None when the evaluation targets have zero variance."""

    r2: Optional[float]
    rmse: float
    mae: float

    def to_json(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "mae": self.mae}


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.size == 0 or p.shape != t.shape:
        raise DataError("predictions and targets must be equal-length and nonempty")
    d = p - t
    return float(np.mean(d * d))


def decay_temperature(tau: float, gamma: float, tau_min: float) -> float:
    return max(tau * gamma, tau_min)


# ---------------------------------------------------------------------------
# initialization


def _tree_split_biases(x: np.ndarray, y: np.ndarray, max_leaves: int) -> list:
    """Split thresholds of a 1-D variance-reduction regression tree.

    Best-first growth to at most max_leaves leaves, so at most
    max_leaves - 1 thresholds come back (fewer when splits stop paying).
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    n = len(xs)
    ps = np.concatenate([[0.0], np.cumsum(ys)])
    ps2 = np.concatenate([[0.0], np.cumsum(ys * ys)])
    boundary = np.flatnonzero(xs[1:] != xs[:-1]) + 1  # xs[p-1] < xs[p]

    def sse(lo, hi):
        cnt = hi - lo
        s = ps[hi] - ps[lo]
        return (ps2[hi] - ps2[lo]) - s * s / cnt

    def best_split(lo, hi):
        p = boundary[(boundary > lo) & (boundary < hi)]
        if len(p) == 0:
            return None
        cl = p - lo
        cr = hi - p
        sl = ps[p] - ps[lo]
        sr = ps[hi] - ps[p]
        s2l = ps2[p] - ps2[lo]
        s2r = ps2[hi] - ps2[p]
        red = sse(lo, hi) - (s2l - sl * sl / cl) - (s2r - sr * sr / cr)
        i = int(np.argmax(red))  # ties: lowest position
        if red[i] <= 1e-12:
            return None
        return float(red[i]), int(p[i])

    splits = []
    heap = []
    counter = 0
    cand = best_split(0, n)
    if cand is not None:
        heapq.heappush(heap, (-cand[0], counter, 0, n, cand[1]))
    while heap and len(splits) < max_leaves - 1:
        _, _, lo, hi, p = heapq.heappop(heap)
        splits.append((xs[p - 1] + xs[p]) / 2.0)
        for clo, chi in ((lo, p), (p, hi)):
            c = best_split(clo, chi)
            if c is not None:
                counter += 1
                heapq.heappush(heap, (-c[0], counter, clo, chi, c[1]))
    return splits


def _pad_biases(found: list, k: int) -> np.ndarray:
    """Top up tree thresholds with evenly spaced interior points of [0, 1]."""
    vals = sorted(set(found))
    m = k
    while len(vals) < k:
        pool = np.linspace(0.0, 1.0, m + 2)[1:-1]
        for q in pool:
            if len(vals) >= k:
                break
            if q not in vals:
                vals.append(float(q))
        vals_set = set(vals)
        vals = sorted(vals_set)
        m = 2 * m + 1
    return np.array(sorted(vals)[:k], dtype=np.float64)


def init_params(dataset: Dataset, config: TrainConfig) -> NetworkParams:
    """Architecture and parameter initialization.

    Slopes start at 2. Continuous-feature biases come from a per-feature
    regression tree on the training rows (padded with uniform quantiles);
    one-hot features get a single threshold starting at 0.5. Logit matrices
    draw i.i.d. N(0, 0.1^2); sum logits start at 0.
    """
    feats = dataset.features
    if feats.shape[1] == 0:
        raise DataError("dataset has no feature columns")
    distinct = [len(np.unique(feats[:, j])) for j in range(feats.shape[1])]
    if max(distinct) < 2:
        raise DataError("every feature is constant; nothing to threshold")

    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0)))
    biases = []
    slopes = []
    source = []
    k = config.thresholds_per_feature
    for j, (_, kind, _) in enumerate(dataset.feature_origin):
        if kind == CATEGORICAL:
            biases.append(np.array([0.5]))
        else:
            found = _tree_split_biases(feats[:, j], dataset.target, k)
            biases.append(_pad_biases(found, k))
        cnt = len(biases[-1])
        slopes.append(np.full(cnt, 2.0))
        source.extend([j] * cnt)
    thr = ThresholdParams(
        bias=np.concatenate(biases),
        slope=np.concatenate(slopes),
        source=np.array(source, dtype=np.int64),
    )

    t = thr.n_neurons
    layers = []
    prev = t
    width = config.layer_width
    for i in range(config.n_logic_layers):
        d = prev + t if (config.concat_inputs and i > 0) else prev
        g = min(config.subspace_size, 16)
        l = min(config.subspace_size, d)
        gate_subset = np.stack(
            [np.sort(rng.choice(16, size=g, replace=False)) for _ in range(width)]
        )
        link_a = np.stack(
            [np.sort(rng.choice(d, size=l, replace=False)) for _ in range(width)]
        )
        link_b = np.stack(
            [np.sort(rng.choice(d, size=l, replace=False)) for _ in range(width)]
        )
        layers.append(
            LogicLayerParams(
                W=rng.normal(0.0, 0.1, (width, 16)),
                U=rng.normal(0.0, 0.1, (width, d)),
                V=rng.normal(0.0, 0.1, (width, d)),
                gate_subset=gate_subset,
                link_subset_a=link_a,
                link_subset_b=link_b,
            )
        )
        prev = width
    sum_p = SumParams(S=np.zeros(prev), C=rng.normal(0.0, 0.1, prev))
    return NetworkParams(
        threshold=thr,
        logic_layers=layers,
        sum=sum_p,
        concat_inputs=config.concat_inputs,
        ste=config.ste,
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# optimizer and loop


class Adam:
    """Standard adaptive moment estimation, one state slot per group."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}

    def step(self, arrays: dict, grads: dict, keys=None):
        for key in (arrays if keys is None else keys):
            a = arrays[key]
            g = grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(a)
                self.v[key] = np.zeros_like(a)
                self.t[key] = 0
            self.t[key] += 1
            t = self.t[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / (1.0 - self.beta1 ** t)
            vhat = v / (1.0 - self.beta2 ** t)
            a -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _phase_keys(params: NetworkParams):
    gate_side = ["threshold.bias", "threshold.slope", "sum.C"]
    link_side = ["sum.S"]
    for i in range(len(params.logic_layers)):
        gate_side.append(f"layer{i}.W")
        link_side.append(f"layer{i}.U")
        link_side.append(f"layer{i}.V")
    return gate_side, link_side


def train(dataset: Dataset, config: TrainConfig,
          val_dataset: Optional[Dataset] = None,
          verbose: bool = False,
          initial_params: Optional[NetworkParams] = None):
    """Mini-batch training per the annealed relaxation recipe.

    Returns (NetworkParams, LossReport). The params carry final_tau, used
    by discretization and by soft evaluation. val_mse, when a validation
    set is given, is the MSE of the discretized circuit on it
    (standardized units), matching the model-selection objective.
    initial_params, when given, replaces the built-in initialization (the
    architecture fields of config are ignored then); the object is
    updated in place.
    """
    if dataset.n_rows == 0:
        raise DataError("empty training dataset")
    params = initial_params if initial_params is not None \
        else init_params(dataset, config)
    arrays = params.param_arrays()
    adam = Adam(config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    gate_keys, link_keys = _phase_keys(params)
    phase1_epochs = (config.epochs + 1) // 2

    feats = dataset.features
    target = dataset.target
    n = dataset.n_rows
    tau = config.tau_init
    train_mse = []
    taus = []
    for epoch in range(config.epochs):
        if config.two_phase:
            keys = gate_keys if epoch < phase1_epochs else link_keys
        else:
            keys = None
        perm = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            x = feats[idx]
            y = target[idx]
            pred, tape = network_forward_soft(x, params, tau, config.ste)
            diff = pred - y
            loss = float(np.mean(diff * diff))
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}, tau {tau:g}"
                )
            grads = network_backward(tape, 2.0 * diff / len(y))
            adam.step(arrays, grads, keys)
            sq_sum += loss * len(y)
            if config.decay_granularity == PER_BATCH:
                tau = decay_temperature(tau, config.gamma, config.tau_min)
        if config.decay_granularity == PER_EPOCH:
            tau = decay_temperature(tau, config.gamma, config.tau_min)
        train_mse.append(sq_sum / n)
        taus.append(tau)
        if verbose:
            print(json.dumps({"epoch": epoch, "mse": train_mse[-1], "tau": tau}),
                  file=sys.stdout, flush=True)

    params.final_tau = tau
    val = None
    if val_dataset is not None:
        from .circuit import discretize, evaluate_circuit

        circ = discretize(params, tau, schema=val_dataset.schema,
                          feature_names=val_dataset.feature_names)
        val = mse_loss(evaluate_circuit(val_dataset.features, circ),
                       val_dataset.target)
    return params, LossReport(train_mse=train_mse, val_mse=val, tau_trajectory=taus)


def predict_standardized(obj, features: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Standardized-unit predictions for NetworkParams or HardCircuit."""
    from .circuit import HardCircuit, evaluate_circuit

    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if isinstance(obj, HardCircuit):
        return evaluate_circuit(features, obj)
    if isinstance(obj, NetworkParams):
        tau = obj.final_tau if obj.final_tau is not None else 1.0
        out = np.empty(features.shape[0], dtype=np.float64)
        for start in range(0, features.shape[0], chunk):
            sl = slice(start, start + chunk)
            out[sl] = network_forward_soft(features[sl], obj, tau, obj.ste)[0]
        return out
    raise ConfigError(f"cannot predict with object of type {type(obj).__name__}")


def evaluate(obj, dataset: Dataset) -> Metrics:
    """R^2 / RMSE / MAE on de-standardized predictions (original units).

    r2 comes back as None when the dataset's targets have zero variance.
    """
    if dataset.n_rows == 0:
        raise DataError("empty evaluation dataset")
    pred = predict_standardized(obj, dataset.features)
    y_pred = pred * dataset.target_std + dataset.target_mean
    y_true = dataset.original_target()
    resid = y_pred - y_true
    rmse = float(np.sqrt(np.mean(resid * resid)))
    mae = float(np.mean(np.abs(resid)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        return Metrics(r2=None, rmse=rmse, mae=mae)
    r2 = 1.0 - float(np.sum(resid * resid)) / ss_tot
    return Metrics(r2=r2, rmse=rmse, mae=mae)

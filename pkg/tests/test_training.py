"""Trainer tests: initialization oracles, optimizer plumbing, annealing
schedule arithmetic, descent on synthetic data, and metric examples."""

import numpy as np
import pytest

from logicreg.circuit import (
    ConstNode,
    HardCircuit,
    SumLink,
    ThresholdNode,
)
from logicreg.data import (
    CATEGORICAL,
    CONTINUOUS,
    TARGET,
    ColumnSchema,
    Dataset,
    RawTable,
    preprocess,
)
from logicreg.errors import ConfigError, DataError, DivergenceError
from logicreg.training import (
    PER_BATCH,
    TrainConfig,
    _pad_biases,
    _tree_split_biases,
    decay_temperature,
    evaluate,
    init_params,
    mse_loss,
    train,
)


def make_dataset(x_cols: dict, y: np.ndarray, categorical=()) -> Dataset:
    names = list(x_cols) + ["y"]
    kinds = [CATEGORICAL if n in categorical else CONTINUOUS for n in x_cols]
    kinds.append(TARGET)
    columns = [np.asarray(x_cols[n]) if n not in categorical else list(x_cols[n])
               for n in x_cols]
    columns.append(np.asarray(y, dtype=np.float64))
    raw = RawTable.from_columns(names, kinds, columns)
    return preprocess(raw, np.ones(raw.n_rows, dtype=bool))


def step_dataset(n=256, edge=0.5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n)
    y = np.where(x >= edge, 3.0, -1.0)
    return make_dataset({"x": x}, y)


# ---------------------------------------------------------------------------
# temperature and loss helpers


def test_decay_temperature_examples():
    assert decay_temperature(1.0, 0.95, 0.05) == 0.95
    assert decay_temperature(0.052, 0.95, 0.05) == 0.05  # clamped at the floor
    assert decay_temperature(0.3, 1.0, 0.05) == 0.3


def test_mse_loss_value_and_errors():
    assert mse_loss([1.0, 2.0], [0.0, 0.0]) == 2.5
    with pytest.raises(DataError):
        mse_loss([], [])
    with pytest.raises(DataError):
        mse_loss([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# threshold initialization


def brute_force_best_split(x, y):
    """Independent oracle: maximize variance reduction over all cut points."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)

    def sse(v):
        return np.sum((v - v.mean()) ** 2) if len(v) else 0.0

    best, best_p = None, None
    for p in range(1, n):
        if xs[p - 1] == xs[p]:
            continue
        red = sse(ys) - sse(ys[:p]) - sse(ys[p:])
        if best is None or red > best + 1e-12:
            best, best_p = red, p
    if best is None or best <= 1e-12:
        return None
    return (xs[best_p - 1] + xs[best_p]) / 2.0


def test_tree_first_split_matches_brute_force():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, 80)
        y = np.sin(6 * x) + 0.1 * rng.normal(size=80)
        got = _tree_split_biases(x, y, max_leaves=2)
        want = brute_force_best_split(x, y)
        assert len(got) == 1
        assert got[0] == pytest.approx(want, abs=1e-12)


def test_tree_splits_on_step_edges():
    x = np.linspace(0.0, 1.0, 101)
    y = np.where(x >= 0.3, 1.0, 0.0) + np.where(x >= 0.7, 2.0, 0.0)
    splits = _tree_split_biases(x, y, max_leaves=3)
    assert sorted(splits) == pytest.approx([0.295, 0.695], abs=1e-12)
    # a pure step needs exactly one split; further cuts pay nothing
    just_step = _tree_split_biases(x, np.where(x >= 0.3, 1.0, 0.0), 6)
    assert just_step == pytest.approx([0.295], abs=1e-12)


def test_tree_constant_target_no_splits():
    x = np.linspace(0, 1, 50)
    assert _tree_split_biases(x, np.full(50, 2.0), 6) == []
    assert _tree_split_biases(np.full(50, 0.5), x, 6) == []  # constant feature


def test_tree_respects_leaf_budget():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, 200)
    y = rng.normal(size=200)
    for leaves in (2, 4, 7):
        assert len(_tree_split_biases(x, y, leaves)) <= leaves - 1


def test_pad_biases_fills_with_uniform_interior_points():
    got = _pad_biases([], 6)
    assert np.allclose(got, np.linspace(0, 1, 8)[1:-1])
    with_half = _pad_biases([0.5], 6)
    assert len(with_half) == 6
    assert 0.5 in with_half
    assert len(set(with_half.tolist())) == 6
    assert np.all((with_half > 0) & (with_half < 1))
    assert np.all(np.diff(with_half) > 0)
    # oversupply keeps the k smallest in sorted order
    many = _pad_biases([0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8], 3)
    assert many.tolist() == [0.1, 0.2, 0.3]


def test_init_params_shapes_and_values():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 120)
    cats = [["lo", "mid", "hi"][i % 3] for i in range(120)]
    y = np.where(x >= 0.4, 2.0, 0.0) + (np.array(cats) == "hi")
    ds = make_dataset({"x": x, "grp": cats}, y, categorical=("grp",))
    cfg = TrainConfig(thresholds_per_feature=6, n_logic_layers=2,
                      layer_width=8, subspace_size=4, seed=7)
    params = init_params(ds, cfg)

    # one continuous feature (6 thresholds) + 3 one-hot columns (1 each)
    assert params.threshold.n_neurons == 9
    assert np.all(params.threshold.slope == 2.0)
    onehot = [j for j, (_, kind, _) in enumerate(ds.feature_origin)
              if kind == CATEGORICAL]
    for j in onehot:
        mask = params.threshold.source == j
        assert mask.sum() == 1
        assert params.threshold.bias[mask][0] == 0.5
    cont_bias = params.threshold.bias[params.threshold.source == 0]
    assert len(cont_bias) == 6
    assert np.all((cont_bias > 0) & (cont_bias < 1))

    assert len(params.logic_layers) == 2
    l0, l1 = params.logic_layers
    assert l0.U.shape == (8, 9)
    assert l1.U.shape == (8, 17)  # concat: 8 previous + 9 thresholds
    for layer in (l0, l1):
        for sub in (layer.gate_subset, layer.link_subset_a, layer.link_subset_b):
            assert sub.shape[1] == 4
            assert np.all(np.diff(sub, axis=1) > 0)  # ascending, unique
    assert np.all(params.sum.S == 0.0)
    assert params.sum.C.shape == (8,)

    again = init_params(ds, cfg)
    for key, arr in params.param_arrays().items():
        assert np.array_equal(arr, again.param_arrays()[key]), key


def test_init_params_all_constant_features_rejected():
    ds = make_dataset({"x": np.full(20, 0.7)}, np.arange(20.0))
    with pytest.raises(DataError):
        init_params(ds, TrainConfig())


def test_init_params_constant_feature_gets_fallback_biases():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, 60)
    ds = make_dataset({"x": x, "flat": np.full(60, 3.0)}, x * 2)
    params = init_params(ds, TrainConfig(thresholds_per_feature=4))
    flat_bias = params.threshold.bias[params.threshold.source == 1]
    assert np.allclose(flat_bias, np.linspace(0, 1, 6)[1:-1])


# ---------------------------------------------------------------------------
# config plumbing


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(tau_min=2.0, tau_init=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(subspace_size=5)
    with pytest.raises(ConfigError):
        TrainConfig(decay_granularity="sometimes")
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_train_config_json_roundtrip():
    cfg = TrainConfig(epochs=12, two_phase=True, subspace_size=4)
    back = TrainConfig.from_json(cfg.to_json())
    assert back == cfg
    with pytest.raises(ConfigError):
        TrainConfig.from_json({"epochs": 5, "momentum": 0.9})


# ---------------------------------------------------------------------------
# training loop mechanics


def small_config(**kw):
    base = dict(epochs=3, batch_size=32, n_logic_layers=1, layer_width=8,
                subspace_size=4, thresholds_per_feature=4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_train_lr_zero_keeps_params_and_still_decays_tau():
    ds = step_dataset(64)
    cfg = small_config(learning_rate=0.0, epochs=3)
    params, report = train(ds, cfg)
    baseline = init_params(ds, cfg)
    for key, arr in params.param_arrays().items():
        assert np.array_equal(arr, baseline.param_arrays()[key]), key
    assert report.tau_trajectory == pytest.approx(
        [0.95, 0.95 ** 2, 0.95 ** 3])
    assert len(report.train_mse) == 3
    assert params.final_tau == report.tau_trajectory[-1]


def test_decay_granularity_batch_vs_epoch():
    ds = step_dataset(64)
    per_epoch = small_config(epochs=1, gamma=0.5, tau_min=1e-9)
    _, rep_e = train(ds, per_epoch)
    assert rep_e.tau_trajectory == [0.5]
    per_batch = small_config(epochs=1, gamma=0.5, tau_min=1e-9,
                             decay_granularity=PER_BATCH)
    _, rep_b = train(ds, per_batch)  # 64 rows / batch 32 = 2 decays
    assert rep_b.tau_trajectory == [0.25]


def test_train_is_deterministic():
    ds = step_dataset(96)
    cfg = small_config(epochs=4)
    p1, r1 = train(ds, cfg)
    p2, r2 = train(ds, cfg)
    for key, arr in p1.param_arrays().items():
        assert np.array_equal(arr, p2.param_arrays()[key]), key
    assert r1.train_mse == r2.train_mse
    assert r1.tau_trajectory == r2.tau_trajectory


def test_train_loss_descends_and_fits_step():
    descended = 0
    finals = []
    for seed in range(3):
        ds = step_dataset(256, seed=seed)
        cfg = small_config(epochs=40, learning_rate=0.05, seed=seed)
        params, report = train(ds, cfg)
        if report.train_mse[-1] < report.train_mse[0]:
            descended += 1
        finals.append(report.train_mse[-1])
    assert descended == 3
    assert min(finals) < 0.05


def test_two_phase_freezes_link_side_first():
    ds = step_dataset(96)
    cfg = small_config(epochs=1, two_phase=True, learning_rate=0.05)
    params, _ = train(ds, cfg)
    baseline = init_params(ds, cfg)
    # a single epoch stays inside phase one: link parameters untouched
    for key in ("sum.S", "layer0.U", "layer0.V"):
        assert np.array_equal(params.param_arrays()[key],
                              baseline.param_arrays()[key]), key
    moved = [key for key in ("threshold.bias", "sum.C", "layer0.W")
             if not np.array_equal(params.param_arrays()[key],
                                   baseline.param_arrays()[key])]
    assert moved, "phase one should move gate-side parameters"

    cfg2 = small_config(epochs=4, two_phase=True, learning_rate=0.05)
    params2, _ = train(ds, cfg2)
    link_moved = [key for key in ("sum.S", "layer0.U", "layer0.V")
                  if not np.array_equal(params2.param_arrays()[key],
                                        baseline.param_arrays()[key])]
    assert link_moved, "phase two should move link-side parameters"


def test_divergent_loss_raises():
    ds = step_dataset(64)
    cfg = small_config(epochs=2, learning_rate=1e308)
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        train(ds, cfg)


def test_train_reports_validation_mse():
    ds = step_dataset(128)
    val = step_dataset(64, seed=9)
    cfg = small_config(epochs=5)
    _, report = train(ds, cfg, val_dataset=val)
    assert report.val_mse is not None
    assert np.isfinite(report.val_mse) and report.val_mse >= 0.0


# ---------------------------------------------------------------------------
# evaluation metrics


def two_point_dataset(targets):
    """Two rows, one feature valued 0 and 1; target schema mean 1, std 1."""
    schema = [
        ColumnSchema(name="x", kind=CONTINUOUS, vmin=0.0, vmax=1.0),
        ColumnSchema(name="y", kind=TARGET, mean=1.0, std=1.0),
    ]
    std_target = np.asarray(targets, dtype=np.float64) - 1.0
    return Dataset(
        features=np.array([[0.0], [1.0]]),
        target=std_target,
        schema=schema,
        feature_names=["x"],
        feature_origin=[("x", CONTINUOUS, None)],
    )


def plus_minus_one_circuit():
    """Standardized output is -1 on x<0.5 and +1 on x>=0.5."""
    nodes = [ThresholdNode(feature=0, bias=0.5, sign=1), ConstNode(value=1)]
    links = [SumLink(node=0, coef=2.0, index=0), SumLink(node=1, coef=-1.0, index=1)]
    return HardCircuit(nodes=nodes, links=links, sum_width=2, theta=0.8,
                       final_tau=0.05, target_mean=1.0, target_std=1.0)


def test_evaluate_zero_variance_target():
    metrics = evaluate(plus_minus_one_circuit(), two_point_dataset([1.0, 1.0]))
    assert metrics.r2 is None
    assert metrics.rmse == 1.0
    assert metrics.mae == 1.0


def test_evaluate_perfect_predictions():
    metrics = evaluate(plus_minus_one_circuit(), two_point_dataset([0.0, 2.0]))
    assert metrics.r2 == 1.0
    assert metrics.rmse == 0.0
    assert metrics.mae == 0.0


def test_evaluate_mean_predictor_scores_zero():
    # no links: standardized prediction 0, i.e. predicting the target mean
    circ = HardCircuit(nodes=[], links=[], sum_width=4, theta=0.8,
                       final_tau=0.05, target_mean=1.0, target_std=1.0)
    metrics = evaluate(circ, two_point_dataset([0.0, 2.0]))
    assert metrics.r2 == 0.0
    assert metrics.rmse == 1.0

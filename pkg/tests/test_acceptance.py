"""End-to-end acceptance checks, one verdict line per criterion.

Slow full-pipeline checks: gate-algebra and gradient oracles, exactness
of the soft/hard correspondence after training, simplification
equivalence at scale, tuned accuracy runs on the bundled benchmark
surrogates, cost-model ranges, ablation direction checks, and byte-level
determinism of the training command. Verdict lines print unbuffered so
progress is visible mid-run; expect the accuracy criterion to take
several minutes per dataset on one core.
"""

import dataclasses
import time

import numpy as np

import surrogates
from logicreg.circuit import (
    ConstNode,
    GateNode,
    HardCircuit,
    SumLink,
    ThresholdNode,
    discretize,
    evaluate_circuit,
    simplify,
)
from logicreg.cli import main as cli_main
from logicreg.costs import count_ops
from logicreg.data import RawTable, preprocess, split
from logicreg.gates import HARD_TABLE, soft_gate_eval, soft_gate_partials
from logicreg.network import STEConfig, network_backward, network_forward_soft
from logicreg.search import SearchSpace, final_fit, run_search
from logicreg.training import TrainConfig, evaluate, train
from netgen import loss_and_dpred, max_rel_err, numerical_grads, random_network


def _verdict(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {num}: {'PASS' if ok else 'FAIL'} - {detail}",
              flush=True)
    assert ok, f"criterion {num} failed: {detail}"


def _note(capsys, text):
    with capsys.disabled():
        print(f"\n  {text}", end="", flush=True)


def test_criterion_1_gate_algebra(capsys):
    t0 = time.perf_counter()
    corner_checks = 0
    corners_ok = True
    for k in range(16):
        for a in (0, 1):
            for b in (0, 1):
                v = float(soft_gate_eval(k, float(a), float(b)))
                corners_ok &= v == float(HARD_TABLE[k, a, b])
                corner_checks += 1

    rng = np.random.default_rng(7)
    pts = rng.uniform(0.05, 0.95, size=(100, 2))
    h = 1e-6
    worst = 0.0
    for k in range(16):
        a, b = pts[:, 0], pts[:, 1]
        da, db = soft_gate_partials(k, a, b)
        fd_a = (soft_gate_eval(k, a + h, b) - soft_gate_eval(k, a - h, b)) / (2 * h)
        fd_b = (soft_gate_eval(k, a, b + h) - soft_gate_eval(k, a, b - h)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(da - fd_a))),
                    float(np.max(np.abs(db - fd_b))))
    dt = time.perf_counter() - t0
    ok = corners_ok and corner_checks == 64 and worst <= 1e-6 and dt < 1.0
    _verdict(capsys, 1, ok,
             f"64 exact corner matches, max partial-derivative error "
             f"{worst:.2e} <= 1e-6, {dt:.2f}s < 1s")


def test_criterion_2_gradient_correctness(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(20):
        params = random_network(
            rng,
            n_features=int(rng.integers(3, 13)),
            thresholds_per_feature=int(rng.integers(1, 3)),
            n_layers=int(rng.integers(1, 3)),
            width=int(rng.integers(4, 17)),
            subspace=int(rng.integers(3, 9)),
            concat=bool(rng.integers(0, 2)),
            ste=STEConfig.all_off(),
        )
        n_feat = int(params.threshold.source.max()) + 1
        X = rng.uniform(0, 1, size=(8, n_feat))
        Y = rng.normal(size=8)
        tau = float(rng.uniform(0.3, 2.0))
        _, d, tape = loss_and_dpred(params, X, Y, tau, params.ste)
        analytic = network_backward(tape, d)
        numeric = numerical_grads(params, X, Y, tau, params.ste)
        worst = max(worst, max_rel_err(analytic, numeric))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and dt < 60.0
    _verdict(capsys, 2, ok,
             f"20 random networks, worst relative gradient error "
             f"{worst:.2e} <= 1e-4, {dt:.1f}s < 60s")


def _binary_table(rng, n_rows, n_features):
    cols = [rng.integers(0, 2, n_rows).astype(np.float64)
            for _ in range(n_features)]
    cols.append(rng.normal(size=n_rows))
    names = [f"x{j}" for j in range(n_features)] + ["y"]
    kinds = ["continuous"] * n_features + ["target"]
    return RawTable.from_columns(names, kinds, cols)


def test_criterion_3_soft_hard_exactness(capsys):
    rng = np.random.default_rng(23)
    mismatches = 0
    for i in range(10):
        n_feat = int(rng.integers(3, 7))
        params = random_network(
            rng,
            n_features=n_feat,
            thresholds_per_feature=int(rng.integers(1, 3)),
            n_layers=int(rng.integers(1, 3)),
            width=int(rng.integers(4, 13)),
            subspace=int(rng.integers(3, 9)),
            concat=bool(rng.integers(0, 2)),
            ste=STEConfig.all_on(),
            binary_consistent_sum=True,
        )
        raw = _binary_table(rng, 160, n_feat)
        ds = preprocess(raw, np.ones(raw.n_rows, dtype=bool))
        cfg = TrainConfig(tau_init=0.01, gamma=1.0, tau_min=0.01,
                          epochs=4, learning_rate=0.02, batch_size=32,
                          ste=STEConfig.all_on(), seed=100 + i)
        params, _ = train(ds, cfg, initial_params=params)
        assert params.final_tau == 0.01

        X = rng.integers(0, 2, size=(1000, n_feat)).astype(np.float64)
        soft, _ = network_forward_soft(X, params, params.final_tau, params.ste)
        circ = discretize(params, params.final_tau)
        hard = evaluate_circuit(X, circ)
        if not np.array_equal(soft, hard):
            mismatches += 1
    ok = mismatches == 0
    _verdict(capsys, 3, ok,
             "10 trained toy networks at tau=0.01, all STE on: soft forward "
             f"== discretized hard forward on 1000 binary inputs, "
             f"{mismatches} mismatched networks")


def _random_atom_circuit(rng, n_atoms, n_gates, n_links):
    """Random layered circuit with one threshold atom per input feature,
    so sweeping feature assignments sweeps atom assignments."""
    nodes = []
    for j in range(n_atoms):
        nodes.append(ThresholdNode(feature=j, bias=0.5,
                                   sign=1 if rng.uniform() < 0.8 else -1))
    if rng.uniform() < 0.4:
        nodes.append(ConstNode(value=int(rng.integers(0, 2))))
    n_inputs = len(nodes)
    for i in range(n_gates):
        lo = len(nodes)
        nodes.append(GateNode(k=int(rng.integers(0, 16)),
                              a=int(rng.integers(0, lo)),
                              b=int(rng.integers(0, lo)),
                              layer=0 if lo == n_inputs else 1))
    width = 2 * n_links
    idx = rng.choice(width, size=n_links, replace=False)
    links = []
    for j in sorted(int(v) for v in idx):
        links.append(SumLink(node=int(rng.integers(0, len(nodes))),
                             coef=float(rng.normal()), index=j))
    return HardCircuit(nodes=nodes, links=links, sum_width=width,
                       theta=0.8, final_tau=0.01,
                       target_mean=float(rng.normal()),
                       target_std=float(rng.uniform(0.5, 2.0)))


def _all_binary(n):
    rows = 1 << n
    out = np.zeros((rows, n), dtype=np.float64)
    for j in range(n):
        out[:, j] = (np.arange(rows) >> j) & 1
    return out


def test_criterion_4_simplification_equivalence(capsys):
    rng = np.random.default_rng(31)
    mismatches = 0
    for i in range(50):
        n_atoms = int(rng.integers(2, 15))
        circ = _random_atom_circuit(rng, n_atoms,
                                    n_gates=int(rng.integers(2, 30)),
                                    n_links=int(rng.integers(1, 9)))
        X = _all_binary(n_atoms)
        if not np.array_equal(evaluate_circuit(X, circ),
                              evaluate_circuit(X, simplify(circ))):
            mismatches += 1
    for i in range(8):
        n_atoms = int(rng.integers(16, 25))
        circ = _random_atom_circuit(rng, n_atoms,
                                    n_gates=int(rng.integers(20, 60)),
                                    n_links=int(rng.integers(4, 13)))
        X = rng.integers(0, 2, size=(10_000, n_atoms)).astype(np.float64)
        if not np.array_equal(evaluate_circuit(X, circ),
                              evaluate_circuit(X, simplify(circ))):
            mismatches += 1
    ok = mismatches == 0
    _verdict(capsys, 4, ok,
             "50 circuits (<= 14 atoms) exhaustively swept + 8 larger on "
             f"10^4 samples: {mismatches} mismatched circuits")


def _space(**kw):
    return SearchSpace(**{**dict(tau_init=[1.0], gamma=[0.95],
                                 tau_min=[0.05]), **kw})


# per-dataset grids sized for a 32-trial budget on one core
ACCURACY_PLANS = {
    "yacht": (_space(learning_rate=[0.01, 0.02], epochs=[200, 300],
                     layer_width=[64], n_logic_layers=[1],
                     thresholds_per_feature=[10], subspace_size=[8, 16]),
              TrainConfig(), 0.98),
    "energy": (_space(learning_rate=[0.02, 0.03], epochs=[150, 200],
                      layer_width=[32, 64], n_logic_layers=[1],
                      thresholds_per_feature=[10], subspace_size=[8, 16]),
               TrainConfig(), 0.99),
    "concrete": (_space(learning_rate=[0.02, 0.05], epochs=[60, 100],
                        layer_width=[16, 32], n_logic_layers=[1, 2],
                        thresholds_per_feature=[6], subspace_size=[8]),
                 TrainConfig(), 0.82),
    "ccpp": (_space(learning_rate=[0.05, 0.1], epochs=[40, 60],
                    layer_width=[16, 32], n_logic_layers=[1],
                    thresholds_per_feature=[6, 10], subspace_size=[8]),
             TrainConfig(batch_size=64), 0.92),
}


def test_criterion_5_accuracy(capsys):
    results = []
    for name, (space, base, floor) in ACCURACY_PLANS.items():
        raw, _, source = surrogates.get_table(name)
        r2s = []
        for seed in (0, 1, 2):
            tr, te = split(raw, 0.25, seed=seed)
            best, _ = run_search(tr, space, budget=32, seed=seed,
                                 base_config=base)
            params = final_fit(tr, best.config, seed=seed)
            circ = discretize(params, params.final_tau, schema=tr.schema,
                              feature_names=tr.feature_names,
                              feature_origin=tr.feature_origin)
            r2s.append(evaluate(circ, te).r2)
        mean = float(np.mean(r2s))
        results.append((name, mean, floor, source))
        _note(capsys, f"{name}: mean test R2 {mean:.4f} "
                      f"(floor {floor}, seeds {[f'{r:.4f}' for r in r2s]}, {source})")
    ok = all(mean >= floor for _, mean, floor, _ in results)
    summary = ", ".join(f"{n} {m:.3f}>={f}" for n, m, f, _ in results)
    _verdict(capsys, 5, ok, f"budget 32, 3 seeds: {summary}")


def test_criterion_6_cost_ranges(capsys):
    plans = [
        ("insurance", TrainConfig(epochs=40, layer_width=24, n_logic_layers=2,
                                  subspace_size=8, thresholds_per_feature=6,
                                  learning_rate=0.03, seed=0),
         1_000, 60_000),
        ("yacht", TrainConfig(epochs=200, layer_width=64, n_logic_layers=1,
                              subspace_size=8, thresholds_per_feature=10,
                              learning_rate=0.02, seed=0),
         2_000, 170_000),
    ]
    details = []
    ok = True
    for name, cfg, lo, hi in plans:
        raw, _, _ = surrogates.get_table(name)
        tr, te = split(raw, 0.25, seed=0)
        params, _ = train(tr, cfg)
        circ = simplify(discretize(params, params.final_tau, schema=tr.schema,
                                   feature_names=tr.feature_names,
                                   feature_origin=tr.feature_origin))
        total = count_ops(circ).total_ops
        ok &= lo <= total <= hi
        details.append(f"{name} {total} OPs in [{lo}, {hi}]")
    _verdict(capsys, 6, ok, "trained simplified circuits: " + "; ".join(details))


def test_criterion_7_ablation_directions(capsys):
    raw, _, _ = surrogates.get_table("parkinsons")
    tr, te = split(raw, 0.25, seed=0)
    base = TrainConfig(learning_rate=0.02, epochs=100, n_logic_layers=3)

    def mean_r2(cfg):
        r2s = []
        for s in (0, 1, 2):
            params, _ = train(tr, dataclasses.replace(cfg, seed=s))
            circ = discretize(params, params.final_tau, schema=tr.schema,
                              feature_names=tr.feature_names,
                              feature_origin=tr.feature_origin)
            r2s.append(evaluate(circ, te).r2)
        return float(np.mean(r2s))

    full = mean_r2(base)
    _note(capsys, f"default config mean R2 {full:.4f}")
    no_sched = mean_r2(dataclasses.replace(base, gamma=1.0, tau_min=1.0))
    _note(capsys, f"no temperature schedule mean R2 {no_sched:.4f}")
    no_concat = mean_r2(dataclasses.replace(base, concat_inputs=False))
    _note(capsys, f"no input concatenation mean R2 {no_concat:.4f}")
    ok = no_sched < full and no_concat < full
    _verdict(capsys, 7, ok,
             f"3 seeds: schedule off {full:.3f}->{no_sched:.3f}, "
             f"concat off {full:.3f}->{no_concat:.3f}, both reduce mean R2")


def test_criterion_8_byte_determinism(capsys, tmp_path):
    csv_path = tmp_path / "table.csv"
    surrogates.write_csv(surrogates.yacht_like(0), str(csv_path))
    args = ["train", "--data", str(csv_path), "--target", "resistance",
            "--seed", "5", "--epochs", "60", "--width", "16", "--layers", "1",
            "--subspace", "8", "--thresholds-per-feature", "6", "--lr", "0.05"]
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main(args + ["--out", str(out)]) == 0
        outs.append(out)
    model_same = (outs[0] / "model.json").read_bytes() == \
                 (outs[1] / "model.json").read_bytes()
    metrics_same = (outs[0] / "metrics.json").read_bytes() == \
                   (outs[1] / "metrics.json").read_bytes()
    _verdict(capsys, 8, model_same and metrics_same,
             f"repeated cmd_train with the same seed: model.json byte-identical "
             f"{model_same}, metrics.json byte-identical {metrics_same}")

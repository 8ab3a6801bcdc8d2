"""Compilation of trained parameters into a discrete logic circuit,
plus simplification, rule extraction, and DOT export.

A HardCircuit is a flat, topologically ordered node list (threshold
comparisons, constants, gates) and a list of weighted sum links. Each link
remembers its original position in the sum layer; evaluation scatters
link products into a fixed-width buffer and reduces it with the same
zero-padded tree as the soft forward, so a discretized circuit, its
simplified form, and the STE soft pass can be compared for exact float
equality rather than closeness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import CATEGORICAL, CONTINUOUS, TARGET, ColumnSchema
from .errors import ConfigError
from .gates import (
    COEFFS,
    GATE_COSTS,
    GATE_FORMULAS,
    GATE_NAMES,
    HARD_TABLE,
    SWAP_MAP,
    USES_A,
    USES_B,
)
from .network import (
    NetworkParams,
    _selected_columns,
    sigmoid,
    tree_sum,
)


@dataclass
class ThresholdNode:
    feature: int   # encoded feature column
    bias: float
    sign: int      # +1: bit = [x >= bias]; -1: bit = [x <= bias]


@dataclass
class ConstNode:
    value: int     # 0 or 1


@dataclass
class GateNode:
    k: int
    a: int         # node id, must precede this node
    b: int
    layer: int     # originating logic layer, kept for cost breakdown


@dataclass
class SumLink:
    node: int
    coef: float
    index: int     # original position in the sum layer


@dataclass
class HardCircuit:
    nodes: List[object]
    links: List[SumLink]
    sum_width: int
    theta: float
    final_tau: float
    target_mean: float = 0.0
    target_std: float = 1.0
    feature_names: Optional[List[str]] = None
    feature_origin: Optional[list] = None
    schema: Optional[List[ColumnSchema]] = None
    meta: dict = field(default_factory=dict)

    def validate(self):
        for i, node in enumerate(self.nodes):
            if isinstance(node, GateNode):
                if not (0 <= node.a < i and 0 <= node.b < i):
                    raise ConfigError(f"gate node {i} breaks topological order")
                if not 0 <= node.k < 16:
                    raise ConfigError(f"gate node {i} has invalid gate index")
        for link in self.links:
            if not 0 <= link.node < len(self.nodes):
                raise ConfigError("sum link references a missing node")
            if not 0 <= link.index < self.sum_width:
                raise ConfigError("sum link index out of range")

    def n_gate_nodes(self) -> int:
        return sum(isinstance(n, GateNode) for n in self.nodes)


# ---------------------------------------------------------------------------
# discretize


def discretize(params: NetworkParams, tau_final: float,
               schema: Optional[List[ColumnSchema]] = None,
               feature_names: Optional[list] = None,
               feature_origin: Optional[list] = None,
               meta: Optional[dict] = None) -> HardCircuit:
    """Collapse soft choices to discrete ones.

    Thresholds become comparisons (out-of-range biases fold to constants by
    the sign of the slope), logic neurons take their argmax gate and links,
    and sum links survive iff sigmoid(S/tau_final) >= theta. Coefficients
    stay floating point.
    """
    if tau_final <= 0:
        raise ConfigError("tau_final must be positive")
    nodes: List[object] = []
    const_ids = {}

    def const_node(v: int) -> int:
        if v not in const_ids:
            nodes.append(ConstNode(value=v))
            const_ids[v] = len(nodes) - 1
        return const_ids[v]

    thr = params.threshold
    thr_ids = []
    for i in range(thr.n_neurons):
        b = float(thr.bias[i])
        s = float(thr.slope[i])
        if s == 0.0:
            thr_ids.append(const_node(1))      # Heaviside(0) = 1
        elif b < 0.0:
            thr_ids.append(const_node(1 if s > 0 else 0))
        elif b > 1.0:
            thr_ids.append(const_node(0 if s > 0 else 1))
        else:
            nodes.append(ThresholdNode(feature=int(thr.source[i]), bias=b,
                                       sign=1 if s > 0 else -1))
            thr_ids.append(len(nodes) - 1)

    prev_ids = thr_ids
    for li, layer in enumerate(params.logic_layers):
        in_ids = prev_ids if li == 0 else (
            prev_ids + thr_ids if params.concat_inputs else prev_ids
        )
        col_a = _selected_columns(
            np.take_along_axis(layer.U, layer.link_subset_a, axis=1),
            layer.link_subset_a,
        )
        col_b = _selected_columns(
            np.take_along_axis(layer.V, layer.link_subset_b, axis=1),
            layer.link_subset_b,
        )
        k_sel = _selected_columns(
            np.take_along_axis(layer.W, layer.gate_subset, axis=1),
            layer.gate_subset,
        )
        out_ids = []
        for h in range(layer.out_dim):
            nodes.append(GateNode(k=int(k_sel[h]), a=in_ids[int(col_a[h])],
                                  b=in_ids[int(col_b[h])], layer=li))
            out_ids.append(len(nodes) - 1)
        prev_ids = out_ids

    gate = sigmoid(params.sum.S / tau_final)
    links = [
        SumLink(node=prev_ids[j], coef=float(params.sum.C[j]), index=j)
        for j in range(params.sum.in_dim)
        if gate[j] >= params.sum.theta
    ]

    target_mean, target_std = 0.0, 1.0
    if schema is not None:
        for c in schema:
            if c.kind == TARGET:
                target_mean, target_std = float(c.mean), float(c.std)
    circ = HardCircuit(
        nodes=nodes,
        links=links,
        sum_width=params.sum.in_dim,
        theta=params.sum.theta,
        final_tau=float(tau_final),
        target_mean=target_mean,
        target_std=target_std,
        feature_names=list(feature_names) if feature_names is not None else None,
        feature_origin=[tuple(o) for o in feature_origin] if feature_origin else None,
        schema=schema,
        meta=dict(meta or {}),
    )
    circ.meta.setdefault("widths", params.widths)
    if params.seed is not None:
        circ.meta.setdefault("seed", params.seed)
    circ.validate()
    return circ


# ---------------------------------------------------------------------------
# evaluation


def evaluate_circuit(features: np.ndarray, circ: HardCircuit) -> np.ndarray:
    """Standardized-unit predictions: Boolean node sweep + one weighted sum."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = x.shape[0]
    vals: List[np.ndarray] = []
    for node in circ.nodes:
        if isinstance(node, ThresholdNode):
            col = x[:, node.feature]
            bit = (col >= node.bias) if node.sign > 0 else (col <= node.bias)
            vals.append(bit.astype(np.float64))
        elif isinstance(node, ConstNode):
            vals.append(np.full(n, float(node.value)))
        else:
            c = COEFFS[node.k]
            a = vals[node.a]
            b = vals[node.b]
            vals.append(c[0] + c[1] * a + c[2] * b + c[3] * (a * b))
    buf = np.zeros((n, circ.sum_width), dtype=np.float64)
    for link in circ.links:
        buf[:, link.index] = link.coef * vals[link.node]
    return tree_sum(buf)


def predict_original_units(features: np.ndarray, circ: HardCircuit) -> np.ndarray:
    return evaluate_circuit(features, circ) * circ.target_std + circ.target_mean


def eval_on_atom_bits(circ: HardCircuit, atom_bits: np.ndarray) -> np.ndarray:
    """Evaluate with threshold nodes forced to given bits (atoms in node order).

    atom_bits is [n_samples, n_threshold_nodes]; constants keep their value.
    Used by the equivalence oracles, which sweep atom assignments directly.
    """
    atom_bits = np.atleast_2d(np.asarray(atom_bits, dtype=np.float64))
    n = atom_bits.shape[0]
    vals: List[np.ndarray] = []
    atom_pos = 0
    for node in circ.nodes:
        if isinstance(node, ThresholdNode):
            vals.append(atom_bits[:, atom_pos])
            atom_pos += 1
        elif isinstance(node, ConstNode):
            vals.append(np.full(n, float(node.value)))
        else:
            c = COEFFS[node.k]
            a = vals[node.a]
            b = vals[node.b]
            vals.append(c[0] + c[1] * a + c[2] * b + c[3] * (a * b))
    buf = np.zeros((n, circ.sum_width), dtype=np.float64)
    for link in circ.links:
        buf[:, link.index] = link.coef * vals[link.node]
    return tree_sum(buf)


def count_atoms(circ: HardCircuit) -> int:
    return sum(isinstance(n, ThresholdNode) for n in circ.nodes)


# ---------------------------------------------------------------------------
# simplify


def _resolve(alias: list, i: int) -> int:
    while alias[i] != i:
        alias[i] = alias[alias[i]]
        i = alias[i]
    return i


_UNARY_KIND = {
    (0, 0): ("const", 0),
    (0, 1): ("wire", None),
    (1, -1): ("not", None),
    (1, 0): ("const", 1),
}


def _unary_reduction(c0: float, cx: float):
    """Classify a gate restricted to one varying input by its multilinear
    restriction value = c0 + cx * x on the binary domain."""
    return _UNARY_KIND[(int(c0), int(cx))]


def simplify(circuit: HardCircuit) -> HardCircuit:
    """Constant folding, identity absorption, CSE, then dead-node removal,
    iterated to a fixpoint. Sum links keep their order, positions, and
    coefficients, so predictions are preserved to the last bit."""
    nodes = [
        ThresholdNode(n.feature, n.bias, n.sign) if isinstance(n, ThresholdNode)
        else ConstNode(n.value) if isinstance(n, ConstNode)
        else GateNode(n.k, n.a, n.b, n.layer)
        for n in circuit.nodes
    ]
    alias = list(range(len(nodes)))

    def become_const(i: int, v: int):
        nodes[i] = ConstNode(value=v)

    def become_not(i: int, src: int, layer: int):
        nodes[i] = GateNode(k=12, a=src, b=src, layer=layer)

    changed = True
    while changed:
        changed = False
        seen = {}
        for i, node in enumerate(nodes):
            if alias[i] != i:
                continue
            if isinstance(node, GateNode):
                a = _resolve(alias, node.a)
                b = _resolve(alias, node.b)
                k = node.k
                # orient single-input gates onto the a slot
                if not USES_A[k] and USES_B[k]:
                    k = int(SWAP_MAP[k])
                    a, b = b, a
                if not USES_B[k]:
                    b = a
                if (k, a, b) != (node.k, node.a, node.b):
                    node.k, node.a, node.b = k, a, b
                    changed = True

                c = COEFFS[k]
                na, nb = nodes[a], nodes[b]
                if isinstance(na, ConstNode) and isinstance(nb, ConstNode):
                    become_const(i, int(HARD_TABLE[k, na.value, nb.value]))
                    changed = True
                    continue
                if isinstance(na, ConstNode):
                    kind, v = _unary_reduction(c[0] + c[1] * na.value,
                                               c[2] + c[3] * na.value)
                    changed = True
                    if kind == "const":
                        become_const(i, v)
                    elif kind == "wire":
                        alias[i] = b
                    else:
                        become_not(i, b, node.layer)
                    continue
                if isinstance(nb, ConstNode):
                    kind, v = _unary_reduction(c[0] + c[2] * nb.value,
                                               c[1] + c[3] * nb.value)
                    changed = True
                    if kind == "const":
                        become_const(i, v)
                    elif kind == "wire":
                        alias[i] = a
                    else:
                        become_not(i, a, node.layer)
                    continue
                if a == b:
                    c0 = c[0]
                    cx = c[1] + c[2] + c[3]
                    if (int(c0), int(cx)) in _UNARY_KIND:
                        kind, v = _unary_reduction(c0, cx)
                        if kind == "const":
                            become_const(i, v)
                            changed = True
                            continue
                        if kind == "wire":
                            alias[i] = a
                            changed = True
                            continue
                        if kind == "not" and k != 12:
                            become_not(i, a, node.layer)
                            changed = True
                            continue
                if k == 12 and isinstance(na, GateNode) and na.k == 12 \
                        and alias[a] == a:
                    alias[i] = _resolve(alias, na.a)  # double negation
                    changed = True
                    continue

            # structural sharing (applies to every node kind)
            node = nodes[i]
            if isinstance(node, GateNode):
                if node.a > node.b:
                    key = (int(SWAP_MAP[node.k]), node.b, node.a)
                else:
                    key = (node.k, node.a, node.b)
            elif isinstance(node, ThresholdNode):
                key = ("thr", node.feature, node.bias, node.sign)
            else:
                key = ("const", node.value)
            first = seen.get(key)
            if first is None:
                seen[key] = i
            elif first != i:
                alias[i] = first
                changed = True

    # re-point links through aliases
    links = [
        SumLink(node=_resolve(alias, l.node), coef=l.coef, index=l.index)
        for l in circuit.links
    ]

    # dead-node elimination: walk real dependencies from the links
    live = np.zeros(len(nodes), dtype=bool)
    stack = [l.node for l in links]
    while stack:
        i = stack.pop()
        if live[i]:
            continue
        live[i] = True
        node = nodes[i]
        if isinstance(node, GateNode):
            if USES_A[node.k]:
                stack.append(node.a)
            if USES_B[node.k]:
                stack.append(node.b)

    remap = -np.ones(len(nodes), dtype=np.int64)
    new_nodes = []
    for i, node in enumerate(nodes):
        if not live[i]:
            continue
        remap[i] = len(new_nodes)
        if isinstance(node, GateNode):
            a = int(remap[node.a]) if USES_A[node.k] else None
            b = int(remap[node.b]) if USES_B[node.k] else None
            if a is None:
                a = b if b is not None else 0
            if b is None:
                b = a
            new_nodes.append(GateNode(k=node.k, a=a, b=b, layer=node.layer))
        else:
            new_nodes.append(node)
    new_links = [
        SumLink(node=int(remap[l.node]), coef=l.coef, index=l.index)
        for l in links
    ]
    out = HardCircuit(
        nodes=new_nodes,
        links=new_links,
        sum_width=circuit.sum_width,
        theta=circuit.theta,
        final_tau=circuit.final_tau,
        target_mean=circuit.target_mean,
        target_std=circuit.target_std,
        feature_names=circuit.feature_names,
        feature_origin=circuit.feature_origin,
        schema=circuit.schema,
        meta=dict(circuit.meta),
    )
    out.validate()
    return out


# ---------------------------------------------------------------------------
# rule extraction


@dataclass
class RuleSet:
    """Weighted Boolean rules plus intercept, in original target units.

    Evaluation delegates to the source circuit, so RuleSet predictions are
    bit-identical to circuit predictions by construction.
    """

    rules: List[tuple]      # (expression text, weight = C_j * target_std)
    intercept: float        # target mean
    circuit: HardCircuit

    def evaluate(self, features: np.ndarray) -> np.ndarray:
        return predict_original_units(features, self.circuit)

    def to_text(self) -> str:
        lines = [f"intercept: {self.intercept:+.6g}"]
        for expr, weight in self.rules:
            lines.append(f"{weight:+.6g} * [{expr}]")
        return "\n".join(lines) + "\n"


def _atom_text(circ: HardCircuit, node: ThresholdNode) -> str:
    name = None
    origin = None
    if circ.feature_names is not None and node.feature < len(circ.feature_names):
        name = circ.feature_names[node.feature]
    if circ.feature_origin is not None and node.feature < len(circ.feature_origin):
        origin = circ.feature_origin[node.feature]
    if name is None:
        name = f"x{node.feature}"
    if origin is not None:
        col, kind, cat = origin
        if kind == CATEGORICAL:
            if node.sign > 0 and 0.0 < node.bias <= 1.0:
                return f"{col} = {cat}"
            if node.sign < 0 and 0.0 <= node.bias < 1.0:
                return f"{col} != {cat}"
        elif kind == CONTINUOUS and circ.schema is not None:
            for c in circ.schema:
                if c.kind == CONTINUOUS and c.name == col:
                    raw = c.vmin + node.bias * (c.vmax - c.vmin)
                    op = ">=" if node.sign > 0 else "<="
                    return f"{col} {op} {raw:.6g}"
    op = ">=" if node.sign > 0 else "<="
    return f"{name} {op} {node.bias:.6g}"


def _expr_text(circ: HardCircuit, i: int, memo: dict) -> str:
    if i in memo:
        return memo[i]
    node = circ.nodes[i]
    if isinstance(node, ThresholdNode):
        out = _atom_text(circ, node)
    elif isinstance(node, ConstNode):
        out = "true" if node.value else "false"
    else:
        a = _expr_text(circ, node.a, memo)
        b = _expr_text(circ, node.b, memo)
        out = GATE_FORMULAS[node.k].format(a=a, b=b)
    memo[i] = out
    return out


def extract_rules(circ: HardCircuit) -> RuleSet:
    """One rule per retained sum link; weights are de-standardized."""
    memo = {}
    rules = [
        (_expr_text(circ, link.node, memo), link.coef * circ.target_std)
        for link in circ.links
    ]
    return RuleSet(rules=rules, intercept=circ.target_mean, circuit=circ)


# ---------------------------------------------------------------------------
# DOT export


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(circ: HardCircuit) -> str:
    """Graphviz rendering: feature-threshold boxes, gate diamonds, and
    coefficient-labeled edges into the output node."""
    lines = [
        "digraph circuit {",
        "  rankdir=LR;",
        '  output [shape=ellipse, style=filled, fillcolor="lightgrey", '
        f'label="output\\nintercept {circ.target_mean:+.4g}"];',
    ]
    referenced = set()
    for link in circ.links:
        referenced.add(link.node)
    for i, node in enumerate(circ.nodes):
        if isinstance(node, GateNode):
            referenced.add(node.a)
            referenced.add(node.b)
    for i, node in enumerate(circ.nodes):
        if isinstance(node, ThresholdNode):
            label = _dot_escape(_atom_text(circ, node))
            lines.append(
                f'  n{i} [shape=box, style=filled, fillcolor="lightyellow", '
                f'label="{label}"];'
            )
        elif isinstance(node, ConstNode):
            lines.append(f'  n{i} [shape=box, label="{node.value}"];')
        else:
            lines.append(f'  n{i} [shape=diamond, label="{GATE_NAMES[node.k]}"];')
    for i, node in enumerate(circ.nodes):
        if isinstance(node, GateNode):
            asym = SWAP_MAP[node.k] != node.k
            if USES_A[node.k]:
                lab = ' [label="a"]' if asym else ""
                lines.append(f"  n{node.a} -> n{i}{lab};")
            if USES_B[node.k]:
                lab = ' [label="b"]' if asym else ""
                lines.append(f"  n{node.b} -> n{i}{lab};")
    for link in circ.links:
        w = link.coef * circ.target_std
        lines.append(f'  n{link.node} -> output [label="{w:+.4g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"

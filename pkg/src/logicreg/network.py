"""Network parameter containers plus soft/hard forward passes and the
exact reverse-mode backward for the fixed three-stage architecture:

    features -> ThresholdLayer -> LogicLayer* -> SumLayer -> prediction

Soft (training) semantics per neuron:
  threshold:  sigmoid(s * (x - b) / tau)
  logic:      a = sum_j softmax(U_i/tau)_j x_j  (b likewise with V),
              y = sum_k softmax(W_i/tau)_k * SoftLogic_k(a, b)
  sum:        y = sum_j sigmoid(S_j/tau) * C_j * x_j

Subspace restriction: only logits inside each neuron's allowed subset are
gathered into the softmax, so excluded entries receive exactly zero
probability and exactly zero gradient.

Straight-through estimators swap the forward value for the discrete one
(Heaviside bit, argmax one-hot) while the backward pass differentiates the
smooth expression at the forward-evaluated activations.

The final weighted sum is computed with a fixed zero-padded binary-tree
reduction (tree_sum). Every evaluation route in the package sums in this
one order, which is what makes soft-vs-discretized and simplified-vs-raw
comparisons bit-exact rather than merely close.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConfigError
from .gates import COEFFS, soft_gate_eval, hard_gate_eval  # noqa: F401 (re-export)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable sigmoid; saturates to exact 0.0 / 1.0 in float64."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    out[neg] = ez / (1.0 + ez)
    return out


def softmax_rows(logits: np.ndarray, tau: float) -> np.ndarray:
    """Row-stable softmax(logits / tau) over the last axis."""
    z = logits / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def tree_sum(products: np.ndarray) -> np.ndarray:
    """Sum [B, M] rows with a zero-padded power-of-two binary tree.

    The tree shape depends only on the padded width, so two routes that
    place identical values (or exact zeros) at identical link positions
    produce identical floats.
    """
    b, m = products.shape
    if m == 0:
        return np.zeros(b, dtype=np.float64)
    size = 1 << (m - 1).bit_length()
    if size != m:
        buf = np.zeros((b, size), dtype=np.float64)
        buf[:, :m] = products
    else:
        buf = products
    while buf.shape[1] > 1:
        buf = buf[:, 0::2] + buf[:, 1::2]
    return buf[:, 0].copy()


@dataclass
class STEConfig:
    """Straight-through switches: threshold sigmoid, and the three
    selection softmaxes of every logic layer (switched as one site)."""

    threshold: bool = True
    select: bool = True

    @staticmethod
    def all_on() -> "STEConfig":
        return STEConfig(True, True)

    @staticmethod
    def all_off() -> "STEConfig":
        return STEConfig(False, False)

    def to_json(self) -> dict:
        return {"threshold": self.threshold, "select": self.select}

    @staticmethod
    def from_json(d: dict) -> "STEConfig":
        return STEConfig(bool(d["threshold"]), bool(d["select"]))


@dataclass
class ThresholdParams:
    bias: np.ndarray     # [T]
    slope: np.ndarray    # [T]
    source: np.ndarray   # [T] feature column per neuron

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.slope = np.asarray(self.slope, dtype=np.float64)
        self.source = np.asarray(self.source, dtype=np.int64)
        if not (self.bias.shape == self.slope.shape == self.source.shape):
            raise ConfigError("threshold parameter vectors must align")

    @property
    def n_neurons(self) -> int:
        return self.bias.shape[0]


@dataclass
class LogicLayerParams:
    W: np.ndarray              # [H, 16] gate logits
    U: np.ndarray              # [H, D] link-a logits
    V: np.ndarray              # [H, D] link-b logits
    gate_subset: np.ndarray    # [H, g] allowed gate indices, ascending
    link_subset_a: np.ndarray  # [H, l] allowed input indices, ascending
    link_subset_b: np.ndarray  # [H, l]

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        self.gate_subset = np.asarray(self.gate_subset, dtype=np.int64)
        self.link_subset_a = np.asarray(self.link_subset_a, dtype=np.int64)
        self.link_subset_b = np.asarray(self.link_subset_b, dtype=np.int64)
        h = self.W.shape[0]
        if self.W.shape != (h, 16):
            raise ConfigError("W must be [out_dim, 16]")
        if self.U.shape != self.V.shape or self.U.shape[0] != h:
            raise ConfigError("U/V must be [out_dim, in_dim]")
        for name, sub, hi in (
            ("gate_subset", self.gate_subset, 16),
            ("link_subset_a", self.link_subset_a, self.U.shape[1]),
            ("link_subset_b", self.link_subset_b, self.U.shape[1]),
        ):
            if sub.ndim != 2 or sub.shape[0] != h or sub.shape[1] == 0:
                raise ConfigError(f"{name} must be a nonempty [out_dim, k] index array")
            if sub.min() < 0 or sub.max() >= hi:
                raise ConfigError(f"{name} index out of range")

    @property
    def in_dim(self) -> int:
        return self.U.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class SumParams:
    S: np.ndarray   # [M] link logits
    C: np.ndarray   # [M] coefficients
    theta: float = 0.8

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        if self.S.shape != self.C.shape:
            raise ConfigError("S and C must align")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("sum threshold must lie in (0, 1)")

    @property
    def in_dim(self) -> int:
        return self.S.shape[0]


@dataclass
class NetworkParams:
    threshold: ThresholdParams
    logic_layers: List[LogicLayerParams]
    sum: SumParams
    concat_inputs: bool = True
    ste: STEConfig = field(default_factory=STEConfig.all_on)
    final_tau: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        t = self.threshold.n_neurons
        prev = t
        for i, layer in enumerate(self.logic_layers):
            expect = prev + t if (self.concat_inputs and i > 0) else prev
            if layer.in_dim != expect:
                raise ConfigError(
                    f"logic layer {i} expects in_dim {expect}, has {layer.in_dim}"
                )
            prev = layer.out_dim
        if self.sum.in_dim != prev:
            raise ConfigError(
                f"sum layer expects in_dim {prev}, has {self.sum.in_dim}"
            )

    @property
    def widths(self) -> List[int]:
        return [self.threshold.n_neurons] + [l.out_dim for l in self.logic_layers]

    def param_arrays(self) -> dict:
        """Live views of the seven parameter groups, keyed for the optimizer."""
        out = {
            "threshold.bias": self.threshold.bias,
            "threshold.slope": self.threshold.slope,
        }
        for i, layer in enumerate(self.logic_layers):
            out[f"layer{i}.W"] = layer.W
            out[f"layer{i}.U"] = layer.U
            out[f"layer{i}.V"] = layer.V
        out["sum.S"] = self.sum.S
        out["sum.C"] = self.sum.C
        return out


# ---------------------------------------------------------------------------
# layer forwards


def threshold_forward_hard(x: np.ndarray, p: ThresholdParams) -> np.ndarray:
    """Heaviside(s * (x - b)) per neuron: 1 iff the argument is >= 0.

    Evaluated as a direct comparison on the feature (by sign of the slope)
    so it is the same float predicate the compiled circuit uses.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xg = x[:, p.source]
    out = np.ones((x.shape[0], p.n_neurons), dtype=np.float64)
    pos = p.slope > 0
    neg = p.slope < 0
    out[:, pos] = (xg[:, pos] >= p.bias[pos]).astype(np.float64)
    out[:, neg] = (xg[:, neg] <= p.bias[neg]).astype(np.float64)
    return out


def threshold_forward_soft(x: np.ndarray, p: ThresholdParams, tau: float,
                           ste: bool = False) -> np.ndarray:
    """sigmoid(s * (x - b) / tau); with ste the forward value is the
    Heaviside bit while gradients (taken elsewhere) follow the sigmoid."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if ste:
        return threshold_forward_hard(x, p)
    pre = p.slope * (x[:, p.source] - p.bias)
    return sigmoid(pre / tau)


def _selected_columns(logits_sub: np.ndarray, subset: np.ndarray) -> np.ndarray:
    """Argmax selection per row over the gathered subset; ascending subsets
    make np.argmax's first-hit rule the lowest-index tie-break."""
    pos = np.argmax(logits_sub, axis=1)
    return subset[np.arange(subset.shape[0]), pos]


def logic_forward_hard(x: np.ndarray, p: LogicLayerParams) -> np.ndarray:
    """Argmax gate over argmax-selected binary inputs, per neuron."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    col_a = _selected_columns(
        np.take_along_axis(p.U, p.link_subset_a, axis=1), p.link_subset_a
    )
    col_b = _selected_columns(
        np.take_along_axis(p.V, p.link_subset_b, axis=1), p.link_subset_b
    )
    k = _selected_columns(
        np.take_along_axis(p.W, p.gate_subset, axis=1), p.gate_subset
    )
    a = x[:, col_a]
    b = x[:, col_b]
    c = COEFFS[k]
    return c[:, 0] + c[:, 1] * a + c[:, 2] * b + c[:, 3] * (a * b)


def logic_forward_soft(x: np.ndarray, p: LogicLayerParams, tau: float,
                       ste_select: bool = False) -> np.ndarray:
    """Soft mixture forward of one logic layer (no tape)."""
    y, _ = _logic_layer_forward(
        np.atleast_2d(np.asarray(x, dtype=np.float64)), p, tau, ste_select
    )
    return y


def _logic_layer_forward(x_in, p: LogicLayerParams, tau: float, ste_select: bool):
    if tau <= 0:
        raise ConfigError("tau must be positive")
    h = p.out_dim
    rows = np.arange(h)
    idx_a, idx_b, idx_g = p.link_subset_a, p.link_subset_b, p.gate_subset
    ua = np.take_along_axis(p.U, idx_a, axis=1)
    vb = np.take_along_axis(p.V, idx_b, axis=1)
    wg = np.take_along_axis(p.W, idx_g, axis=1)
    pa = softmax_rows(ua, tau)
    pb = softmax_rows(vb, tau)
    pg = softmax_rows(wg, tau)
    xa = x_in[:, idx_a]  # [B, H, l]
    xb = x_in[:, idx_b]
    cg = COEFFS[idx_g]   # [H, g, 4]
    if ste_select:
        sel_a = np.argmax(ua, axis=1)
        sel_b = np.argmax(vb, axis=1)
        sel_g = np.argmax(wg, axis=1)
        a = x_in[:, idx_a[rows, sel_a]]
        b = x_in[:, idx_b[rows, sel_b]]
        w = cg[rows, sel_g]  # [H, 4]
    else:
        sel_a = sel_b = sel_g = None
        a = np.einsum("hl,bhl->bh", pa, xa)
        b = np.einsum("hl,bhl->bh", pb, xb)
        w = np.einsum("hg,hgc->hc", pg, cg)
    y = w[:, 0] + w[:, 1] * a + w[:, 2] * b + w[:, 3] * (a * b)
    rec = {
        "x_in": x_in, "xa": xa, "xb": xb,
        "pa": pa, "pb": pb, "pg": pg,
        "a": a, "b": b, "w": w,
        "sel_a": sel_a, "sel_b": sel_b,
        "ste": ste_select,
    }
    return y, rec


def sum_forward_soft(x: np.ndarray, p: SumParams, tau: float) -> np.ndarray:
    """sum_j sigmoid(S_j/tau) * C_j * x_j via the canonical tree reduction."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    coef = sigmoid(p.S / tau) * p.C
    return tree_sum(x * coef)


def sum_forward_hard(x: np.ndarray, p: SumParams, tau_final: float) -> np.ndarray:
    """Keep links with sigmoid(S/tau_final) >= theta, drop the rest.

    Dropped links contribute exact zeros at their original positions so the
    reduction order matches the soft pass bit for bit.
    """
    if tau_final <= 0:
        raise ConfigError("tau_final must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    keep = sigmoid(p.S / tau_final) >= p.theta
    coef = np.where(keep, p.C, 0.0)
    return tree_sum(x * coef)


# ---------------------------------------------------------------------------
# whole-network forward / backward


@dataclass
class Tape:
    """Activation record of one soft forward pass, consumed by backward."""

    params: NetworkParams
    tau: float
    ste: STEConfig
    batch_size: int
    thr: dict
    layers: list
    sum: dict


def _layer_input(i: int, prev: np.ndarray, thr_out: np.ndarray, concat: bool):
    if i == 0:
        return thr_out
    if concat:
        return np.concatenate([prev, thr_out], axis=1)
    return prev


def network_forward_soft(x, params: NetworkParams, tau: float,
                         ste: Optional[STEConfig] = None):
    """Chain threshold -> logic layers -> sum. Returns (prediction, tape)."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    ste = ste if ste is not None else params.ste
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    p_thr = params.threshold
    xg = X[:, p_thr.source]
    diff = xg - p_thr.bias
    sig = sigmoid(p_thr.slope * diff / tau)
    thr_out = threshold_forward_hard(X, p_thr) if ste.threshold else sig
    thr_rec = {"sig": sig, "diff": diff}

    prev = thr_out
    layer_recs = []
    for i, layer in enumerate(params.logic_layers):
        x_in = _layer_input(i, prev, thr_out, params.concat_inputs)
        prev, rec = _logic_layer_forward(x_in, layer, tau, ste.select)
        layer_recs.append(rec)

    g = sigmoid(params.sum.S / tau)
    coef = g * params.sum.C
    pred = tree_sum(prev * coef)
    sum_rec = {"x": prev, "g": g}
    tape = Tape(
        params=params, tau=tau, ste=ste, batch_size=X.shape[0],
        thr=thr_rec, layers=layer_recs, sum=sum_rec,
    )
    return pred, tape


def _scatter_rows(shape, idx, vals) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    np.put_along_axis(out, idx, vals, axis=1)
    return out


def network_backward(tape: Tape, d_pred: np.ndarray) -> dict:
    """Exact gradients of the soft forward recorded on the tape.

    With STE enabled the chain rule is evaluated at the forward (discrete)
    activations while each hard substitution backpropagates through its own
    soft distribution, which is the straight-through convention.
    """
    params = tape.params
    tau = tape.tau
    d_pred = np.asarray(d_pred, dtype=np.float64)
    if d_pred.shape != (tape.batch_size,):
        raise ConfigError("d_pred does not match the taped batch")
    grads = {}

    # sum layer
    p_sum = params.sum
    x_last = tape.sum["x"]
    g = tape.sum["g"]
    t = d_pred @ x_last                      # [M]
    grads["sum.C"] = g * t
    grads["sum.S"] = p_sum.C * t * g * (1.0 - g) / tau
    dx = np.outer(d_pred, g * p_sum.C)       # [B, M]

    # logic layers, reversed
    t_width = params.threshold.n_neurons
    d_thr = None
    for i in range(len(params.logic_layers) - 1, -1, -1):
        layer = params.logic_layers[i]
        rec = tape.layers[i]
        dy = dx
        a, b, w = rec["a"], rec["b"], rec["w"]
        da = dy * (w[:, 1] + w[:, 3] * b)
        db = dy * (w[:, 2] + w[:, 3] * a)

        # gate logits: d y / d P_k = SoftLogic_k(a, b)
        cg = COEFFS[layer.gate_subset]        # [H, g, 4]
        tb = np.stack(
            [dy.sum(0), (dy * a).sum(0), (dy * b).sum(0), (dy * a * b).sum(0)],
            axis=1,
        )                                     # [H, 4]
        dpg = np.einsum("hgc,hc->hg", cg, tb)
        pg = rec["pg"]
        dwg = pg * (dpg - (pg * dpg).sum(axis=1, keepdims=True)) / tau
        grads[f"layer{i}.W"] = _scatter_rows(layer.W.shape, layer.gate_subset, dwg)

        # link logits through the selection softmaxes
        dpa = np.einsum("bh,bhl->hl", da, rec["xa"])
        dpb = np.einsum("bh,bhl->hl", db, rec["xb"])
        pa, pb = rec["pa"], rec["pb"]
        dua = pa * (dpa - (pa * dpa).sum(axis=1, keepdims=True)) / tau
        dvb = pb * (dpb - (pb * dpb).sum(axis=1, keepdims=True)) / tau
        grads[f"layer{i}.U"] = _scatter_rows(layer.U.shape, layer.link_subset_a, dua)
        grads[f"layer{i}.V"] = _scatter_rows(layer.V.shape, layer.link_subset_b, dvb)

        # input gradient: d a / d x_j is the forward selection weight
        h = layer.out_dim
        rows = np.arange(h)
        if rec["ste"]:
            amat = np.zeros((h, layer.in_dim))
            bmat = np.zeros((h, layer.in_dim))
            amat[rows, layer.link_subset_a[rows, rec["sel_a"]]] = 1.0
            bmat[rows, layer.link_subset_b[rows, rec["sel_b"]]] = 1.0
        else:
            amat = _scatter_rows((h, layer.in_dim), layer.link_subset_a, pa)
            bmat = _scatter_rows((h, layer.in_dim), layer.link_subset_b, pb)
        dx_in = da @ amat + db @ bmat

        if i == 0:
            d_thr = dx_in if d_thr is None else d_thr + dx_in
        elif params.concat_inputs:
            dx = dx_in[:, : layer.in_dim - t_width]
            tail = dx_in[:, layer.in_dim - t_width:]
            d_thr = tail if d_thr is None else d_thr + tail
        else:
            dx = dx_in
    if not params.logic_layers:
        d_thr = dx

    # threshold layer: out = sigmoid(slope * diff / tau)
    p_thr = params.threshold
    sig = tape.thr["sig"]
    dpre = d_thr * sig * (1.0 - sig) / tau
    grads["threshold.bias"] = -(dpre * p_thr.slope).sum(axis=0)
    grads["threshold.slope"] = (dpre * tape.thr["diff"]).sum(axis=0)
    return grads

"""Versioned JSON persistence for trained parameters and compiled circuits.

Files are a fixed envelope {format, version, kind, sha256, payload} where
the checksum covers the canonical serialization of the payload (sorted
keys, no whitespace). Nothing time- or host-dependent goes in, so saving
the same object twice produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circuit import ConstNode, GateNode, HardCircuit, SumLink, ThresholdNode
from .data import ColumnSchema
from .errors import ModelFormatError
from .network import (
    LogicLayerParams,
    NetworkParams,
    STEConfig,
    SumParams,
    ThresholdParams,
)

FORMAT_NAME = "logicreg"
FORMAT_VERSION = 1


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _checksum(payload: dict) -> str:
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def params_to_json(params: NetworkParams) -> dict:
    return {
        "threshold": {
            "bias": params.threshold.bias.tolist(),
            "slope": params.threshold.slope.tolist(),
            "source": params.threshold.source.tolist(),
        },
        "logic_layers": [
            {
                "W": l.W.tolist(),
                "U": l.U.tolist(),
                "V": l.V.tolist(),
                "gate_subset": l.gate_subset.tolist(),
                "link_subset_a": l.link_subset_a.tolist(),
                "link_subset_b": l.link_subset_b.tolist(),
            }
            for l in params.logic_layers
        ],
        "sum": {
            "S": params.sum.S.tolist(),
            "C": params.sum.C.tolist(),
            "theta": params.sum.theta,
        },
        "concat_inputs": params.concat_inputs,
        "ste": params.ste.to_json(),
        "final_tau": params.final_tau,
        "seed": params.seed,
    }


def params_from_json(d: dict) -> NetworkParams:
    return NetworkParams(
        threshold=ThresholdParams(
            bias=np.array(d["threshold"]["bias"], dtype=np.float64),
            slope=np.array(d["threshold"]["slope"], dtype=np.float64),
            source=np.array(d["threshold"]["source"], dtype=np.int64),
        ),
        logic_layers=[
            LogicLayerParams(
                W=np.array(l["W"], dtype=np.float64),
                U=np.array(l["U"], dtype=np.float64),
                V=np.array(l["V"], dtype=np.float64),
                gate_subset=np.array(l["gate_subset"], dtype=np.int64),
                link_subset_a=np.array(l["link_subset_a"], dtype=np.int64),
                link_subset_b=np.array(l["link_subset_b"], dtype=np.int64),
            )
            for l in d["logic_layers"]
        ],
        sum=SumParams(
            S=np.array(d["sum"]["S"], dtype=np.float64),
            C=np.array(d["sum"]["C"], dtype=np.float64),
            theta=d["sum"]["theta"],
        ),
        concat_inputs=d["concat_inputs"],
        ste=STEConfig.from_json(d["ste"]),
        final_tau=d["final_tau"],
        seed=d.get("seed"),
    )


def _node_to_json(node) -> dict:
    if isinstance(node, ThresholdNode):
        return {"t": "thr", "feature": node.feature, "bias": node.bias,
                "sign": node.sign}
    if isinstance(node, ConstNode):
        return {"t": "const", "value": node.value}
    return {"t": "gate", "k": node.k, "a": node.a, "b": node.b,
            "layer": node.layer}


def _node_from_json(d: dict):
    t = d.get("t")
    if t == "thr":
        return ThresholdNode(feature=int(d["feature"]), bias=float(d["bias"]),
                             sign=int(d["sign"]))
    if t == "const":
        return ConstNode(value=int(d["value"]))
    if t == "gate":
        return GateNode(k=int(d["k"]), a=int(d["a"]), b=int(d["b"]),
                        layer=int(d["layer"]))
    raise ModelFormatError(f"unknown circuit node tag {t!r}")


def circuit_to_json(circ: HardCircuit) -> dict:
    return {
        "nodes": [_node_to_json(n) for n in circ.nodes],
        "links": [{"node": l.node, "coef": l.coef, "index": l.index}
                  for l in circ.links],
        "sum_width": circ.sum_width,
        "theta": circ.theta,
        "final_tau": circ.final_tau,
        "target_mean": circ.target_mean,
        "target_std": circ.target_std,
        "feature_names": circ.feature_names,
        "feature_origin": [list(o) for o in circ.feature_origin]
        if circ.feature_origin is not None else None,
        "schema": [c.to_json() for c in circ.schema]
        if circ.schema is not None else None,
        "meta": circ.meta,
    }


def circuit_from_json(d: dict) -> HardCircuit:
    circ = HardCircuit(
        nodes=[_node_from_json(n) for n in d["nodes"]],
        links=[SumLink(node=int(l["node"]), coef=float(l["coef"]),
                       index=int(l["index"])) for l in d["links"]],
        sum_width=int(d["sum_width"]),
        theta=float(d["theta"]),
        final_tau=float(d["final_tau"]),
        target_mean=float(d["target_mean"]),
        target_std=float(d["target_std"]),
        feature_names=d.get("feature_names"),
        feature_origin=[tuple(o) for o in d["feature_origin"]]
        if d.get("feature_origin") is not None else None,
        schema=[ColumnSchema.from_json(c) for c in d["schema"]]
        if d.get("schema") is not None else None,
        meta=d.get("meta") or {},
    )
    circ.validate()
    return circ


@dataclass
class LoadedModel:
    kind: str                       # "model" or "circuit"
    params: Optional[NetworkParams]
    circuit: Optional[HardCircuit]
    schema: Optional[list]
    feature_names: Optional[list]
    feature_origin: Optional[list]
    train_config: Optional[dict]

    @property
    def predictor(self):
        return self.params if self.kind == "model" else self.circuit


def save_model(obj, path, schema=None, feature_names=None,
               feature_origin=None, train_config=None) -> None:
    """Write NetworkParams or HardCircuit to a checksummed JSON file.

    The extra fields travel alongside trained parameters so prediction
    on raw CSVs needs nothing but the file; circuits already embed them.
    """
    if isinstance(obj, NetworkParams):
        kind = "model"
        payload = {
            "params": params_to_json(obj),
            "schema": [c.to_json() for c in schema] if schema is not None else None,
            "feature_names": list(feature_names) if feature_names is not None else None,
            "feature_origin": [list(o) for o in feature_origin]
            if feature_origin is not None else None,
            "train_config": train_config,
        }
    elif isinstance(obj, HardCircuit):
        kind = "circuit"
        payload = {"circuit": circuit_to_json(obj)}
    else:
        raise ModelFormatError(
            f"cannot save object of type {type(obj).__name__}")
    envelope = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "sha256": _checksum(payload),
        "payload": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical(envelope))
        fh.write("\n")


def load_model(path) -> LoadedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            envelope = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(envelope, dict) or envelope.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path} is not a {FORMAT_NAME} model file")
    version = envelope.get("version")
    if not isinstance(version, int) or version < 1:
        raise ModelFormatError(f"{path} has an invalid version field")
    if version > FORMAT_VERSION:
        raise ModelFormatError(
            f"{path} uses format version {version}; this build reads up to "
            f"{FORMAT_VERSION}"
        )
    payload = envelope.get("payload")
    if not isinstance(payload, dict):
        raise ModelFormatError(f"{path} is missing its payload")
    if envelope.get("sha256") != _checksum(payload):
        raise ModelFormatError(f"{path} failed its checksum; file corrupted")
    kind = envelope.get("kind")
    try:
        if kind == "model":
            schema = [ColumnSchema.from_json(c) for c in payload["schema"]] \
                if payload.get("schema") is not None else None
            origin = [tuple(o) for o in payload["feature_origin"]] \
                if payload.get("feature_origin") is not None else None
            return LoadedModel(
                kind=kind,
                params=params_from_json(payload["params"]),
                circuit=None,
                schema=schema,
                feature_names=payload.get("feature_names"),
                feature_origin=origin,
                train_config=payload.get("train_config"),
            )
        if kind == "circuit":
            circ = circuit_from_json(payload["circuit"])
            return LoadedModel(
                kind=kind,
                params=None,
                circuit=circ,
                schema=circ.schema,
                feature_names=circ.feature_names,
                feature_origin=circ.feature_origin,
                train_config=None,
            )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path} payload is malformed: {exc}") from exc
    raise ModelFormatError(f"{path} has unknown kind {kind!r}")

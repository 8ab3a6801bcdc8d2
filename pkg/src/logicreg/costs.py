"""Gate-level cost accounting for compiled circuits.

Costs are two-input NAND-equivalents. Boolean gates use the per-gate
table (pass-throughs and complements are free: wire routing or output
polarity). The float constants were calibrated against half-precision
arithmetic units synthesized from NAND-equivalents: an fp16 adder needs
an alignment shifter, an 11-bit significand adder and a normalizer
(~800), an fp16 multiplier an 11x11 partial-product array plus a
compression tree (~1230), and a threshold a 16-bit comparator (~100).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .circuit import ConstNode, GateNode, HardCircuit, ThresholdNode
from .errors import ConfigError
from .gates import GATE_COSTS

FP16_ADD = 800
FP16_MUL = 1230
FP16_COMPARE = 100


@dataclass(frozen=True)
class CostTable:
    gate_costs: tuple = tuple(int(c) for c in GATE_COSTS)
    fp16_add: int = FP16_ADD
    fp16_mul: int = FP16_MUL
    fp16_compare: int = FP16_COMPARE


def set_cost_table(gate_costs=None, fp16_add=None, fp16_mul=None,
                   fp16_compare=None) -> CostTable:
    """Override parts of the default table, validating the result."""
    base = CostTable()
    table = CostTable(
        gate_costs=tuple(int(c) for c in gate_costs)
        if gate_costs is not None else base.gate_costs,
        fp16_add=int(fp16_add) if fp16_add is not None else base.fp16_add,
        fp16_mul=int(fp16_mul) if fp16_mul is not None else base.fp16_mul,
        fp16_compare=int(fp16_compare)
        if fp16_compare is not None else base.fp16_compare,
    )
    if len(table.gate_costs) != 16:
        raise ConfigError("gate_costs must list 16 entries")
    if min(table.gate_costs) < 0 or min(
            table.fp16_add, table.fp16_mul, table.fp16_compare) < 0:
        raise ConfigError("costs must be non-negative")
    return table


@dataclass
class CostReport:
    threshold_count: int
    threshold_ops: int
    gate_ops_by_layer: dict      # layer index -> NAND-equivalents
    gate_ops: int
    n_links: int
    sum_ops: int
    total_ops: int

    def to_json(self) -> dict:
        return {
            "threshold_count": self.threshold_count,
            "threshold_ops": self.threshold_ops,
            "gate_ops_by_layer": {str(k): v
                                  for k, v in sorted(self.gate_ops_by_layer.items())},
            "gate_ops": self.gate_ops,
            "n_links": self.n_links,
            "sum_ops": self.sum_ops,
            "total_ops": self.total_ops,
        }


def count_ops(circ: HardCircuit, table: Optional[CostTable] = None) -> CostReport:
    """Tally a circuit: comparators, Boolean gates, and the final weighted
    sum (one multiply per link, adds to combine, plus de-standardization)."""
    table = table if table is not None else CostTable()
    thr_count = 0
    by_layer: dict = {}
    for node in circ.nodes:
        if isinstance(node, ThresholdNode):
            thr_count += 1
        elif isinstance(node, GateNode):
            by_layer[node.layer] = by_layer.get(node.layer, 0) \
                + table.gate_costs[node.k]
        elif not isinstance(node, ConstNode):
            raise ConfigError(f"unknown node type {type(node).__name__}")
    n_links = len(circ.links)
    sum_ops = n_links * table.fp16_mul + max(n_links - 1, 0) * table.fp16_add
    sum_ops += table.fp16_mul + table.fp16_add   # x * std + mean
    threshold_ops = thr_count * table.fp16_compare
    gate_ops = sum(by_layer.values())
    return CostReport(
        threshold_count=thr_count,
        threshold_ops=threshold_ops,
        gate_ops_by_layer=by_layer,
        gate_ops=gate_ops,
        n_links=n_links,
        sum_ops=sum_ops,
        total_ops=threshold_ops + gate_ops + sum_ops,
    )

"""The 16 two-input Boolean gates and their differentiable relaxations.

Every gate is stored as a multilinear polynomial over the unit square,

    value(a, b) = c0 + c1*a + c2*b + c3*a*b,

which agrees with the Boolean truth table on {0,1}^2 and interpolates
bilinearly in between. The representation makes mixture evaluation a
single matmul (mix the coefficient rows, then evaluate once) and gives
closed-form partials: d/da = c1 + c3*b, d/db = c2 + c3*a.

Gate index order is fixed and load-bearing: it is the canonical
enumeration of f(a,b) by truth-table bits, and parameter files, circuit
files and the cost table all index into it.
"""

from __future__ import annotations

import numpy as np

# fmt: off
GATE_NAMES = (
    "FALSE",        # 0
    "AND",          # 1   a and b
    "A_AND_NOT_B",  # 2   a and not b
    "A",            # 3   pass a
    "NOT_A_AND_B",  # 4   not a and b
    "B",            # 5   pass b
    "XOR",          # 6
    "OR",           # 7
    "NOR",          # 8
    "XNOR",         # 9
    "NOT_B",        # 10
    "A_OR_NOT_B",   # 11
    "NOT_A",        # 12
    "NOT_A_OR_B",   # 13
    "NAND",         # 14
    "TRUE",         # 15
)

# Multilinear coefficients (c0, c1, c2, c3) per gate.
COEFFS = np.array([
    [0.0,  0.0,  0.0,  0.0],   # FALSE        0
    [0.0,  0.0,  0.0,  1.0],   # AND          a*b
    [0.0,  1.0,  0.0, -1.0],   # A_AND_NOT_B  a - a*b
    [0.0,  1.0,  0.0,  0.0],   # A            a
    [0.0,  0.0,  1.0, -1.0],   # NOT_A_AND_B  b - a*b
    [0.0,  0.0,  1.0,  0.0],   # B            b
    [0.0,  1.0,  1.0, -2.0],   # XOR          a + b - 2ab
    [0.0,  1.0,  1.0, -1.0],   # OR           a + b - ab
    [1.0, -1.0, -1.0,  1.0],   # NOR          1 - (a + b - ab)
    [1.0, -1.0, -1.0,  2.0],   # XNOR         1 - (a + b - 2ab)
    [1.0,  0.0, -1.0,  0.0],   # NOT_B        1 - b
    [1.0,  0.0, -1.0,  1.0],   # A_OR_NOT_B   1 - b + ab
    [1.0, -1.0,  0.0,  0.0],   # NOT_A        1 - a
    [1.0, -1.0,  0.0,  1.0],   # NOT_A_OR_B   1 - a + ab
    [1.0,  0.0,  0.0, -1.0],   # NAND         1 - ab
    [1.0,  0.0,  0.0,  0.0],   # TRUE         1
], dtype=np.float64)
COEFFS.setflags(write=False)

# OP cost of each discrete gate in an fp16/int16 circuit: inversions and
# wires are free, XOR/XNOR cost 3, the remaining nontrivial gates cost 1.
GATE_COSTS = np.array(
    [0, 1, 1, 0, 1, 0, 3, 1, 1, 3, 0, 1, 0, 1, 1, 0], dtype=np.int64
)
GATE_COSTS.setflags(write=False)
# fmt: on

# Hard truth tables, HARD_TABLE[k, a, b] in {0, 1}, derived from the
# polynomial at the four corners so both evaluation routes share one source.
_corner_a = np.array([0.0, 0.0, 1.0, 1.0])
_corner_b = np.array([0.0, 1.0, 0.0, 1.0])
_corner_vals = (
    COEFFS[:, 0:1]
    + COEFFS[:, 1:2] * _corner_a
    + COEFFS[:, 2:3] * _corner_b
    + COEFFS[:, 3:4] * _corner_a * _corner_b
)
HARD_TABLE = _corner_vals.reshape(16, 2, 2).astype(np.uint8)
HARD_TABLE.setflags(write=False)

# Real dependencies: does flipping the input change the output anywhere?
USES_A = (HARD_TABLE[:, 0, :] != HARD_TABLE[:, 1, :]).any(axis=1)
USES_B = (HARD_TABLE[:, :, 0] != HARD_TABLE[:, :, 1]).any(axis=1)
USES_A.setflags(write=False)
USES_B.setflags(write=False)

# SWAP_MAP[k] is the gate computing k with its inputs exchanged.
SWAP_MAP = np.array(
    [
        int(
            np.flatnonzero(
                (HARD_TABLE == HARD_TABLE[k].T[None, :, :]).all(axis=(1, 2))
            )[0]
        )
        for k in range(16)
    ],
    dtype=np.int64,
)
SWAP_MAP.setflags(write=False)

# Rendering templates for rule extraction and DOT labels.
GATE_FORMULAS = (
    "false",
    "({a} and {b})",
    "({a} and not {b})",
    "{a}",
    "(not {a} and {b})",
    "{b}",
    "({a} xor {b})",
    "({a} or {b})",
    "not ({a} or {b})",
    "not ({a} xor {b})",
    "not {b}",
    "({a} or not {b})",
    "not {a}",
    "(not {a} or {b})",
    "not ({a} and {b})",
    "true",
)


def soft_gate_eval(k: int, a, b):
    """Relaxed gate value at real-valued inputs, elementwise over arrays."""
    c = COEFFS[k]
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return c[0] + c[1] * a + c[2] * b + c[3] * a * b


def soft_gate_partials(k: int, a, b):
    """(d value/d a, d value/d b) of the relaxed gate, elementwise."""
    c = COEFFS[k]
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return c[1] + c[3] * b, c[2] + c[3] * a


def hard_gate_eval(k: int, a, b):
    """Boolean gate value for inputs in {0, 1}, elementwise over int arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    return HARD_TABLE[k][a, b]

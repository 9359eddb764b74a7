"""Postfix programs: a flat, compiled form of plain (sigmoid-free) trees.

In postfix order every subtree is one contiguous block, so subtree
crossover and mutation become array splices, and a whole tree is evaluated
by a small jitted stack machine.  Results are bit-identical to
:func:`gsgp.expr.evaluate_columns` (same IEEE operations, no fast-math).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

from .expr import ExprTree

VAR, CONST, ADD, SUB, MUL, DIV = range(6)
_OPCODE = {"var": VAR, "const": CONST, "add": ADD, "sub": SUB, "mul": MUL, "div": DIV}


class Program(NamedTuple):
    code: np.ndarray   # int8 opcodes
    arg: np.ndarray    # variable index for VAR
    value: np.ndarray  # constant for CONST
    depth: int


def compile_program(tree: ExprTree) -> Program:
    code, arg, value = [], [], []
    stack = [tree]
    # node-right-left preorder, reversed, is left-right-node postorder
    while stack:
        node = stack.pop()
        op = node.op
        if op not in _OPCODE:
            raise ValueError(f"operator {op!r} has no postfix form")
        code.append(_OPCODE[op])
        arg.append(node.value if op == "var" else 0)
        value.append(node.value if op == "const" else 0.0)
        if not node.is_leaf:
            stack.append(node.left)
            stack.append(node.right)
    return Program(np.array(code[::-1], dtype=np.int8), np.array(arg[::-1], dtype=np.int64),
                   np.array(value[::-1], dtype=float), tree.depth)


def block(preorder_index: int, node_depth: int, size: int) -> slice:
    """Postfix slice holding the subtree found at ``preorder_index``.

    Everything before a node in preorder is either an ancestor (which comes
    after it in postfix) or part of an earlier sibling block, so its postfix
    block starts at ``preorder_index - node_depth``.
    """
    start = preorder_index - node_depth
    return slice(start, start + size)


def splice(prog: Program, where: slice, donor: Program, donor_block: slice, depth: int) -> Program:
    return Program(
        np.concatenate([prog.code[:where.start], donor.code[donor_block], prog.code[where.stop:]]),
        np.concatenate([prog.arg[:where.start], donor.arg[donor_block], prog.arg[where.stop:]]),
        np.concatenate([prog.value[:where.start], donor.value[donor_block], prog.value[where.stop:]]),
        depth,
    )


@njit(cache=True)
def _run(code, arg, value, XT, depth):
    k = XT.shape[1]
    st = np.empty((depth + 2, k))
    sp = 0
    for i in range(code.shape[0]):
        c = code[i]
        if c == VAR:
            st[sp, :] = XT[arg[i]]
            sp += 1
        elif c == CONST:
            st[sp, :] = value[i]
            sp += 1
        else:
            a = st[sp - 2]
            b = st[sp - 1]
            if c == ADD:
                for j in range(k):
                    a[j] = a[j] + b[j]
            elif c == SUB:
                for j in range(k):
                    a[j] = a[j] - b[j]
            elif c == MUL:
                for j in range(k):
                    a[j] = a[j] * b[j]
            else:
                for j in range(k):
                    if b[j] != 0.0:
                        a[j] = a[j] / b[j]
                    else:
                        a[j] = 1.0
            sp -= 1
    return st[0].copy()


def run_program(prog: Program, XT: np.ndarray) -> np.ndarray:
    """Outputs of ``prog`` on a (features x cases) contiguous matrix."""
    return _run(prog.code, prog.arg, prog.value, XT, prog.depth)

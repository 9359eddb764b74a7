"""Syntactic expression trees over input variables and arithmetic operators.

Trees are immutable and may share subtrees, so a single object can stand for
an expression whose fully expanded form is astronomically large.  Sizes and
depths are computed once at construction and refer to the expanded tree.
Evaluation and rendering are iterative, which keeps deep trees (thousands of
levels after unwinding a long run) away from the recursion limit.
"""

from __future__ import annotations

import re

import numpy as np

BINARY_OPS = ("add", "sub", "mul", "div")
SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_OP_OF_SYMBOL = {v: k for k, v in SYMBOLS.items()}

SIGMOID_FLOOR = 1e-12


def bounded_sigmoid(raw):
    """Logistic function clamped to [1e-12, 1 - 1e-12]."""
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-np.asarray(raw, dtype=float)))
    return np.clip(out, SIGMOID_FLOOR, 1.0 - SIGMOID_FLOOR)


def protected_div(a, b):
    """a / b, and 1 wherever b is exactly 0."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.ones(a.shape)
    np.divide(a, b, out=out, where=b != 0)
    return out


class ExprTree:
    """Immutable expression node.

    ``op`` is one of ``"var"``, ``"const"``, the binary operators in
    :data:`BINARY_OPS`, or ``"sig"`` (bounded sigmoid, used only when
    unwinding geometric semantic offspring).
    """

    __slots__ = ("op", "value", "left", "right", "node_count", "depth", "_hash")

    def __init__(self, op, value=None, left=None, right=None):
        init = object.__setattr__
        init(self, "op", op)
        init(self, "value", value)
        init(self, "left", left)
        init(self, "right", right)
        if op == "var" or op == "const":
            init(self, "node_count", 1)
            init(self, "depth", 0)
            init(self, "_hash", hash((op, value)))
        elif op == "sig":
            init(self, "node_count", 1 + left.node_count)
            init(self, "depth", 1 + left.depth)
            init(self, "_hash", hash((op, left._hash)))
        else:
            init(self, "node_count", 1 + left.node_count + right.node_count)
            ld, rd = left.depth, right.depth
            init(self, "depth", 1 + (ld if ld > rd else rd))
            init(self, "_hash", hash((op, left._hash, right._hash)))

    def __setattr__(self, name, value):
        raise AttributeError("ExprTree is immutable")

    @classmethod
    def var(cls, index: int) -> "ExprTree":
        if index < 0:
            raise ValueError(f"variable index must be >= 0, got {index}")
        return cls("var", int(index))

    @classmethod
    def const(cls, value: float) -> "ExprTree":
        return cls("const", float(value))

    @classmethod
    def binary(cls, op: str, left: "ExprTree", right: "ExprTree") -> "ExprTree":
        if op not in BINARY_OPS:
            raise ValueError(f"unknown operator {op!r}")
        return cls(op, None, left, right)

    @classmethod
    def sig(cls, child: "ExprTree") -> "ExprTree":
        return cls("sig", None, child)

    @property
    def is_leaf(self) -> bool:
        return self.op in ("var", "const")

    def children(self):
        if self.op == "sig":
            return (self.left,)
        if self.is_leaf:
            return ()
        return (self.left, self.right)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, ExprTree):
            return NotImplemented
        return structurally_equal(self, other)

    def __repr__(self):
        if self.node_count > 200:
            return f"<ExprTree op={self.op} nodes={self.node_count} depth={self.depth}>"
        return f"ExprTree({render(self)!r})"


def add(a, b):
    return ExprTree.binary("add", a, b)


def sub(a, b):
    return ExprTree.binary("sub", a, b)


def mul(a, b):
    return ExprTree.binary("mul", a, b)


def pdiv(a, b):
    return ExprTree.binary("div", a, b)


def structurally_equal(a: ExprTree, b: ExprTree) -> bool:
    seen = set()
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x is y or (id(x), id(y)) in seen:
            continue
        if x._hash != y._hash or x.op != y.op or x.node_count != y.node_count:
            return False
        if x.is_leaf:
            if x.value != y.value:
                return False
            continue
        seen.add((id(x), id(y)))
        stack.extend(zip(x.children(), y.children()))
    return True


def max_var_index(tree: ExprTree) -> int:
    """Largest variable index used by ``tree`` (-1 if there are none)."""
    best = -1
    for node in unique_nodes(tree):
        if node.op == "var":
            best = max(best, node.value)
    return best


def unique_nodes(tree: ExprTree):
    """Distinct node objects reachable from ``tree`` (DAG view)."""
    seen = {}
    stack = [tree]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen[id(node)] = node
        stack.extend(node.children())
    return list(seen.values())


# --------------------------------------------------------------------------
# random generation

def random_tree(max_depth: int, method: str, rng, d: int, constants: bool = False) -> ExprTree:
    """Random tree with depth <= ``max_depth``.

    ``full`` places every leaf at exactly ``max_depth``.  ``grow`` forces an
    operator at the root when ``max_depth >= 1`` and picks leaf or operator
    with probability 1/2 at every other internal depth.  With ``constants``
    a leaf is a uniform constant in [-1, 1] with probability 1/2.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if d < 1:
        raise ValueError("feature count d must be >= 1")
    if method not in ("grow", "full"):
        raise ValueError(f"unknown method {method!r}")

    def leaf():
        if constants and rng.random() < 0.5:
            return ExprTree.const(rng.uniform(-1.0, 1.0))
        return ExprTree.var(int(rng.integers(d)))

    def build(depth_left, root):
        if depth_left == 0:
            return leaf()
        if method == "grow" and not root and rng.random() < 0.5:
            return leaf()
        op = BINARY_OPS[int(rng.integers(4))]
        left = build(depth_left - 1, False)
        right = build(depth_left - 1, False)
        return ExprTree(op, None, left, right)

    return build(max_depth, True)


def ramped_half_and_half(pop_size: int, max_depth: int, rng, d: int, constants: bool = False):
    """Depths ramp over 1..max_depth; each stratum is half grow, half full.

    Strata sizes differ by at most one (earlier depths get the remainder) and
    an odd stratum gives its extra tree to grow.
    """
    if pop_size < 2:
        raise ValueError("pop_size must be >= 2")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    n_levels = max_depth
    base, extra = divmod(pop_size, n_levels)
    trees = []
    for level in range(1, n_levels + 1):
        count = base + (1 if level <= extra else 0)
        n_grow = (count + 1) // 2
        for i in range(count):
            method = "grow" if i < n_grow else "full"
            trees.append(random_tree(level, method, rng, d, constants))
    return trees


# --------------------------------------------------------------------------
# evaluation

_RECURSIVE_DEPTH = 400


def _eval_recursive(node, columns, k):
    op = node.op
    if op == "var":
        return columns[node.value]
    if op == "const":
        return np.full(k, node.value)
    if op == "sig":
        return bounded_sigmoid(_eval_recursive(node.left, columns, k))
    a = _eval_recursive(node.left, columns, k)
    b = _eval_recursive(node.right, columns, k)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    out = np.ones(k)
    np.divide(a, b, out=out, where=b != 0)
    return out


def evaluate_columns(tree: ExprTree, columns, memo=None) -> np.ndarray:
    """Evaluate ``tree`` given one array per input variable.

    ``memo`` maps ``id(node)`` to its output and may be shared between calls
    over the same columns to evaluate many roots of one DAG in linear time.
    Without a memo, shallow trees are evaluated node by node as trees, deep
    or shared ones as DAGs.
    """
    k = len(columns[0])
    if memo is None:
        if tree.depth <= _RECURSIVE_DEPTH and tree.node_count <= 10**5:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                return _eval_recursive(tree, columns, k)
        memo = {}
    stack = [tree]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        while stack:
            node = stack[-1]
            key = id(node)
            if key in memo:
                stack.pop()
                continue
            op = node.op
            if op == "var":
                memo[key] = columns[node.value]
                stack.pop()
                continue
            if op == "const":
                memo[key] = np.full(k, node.value)
                stack.pop()
                continue
            kids = node.children()
            pending = [c for c in kids if id(c) not in memo]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            if op == "sig":
                memo[key] = bounded_sigmoid(memo[id(node.left)])
                continue
            a = memo[id(node.left)]
            b = memo[id(node.right)]
            if op == "add":
                memo[key] = a + b
            elif op == "sub":
                memo[key] = a - b
            elif op == "mul":
                memo[key] = a * b
            else:
                out = np.ones(k)
                np.divide(a, b, out=out, where=b != 0)
                memo[key] = out
    return memo[id(tree)]


def as_columns(X) -> list:
    """Split a (cases x features) matrix into contiguous per-feature arrays."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected a 2-D (cases x features) matrix")
    return list(np.ascontiguousarray(X.T))


def evaluate(tree: ExprTree, X) -> np.ndarray:
    """Outputs of ``tree`` on every row of ``X``."""
    return evaluate_columns(tree, as_columns(X))


def eval_case(tree: ExprTree, case) -> float:
    """Output of ``tree`` on a single feature vector."""
    case = np.asarray(case, dtype=float)
    if case.ndim != 1:
        raise ValueError("a case is a 1-D feature vector")
    if max_var_index(tree) >= case.shape[0]:
        raise ValueError("case is shorter than the largest variable index")
    return float(evaluate(tree, case[None, :])[0])


# --------------------------------------------------------------------------
# text form

def _const_text(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def render(tree: ExprTree, node_budget: int | None = None) -> str:
    """Fully parenthesized infix text; variables print as x1..xd."""
    if node_budget is not None and tree.node_count > node_budget:
        raise SizeBudgetError(tree.node_count, node_budget)
    out = []
    stack = [tree]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        op = item.op
        if op == "var":
            out.append(f"x{item.value + 1}")
        elif op == "const":
            out.append(_const_text(item.value))
        elif op == "sig":
            stack.extend([")", item.left, "sig("])
        else:
            stack.extend([")", item.right, f" {SYMBOLS[op]} ", item.left, "("])
    return "".join(out)


class SizeBudgetError(ValueError):
    def __init__(self, size, budget):
        super().__init__(f"expanded tree has {size} nodes, above the budget of {budget}")
        self.size = size
        self.budget = budget


class ExprSyntaxError(ValueError):
    def __init__(self, message, position, text):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.position = position


_NUMBER = re.compile(r"\d+(\.\d*)?([eE][-+]?\d+)?|\.\d+([eE][-+]?\d+)?")
_VAR = re.compile(r"x(\d+)")
_UNICODE = str.maketrans({"·": "*", "×": "*", "−": "-", "÷": "/"})


def parse(text: str) -> ExprTree:
    """Parse infix text with the usual precedence and left associativity.

    Accepts ``x<i>`` variables (1-based), numeric literals, ``+ - * /``
    (also ``·`` and ``−``), parentheses and ``sig(...)``.
    """
    src = text.translate(_UNICODE)
    pos = 0

    def skip():
        nonlocal pos
        while pos < len(src) and src[pos].isspace():
            pos += 1

    def fail(msg):
        where = "end of input" if pos >= len(src) else f"{src[pos]!r}"
        raise ExprSyntaxError(f"{msg}, found {where}", pos, text)

    def expr():
        nonlocal pos
        node = term()
        while True:
            skip()
            if pos < len(src) and src[pos] in "+-":
                op = _OP_OF_SYMBOL[src[pos]]
                pos += 1
                node = ExprTree(op, None, node, term())
            else:
                return node

    def term():
        nonlocal pos
        node = atom()
        while True:
            skip()
            if pos < len(src) and src[pos] in "*/":
                op = _OP_OF_SYMBOL[src[pos]]
                pos += 1
                node = ExprTree(op, None, node, atom())
            else:
                return node

    def atom():
        nonlocal pos
        skip()
        if pos >= len(src):
            fail("expected an operand")
        ch = src[pos]
        if ch == "(":
            pos += 1
            node = expr()
            skip()
            if pos >= len(src) or src[pos] != ")":
                fail("expected ')'")
            pos += 1
            return node
        if src.startswith("sig(", pos):
            pos += 3
            return ExprTree.sig(atom())
        if ch == "-":
            # a sign is only legal directly in front of a numeric literal
            m = _NUMBER.match(src, pos + 1)
            if m:
                pos = m.end()
                return ExprTree.const(-float(m.group(0)))
            fail("expected an operand")
        m = _VAR.match(src, pos)
        if m:
            index = int(m.group(1))
            if index < 1:
                fail("variables are numbered from x1")
            pos = m.end()
            return ExprTree.var(index - 1)
        m = _NUMBER.match(src, pos)
        if m:
            pos = m.end()
            return ExprTree.const(float(m.group(0)))
        fail("expected an operand")

    tree = expr()
    skip()
    if pos != len(src):
        fail("unexpected trailing input")
    return tree

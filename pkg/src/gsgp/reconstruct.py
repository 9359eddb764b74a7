"""Turn ancestry entries back into explicit expressions, after the run.

Unwound trees are hash-consed DAGs: every individual and every random tree
is built once and shared by all its descendants, so unwinding costs time
linear in the number of ancestry entries involved, even though the expanded
tree (whose size ``node_count`` reports) grows exponentially.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expr import ExprTree, SizeBudgetError, bounded_sigmoid, evaluate, protected_div, render
from .semantics import (
    CROSSOVER,
    AncestryStore,
    StructuralError,
    load_indexed_trees,
)

DEFAULT_NODE_BUDGET = 10**7


class HashCons:
    """Interning table: one node object per (op, value, children identity)."""

    def __init__(self):
        self._table = {}

    def make(self, op, value=None, left=None, right=None) -> ExprTree:
        key = (op, value, id(left), id(right))
        node = self._table.get(key)
        if node is None:
            node = ExprTree(op, value, left, right)
            # keep children alive so their ids stay unique
            self._table[key] = node
        return node

    def intern(self, tree: ExprTree) -> ExprTree:
        done = {}
        stack = [tree]
        while stack:
            node = stack[-1]
            if id(node) in done:
                stack.pop()
                continue
            pending = [c for c in node.children() if id(c) not in done]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            kids = [done[id(c)] for c in node.children()]
            done[id(node)] = self.make(node.op, node.value, *kids)
        return done[id(tree)]


def crossover_template(h: HashCons, t1, t2, r, sigmoid: bool) -> ExprTree:
    """(t1 * R) + ((1 - R) * t2), R = sig(r) when ``sigmoid``."""
    rr = h.make("sig", None, r) if sigmoid else r
    one = h.make("const", 1.0)
    return h.make("add", None,
                  h.make("mul", None, t1, rr),
                  h.make("mul", None, h.make("sub", None, one, rr), t2))


def mutation_template(h: HashCons, t, r1, r2, ms: float, sigmoid: bool) -> ExprTree:
    """t + ms * (R1 - R2)."""
    if sigmoid:
        r1, r2 = h.make("sig", None, r1), h.make("sig", None, r2)
    return h.make("add", None, t,
                  h.make("mul", None, h.make("const", float(ms)), h.make("sub", None, r1, r2)))


def _template_overhead(build) -> int:
    # nodes of the template that are not placeholder roots: expanded size of
    # the template minus one per placeholder occurrence
    h = HashCons()
    leaves = [ExprTree.var(i) for i in range(3)]
    tree = build(h, *leaves)
    occurrences = 0
    stack = [tree]
    while stack:
        node = stack.pop()
        if any(node is leaf for leaf in leaves):
            occurrences += 1
            continue
        stack.extend(node.children())
    return tree.node_count - occurrences


def operator_overheads(sigmoid_crossover: bool, sigmoid_mutation: bool) -> tuple:
    """(C_xo, C_mut): operator nodes added per offspring by each template."""
    c_xo = _template_overhead(lambda h, a, b, r: crossover_template(h, a, b, r, sigmoid_crossover))
    c_mut = _template_overhead(lambda h, a, r1, r2: mutation_template(h, a, r1, r2, 0.5, sigmoid_mutation))
    return c_xo, c_mut


@dataclass
class ReconstructionContext:
    population: list
    pool: dict
    store: AncestryStore
    sigmoid_crossover: bool = True
    sigmoid_mutation: bool = True
    _memo: dict = field(default_factory=dict, repr=False)
    _pool_memo: dict = field(default_factory=dict, repr=False)
    _sizes: dict = field(default_factory=dict, repr=False)
    _h: HashCons = field(default_factory=HashCons, repr=False)

    @classmethod
    def from_trace(cls, trace) -> "ReconstructionContext":
        cfg = trace.config
        return cls(trace.population, dict(trace.pool.trees), trace.store,
                   cfg.sigmoid_on_crossover, cfg.sigmoid_on_mutation)

    @classmethod
    def from_directory(cls, path) -> "ReconstructionContext":
        """Load ``population.txt``, ``pool.txt``, ``ancestry.txt`` and
        ``manifest.txt`` as written by ``gsgp run``."""
        path = Path(path)
        texts = {}
        for name in ("population.txt", "pool.txt", "ancestry.txt", "manifest.txt"):
            f = path / name
            if not f.is_file():
                raise FileNotFoundError(f"missing run artifact {f}")
            texts[name] = f.read_text()
        manifest = parse_manifest(texts["manifest.txt"])
        pop = load_indexed_trees(texts["population.txt"], str(path / "population.txt"))
        if sorted(pop) != list(range(len(pop))):
            raise ValueError(f"{path / 'population.txt'}: ids must be 0..n-1")
        pool = load_indexed_trees(texts["pool.txt"], str(path / "pool.txt"))
        store = AncestryStore.loads(texts["ancestry.txt"], str(path / "ancestry.txt"))
        if store.n_base != len(pop):
            raise ValueError(f"{path / 'ancestry.txt'}: n_base {store.n_base} but population has {len(pop)} trees")
        return cls([pop[i] for i in range(len(pop))], pool, store,
                   _flag(manifest.get("sigmoid_on_crossover", "true")),
                   _flag(manifest.get("sigmoid_on_mutation", "true")))

    def pool_tree(self, r: int) -> ExprTree:
        got = self._pool_memo.get(r)
        if got is None:
            if r not in self.pool:
                raise StructuralError(f"random-pool tree {r} is not available")
            got = self._pool_memo[r] = self._h.intern(self.pool[r])
        return got

    def _needed(self, ref):
        """Ancestry ids reachable from ``ref``, validated, in increasing order."""
        store = self.store
        seen = set()
        stack = [ref]
        while stack:
            r = stack.pop()
            if r in seen or store.is_base(r):
                if not (0 <= r < store.next_id):
                    raise StructuralError(f"unresolvable individual ref {r}")
                continue
            e = store.entry(r)
            seen.add(r)
            if e.op == CROSSOVER:
                stack.extend(e.refs[:2])
            else:
                stack.append(e.refs[0])
        return sorted(seen)


def _flag(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def parse_manifest(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#") and "=" in line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def unwind(ref: int, ctx: ReconstructionContext) -> ExprTree:
    """Explicit expression of individual ``ref`` as a shared DAG."""
    store = ctx.store
    if not (0 <= ref < store.next_id):
        raise StructuralError(f"unresolvable individual ref {ref}")
    memo = ctx._memo

    def get(r):
        if store.is_base(r):
            t = memo.get(r)
            if t is None:
                t = memo[r] = ctx._h.intern(ctx.population[r])
            return t
        return memo[r]

    for r in ctx._needed(ref):
        if r in memo:
            continue
        e = store.entry(r)
        if e.op == CROSSOVER:
            a, b, p = e.refs
            memo[r] = crossover_template(ctx._h, get(a), get(b), ctx.pool_tree(p), ctx.sigmoid_crossover)
        else:
            a, p1, p2 = e.refs
            memo[r] = mutation_template(ctx._h, get(a), ctx.pool_tree(p1), ctx.pool_tree(p2),
                                        e.ms, ctx.sigmoid_mutation)
    return get(ref)


def expected_size(ref: int, ctx: ReconstructionContext) -> int:
    """Node count of the expanded unwound tree, by recurrence over the store."""
    store = ctx.store
    sizes = ctx._sizes
    c_xo, c_mut = operator_overheads(ctx.sigmoid_crossover, ctx.sigmoid_mutation)

    def pool_size(r):
        if r not in ctx.pool:
            raise StructuralError(f"random-pool tree {r} is not available")
        return ctx.pool[r].node_count

    def size(r):
        if store.is_base(r):
            return ctx.population[r].node_count
        return sizes[r]

    if not (0 <= ref < store.next_id):
        raise StructuralError(f"unresolvable individual ref {ref}")
    for r in ctx._needed(ref):
        if r in sizes:
            continue
        e = store.entry(r)
        if e.op == CROSSOVER:
            a, b, p = e.refs
            sizes[r] = size(a) + size(b) + 2 * pool_size(p) + c_xo
        else:
            a, p1, p2 = e.refs
            sizes[r] = size(a) + pool_size(p1) + pool_size(p2) + c_mut
    return size(ref)


def render_unwound(ref: int, ctx: ReconstructionContext, node_budget: int = DEFAULT_NODE_BUDGET) -> str:
    """Infix text of ``ref``; refuses (SizeBudgetError) above ``node_budget`` nodes."""
    size = expected_size(ref, ctx)
    if size > node_budget:
        raise SizeBudgetError(size, node_budget)
    return render(unwind(ref, ctx))


# --------------------------------------------------------------------------
# simplification

def _is_const(node, value):
    return node.op == "const" and node.value == value


def _rewrite(node, h):
    """One rule application at ``node`` (children already simplified)."""
    op = node.op
    if op in ("var", "const", "sig"):
        if op == "sig" and node.left.op == "const":
            (v,) = expr_const_eval("sig", node.left.value)
            return h.make("const", v)
        return node
    a, b = node.left, node.right
    if a.op == "const" and b.op == "const":
        (v,) = expr_const_eval(op, a.value, b.value)
        if np.isfinite(v):
            return h.make("const", v)
    if op == "mul":
        if _is_const(b, 1.0):
            return a
        if _is_const(a, 1.0):
            return b
    elif op == "add":
        if _is_const(b, 0.0):
            return a
        if _is_const(a, 0.0):
            return b
    elif op == "sub":
        if _is_const(b, 0.0):
            return a
        if a is b:
            return h.make("const", 0.0)
        if _is_const(a, 0.0) and b.op == "sub" and _is_const(b.left, 0.0):
            return b.right
    elif op == "div":
        # sound under protected division: 0/0 is defined as 1 as well
        if a is b:
            return h.make("const", 1.0)
        if _is_const(b, 1.0):
            return a
    return node


def expr_const_eval(op, *values):
    with np.errstate(over="ignore", invalid="ignore"):
        if op == "sig":
            return (float(bounded_sigmoid(values[0])),)
        a, b = values
        if op == "add":
            return (a + b,)
        if op == "sub":
            return (a - b,)
        if op == "mul":
            return (a * b,)
        return (float(protected_div(a, b)),)


def _simplify_pass(tree, h):
    done = {}
    stack = [tree]
    while stack:
        node = stack[-1]
        if id(node) in done:
            stack.pop()
            continue
        pending = [c for c in node.children() if id(c) not in done]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        kids = [done[id(c)] for c in node.children()]
        rebuilt = h.make(node.op, node.value, *kids)
        done[id(node)] = _rewrite(rebuilt, h)
    return done[id(tree)]


def simplify(tree: ExprTree, max_passes: int = 100) -> ExprTree:
    """Apply the identity rules bottom-up until nothing changes.

    Rules: x*1, 1*x, x+0, 0+x, x-0, x/1 -> x; x-x -> 0; x/x -> 1;
    0-(0-x) -> x; operators over two constants fold.  "Identical" means
    structurally identical (hash-consing makes that an identity test).
    """
    h = HashCons()
    current = h.intern(tree)
    for _ in range(max_passes):
        nxt = _simplify_pass(current, h)
        if nxt is current:
            break
        current = nxt
    return current


def probe_equivalent(a: ExprTree, b: ExprTree, d: int, n_probes: int = 100, seed: int = 0,
                     rtol: float = 1e-9) -> bool:
    X = np.random.default_rng(seed).uniform(-2.0, 2.0, size=(n_probes, d))
    va, vb = evaluate(a, X), evaluate(b, X)
    return bool(np.allclose(va, vb, rtol=rtol, atol=rtol, equal_nan=True))

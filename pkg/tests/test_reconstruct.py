import time

import numpy as np
import pytest

from gsgp.engine import RunConfig, run
from gsgp.expr import ExprTree, SizeBudgetError, add, evaluate, evaluate_columns, as_columns, mul, parse, random_tree, render, sub
from gsgp.reconstruct import (
    ReconstructionContext,
    expected_size,
    operator_overheads,
    probe_equivalent,
    render_unwound,
    simplify,
    unwind,
)
from gsgp.semantics import AncestryStore, StructuralError, xo_semantics

from helpers import T8_TEXT, toy_split, worked_context, worked_trees, write_worked_fixture


def expanded_count(tree, limit=10**6):
    """Count nodes of the fully expanded tree by visiting every occurrence."""
    n = 0
    stack = [tree]
    while stack:
        node = stack.pop()
        n += 1
        if n > limit:
            raise RuntimeError("too large")
        stack.extend(node.children())
    return n


def strip(text):
    return "".join(c for c in text if c not in "() ").replace("·", "*").replace("−", "-")


def test_base_ref_is_stored_tree():
    ctx = worked_context()
    pop, _ = worked_trees()
    for i in range(5):
        assert unwind(i, ctx) == pop[i]
        assert expected_size(i, ctx) == pop[i].node_count


def test_worked_example_t8():
    ctx = worked_context()
    t8 = unwind(7, ctx)
    assert t8 == parse(T8_TEXT)
    assert strip(render(t8)) == strip(T8_TEXT)
    X = np.random.default_rng(0).normal(size=(20, 4))
    pop, pool = worked_trees()
    want = xo_semantics(evaluate(pop[0], X), evaluate(pop[4], X), evaluate(pool[3], X))
    np.testing.assert_allclose(evaluate(t8, X), want, rtol=1e-12, atol=0)


def test_worked_example_sizes():
    ctx = worked_context()
    for ref in range(5, 10):
        assert expected_size(ref, ctx) == expanded_count(unwind(ref, ctx))
    # size(T1) + size(T5) + 2 size(R4) + C_xo = 5 + 3 + 2*5 + 5
    assert expected_size(7, ctx) == 23


def test_template_overheads():
    assert operator_overheads(False, False) == (5, 4)
    assert operator_overheads(True, True) == (7, 6)
    assert operator_overheads(True, False) == (7, 4)


def test_self_crossover_chain_grows_exponentially():
    t = random_tree(3, "full", np.random.default_rng(1), 3)
    r = ExprTree.var(0)
    g = 40
    store = AncestryStore(1, pool_size=1)
    ref = 0
    for _ in range(g):
        ref = store.record_crossover(ref, ref, 0)
    ctx = ReconstructionContext([t], {0: r}, store, True, True)
    size = expected_size(ref, ctx)
    assert size >= 2**g * t.node_count
    assert unwind(ref, ctx).node_count == size


def test_expected_size_is_linear_in_store():
    store = AncestryStore(2, pool_size=3)
    ref_a, ref_b = 0, 1
    for i in range(20000):
        ref_a, ref_b = store.record_crossover(ref_a, ref_b, i % 3), ref_a
    ctx = ReconstructionContext([parse("x1"), parse("x2")], {i: parse("x1 * x2") for i in range(3)},
                                store, True, True)
    t0 = time.perf_counter()
    size = expected_size(ref_a, ctx)
    assert time.perf_counter() - t0 < 5.0
    assert size.bit_length() > 10000  # Fibonacci-like growth, far beyond any float
    with pytest.raises(SizeBudgetError):
        render_unwound(ref_a, ctx, node_budget=10**7)


def test_unresolvable_refs():
    ctx = worked_context()
    with pytest.raises(StructuralError):
        unwind(10, ctx)
    with pytest.raises(StructuralError):
        expected_size(-1, ctx)
    ctx.pool.pop(3)
    ctx._pool_memo.clear()
    ctx._memo.clear()
    with pytest.raises(StructuralError):
        unwind(7, ctx)


@pytest.fixture(scope="module")
def small_run():
    ds = toy_split(2, n_train=40, n_test=10)
    tr = run(RunConfig(pop_size=12, generations=6, seed=3, pool_size=60), ds, keep_semantics=True)
    return tr, ds


def test_unwind_matches_tables_for_every_individual(small_run):
    tr, ds = small_run
    ctx = ReconstructionContext.from_trace(tr)
    cols = as_columns(ds.X_train)
    memo = {}
    for ref, sem in tr.semantics.items():
        out = evaluate_columns(unwind(ref, ctx), cols, memo)
        np.testing.assert_allclose(out, sem, rtol=1e-9, atol=0)


def test_expected_size_matches_materialized_count(small_run):
    tr, _ = small_run
    ctx = ReconstructionContext.from_trace(tr)
    checked = 0
    for ref in range(tr.store.next_id):
        size = expected_size(ref, ctx)
        if size <= 10**5:
            assert size == expanded_count(unwind(ref, ctx))
            checked += 1
    assert checked > 50


def test_simplify_rules():
    x1, x3 = ExprTree.var(0), ExprTree.var(2)
    one, zero = ExprTree.const(1), ExprTree.const(0)
    assert simplify(mul(x1, one)) == x1
    assert simplify(mul(one, x1)) == x1
    assert simplify(add(x1, zero)) == x1 and simplify(add(zero, x1)) == x1
    assert simplify(sub(x1, zero)) == x1
    assert simplify(sub(x3, x3)) == zero
    assert simplify(parse("x1 / x1")) == one
    assert simplify(parse("x2 / 1")) == ExprTree.var(1)
    assert simplify(parse("0 - (0 - x2)")) == ExprTree.var(1)
    # x*1 exposed only after the inner x-x collapses
    assert simplify(parse("(x1 * (1 + (x2 - x2)))")) == x1
    assert simplify(parse("(x1 + x2) - (x1 + x2)")) == zero
    assert simplify(parse("x1 - x2")) == parse("x1 - x2")


def test_simplify_worked_example_keeps_semantics():
    ctx = worked_context()
    t8 = unwind(7, ctx)
    s = simplify(t8)
    assert s.node_count <= t8.node_count
    assert probe_equivalent(s, t8, d=4)


def test_simplify_unwound_best_individual():
    ds = toy_split(4, n_train=30, n_test=10)
    tr = run(RunConfig(pop_size=10, generations=3, seed=1, pool_size=30), ds)
    ctx = ReconstructionContext.from_trace(tr)
    tree = unwind(tr.best_ref, ctx)
    s = simplify(tree)
    assert expanded_count(s) <= expanded_count(tree)
    assert probe_equivalent(s, tree, d=3)


def test_simplify_random_trees_with_constants():
    rng = np.random.default_rng(7)
    for _ in range(200):
        t = random_tree(5, "grow", rng, 3, constants=True)
        s = simplify(t)
        assert s.node_count <= t.node_count
        assert probe_equivalent(s, t, d=3)


def test_context_from_directory(tmp_path):
    d = write_worked_fixture(tmp_path / "run")
    ctx = ReconstructionContext.from_directory(d)
    assert not ctx.sigmoid_crossover
    assert unwind(7, ctx) == parse(T8_TEXT)


def test_context_from_directory_errors(tmp_path):
    d = write_worked_fixture(tmp_path / "run")
    (d / "pool.txt").unlink()
    with pytest.raises(FileNotFoundError, match="pool.txt"):
        ReconstructionContext.from_directory(d)
    d = write_worked_fixture(tmp_path / "run2")
    (d / "ancestry.txt").write_text("# n_base 5\n5 crossover 0 1\n")
    with pytest.raises(ValueError, match="ancestry.txt"):
        ReconstructionContext.from_directory(d)

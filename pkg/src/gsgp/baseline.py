"""Standard tree GP (subtree crossover and subtree mutation) for comparison.

Same initialization, selection, elitism and trace schema as the GS-GP
engine; the difference is that every individual is a real tree and is fully
evaluated on the data every generation.  Each individual carries its
compiled postfix program alongside the tree, and offspring programs are
spliced from their parents' programs exactly as the trees are.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .engine import (
    GenerationRecord,
    RunTrace,
    _check_dataset,
    evolution_rng,
    initial_population,
    rmse_rows,
    tournament_select,
)
from .expr import ExprTree, random_tree
from .postfix import block, compile_program, run_program, splice


class BloatError(RuntimeError):
    pass


@dataclass
class StdGpConfig:
    pop_size: int = 100
    generations: int = 2000
    xo_rate: float = 0.9
    mut_rate: float = 0.1
    tournament_size: int = 4
    max_init_depth: int = 6
    mutation_depth: int = 6
    seed: int = 0
    elitism: bool = True
    max_nodes: int = 10**6
    constants: bool = False

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("pop_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("xo_rate", "mut_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.xo_rate + self.mut_rate > 1.0 + 1e-12:
            raise ValueError("xo_rate + mut_rate must not exceed 1 (operators are exclusive)")
        if not 1 <= self.tournament_size <= self.pop_size:
            raise ValueError("tournament_size must be in [1, pop_size]")
        if self.max_init_depth < 1 or self.mutation_depth < 0:
            raise ValueError("bad tree depth")


def locate(tree: ExprTree, index: int):
    """Node number ``index`` in preorder, and its depth."""
    node = tree
    depth = 0
    while index:
        index -= 1
        depth += 1
        if index < node.left.node_count:
            node = node.left
        else:
            index -= node.left.node_count
            node = node.right
    return node, depth


def subtree_at(tree: ExprTree, index: int) -> ExprTree:
    return locate(tree, index)[0]


def replace_at(tree: ExprTree, index: int, new: ExprTree) -> ExprTree:
    """Copy of ``tree`` with preorder node ``index`` replaced by ``new``.

    Only the path from the root is rebuilt; everything else is shared.
    """
    path = []
    node = tree
    while index:
        index -= 1
        if index < node.left.node_count:
            path.append((node, 0))
            node = node.left
        else:
            index -= node.left.node_count
            path.append((node, 1))
            node = node.right
    out = new
    for parent, side in reversed(path):
        if side == 0:
            out = ExprTree(parent.op, None, out, parent.right)
        else:
            out = ExprTree(parent.op, None, parent.left, out)
    return out


def _crossover(p1, prog1, p2, prog2, rng):
    point = int(rng.integers(p1.node_count))
    target, depth = locate(p1, point)
    donor_point = int(rng.integers(p2.node_count))
    donor, donor_depth = locate(p2, donor_point)
    child = replace_at(p1, point, donor)
    if prog1 is None:
        return child, None
    prog = splice(prog1, block(point, depth, target.node_count),
                  prog2, block(donor_point, donor_depth, donor.node_count), child.depth)
    return child, prog


def _mutation(p, prog, rng, max_depth, d, constants):
    point = int(rng.integers(p.node_count))
    target, depth = locate(p, point)
    fresh = random_tree(max_depth, "grow", rng, d, constants)
    child = replace_at(p, point, fresh)
    if prog is None:
        return child, None
    fresh_prog = compile_program(fresh)
    return child, splice(prog, block(point, depth, target.node_count),
                         fresh_prog, slice(0, fresh.node_count), child.depth)


def subtree_crossover(p1: ExprTree, p2: ExprTree, rng) -> ExprTree:
    """Copy of ``p1`` with a uniform node replaced by a uniform subtree of ``p2``."""
    return _crossover(p1, None, p2, None, rng)[0]


def subtree_mutation(p: ExprTree, rng, max_depth: int, d: int, constants: bool = False) -> ExprTree:
    """Copy of ``p`` with a uniform node replaced by a fresh grow tree."""
    return _mutation(p, None, rng, max_depth, d, constants)[0]


def run_std(config: StdGpConfig, dataset, progress=None) -> RunTrace:
    """One standard-GP run, same trace layout as :func:`gsgp.engine.run`."""
    _check_dataset(dataset)
    t0 = time.perf_counter()
    rng = evolution_rng(config.seed)
    d = dataset.X_train.shape[1]
    population = initial_population(config, d, rng)
    XT_train = np.ascontiguousarray(np.asarray(dataset.X_train, dtype=float).T)
    XT_test = np.ascontiguousarray(np.asarray(dataset.X_test, dtype=float).T)
    y_train = np.asarray(dataset.y_train, dtype=float)
    y_test = np.asarray(dataset.y_test, dtype=float)
    trace = RunTrace("stdgp", config, population=list(population))

    pop = list(population)
    progs = [compile_program(t) for t in pop]

    def assess():
        train = np.array([run_program(p, XT_train) for p in progs])
        fit = rmse_rows(train, y_train)
        return fit, int(np.argmin(fit))

    def record(fit, best, started, generation):
        test_out = run_program(progs[best], XT_test)
        test_rmse = float(rmse_rows(test_out[None, :], y_test)[0])
        trace.records.append(GenerationRecord(generation, float(fit[best]), test_rmse, best,
                                              (time.perf_counter() - started) * 1000.0))
        if progress:
            progress(trace.records[-1])

    fit, best = assess()
    record(fit, best, t0, 0)
    for g in range(1, config.generations + 1):
        started = time.perf_counter()
        nxt, nxt_progs = [], []
        if config.elitism:
            nxt.append(pop[best])
            nxt_progs.append(progs[best])
        while len(nxt) < config.pop_size:
            u = rng.random()
            if u < config.xo_rate:
                a = tournament_select(fit, config.tournament_size, rng)
                b = tournament_select(fit, config.tournament_size, rng)
                child, prog = _crossover(pop[a], progs[a], pop[b], progs[b], rng)
            elif u < config.xo_rate + config.mut_rate:
                a = tournament_select(fit, config.tournament_size, rng)
                child, prog = _mutation(pop[a], progs[a], rng, config.mutation_depth, d, config.constants)
            else:
                a = tournament_select(fit, config.tournament_size, rng)
                child, prog = pop[a], progs[a]
            if child.node_count > config.max_nodes:
                raise BloatError(
                    f"generation {g}: offspring with {child.node_count} nodes exceeds "
                    f"max_nodes={config.max_nodes}"
                )
            nxt.append(child)
            nxt_progs.append(prog)
        pop, progs = nxt, nxt_progs
        fit, best = assess()
        record(fit, best, started, g)
    trace.best_tree = pop[best]
    return trace

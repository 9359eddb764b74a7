"""Shared fixtures: the five-tree worked example and the toy regression data."""

from pathlib import Path

import numpy as np

from gsgp.dataio import SplitDataset
from gsgp.expr import parse
from gsgp.reconstruct import ReconstructionContext
from gsgp.semantics import AncestryStore, dump_population

POP_TEXT = ["x1 + x2*x3", "x3 - x2*x4", "x3 + x4 - 2*x1", "x3*x1", "x1 - x3"]
POOL_TEXT = ["x1 + x2 - 2*x4", "x2 - x1", "x1 + x4 - 3*x3", "x2 - x3 - x4", "2*x1"]
# (parent1, parent2, pool tree), 1-based as in the worked example; children T6..T10
XO_TRIPLES = [(4, 5, 2), (1, 4, 1), (1, 5, 4), (3, 4, 5), (3, 5, 3)]
T8_TEXT = "((x1 + x2·x3)·(x2 − x3 − x4)) + ((1−(x2 − x3 − x4))·(x1 − x3))"


def worked_trees():
    return [parse(t) for t in POP_TEXT], [parse(t) for t in POOL_TEXT]


def worked_store():
    store = AncestryStore(5, pool_size=5)
    for a, b, r in XO_TRIPLES:
        store.record_crossover(a - 1, b - 1, r - 1)
    return store


def worked_context(sigmoid=False):
    pop, pool = worked_trees()
    return ReconstructionContext(pop, dict(enumerate(pool)), worked_store(), sigmoid, sigmoid)


def write_worked_fixture(path: Path, best_ref=7):
    """Artifact directory in the layout written by ``gsgp run``."""
    pop, pool = worked_trees()
    path.mkdir(parents=True, exist_ok=True)
    (path / "population.txt").write_text(dump_population(pop))
    (path / "pool.txt").write_text(dump_population(pool))
    (path / "ancestry.txt").write_text(worked_store().dumps())
    (path / "manifest.txt").write_text(
        f"best_ref = {best_ref}\nsigmoid_on_crossover = false\nsigmoid_on_mutation = false\n"
    )
    return path


def toy_xy(n, seed, d=3):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    return X, X[:, 0] * X[:, 1] + X[:, 2]


def toy_split(seed, n_train=100, n_test=43):
    X, y = toy_xy(n_train + n_test, seed)
    return SplitDataset(X[:n_train], y[:n_train], X[n_train:], y[n_train:])

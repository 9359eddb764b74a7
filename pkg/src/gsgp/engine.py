"""GS-GP evolutionary loop run entirely on semantics tables.

After generation 0 no tree is built or evaluated: every offspring's outputs
come from its parents' columns and cached random-tree columns, so the cost
of a generation is O(pop_size * k) however large the individuals have
become.  Each generation is split into a random *plan* (selection, operator
choices, random-tree ids) and a deterministic *apply* step, which lets tests
script a generation exactly.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np

from .expr import as_columns, evaluate_columns, ramped_half_and_half
from .semantics import (
    AncestryStore,
    RandomPool,
    SemanticsTable,
    StructuralError,
    mut_semantics,
    swap_generation,
    xo_semantics,
)

TRACE_FIELDS = ("generation", "best_train_rmse", "best_test_rmse", "elapsed_ms")


@dataclass
class RunConfig:
    pop_size: int = 100
    generations: int = 2000
    xo_rate: float = 0.9
    mut_rate: float = 0.5
    ms: float = 0.1
    tournament_size: int = 4
    max_init_depth: int = 6
    random_tree_depth: int = 6
    seed: int = 0
    sigmoid_on_mutation: bool = True
    sigmoid_on_crossover: bool = True
    elitism: bool = True
    pool_size: int = 1000
    constants: bool = False

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("pop_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("xo_rate", "mut_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 1 <= self.tournament_size <= self.pop_size:
            raise ValueError("tournament_size must be in [1, pop_size]")
        if not self.ms > 0:
            raise ValueError("ms must be positive")
        if self.max_init_depth < 1 or self.random_tree_depth < 0:
            raise ValueError("bad tree depth")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")


class GenerationRecord(NamedTuple):
    generation: int
    best_train_rmse: float
    best_test_rmse: float
    best_ref: int
    elapsed_ms: float


@dataclass
class RunTrace:
    method: str
    config: object
    records: list = field(default_factory=list)
    population: list = field(default_factory=list)
    store: AncestryStore | None = None
    pool: RandomPool | None = None
    best_ref: int | None = None
    best_tree: object = None
    semantics: dict | None = None

    @property
    def final(self) -> GenerationRecord:
        return self.records[-1]


def rmse(outputs, targets) -> float:
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if outputs.shape != targets.shape or outputs.size == 0:
        raise StructuralError("rmse needs two non-empty vectors of equal length")
    return float(np.sqrt(np.mean((outputs - targets) ** 2)))


def rmse_rows(table: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """RMSE of every row; non-finite errors become +inf so they never win."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.sqrt(np.mean((table - targets) ** 2, axis=1))
    out[~np.isfinite(out)] = np.inf
    return out


def tournament_select(fitnesses, size: int, rng) -> int:
    """Best (lowest) of ``size`` uniform draws with replacement."""
    fitnesses = np.asarray(fitnesses)
    cand = rng.integers(0, fitnesses.shape[0], size=size)
    return int(cand[np.argmin(fitnesses[cand])])


def initial_population(config, d: int, rng):
    return ramped_half_and_half(config.pop_size, config.max_init_depth, rng, d, config.constants)


def evolution_rng(seed: int):
    return np.random.default_rng([seed, 1])


class Offspring(NamedTuple):
    """One slot of the next generation.

    ``parent`` is a column index of the current table (used when there is
    no crossover); ``xo`` is ``(column1, column2, pool_id)``; ``mut`` is
    ``(pool_id1, pool_id2)`` applied after the crossover/copy step.
    """

    parent: int | None = None
    xo: tuple | None = None
    mut: tuple | None = None
    elite: bool = False


class GsgpState:
    """Everything a GS-GP run keeps in memory between generations."""

    def __init__(self, config: RunConfig, population, pool: RandomPool,
                 train_cols, y_train, test_cols=None, y_test=None):
        self.config = config
        self.population = list(population)
        self.pool = pool
        n = len(self.population)
        self.store = AncestryStore(n, pool.size)
        self.y_train = np.asarray(y_train, dtype=float)
        self.y_test = None if y_test is None else np.asarray(y_test, dtype=float)
        self.tables = [SemanticsTable(len(train_cols[0]), n)]
        self.next_tables = [SemanticsTable(len(train_cols[0]), n, 1)]
        if test_cols is not None:
            self.tables.append(SemanticsTable(len(test_cols[0]), n))
            self.next_tables.append(SemanticsTable(len(test_cols[0]), n, 1))
        # generation 0 is the only full tree evaluation of the run
        for table, cols in zip(self.tables, [train_cols, test_cols]):
            for ref, tree in enumerate(self.population):
                table.append(ref, evaluate_columns(tree, cols))
        self.generation = 0
        self._refresh_fitness()

    def _refresh_fitness(self):
        self.fitness = rmse_rows(self.tables[0].data, self.y_train)
        self.best = int(np.argmin(self.fitness))

    @property
    def refs(self) -> np.ndarray:
        return self.tables[0].refs

    def best_test_rmse(self) -> float:
        if self.y_test is None:
            return math.nan
        return rmse(self.tables[1].column(self.best), self.y_test)

    def plan_generation(self, rng) -> list:
        cfg = self.config
        n_new = cfg.pop_size - (1 if cfg.elitism else 0)
        # all draws for the generation at once; unused ones are discarded
        do_xo = rng.random(n_new) < cfg.xo_rate
        cand = rng.integers(0, cfg.pop_size, size=(n_new, 2, cfg.tournament_size))
        winners = np.take_along_axis(cand, np.argmin(self.fitness[cand], axis=2)[..., None], 2)[..., 0]
        xo_pool = rng.integers(cfg.pool_size, size=n_new)
        do_mut = rng.random(n_new) < cfg.mut_rate
        mut_pool = rng.integers(cfg.pool_size, size=(n_new, 2))
        plan = [Offspring(parent=self.best, elite=True)] if cfg.elitism else []
        for i in range(n_new):
            if do_xo[i]:
                item = Offspring(xo=(int(winners[i, 0]), int(winners[i, 1]), int(xo_pool[i])))
            else:
                item = Offspring(parent=int(winners[i, 0]))
            if do_mut[i]:
                item = item._replace(mut=(int(mut_pool[i, 0]), int(mut_pool[i, 1])))
            plan.append(item)
        return plan

    def apply_plan(self, plan):
        """Fill the next tables from ``plan``, record ancestry, swap generations."""
        cfg = self.config
        n = self.tables[0].capacity
        if len(plan) != n:
            raise ValueError(f"plan has {len(plan)} slots, population has {n}")
        refs = self.refs
        is_xo = np.array([p.xo is not None for p in plan])
        is_mut = np.array([p.mut is not None for p in plan])
        src = np.array([p.parent if p.xo is None else 0 for p in plan])
        xa, xb, xr = (np.array([p.xo[j] for p in plan if p.xo is not None], dtype=int) for j in range(3))
        m1, m2 = (np.array([p.mut[j] for p in plan if p.mut is not None], dtype=int) for j in range(2))
        for pid in np.unique(np.concatenate([xr, m1, m2])):
            self.pool.ensure(int(pid))

        new_refs = np.empty(n, dtype=np.int64)
        for i, item in enumerate(plan):
            if item.xo is not None:
                a, b, r = item.xo
                ref = self.store.record_crossover(int(refs[a]), int(refs[b]), r)
            else:
                ref = int(refs[item.parent])
            if item.mut is not None:
                ref = self.store.record_mutation(ref, item.mut[0], item.mut[1], cfg.ms)
            new_refs[i] = ref

        for i, (cur, nxt) in enumerate(zip(self.tables, self.next_tables)):
            values = cur.data[src]
            if xa.size:
                sr = self.pool.matrix(i, cfg.sigmoid_on_crossover)[xr]
                values[is_xo] = xo_semantics(cur.data[xa], cur.data[xb], sr)
            if m1.size:
                pm = self.pool.matrix(i, cfg.sigmoid_on_mutation)
                values[is_mut] = mut_semantics(values[is_mut], pm[m1], pm[m2], cfg.ms)
            nxt.extend(new_refs, values)
        for cur, nxt in zip(self.tables, self.next_tables):
            swap_generation(cur, nxt)
        self.generation += 1
        self._refresh_fitness()

    def step_generation(self, rng):
        self.apply_plan(self.plan_generation(rng))


def _check_dataset(dataset):
    if len(dataset.y_train) < 1 or len(dataset.y_test) < 1:
        raise ValueError("dataset needs at least one train and one test case")


def run(config: RunConfig, dataset, keep_semantics: bool = False, progress=None) -> RunTrace:
    """One GS-GP run; one trace record per generation including generation 0."""
    _check_dataset(dataset)
    t0 = time.perf_counter()
    rng = evolution_rng(config.seed)
    d = dataset.X_train.shape[1]
    population = initial_population(config, d, rng)
    train_cols = as_columns(dataset.X_train)
    test_cols = as_columns(dataset.X_test)
    pool = RandomPool(config.pool_size, [train_cols, test_cols], d=d,
                      depth=config.random_tree_depth, seed=config.seed,
                      constants=config.constants)
    state = GsgpState(config, population, pool, train_cols, dataset.y_train,
                      test_cols, dataset.y_test)
    trace = RunTrace("gsgp", config, population=population, store=state.store, pool=pool)
    if keep_semantics:
        trace.semantics = {}

    def record(started):
        ref = int(state.refs[state.best])
        elapsed = (time.perf_counter() - started) * 1000.0
        trace.records.append(GenerationRecord(state.generation, float(state.fitness[state.best]),
                                              state.best_test_rmse(), ref, elapsed))
        if keep_semantics:
            for pos, r in enumerate(state.refs):
                trace.semantics.setdefault(int(r), state.tables[0].data[pos].copy())
        if progress:
            progress(trace.records[-1])

    record(t0)
    for _ in range(config.generations):
        started = time.perf_counter()
        state.step_generation(rng)
        record(started)
    trace.best_ref = trace.records[-1].best_ref
    return trace


# --------------------------------------------------------------------------
# trace files

def write_trace_csv(trace: RunTrace, path, timing: bool = False):
    """Trace CSV; ``elapsed_ms`` stays empty unless ``timing`` so that
    repeated runs produce byte-identical files."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in trace.records:
            w.writerow([r.generation, repr(r.best_train_rmse), repr(r.best_test_rmse),
                        f"{r.elapsed_ms:.3f}" if timing else ""])


def read_trace_csv(path) -> list:
    """Rows of a trace CSV as ``(generation, train, test, elapsed_ms or nan)``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            el = rec["elapsed_ms"]
            rows.append((int(rec["generation"]), float(rec["best_train_rmse"]),
                         float(rec["best_test_rmse"]), float(el) if el else math.nan))
    return rows


def config_items(config) -> dict:
    return asdict(config)

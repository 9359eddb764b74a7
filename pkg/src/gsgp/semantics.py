"""Semantic vectors, semantics tables, the ancestry store and the random pool.

An evolved individual is never stored as a tree.  It is a column of outputs
on the fitness cases plus one ancestry entry saying which earlier individuals
and random trees it was built from.

Reference namespaces: individual ids are dense integers, ``0..n_base-1`` for
the initial population and ``n_base, n_base+1, ...`` for ancestry entries in
creation order.  Random-pool ids are a separate ``0..pool_size-1`` range.
The position of a ref inside an entry tells which namespace it belongs to.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .expr import bounded_sigmoid, evaluate_columns, random_tree, render, parse

CROSSOVER = "crossover"
MUTATION = "mutation"


class StructuralError(RuntimeError):
    """Broken internal bookkeeping (a dangling ref, an incomplete table)."""


def sigmoid_map(raw):
    return bounded_sigmoid(raw)


def xo_semantics(s1, s2, sr):
    """Geometric semantic crossover on outputs: ``s1*sr + (1-sr)*s2``."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    sr = np.asarray(sr, dtype=float)
    if s1.shape != s2.shape or s1.shape != sr.shape:
        raise ValueError("semantic vectors must have equal lengths")
    with np.errstate(over="ignore", invalid="ignore"):
        return s1 * sr + (1.0 - sr) * s2


def mut_semantics(s, sr1, sr2, ms: float):
    """Geometric semantic mutation on outputs: ``s + ms*(sr1 - sr2)``."""
    s = np.asarray(s, dtype=float)
    sr1 = np.asarray(sr1, dtype=float)
    sr2 = np.asarray(sr2, dtype=float)
    if s.shape != sr1.shape or s.shape != sr2.shape:
        raise ValueError("semantic vectors must have equal lengths")
    if ms < 0:
        raise ValueError("mutation step must be >= 0")
    with np.errstate(over="ignore", invalid="ignore"):
        return s + ms * (sr1 - sr2)


class AncestryEntry(NamedTuple):
    child_id: int
    op: str
    refs: tuple
    ms: float | None = None


class AncestryStore:
    """Append-only list of ancestry entries (the structure called M).

    Entries are topologically ordered by construction: a child id is always
    larger than every individual it cites.
    """

    def __init__(self, n_base: int, pool_size: int | None = None):
        if n_base < 1:
            raise ValueError("n_base must be >= 1")
        self.n_base = n_base
        self.pool_size = pool_size
        self.entries: list[AncestryEntry] = []

    def __len__(self):
        return len(self.entries)

    @property
    def next_id(self) -> int:
        return self.n_base + len(self.entries)

    def is_base(self, ref: int) -> bool:
        return 0 <= ref < self.n_base

    def entry(self, ref: int) -> AncestryEntry:
        if not (self.n_base <= ref < self.next_id):
            raise StructuralError(f"individual {ref} has no ancestry entry")
        return self.entries[ref - self.n_base]

    def _check_individual(self, ref):
        if not (0 <= ref < self.next_id):
            raise StructuralError(f"unresolvable individual ref {ref}")

    def _check_pool(self, ref):
        if ref < 0 or (self.pool_size is not None and ref >= self.pool_size):
            raise StructuralError(f"unresolvable random-pool ref {ref}")

    def record_crossover(self, p1: int, p2: int, r: int) -> int:
        self._check_individual(p1)
        self._check_individual(p2)
        self._check_pool(r)
        child = self.next_id
        self.entries.append(AncestryEntry(child, CROSSOVER, (int(p1), int(p2), int(r))))
        return child

    def record_mutation(self, p: int, r1: int, r2: int, ms: float) -> int:
        self._check_individual(p)
        self._check_pool(r1)
        self._check_pool(r2)
        if not ms > 0:
            raise StructuralError("mutation entries need a positive mutation step")
        child = self.next_id
        self.entries.append(AncestryEntry(child, MUTATION, (int(p), int(r1), int(r2)), float(ms)))
        return child

    # line format: child_id op ref1 ref2 ref3 [ms]
    def dumps(self) -> str:
        lines = ["# ancestry", f"# n_base {self.n_base}"]
        if self.pool_size is not None:
            lines.append(f"# pool_size {self.pool_size}")
        for e in self.entries:
            fields = [str(e.child_id), e.op, *map(str, e.refs)]
            if e.ms is not None:
                fields.append(repr(e.ms))
            lines.append(" ".join(fields))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, source: str = "<ancestry>") -> "AncestryStore":
        n_base = pool_size = None
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "n_base":
                    n_base = int(parts[1])
                elif len(parts) == 2 and parts[0] == "pool_size":
                    pool_size = int(parts[1])
                continue
            rows.append((lineno, line.split()))
        if n_base is None:
            raise ValueError(f"{source}: missing '# n_base' header")
        store = cls(n_base, pool_size)
        for lineno, parts in rows:
            try:
                child, op = int(parts[0]), parts[1]
                if op == CROSSOVER and len(parts) == 5:
                    got = store.record_crossover(int(parts[2]), int(parts[3]), int(parts[4]))
                elif op == MUTATION and len(parts) == 6:
                    got = store.record_mutation(int(parts[2]), int(parts[3]), int(parts[4]), float(parts[5]))
                else:
                    raise ValueError(f"bad entry {' '.join(parts)!r}")
            except (ValueError, IndexError, StructuralError) as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
            if got != child:
                raise ValueError(f"{source}:{lineno}: expected child id {got}, found {child}")
        return store


class SemanticsTable:
    """Semantics of one population: ``n`` columns of length ``k``.

    Columns are stored as rows of a (capacity x k) array so each
    individual's outputs are contiguous.
    """

    def __init__(self, k: int, capacity: int, generation: int = 0):
        self.k = k
        self.capacity = capacity
        self.generation = generation
        self.data = np.empty((capacity, k))
        self.refs = np.empty(capacity, dtype=np.int64)
        self.filled = 0

    def append(self, ref: int, values) -> int:
        """Fill the first empty column; returns its position."""
        if self.filled >= self.capacity:
            raise StructuralError("semantics table is already full")
        self.data[self.filled] = values
        self.refs[self.filled] = ref
        self.filled += 1
        return self.filled - 1

    def extend(self, refs, values):
        """Fill the next ``len(refs)`` empty columns at once."""
        values = np.asarray(values, dtype=float)
        m = len(refs)
        if self.filled + m > self.capacity:
            raise StructuralError("semantics table overflow")
        self.data[self.filled:self.filled + m] = values
        self.refs[self.filled:self.filled + m] = refs
        self.filled += m

    @property
    def complete(self) -> bool:
        return self.filled == self.capacity

    def column(self, i: int) -> np.ndarray:
        if i >= self.filled:
            raise IndexError(i)
        return self.data[i]

    def reset(self, generation: int | None = None):
        self.filled = 0
        if generation is not None:
            self.generation = generation


def swap_generation(t_vp: SemanticsTable, t_vp_next: SemanticsTable) -> SemanticsTable:
    """Copy the finished next-generation table into the current one and erase it."""
    if not t_vp_next.complete:
        raise StructuralError(
            f"next-generation table has {t_vp_next.filled} of {t_vp_next.capacity} columns"
        )
    if t_vp.capacity != t_vp_next.capacity or t_vp.k != t_vp_next.k:
        raise StructuralError("table shapes differ")
    t_vp.data[:] = t_vp_next.data
    t_vp.refs[:] = t_vp_next.refs
    t_vp.filled = t_vp_next.filled
    t_vp.generation = t_vp_next.generation
    t_vp_next.reset(t_vp_next.generation + 1)
    return t_vp


class RandomPool:
    """Random trees used by the geometric operators, generated on first use.

    Tree ``i`` is built from its own stream seeded by ``(seed, i)``, so the
    pool's content does not depend on the order in which ids are drawn.
    Raw and sigmoid-mapped outputs on every case set are cached per tree.
    """

    def __init__(self, size: int, column_sets, *, d: int | None = None, depth: int = 6,
                 seed: int = 0, constants: bool = False, trees=None):
        self.size = size
        self.column_sets = list(column_sets)
        self.d = d
        self.depth = depth
        self.seed = seed
        self.constants = constants
        self.trees: dict[int, object] = {}
        self._raw = [np.empty((size, len(cols[0]))) for cols in self.column_sets]
        self._sig = [np.empty((size, len(cols[0]))) for cols in self.column_sets]
        self._ready = np.zeros(size, dtype=bool)
        if trees is not None:
            for i, t in enumerate(trees):
                self._store(i, t)

    @classmethod
    def from_trees(cls, trees, column_sets):
        trees = list(trees)
        return cls(len(trees), column_sets, trees=trees)

    def _store(self, i, tree):
        self.trees[i] = tree
        for raw, sig, cols in zip(self._raw, self._sig, self.column_sets):
            raw[i] = evaluate_columns(tree, cols)
            sig[i] = bounded_sigmoid(raw[i])
        self._ready[i] = True

    def ensure(self, i: int):
        if not (0 <= i < self.size):
            raise StructuralError(f"random-pool ref {i} outside 0..{self.size - 1}")
        if not self._ready[i]:
            if self.d is None:
                raise StructuralError(f"random-pool tree {i} was never provided")
            rng = np.random.default_rng([self.seed, 2, i])
            self._store(i, random_tree(self.depth, "grow", rng, self.d, self.constants))

    def tree(self, i: int):
        self.ensure(i)
        return self.trees[i]

    def semantics(self, i: int, case_set: int = 0, sigmoid: bool = True) -> np.ndarray:
        self.ensure(i)
        return (self._sig if sigmoid else self._raw)[case_set][i]

    def matrix(self, case_set: int = 0, sigmoid: bool = True) -> np.ndarray:
        """Cached outputs indexed by pool id; rows are valid only after :meth:`ensure`."""
        return (self._sig if sigmoid else self._raw)[case_set]

    def dumps(self) -> str:
        lines = ["# random pool", f"# size {self.size}"]
        lines += [f"{i} {render(self.trees[i])}" for i in sorted(self.trees)]
        return "\n".join(lines) + "\n"


def dump_population(trees) -> str:
    lines = ["# population", f"# size {len(trees)}"]
    lines += [f"{i} {render(t)}" for i, t in enumerate(trees)]
    return "\n".join(lines) + "\n"


def load_indexed_trees(text: str, source: str = "<trees>") -> dict:
    """Parse ``<id> <expression>`` lines (as written by the dump helpers)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, body = line.partition(" ")
        try:
            out[int(head)] = parse(body)
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return out

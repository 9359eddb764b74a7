"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Set ``GSGP_BIOAVAILABILITY`` to the bioavailability data file to enable the
external-dataset reproduction; it is skipped otherwise.
"""

import itertools
import os
import time

import numpy as np
import pytest
from scipy.stats import rankdata

from gsgp.baseline import StdGpConfig, run_std
from gsgp.cli import main
from gsgp.dataio import Dataset, SplitDataset, load, save, split
from gsgp.engine import RunConfig, run
from gsgp.expr import as_columns, evaluate, evaluate_columns, parse
from gsgp.reconstruct import ReconstructionContext, expected_size, unwind
from gsgp.semantics import mut_semantics, sigmoid_map, xo_semantics
from gsgp.stats import median, wilcoxon_rank_sum

from helpers import T8_TEXT, toy_split, toy_xy, worked_context, worked_trees

RESULTS = {}


def test_c01_worked_example_reconstruction(criterion):
    t0 = time.perf_counter()
    ctx = worked_context(sigmoid=False)
    t8 = unwind(7, ctx)
    same_tree = t8 == parse(T8_TEXT)
    X = np.random.default_rng(0).uniform(-3, 3, size=(20, 4))
    pop, pool = worked_trees()
    want = xo_semantics(evaluate(pop[0], X), evaluate(pop[4], X), evaluate(pool[3], X))
    got = evaluate(t8, X)
    rel = float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-300)))
    elapsed = time.perf_counter() - t0
    criterion(1, same_tree and rel <= 1e-12 and elapsed < 1.0,
              f"T_8 tree matches={same_tree}, max rel err {rel:.2e} (<= 1e-12), {elapsed:.3f}s (< 1 s)")


def test_c02_tables_match_unwound_trees(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, size=(60, 4))
    y = X[:, 0] * X[:, 1] - X[:, 2] / (1 + X[:, 3] ** 2)
    ds = SplitDataset(X[:50], y[:50], X[50:], y[50:])
    tr = run(RunConfig(pop_size=20, generations=30, seed=2), ds, keep_semantics=True)
    ctx = ReconstructionContext.from_trace(tr)
    cols = as_columns(ds.X_train)
    memo = {}
    worst = 0.0
    for ref, sem in tr.semantics.items():
        out = evaluate_columns(unwind(ref, ctx), cols, memo)
        worst = max(worst, float(np.max(np.abs(out - sem) / np.maximum(np.abs(sem), 1e-300))))
    elapsed = time.perf_counter() - t0
    criterion(2, worst <= 1e-9 and elapsed < 30.0,
              f"{len(tr.semantics)} individuals, max rel err {worst:.2e} (<= 1e-9), {elapsed:.1f}s (< 30 s)")


def test_c03_geometric_operator_bounds(criterion):
    rng = np.random.default_rng(3)
    events, k = 10**5, 8
    scale = 10.0 ** rng.integers(-6, 7, size=(events, 1))
    s1, s2 = rng.normal(size=(events, k)) * scale, rng.normal(size=(events, k)) * scale
    sr = sigmoid_map(rng.normal(scale=6.0, size=(events, k)))
    child = xo_semantics(s1, s2, sr)
    lo, hi = np.minimum(s1, s2), np.maximum(s1, s2)
    xo_ok = bool(np.all((child >= lo - np.spacing(np.abs(lo))) & (child <= hi + np.spacing(np.abs(hi)))))
    worst_ratio = 0.0
    for ms in (1e-3, 0.1, 1.0, 10.0):
        s = rng.normal(size=(events // 10, k)) * 100
        r1 = sigmoid_map(rng.normal(scale=6.0, size=s.shape))
        r2 = sigmoid_map(rng.normal(scale=6.0, size=s.shape))
        worst_ratio = max(worst_ratio, float(np.max(np.abs(mut_semantics(s, r1, r2, ms) - s)) / ms))
    criterion(3, xo_ok and worst_ratio < 1.0,
              f"{events} crossovers inside parent interval (1-ulp slack): {xo_ok}; "
              f"max mutation displacement {worst_ratio:.12f}*ms (< ms)")


def test_c04_constant_time_generations(criterion):
    X, y = toy_xy(300, seed=4)
    ds = SplitDataset(X[:250], y[:250], X[250:], y[250:])
    tr = run(RunConfig(pop_size=100, generations=1000, seed=4), ds)
    ms = np.array([r.elapsed_ms for r in tr.records])
    early, late = float(np.median(ms[10:111])), float(np.median(ms[900:1001]))
    size = expected_size(tr.best_ref, ReconstructionContext.from_trace(tr))
    criterion(4, late <= 2.0 * early,
              f"median ms/gen: generations 10-110 {early:.3f}, 900-1000 {late:.3f} "
              f"(ratio {late / early:.2f} <= 2); final best expands to ~10^{len(str(size)) - 1} nodes")


def test_c05_exponential_size_linear_store(criterion):
    ds = toy_split(5)
    pop, g = 20, 200
    # crossover only: every slot is a crossover child, no elite copies
    tr = run(RunConfig(pop_size=pop, generations=g, xo_rate=1.0, mut_rate=0.0, elitism=False, seed=5), ds)
    ctx = ReconstructionContext.from_trace(tr)
    sizes = [expected_size(r.best_ref, ctx) for r in tr.records]
    ratio = float(np.median([b / a for a, b in zip(sizes, sizes[1:])]))
    entries = len(tr.store)
    # diagnostic only: with an elite copy the best often stays put
    tr_e = run(RunConfig(pop_size=pop, generations=g, xo_rate=1.0, mut_rate=0.0, seed=5), ds)
    ctx_e = ReconstructionContext.from_trace(tr_e)
    sizes_e = [expected_size(r.best_ref, ctx_e) for r in tr_e.records]
    ratio_e = float(np.median([b / a for a, b in zip(sizes_e, sizes_e[1:])]))
    criterion(5, ratio >= 1.5 and entries <= 2 * pop * g,
              f"median consecutive size ratio {ratio:.3f} (>= 1.5), store {entries} entries "
              f"(<= {2 * pop * g}), final size ~10^{len(str(sizes[-1])) - 1}; "
              f"with elitism the ratio is {ratio_e:.3f}")


def test_c06_elitism_monotone(criterion):
    bad = {"gsgp": 0, "stdgp": 0}
    for seed in range(30):
        ds = toy_split(seed)
        for method, trace in (("gsgp", run(RunConfig(pop_size=100, generations=100, seed=seed), ds)),
                              ("stdgp", run_std(StdGpConfig(pop_size=100, generations=100, seed=seed), ds))):
            train = [r.best_train_rmse for r in trace.records]
            bad[method] += any(b > a for a, b in zip(train, train[1:]))
    criterion(6, bad == {"gsgp": 0, "stdgp": 0},
              f"runs with an increase in best train RMSE out of 30: gsgp {bad['gsgp']}, stdgp {bad['stdgp']}")


def brute_force_p(a, b):
    ranks = rankdata(np.concatenate([a, b]))
    n, N = len(a), len(a) + len(b)
    centre = n * (N + 1) / 2
    dev = abs(ranks[:n].sum() - centre)
    sums = [ranks[list(c)].sum() for c in itertools.combinations(range(N), n)]
    return sum(abs(s - centre) >= dev - 1e-9 for s in sums) / len(sums)


def test_c07_exact_wilcoxon(criterion):
    rng = np.random.default_rng(7)
    worst, count = 0.0, 0
    for n in range(1, 10):
        for m in range(1, 11 - n):
            for trial in range(100):
                if trial % 3 == 0:
                    a, b = rng.integers(0, 3, n).astype(float), rng.integers(0, 3, m).astype(float)
                else:
                    a, b = rng.normal(size=n), rng.normal(loc=rng.normal(), size=m)
                worst = max(worst, abs(wilcoxon_rank_sum(a, b, mode="exact") - brute_force_p(a, b)))
                count += 1
    criterion(7, worst <= 1e-12, f"{count} datasets over all n+m <= 10, max |exact - brute force| {worst:.1e}")


@pytest.mark.slow
def test_c08_toy_learning(criterion):
    learned, gs_test, std_test = 0, [], []
    for seed in range(10):
        ds = toy_split(seed)
        g = run(RunConfig(pop_size=100, generations=500, ms=0.1, seed=seed), ds)
        s = run_std(StdGpConfig(pop_size=100, generations=500, seed=seed), ds)
        learned += g.final.best_train_rmse <= 0.2 * g.records[0].best_train_rmse
        gs_test.append(g.final.best_test_rmse)
        std_test.append(s.final.best_test_rmse)
    mg, ms_ = median(gs_test), median(std_test)
    criterion(8, learned >= 9 and mg <= ms_,
              f"gsgp final train <= 20% of gen-0 best in {learned}/10 runs (>= 9); "
              f"median final test gsgp {mg:.4f} <= stdgp {ms_:.4f}")


@pytest.mark.slow
def test_c09_bioavailability(criterion):
    path = os.environ.get("GSGP_BIOAVAILABILITY")
    if not path or not os.path.isfile(path):
        RESULTS[9] = "criterion  9: SKIP  GSGP_BIOAVAILABILITY not set to the dataset file"
        pytest.skip("bioavailability dataset not available")
    ds = load(path)
    finals = []
    for r in range(10):
        tr = run(RunConfig(pop_size=100, generations=2000, seed=r), split(ds, 0.7, r))
        finals.append(tr.final.best_test_rmse)
    med = median(finals)
    criterion(9, 25.0 <= med <= 36.0, f"median final test RMSE {med:.3f} over 10 runs (in [25, 36])")


def test_c10_bench_determinism(criterion, tmp_path):
    X, y = toy_xy(80, seed=10)
    data = tmp_path / "toy.txt"
    save(Dataset(X, y), data)
    same = True
    for method in ("gsgp", "stdgp"):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"{method}-{name}"
            argv = ["bench", "--dataset", str(data), "--method", method, "--pop", "30", "--gens", "30",
                    "--runs", "3", "--seed", "42", "--out", str(out)]
            assert main(argv) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("run-*.csv"))})
        same &= outs[0] == outs[1] and len(outs[0]) == 3
    criterion(10, same, f"two benches with master seed 42 (gsgp and stdgp, 3 runs each): identical trace bytes={same}")

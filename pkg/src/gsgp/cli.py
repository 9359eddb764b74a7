"""Command line: ``gsgp run | bench | reconstruct | simplify | stats``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .baseline import StdGpConfig, run_std
from .dataio import load, split
from .engine import RunConfig, read_trace_csv, run, write_trace_csv
from .expr import SizeBudgetError, parse, render
from .reconstruct import (
    DEFAULT_NODE_BUDGET,
    ReconstructionContext,
    expected_size,
    parse_manifest,
    simplify,
    unwind,
)
from .semantics import dump_population
from .stats import (
    box_summary,
    curve_summary,
    wilcoxon_rank_sum,
    write_boxes_csv,
    write_summary_csv,
)

log = logging.getLogger("gsgp")

# defaults follow the bioavailability experiments; mut_rate depends on method
DEFAULTS = {
    "dataset": None,
    "method": "gsgp",
    "pop": 100,
    "gens": 2000,
    "xo_rate": 0.9,
    "mut_rate": None,
    "ms": 0.1,
    "tournament": 4,
    "init_depth": 6,
    "random_depth": 6,
    "mutation_depth": 6,
    "pool_size": 1000,
    "runs": 30,
    "seed": 0,
    "split": 0.7,
    "format": "auto",
    "out": "gsgp-out",
    "jobs": 1,
    "no_sigmoid_mutation": False,
    "no_sigmoid_crossover": False,
    "no_elitism": False,
    "constants": False,
    "timing": False,
    "artifacts": False,
}
MUT_RATE = {"gsgp": 0.5, "stdgp": 0.1}
_BOOL_KEYS = {k for k, v in DEFAULTS.items() if isinstance(v, bool)}
_INT_KEYS = {"pop", "gens", "tournament", "init_depth", "random_depth", "mutation_depth",
             "pool_size", "runs", "seed", "jobs"}
_FLOAT_KEYS = {"xo_rate", "mut_rate", "ms", "split"}


class CliError(Exception):
    pass


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys are flag names with or without dashes."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        value = value.strip()
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _BOOL_KEYS:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError:
            raise CliError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve(args) -> dict:
    """defaults < config file < command-line flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        opts.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            opts[key] = value
    if opts["method"] not in MUT_RATE:
        raise CliError(f"unknown method {opts['method']!r}")
    if opts["mut_rate"] is None:
        opts["mut_rate"] = MUT_RATE[opts["method"]]
    if not opts["dataset"]:
        raise CliError("--dataset is required")
    if opts["runs"] < 1 or opts["jobs"] < 1:
        raise CliError("--runs and --jobs must be >= 1")
    make_config(opts, 0)  # validate before doing any work
    return opts


def make_config(opts: dict, seed: int):
    try:
        if opts["method"] == "gsgp":
            return RunConfig(
                pop_size=opts["pop"], generations=opts["gens"], xo_rate=opts["xo_rate"],
                mut_rate=opts["mut_rate"], ms=opts["ms"], tournament_size=opts["tournament"],
                max_init_depth=opts["init_depth"], random_tree_depth=opts["random_depth"],
                seed=seed, sigmoid_on_mutation=not opts["no_sigmoid_mutation"],
                sigmoid_on_crossover=not opts["no_sigmoid_crossover"],
                elitism=not opts["no_elitism"], pool_size=opts["pool_size"],
                constants=opts["constants"],
            )
        return StdGpConfig(
            pop_size=opts["pop"], generations=opts["gens"], xo_rate=opts["xo_rate"],
            mut_rate=opts["mut_rate"], tournament_size=opts["tournament"],
            max_init_depth=opts["init_depth"], mutation_depth=opts["mutation_depth"],
            seed=seed, elitism=not opts["no_elitism"], constants=opts["constants"],
        )
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}") from None


def _load_dataset(opts):
    try:
        return load(opts["dataset"], opts["format"])
    except OSError as exc:
        raise CliError(f"cannot read dataset {opts['dataset']}: {exc}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _write_manifest(path: Path, opts: dict, extra: dict):
    lines = [f"# gsgp {__version__}", f"version = {__version__}"]
    lines += [f"{k} = {v}" for k, v in sorted(opts.items()) if k not in ("out", "jobs")]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path.write_text("\n".join(lines) + "\n")


def save_run_artifacts(trace, outdir: Path, opts: dict, extra: dict):
    """Everything ``reconstruct`` needs, plus the trace itself."""
    outdir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, outdir / "trace.csv", timing=opts["timing"])
    info = dict(extra)
    if trace.method == "gsgp":
        (outdir / "population.txt").write_text(dump_population(trace.population))
        (outdir / "pool.txt").write_text(trace.pool.dumps())
        (outdir / "ancestry.txt").write_text(trace.store.dumps())
        cfg = trace.config
        info.update(best_ref=trace.best_ref, sigmoid_on_crossover=cfg.sigmoid_on_crossover,
                    sigmoid_on_mutation=cfg.sigmoid_on_mutation)
    else:
        (outdir / "best.txt").write_text(render(trace.best_tree) + "\n")
    info.update(final_train_rmse=repr(trace.final.best_train_rmse),
                final_test_rmse=repr(trace.final.best_test_rmse))
    _write_manifest(outdir / "manifest.txt", opts, info)


def _execute(opts, ds, seed):
    data = split(ds, opts["split"], seed)
    config = make_config(opts, seed)
    if opts["method"] == "gsgp":
        return run(config, data)
    return run_std(config, data)


def _bench_one(payload):
    opts, ds, r, outdir = payload
    seed = opts["seed"] + r
    trace = _execute(opts, ds, seed)
    write_trace_csv(trace, outdir / f"run-{r}.csv", timing=opts["timing"])
    if opts["artifacts"]:
        save_run_artifacts(trace, outdir / f"run-{r}", opts, {"run": r, "split_seed": seed})
    return r, trace.final.best_train_rmse, trace.final.best_test_rmse


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}") from None
    return out


def cmd_run(args) -> int:
    opts = resolve(args)
    ds = _load_dataset(opts)
    out = _prepare_out(opts["out"])
    trace = _execute(opts, ds, opts["seed"])
    save_run_artifacts(trace, out, opts, {"split_seed": opts["seed"]})
    f = trace.final
    print(f"generation {f.generation}: train RMSE {f.best_train_rmse:.6g}, test RMSE {f.best_test_rmse:.6g}")
    return 0


def cmd_bench(args) -> int:
    opts = resolve(args)
    ds = _load_dataset(opts)
    out = _prepare_out(opts["out"])
    payloads = [(opts, ds, r, out) for r in range(opts["runs"])]
    if opts["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=opts["jobs"]) as pool:
            results = list(pool.map(_bench_one, payloads))
    else:
        results = [_bench_one(p) for p in payloads]
    seeds = {f"run_{r}_split_seed": opts["seed"] + r for r in range(opts["runs"])}
    _write_manifest(out / "manifest.txt", opts, seeds)
    traces = [read_trace_csv(out / f"run-{r}.csv") for r in range(opts["runs"])]
    write_summary_csv({opts["method"]: curve_summary(traces)}, out / "summary.csv")
    write_boxes_csv(_boxes(opts["method"], traces), out / "boxes.csv")
    for r, tr, te in results:
        log.info("run %d: final train %.6g test %.6g", r, tr, te)
    return 0


def _boxes(method, traces) -> dict:
    boxes = {}
    if len(traces) < 4:
        log.warning("%s: fewer than 4 runs, boxes.csv left empty", method)
        return boxes
    for metric, col in (("train", 1), ("test", 2)):
        boxes[(method, metric)] = box_summary([t[-1][col] for t in traces])
    return boxes


def cmd_reconstruct(args) -> int:
    try:
        ctx = ReconstructionContext.from_directory(args.run_dir)
        manifest = parse_manifest((Path(args.run_dir) / "manifest.txt").read_text())
        if args.ref is not None:
            ref = args.ref
        elif "best_ref" in manifest:
            ref = int(manifest["best_ref"])
        else:
            raise CliError(f"{Path(args.run_dir) / 'manifest.txt'}: no best_ref; pass --ref")
        size = expected_size(ref, ctx)
        tree = unwind(ref, ctx)
    except (OSError, ValueError, RuntimeError) as exc:
        raise CliError(str(exc)) from None
    print(f"expected_size = {size}")
    if args.simplify:
        tree = simplify(tree)
        print(f"simplified_size = {tree.node_count}")
    try:
        print(render(tree, node_budget=args.budget))
    except SizeBudgetError as exc:
        print(f"refusing to materialize: {exc}", file=sys.stderr)
        return 3
    return 0


def cmd_simplify(args) -> int:
    text = sys.stdin.read() if args.expression == "-" else args.expression
    try:
        tree = parse(text.strip())
    except ValueError as exc:
        raise CliError(str(exc)) from None
    print(render(simplify(tree)))
    return 0


def cmd_stats(args) -> int:
    groups = {}
    for spec in args.methods:
        method, sep, path = spec.partition("=")
        if not sep:
            raise CliError(f"expected METHOD=DIR, got {spec!r}")
        files = sorted(Path(path).glob("run-*.csv"), key=lambda p: int(p.stem.split("-")[1]))
        if not files:
            raise CliError(f"no run-*.csv traces in {path}")
        try:
            groups[method] = [read_trace_csv(f) for f in files]
        except (OSError, ValueError) as exc:
            raise CliError(str(exc)) from None
    out = _prepare_out(args.out)
    write_summary_csv({m: curve_summary(t) for m, t in groups.items()}, out / "summary.csv")
    boxes = {}
    for m, t in groups.items():
        boxes.update(_boxes(m, t))
    write_boxes_csv(boxes, out / "boxes.csv")
    names = list(groups)
    lines = ["method_a,method_b,metric,p_value"]
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            for metric, col in (("train", 1), ("test", 2)):
                a = [t[-1][col] for t in groups[names[i]]]
                b = [t[-1][col] for t in groups[names[j]]]
                p = wilcoxon_rank_sum(a, b, mode=args.mode)
                lines.append(f"{names[i]},{names[j]},{metric},{p!r}")
                print(f"{names[i]} vs {names[j]} final {metric} RMSE: Wilcoxon p = {p:.3g}")
    (out / "wilcoxon.csv").write_text("\n".join(lines) + "\n")
    return 0


def _add_run_flags(p):
    p.add_argument("--config", help="flat key = value file (overridden by flags)")
    p.add_argument("--dataset")
    p.add_argument("--format", choices=["auto", "csv", "whitespace"])
    p.add_argument("--method", choices=["gsgp", "stdgp"])
    p.add_argument("--pop", type=int)
    p.add_argument("--gens", type=int)
    p.add_argument("--xo-rate", dest="xo_rate", type=float)
    p.add_argument("--mut-rate", dest="mut_rate", type=float)
    p.add_argument("--ms", type=float, help="geometric mutation step")
    p.add_argument("--tournament", type=int)
    p.add_argument("--init-depth", dest="init_depth", type=int)
    p.add_argument("--random-depth", dest="random_depth", type=int,
                   help="depth of random-pool trees (gsgp)")
    p.add_argument("--mutation-depth", dest="mutation_depth", type=int,
                   help="max depth of subtree-mutation trees (stdgp)")
    p.add_argument("--pool-size", dest="pool_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", type=float, help="train fraction")
    p.add_argument("--out")
    p.add_argument("--no-sigmoid-mutation", dest="no_sigmoid_mutation", action="store_true")
    p.add_argument("--no-sigmoid-crossover", dest="no_sigmoid_crossover", action="store_true")
    p.add_argument("--no-elitism", dest="no_elitism", action="store_true")
    p.add_argument("--constants", action="store_true", help="add random constants to the terminals")
    p.add_argument("--timing", action="store_true", help="fill elapsed_ms in trace files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsgp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one run, with artifacts for reconstruct")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="repeated runs on fresh splits, plus summaries")
    _add_run_flags(p)
    p.add_argument("--runs", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--artifacts", action="store_true", help="also save per-run artifact directories")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reconstruct", help="expression of an evolved individual")
    p.add_argument("run_dir")
    p.add_argument("--ref", type=int, help="individual id (default: final best)")
    p.add_argument("--simplify", action="store_true")
    p.add_argument("--budget", type=int, default=DEFAULT_NODE_BUDGET,
                   help="largest node count that will be printed")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("simplify", help="simplify an infix expression ('-' reads stdin)")
    p.add_argument("expression")
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("stats", help="summaries and Wilcoxon tests over bench outputs")
    p.add_argument("methods", nargs="+", metavar="METHOD=DIR")
    p.add_argument("--out", default=".")
    p.add_argument("--mode", choices=["auto", "exact", "normal"], default="auto")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gsgp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: gen, motif, embed, find, eval, baseline, bench, run."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

from .datagen import GenSpec, generate
from .embed import MODES, TrainConfig, aggregation_operator, read_embedding, train, write_embedding
from .graph import load_edge_list, load_features, write_edge_list
from .motif import motif_matrix, write_triplets
from .pipeline import phase_seed, random_baseline, run_bench, versions, write_bench_csv
from .select import (
    STRATEGIES,
    SelectConfig,
    SpatialIndex,
    find_subset,
    read_subset_nodes,
    write_selection,
)
from .tenuity import TenuousSubset, report

log = logging.getLogger("tenuous")


class CliError(Exception):
    pass


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use flag names."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


class _Outputs:
    """Artifacts written through temp files; all are removed if the command fails."""

    def __init__(self):
        self.paths: list[Path] = []

    @contextmanager
    def open(self, path, mode="w"):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, mode, encoding="utf-8") as fh:
                yield fh
            os.replace(tmp, path)
            self.paths.append(path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def write_with(self, writer, obj, path):
        """Let ``writer(obj, tmp_path)`` produce the file, then move it into place."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        os.close(fd)
        try:
            writer(obj, tmp)
            os.replace(tmp, path)
            self.paths.append(path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def cleanup(self):
        for p in self.paths:
            p.unlink(missing_ok=True)


def _write_json(outputs: _Outputs, obj, path):
    with outputs.open(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _meta_path(out) -> Path:
    return Path(f"{out}.meta.json")


def _write_meta(outputs, args, timings: dict, extra: dict | None = None):
    meta = {
        "command": args.command,
        "args": {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)},
        "seed": getattr(args, "seed", None),
        "timings": timings,
        "versions": versions(),
    }
    if extra:
        meta.update(extra)
    _write_json(outputs, meta, _meta_path(args.out))


def _epsilon(value):
    if value == "auto":
        return value
    try:
        eps = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--epsilon must be 'auto' or a number") from None
    if eps < 0:
        raise argparse.ArgumentTypeError("--epsilon must be non-negative")
    return eps


def _bool(value):
    if isinstance(value, bool):
        return value
    v = str(value).lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {value!r}")


def _train_config(args, phase="embed") -> TrainConfig:
    return TrainConfig(
        hidden1=args.hidden,
        hidden2=args.dim,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=phase_seed(args.seed, phase),
        mode=args.mode,
        negative_sampling=args.negative_sampling,
        optimizer=args.optimizer,
    )


def _load_graph(args):
    if not args.graph:
        raise CliError("--graph is required")
    return load_edge_list(args.graph)


# -- commands -----------------------------------------------------------------

def cmd_gen(args, outputs):
    t0 = time.perf_counter()
    spec = GenSpec(args.nodes, args.avg_degree, args.max_degree, phase_seed(args.seed, "gen"))
    g = generate(spec)
    outputs.write_with(write_edge_list, g, args.out)
    _write_meta(outputs, args, {"gen": time.perf_counter() - t0},
                {"nodes": g.node_count, "edges": g.edge_count, "gen_seed": spec.seed})


def cmd_motif(args, outputs):
    g = _load_graph(args)
    t0 = time.perf_counter()
    m = motif_matrix(g)
    outputs.write_with(write_triplets, m, args.out)
    _write_meta(outputs, args, {"motif": time.perf_counter() - t0}, {"triangles": int(m.sum()) // 6})


def cmd_embed(args, outputs):
    g = _load_graph(args)
    x = load_features(args.features, g.node_count) if args.features else None
    cfg = _train_config(args)
    t0 = time.perf_counter()
    w = aggregation_operator(g, cfg.mode)
    t1 = time.perf_counter()
    z = train(g, x, w, cfg)
    t2 = time.perf_counter()
    outputs.write_with(write_embedding, z, args.out)
    _write_meta(outputs, args, {"motif": t1 - t0, "embed": t2 - t1},
                {"train_seed": cfg.seed, "training": z.training_meta})


def cmd_find(args, outputs):
    if not args.embedding:
        raise CliError("--embedding is required")
    z = read_embedding(args.embedding)
    if args.size is None:
        raise CliError("--size is required")
    cfg = SelectConfig(args.size, args.strategy, args.epsilon, args.iters)
    t0 = time.perf_counter()
    sel = find_subset(SpatialIndex(z.values), cfg)
    _write_json(outputs, sel.to_dict(), args.out)
    _write_meta(outputs, args, {"select": time.perf_counter() - t0},
                {"subset_size": len(sel.nodes), "probes": sel.probes})


def cmd_eval(args, outputs):
    g = _load_graph(args)
    if not args.subset:
        raise CliError("--subset is required")
    nodes = read_subset_nodes(args.subset)
    t0 = time.perf_counter()
    rep = report(g, TenuousSubset(frozenset(nodes), args.k))
    _write_json(outputs, rep.to_dict(), args.out)
    _write_meta(outputs, args, {"eval": time.perf_counter() - t0})


def cmd_baseline(args, outputs):
    g = _load_graph(args)
    if args.size is None:
        raise CliError("--size is required")
    t0 = time.perf_counter()
    res = random_baseline(g, args.size, args.trials, phase_seed(args.seed, "baseline"), args.k)
    _write_json(outputs, res, args.out)
    _write_meta(outputs, args, {"baseline": time.perf_counter() - t0})


def cmd_bench(args, outputs):
    cfg = _train_config(args)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()] if args.sizes else []
    t0 = time.perf_counter()
    rows = run_bench(sizes, args.seed, cfg, size=args.size, size_fraction=args.size_fraction,
                     strategy=args.strategy, k=args.k, reps=args.reps, log=log.info)
    with outputs.open(args.out) as fh:
        write_bench_csv(rows, fh)
    _write_meta(outputs, args, {"bench": time.perf_counter() - t0})


def cmd_run(args, outputs):
    """embed -> find -> eval in one go; writes the report plus sibling artifacts."""
    g = _load_graph(args)
    x = load_features(args.features, g.node_count) if args.features else None
    if args.size is None:
        raise CliError("--size is required")
    cfg = _train_config(args)
    sel_cfg = SelectConfig(args.size, args.strategy, args.epsilon, args.iters)
    t0 = time.perf_counter()
    z = train(g, x, aggregation_operator(g, cfg.mode), cfg)
    t1 = time.perf_counter()
    sel = find_subset(SpatialIndex(z.values), sel_cfg)
    t2 = time.perf_counter()
    rep = report(g, sel.subset(args.k))
    t3 = time.perf_counter()
    out = Path(args.out)
    outputs.write_with(write_embedding, z, out.with_suffix(".embedding.csv"))
    _write_json(outputs, sel.to_dict(), out.with_suffix(".subset.json"))
    _write_json(outputs, rep.to_dict(), out)
    _write_meta(outputs, args, {"embed": t1 - t0, "select": t2 - t1, "eval": t3 - t2},
                {"train_seed": cfg.seed, "epsilon": sel.epsilon})


# -- parser -------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--features", help="feature matrix (.npy, .csv or whitespace text); default featureless")
    p.add_argument("--mode", choices=MODES, default="motif")
    p.add_argument("--hidden", type=int, default=32, help="first-layer width")
    p.add_argument("--dim", type=int, default=16, help="embedding dimension")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--negative-sampling", type=_bool, default=False, metavar="BOOL")


def _add_select_flags(p):
    p.add_argument("--size", type=int, help="size constraint K")
    p.add_argument("--strategy", choices=STRATEGIES, default="max")
    p.add_argument("--epsilon", type=_epsilon, default="auto")
    p.add_argument("--iters", type=int, default=30, help="binary search iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tenuous", description=__doc__)
    parser.add_argument("--config", help="key=value file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        return p

    p = command("gen", cmd_gen, "generate a degree-capped random graph")
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--avg-degree", type=float, default=2.746)
    p.add_argument("--max-degree", type=int, default=5)

    p = command("motif", cmd_motif, "dump triangle support per edge")
    p.add_argument("--graph")

    p = command("embed", cmd_embed, "train the autoencoder and write embeddings")
    p.add_argument("--graph")
    _add_train_flags(p)

    p = command("find", cmd_find, "select a tenuous subset from embeddings")
    p.add_argument("--embedding")
    _add_select_flags(p)

    p = command("eval", cmd_eval, "tenuity report for a subset")
    p.add_argument("--graph")
    p.add_argument("--subset")
    p.add_argument("--k", type=int, default=1)

    p = command("baseline", cmd_baseline, "random-subset |PF| baseline")
    p.add_argument("--graph")
    p.add_argument("--size", type=int)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--k", type=int, default=1)

    p = command("bench", cmd_bench, "per-phase timing on synthetic graphs")
    p.add_argument("--sizes", default="1000,5000,10000,50000,100000")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--size-fraction", type=float, default=0.05,
                   help="K as a fraction of N when --size is not given")
    p.add_argument("--k", type=int, default=1)
    _add_train_flags(p)
    _add_select_flags(p)
    p.set_defaults(negative_sampling=True)

    p = command("run", cmd_run, "embed, find and eval in one command")
    p.add_argument("--graph")
    p.add_argument("--k", type=int, default=1)
    _add_train_flags(p)
    _add_select_flags(p)

    parser._subcommands = sub  # for config defaults
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    for sp in parser._subcommands.choices.values():
        dests = {a.dest: a for a in sp._actions}
        sp.set_defaults(**{k: (dests[k].type(v) if dests[k].type else v)
                           for k, v in values.items() if k in dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    outputs = _Outputs()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "k", 1) < 1:
            raise CliError("--k must be >= 1")
        args.func(args, outputs)
    except SystemExit as e:
        # argparse usage errors: keep the exit-code contract
        if e.code not in (0, None):
            outputs.cleanup()
            return 1
        return 0
    except Exception as e:  # noqa: BLE001 - every failure becomes one machine-readable line
        outputs.cleanup()
        msg = str(e).splitlines()[0] if str(e) else e.__class__.__name__
        print(json.dumps({"error": msg, "type": e.__class__.__name__}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

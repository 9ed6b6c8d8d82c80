"""Command-line interface.

Exit codes: 0 success, 1 other runtime error, 2 usage error, 3 invalid
configuration, 4 malformed or missing input (files, index, grid), 5 timing or
experiment-phase failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, FormatError, SQPError

log = logging.getLogger("sqp")

EPILOG = ("exit codes: 0 ok, 1 runtime error, 2 usage, 3 bad config, "
          "4 bad/missing input, 5 timing or phase failure")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Shared by the top-level parser and every subcommand so the flags work on either side.
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", type=Path, default=default, help="YAML experiment/config file")
    g.add_argument("--seed", type=int, default=default, help="fold-shuffling seed")
    g.add_argument("--measure", choices=("AP", "nDCG@10", "P@10"), default=default,
                   help="training/selection measure")
    g.add_argument("--parallelism", type=int, default=default, help="Gen-phase worker count")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqp", description="Selective query processing toolkit",
                                     parents=[_global_flags(False)], epilog=EPILOG)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_global_flags(True)]

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=common, epilog=EPILOG)

    p = add("synth", "write the synthetic desk collection (docs, topics, qrels)")
    p.add_argument("out", type=Path)
    p.add_argument("--corpus-seed", type=int, default=7)
    p.add_argument("--docs", type=int, default=4000,
                   help="minimum collection size (judged documents are always kept)")

    p = add("index", "tokenize TREC documents and save an inverted index")
    p.add_argument("documents", type=Path, nargs="*", help="TREC document files (default: config corpus)")
    p.add_argument("-o", "--out", type=Path, required=True, help="index file (.npz)")

    p = add("grid", "run every processing thread and write runs + grid of points")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--topics", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--topic-ids", help="comma-separated subset of topics")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("-o", "--out", type=Path, required=True, help="output directory")

    p = add("candidates", "select the candidate thread pair from a grid")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--mode", choices=("ERisk-SQE", "ERisk-SQP", "Best-SQE"), default="ERisk-SQP")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("-o", "--out", type=Path, required=True, help="candidate manifest")

    p = add("train", "train the router for a candidate pair")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--topics", type=Path, required=True)
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--candidates", type=Path, required=True)
    p.add_argument("--features-out", type=Path)
    p.add_argument("--labels-out", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True, help="model file")

    p = add("route", "route each topic to one thread and write the resulting run")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--topics", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--decisions-out", type=Path, help="TSV of topic -> chosen thread")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("-o", "--out", type=Path, required=True, help="TREC run file")

    p = add("fuse", "CombSum-fuse two TREC runs")
    p.add_argument("runs", type=Path, nargs=2)
    p.add_argument("--fusion-norm", choices=("minmax", "none"), default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("-o", "--out", type=Path, required=True)

    p = add("eval", "evaluate a TREC run per topic")
    p.add_argument("run", type=Path)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("-o", "--out", type=Path, help="per-topic metrics TSV")

    p = add("experiment", "run the full cross-validated comparison (needs --config)")
    p.add_argument("-o", "--out", type=Path, help="override the config's output directory")
    p.add_argument("--fusion-norm", choices=("minmax", "none"), default=None)
    p.add_argument("--format", choices=("text", "tsv"), default="text")

    p = add("report", "rebuild the report from an experiment directory")
    p.add_argument("directory", type=Path)
    p.add_argument("--format", choices=("text", "tsv"), default="text")
    return parser


# --- helpers -----------------------------------------------------------------

def _config(args, need_corpus: bool = False):
    from .harness.config import ExperimentConfig

    overrides = dict(seed=args.seed, measure=args.measure, parallelism=args.parallelism)
    if args.config is None:
        if need_corpus:
            raise ConfigError("this command needs --config")
        return ExperimentConfig.from_dict({}, check_corpus=False, **overrides)
    return ExperimentConfig.from_file(args.config, check_corpus=need_corpus, **overrides)


def _load_index(path: Path):
    from .corpus import InvertedIndex

    if not path.exists():
        raise FormatError("index file not found", path)
    return InvertedIndex.load(path)


def _topics(path: Path, cfg):
    from .corpus import parse_topics

    if not path.exists():
        raise FormatError("topic file not found", path)
    return parse_topics(path, cfg.pipeline())


def _topic_map(path: Path, cfg) -> dict:
    return {t.topic_id: t for t in _topics(path, cfg)}


# --- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    from .desk import DeskSpec, generate

    paths = generate(args.out, DeskSpec(n_docs=args.docs, seed=args.corpus_seed))
    for k, v in paths.items():
        print(f"{k}\t{v}")
    return 0


def cmd_index(args) -> int:
    from .corpus import build_index, load_documents

    cfg = _config(args)
    docs = list(args.documents) or list(cfg.documents)
    if not docs:
        raise ConfigError("no document files given (positional or config corpus.documents)")
    for d in docs:
        if not Path(d).exists():
            raise FormatError("document file not found", d)
    index = build_index(load_documents(docs, cfg.pipeline()))
    index.save(args.out)
    print(f"indexed {index.N} documents, {len(index.vocab)} terms -> {args.out}")
    return 0


def cmd_grid(args) -> int:
    from .corpus import parse_qrels
    from .evalkit import MEASURES
    from .gridpoints import build_grid, run_threads, write_runs

    cfg = _config(args)
    index = _load_index(args.index)
    topics = _topics(args.topics, cfg)
    if args.topic_ids:
        wanted = args.topic_ids.split(",")
        by_id = {t.topic_id: t for t in topics}
        missing = [q for q in wanted if q not in by_id]
        if missing:
            raise FormatError(f"topics not in topic file: {', '.join(missing)}", args.topics)
        topics = [by_id[q] for q in wanted]
    qrels = parse_qrels(args.qrels)
    threads = cfg.threads()
    depth = args.depth or cfg.depth
    runs, timing = run_threads(index, topics, threads, depth, cfg.parallelism)
    ids = [t.topic_id for t in topics]
    write_runs(args.out / "runs", runs, threads, ids)
    grid_path = args.out / "grid.tsv"
    for k, m in enumerate(MEASURES):
        build_grid(runs, threads, ids, qrels, m).write_tsv(grid_path, append=k > 0)
    print(f"{len(threads)} threads x {len(ids)} topics -> {grid_path} "
          f"(wall {timing.wall_ms:.0f} ms, cpu {timing.cpu_ms.sum():.0f} ms)")
    return 0


def cmd_candidates(args) -> int:
    from .gridpoints import read_grid
    from .selector import select_pair, write_manifest

    cfg = _config(args)
    grid = read_grid(args.grid, cfg.measure, cfg.params, cfg.beta)
    pair = select_pair(grid, args.mode, cfg.lam if args.lam is None else args.lam)
    write_manifest(args.out, pair)
    print(f"{pair.mode}\t{pair.c1.thread_id}\t{pair.c2.thread_id}")
    return 0


def cmd_train(args) -> int:
    from .features import extract_features, label_candidates, write_features, write_labels
    from .gridpoints import read_grid
    from .selector import read_manifest, train_router, write_model

    cfg = _config(args)
    index = _load_index(args.index)
    by_id = _topic_map(args.topics, cfg)
    grid = read_grid(args.grid, cfg.measure, cfg.params, cfg.beta)
    pair = read_manifest(args.candidates, cfg.params, cfg.beta)
    missing = [q for q in grid.queries if q not in by_id]
    if missing:
        raise FormatError(f"grid topics missing from topic file: {', '.join(missing[:5])}", args.topics)
    feats = [extract_features(index, by_id[q], cfg.K) for q in grid.queries]
    labels = [label_candidates(grid, [pair.c1, pair.c2], q) for q in grid.queries]
    model = train_router(feats, labels, pair, cfg.reg, cfg.epochs, cfg.seed, cfg.lr)
    write_model(args.out, model)
    if args.features_out:
        write_features(args.features_out, feats)
    if args.labels_out:
        write_labels(args.labels_out, labels)
    print(f"trained on {len(feats)} topics -> {args.out}" + (" (zero model)" if model.is_zero else ""))
    return 0


def cmd_route(args) -> int:
    from .features import extract_features
    from .gridpoints import run_query
    from .retrieval import WeightedQuery, write_run
    from .selector import read_model, route

    cfg = _config(args)
    index = _load_index(args.index)
    topics = _topics(args.topics, cfg)
    model = read_model(args.model, cfg.params, cfg.beta)
    depth = args.depth or cfg.depth
    runs, decisions = [], []
    for t in topics:
        chosen = route(model, extract_features(index, t, cfg.K))
        runs.append(run_query(index, WeightedQuery.from_topic(t), chosen, depth))
        decisions.append((t.topic_id, chosen.thread_id))
    write_run(args.out, runs, tag="routed")
    if args.decisions_out:
        with open(args.decisions_out, "w", encoding="utf-8") as fh:
            fh.write("topic_id\tthread_id\n")
            for q, th in decisions:
                fh.write(f"{q}\t{th}\n")
    n2 = sum(th == model.c2.thread_id for _, th in decisions)
    print(f"routed {len(decisions)} topics: {len(decisions) - n2} to c1, {n2} to c2 -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    from .retrieval import ScoredList, read_run, write_run
    from .selector import combsum

    cfg = _config(args)
    depth = args.depth or cfg.depth
    a, b = (read_run(p, depth) for p in args.runs)
    topics = sorted(set(a) | set(b))
    fused = [combsum(a.get(q, ScoredList.empty(q, depth)), b.get(q, ScoredList.empty(q, depth)),
                     depth, args.fusion_norm or cfg.fusion_norm) for q in topics]
    write_run(args.out, fused, tag="combsum")
    print(f"fused {len(fused)} topics -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .corpus import parse_qrels
    from .evalkit import MEASURES, evaluate_run, write_metrics
    from .retrieval import read_run

    run = read_run(args.run)
    qrels = parse_qrels(args.qrels)
    topics = sorted(set(run) | set(qrels.topics()))
    values = evaluate_run(run, qrels, topics)
    if args.out:
        write_metrics(args.out, values)
    for m in MEASURES:
        print(f"{m}\tall\t{np.mean(list(values[m].values())):.4f}")
    return 0


def cmd_experiment(args) -> int:
    from .harness.experiment import run_experiment
    from .harness.report import render_report

    cfg = _config(args, need_corpus=True)
    if args.out is not None:
        cfg.output = args.out
    if args.fusion_norm is not None:
        cfg.fusion_norm = args.fusion_norm
    result = run_experiment(cfg)
    print(render_report(result.table, args.format), end="")
    log.info("artifacts in %s", result.output)
    return 0


def cmd_report(args) -> int:
    from .harness.report import render_report, table_from_directory

    d = args.directory
    if not (d / "per_topic.tsv").exists():
        raise FormatError("no per_topic.tsv in experiment directory", d)
    print(render_report(table_from_directory(d), args.format), end="")
    return 0


COMMANDS = {
    "synth": cmd_synth, "index": cmd_index, "grid": cmd_grid, "candidates": cmd_candidates,
    "train": cmd_train, "route": cmd_route, "fuse": cmd_fuse, "eval": cmd_eval,
    "experiment": cmd_experiment, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SQPError as exc:
        print(f"sqp {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sqp {args.command}: error: {exc}", file=sys.stderr)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())

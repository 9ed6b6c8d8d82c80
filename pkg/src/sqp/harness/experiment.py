"""End-to-end protocol: folds x {Gen, Train, RT} for every method, then the report."""

from __future__ import annotations

import gc
import logging
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np
import yaml

from .. import _accel, desk
from ..corpus import (InvertedIndex, Qrels, Topic, build_index, load_documents, parse_qrels,
                      parse_topics)
from ..errors import PhaseError, SQPError
from ..evalkit import MEASURES, make_folds
from ..features import DIM, extract_features, label_candidates, write_features, write_labels
from ..gridpoints import build_grid, run_query, run_threads
from ..retrieval import WeightedQuery, bm25_default, write_run
from ..selector import (CandidatePair, combsum, document_training_data, fit_document_ranker,
                        rerank, route, select_c1, select_pair, train_router, write_manifest,
                        write_model)
from .config import ExperimentConfig
from .report import ReportTable, build_table, render_report, write_per_topic, write_timings
from .timing import AuditLog, phase_timer, step

log = logging.getLogger(__name__)

BASELINES = ("BM25", "L2R-D", "Best trained", "CombSum")


@dataclass
class ExperimentResult:
    table: ReportTable
    per_topic: list[tuple[int, int, str, str, str, float]]
    timings: list[tuple[int, int, str, str, float]]
    pairs: dict[tuple[int, int, str], CandidatePair]
    audit: AuditLog
    output: Path | None = None
    backend: str = field(default_factory=_accel.backend)


def load_collection(cfg: ExperimentConfig) -> tuple[InvertedIndex, list[Topic], Qrels]:
    if cfg.desk is not None:
        spec = desk.DeskSpec(**cfg.desk)
        paths = desk.generate(Path(cfg.output) / "corpus", spec)
        cfg.documents, cfg.topics, cfg.qrels = [paths["documents"]], paths["topics"], paths["qrels"]
    pipe = cfg.pipeline()
    index = build_index(load_documents(cfg.documents, pipe))
    topics = parse_topics(cfg.topics, pipe)
    qrels = parse_qrels(cfg.qrels)
    if len({t.topic_id for t in topics}) != len(topics):
        raise SQPError("duplicate topic ids in topic file")
    return index, topics, qrels


def _per_query(ms: float, n: int) -> float:
    return ms / n if n else 0.0


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run the cross-validated comparison and (optionally) persist all artifacts."""
    out = Path(cfg.output)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    index, topics, qrels = load_collection(cfg)
    by_id = {t.topic_id: t for t in topics}
    threads = cfg.threads()
    modes = list(cfg.modes)
    _accel.warmup()
    # one untimed pass so lazily built caches (stemmer, JIT signatures) are warm
    for th in threads[:1] + [t for t in threads if t.expanded][:1]:
        run_query(index, WeightedQuery.from_topic(topics[0]), th, cfg.depth)
    extract_features(index, topics[0], cfg.K)

    plan = make_folds([t.topic_id for t in topics], cfg.trials, cfg.seed)
    audit = AuditLog()
    per_topic: list[tuple[int, int, str, str, str, float]] = []
    timings: list[tuple[int, int, str, str, float]] = []
    pairs: dict[tuple[int, int, str], CandidatePair] = {}

    for trial, fold, train_ids, test_ids in plan.folds():
        fold_dir = out / f"trial{trial}_fold{fold}"
        if write:
            (fold_dir / "runs").mkdir(parents=True, exist_ok=True)
        train = [by_id[q] for q in train_ids]
        test = [by_id[q] for q in test_ids]
        phase = "Gen"
        try:
            # ---- Gen ------------------------------------------------------
            tag = f"t{trial}f{fold}"
            with phase_timer("Gen", audit, f"{tag}:grid") as t_grid:
                runs, _ = run_threads(index, train, threads, cfg.depth, cfg.parallelism)
                grids = {m: build_grid(runs, threads, train_ids, qrels, m) for m in MEASURES}
            grid = grids[cfg.measure]
            del runs
            with phase_timer("Gen", audit, f"{tag}:pairs") as t_pairs:
                fold_pairs = {m: select_pair(grid, m, cfg.lam) for m in modes}
                sqe_pair = fold_pairs.get("ERisk-SQE") or select_pair(grid, "ERisk-SQE", cfg.lam)
            with phase_timer("Gen", audit, f"{tag}:features") as t_feat:
                feats = [extract_features(index, t, cfg.K) for t in train]
            with phase_timer("Gen", audit, f"{tag}:l2r-data") as t_l2r_gen:
                mats, grades = document_training_data(index, train, qrels, cfg.l2r_K)

            # ---- Train ----------------------------------------------------
            phase = "Train"
            with phase_timer("Train", audit, f"{tag}:best-trained") as t_best:
                best = select_c1(grid)
            with phase_timer("Train", audit, f"{tag}:l2r") as t_l2r:
                ranker = fit_document_ranker(mats, grades, cfg.l2r_K, cfg.reg, cfg.epochs, cfg.lr)
            models, t_router, labels_by_mode = {}, {}, {}
            for m in modes:
                pair = fold_pairs[m]
                labels = [label_candidates(grid, [pair.c1, pair.c2], q) for q in train_ids]
                labels_by_mode[m] = labels
                with phase_timer("Train", audit, f"{tag}:router:{m}") as box:
                    models[m] = train_router(feats, labels, pair, cfg.reg, cfg.epochs, cfg.seed,
                                             cfg.lr, dim=DIM)
                t_router[m] = box[0]

            # ---- RT -------------------------------------------------------
            phase = "RT"
            rt_ms = {name: [] for name in (*BASELINES, *modes)}
            test_runs = {name: [] for name in rt_ms}

            def timed_unit(name: str, topic: Topic, work):
                with phase_timer("RT", audit, f"{tag}:{name}:{topic.topic_id}") as box:
                    run = work()
                rt_ms[name].append(box[0])
                test_runs[name].append(run)

            gc_was_enabled = gc.isenabled()
            gc.disable()
            try:
                for topic in test:
                    q = WeightedQuery.from_topic(topic)

                    def bm25_unit():
                        step("retrieve")
                        return bm25_default(index, q, cfg.depth)

                    def l2r_unit():
                        step("retrieve+rerank")
                        return rerank(index, topic, ranker, cfg.depth)

                    def best_unit():
                        step("retrieve")
                        return run_query(index, q, best, cfg.depth)

                    def fuse_unit():
                        step("retrieve")
                        a = run_query(index, q, sqe_pair.c1, cfg.depth)
                        step("retrieve")
                        b = run_query(index, q, sqe_pair.c2, cfg.depth)
                        step("fuse")
                        return combsum(a, b, cfg.depth, cfg.fusion_norm)

                    timed_unit("BM25", topic, bm25_unit)
                    timed_unit("L2R-D", topic, l2r_unit)
                    timed_unit("Best trained", topic, best_unit)
                    timed_unit("CombSum", topic, fuse_unit)
                    for m in modes:
                        model = models[m]

                        def selective_unit():
                            step("features")
                            f = extract_features(index, topic, cfg.K)
                            step("route")
                            chosen = route(model, f)
                            step("retrieve")
                            return run_query(index, q, chosen, cfg.depth)

                        timed_unit(m, topic, selective_unit)
            finally:
                if gc_was_enabled:
                    gc.enable()
        except SQPError as exc:
            raise PhaseError(phase, trial, fold, exc) from exc

        # ---- bookkeeping (untimed) ------------------------------------------
        n_tr = len(train)
        gen_shared = t_grid[0]
        timings += [
            (trial, fold, "L2R-D", "Gen", _per_query(t_l2r_gen[0], n_tr)),
            (trial, fold, "L2R-D", "Train", _per_query(t_l2r[0], n_tr)),
            (trial, fold, "Best trained", "Gen", _per_query(gen_shared, n_tr)),
            (trial, fold, "Best trained", "Train", _per_query(t_best[0], n_tr)),
            (trial, fold, "CombSum", "Gen", _per_query(gen_shared + t_pairs[0], n_tr)),
        ]
        for m in modes:
            timings.append((trial, fold, m, "Gen", _per_query(gen_shared + t_pairs[0] + t_feat[0], n_tr)))
            timings.append((trial, fold, m, "Train", _per_query(t_router[m], n_tr)))
        for name, values in rt_ms.items():
            timings.append((trial, fold, name, "RT", float(np.mean(values)) if values else 0.0))
            for topic, run in zip(test, test_runs[name]):
                for meas, fn in MEASURES.items():
                    per_topic.append((trial, fold, name, topic.topic_id, meas, fn(run, qrels, topic.topic_id)))
        for m in modes:
            pairs[(trial, fold, m)] = fold_pairs[m]
        if write:
            for gm in grids.values():
                gm.write_tsv(fold_dir / "grid.tsv", append=gm.measure != "AP")
            write_features(fold_dir / "features_train.tsv", feats)
            for m in modes:
                slug = m.replace(" ", "_")
                write_manifest(fold_dir / f"candidates_{slug}.txt", fold_pairs[m])
                write_model(fold_dir / f"model_{slug}.txt", models[m])
                write_labels(fold_dir / f"labels_{slug}.tsv", labels_by_mode[m])
            for name, runs_ in test_runs.items():
                write_run(fold_dir / "runs" / f"{name.replace(' ', '_')}.run", runs_,
                          tag=name.replace(" ", "_"))
        log.info("trial %d fold %d done (c1=%s)", trial, fold, best.thread_id)

    methods = [*BASELINES, *modes]
    table = build_table(per_topic, timings, methods)
    result = ExperimentResult(table, per_topic, timings, pairs, audit, out if write else None)
    if write:
        write_per_topic(out / "per_topic.tsv", per_topic)
        write_timings(out / "timings.tsv", timings)
        audit.write(out / "audit.tsv")
        (out / "report.txt").write_text(render_report(table, "text"), encoding="utf-8")
        (out / "report.tsv").write_text(render_report(table, "tsv"), encoding="utf-8")
        (out / "config.resolved.yaml").write_text(yaml.safe_dump(_config_dump(cfg), sort_keys=True))
    return result


def _config_dump(cfg: ExperimentConfig) -> dict:
    d = {}
    for k, v in vars(cfg).items():
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, (list, tuple)):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        d[k] = v
    d["backend"] = _accel.backend()
    return d

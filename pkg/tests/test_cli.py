import subprocess
import sys

import pytest

from sqp.cli import main
from sqp.corpus import parse_qrels
from sqp.evalkit import average_precision
from sqp.gridpoints import read_grid
from sqp.retrieval import read_run
from sqp.selector import read_manifest, read_model

CONFIG = """\
threads:
  grid: custom
  weighting: [BM25, PL2]
  expansion: [None, Bo1]
  D: [0, 5]
  T: [0, 5]
measure: AP
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.yaml").write_text(CONFIG)
    assert main(["synth", str(root / "corpus"), "--docs", "300", "--corpus-seed", "5"]) == 0
    return root


def sh(*argv):
    return main([str(a) for a in argv])


def test_pipeline(workspace, capsys):
    w, c = workspace, workspace / "corpus"
    cfg = ["--config", w / "cfg.yaml"]
    assert sh("index", c / "docs.trec", "-o", w / "index.npz") == 0
    assert sh("grid", *cfg, "--index", w / "index.npz", "--topics", c / "topics.trec",
              "--qrels", c / "qrels.txt", "-o", w / "grid") == 0
    grid = read_grid(w / "grid" / "grid.tsv", "AP")
    assert len(grid) == 4
    assert sh("candidates", *cfg, "--grid", w / "grid" / "grid.tsv", "--mode", "ERisk-SQP",
              "-o", w / "pair.txt") == 0
    pair = read_manifest(w / "pair.txt")
    assert sh("train", *cfg, "--index", w / "index.npz", "--topics", c / "topics.trec",
              "--grid", w / "grid" / "grid.tsv", "--candidates", w / "pair.txt",
              "--features-out", w / "f.tsv", "-o", w / "model.txt") == 0
    assert read_model(w / "model.txt").c2 == pair.c2
    assert sh("route", *cfg, "--index", w / "index.npz", "--topics", c / "topics.trec",
              "--model", w / "model.txt", "--decisions-out", w / "dec.tsv", "-o", w / "routed.run") == 0
    routed = read_run(w / "routed.run")
    qrels = parse_qrels(c / "qrels.txt")
    chosen = dict(line.split("\t") for line in (w / "dec.tsv").read_text().splitlines()[1:])
    for q, tid in chosen.items():
        assert tid in (pair.c1.thread_id, pair.c2.thread_id)
        assert average_precision(routed[q], qrels, q) == pytest.approx(grid.value(tid, q), abs=1e-12)
    runs = sorted((w / "grid" / "runs").iterdir())
    assert sh("fuse", runs[0], runs[1], "-o", w / "fused.run") == 0
    capsys.readouterr()
    assert sh("eval", w / "fused.run", "--qrels", c / "qrels.txt", "-o", w / "m.tsv") == 0
    assert capsys.readouterr().out.startswith("AP\tall\t")


def test_experiment_and_report(workspace, capsys):
    w = workspace
    (w / "exp.yaml").write_text(CONFIG + "desk: {n_docs: 300, seed: 5, n_clusters: 4}\ntrials: 1\n"
                                "output: exp\n")
    assert sh("experiment", "--config", w / "exp.yaml", "--format", "tsv") == 0
    first = capsys.readouterr().out
    assert first.startswith("method\tcolumn\tmean")
    assert sh("report", w / "exp", "--format", "tsv") == 0
    again = capsys.readouterr().out
    effective = lambda text: [l for l in text.splitlines() if l.split("\t")[1] in ("AP", "nDCG@10", "P@10")]
    assert effective(first) == effective(again)


@pytest.mark.parametrize("argv,code", [
    (["eval", "missing.run", "--qrels", "missing.txt"], 4),
    (["experiment"], 3),
    (["report", "."], 4),
])
def test_exit_codes(tmp_path, monkeypatch, argv, code, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    assert "error" in capsys.readouterr().err


def test_bad_config(tmp_path):
    (tmp_path / "c.yaml").write_text("measure: MAP\n")
    assert main(["--config", str(tmp_path / "c.yaml"), "index", "x", "-o", "y"]) == 3


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "sqp.cli", "grid"], capture_output=True, text=True)
    assert proc.returncode == 2 and "required" in proc.stderr


def test_global_flags_either_side(tmp_path):
    (tmp_path / "c.yaml").write_text("measure: MAP\n")
    assert main(["index", "--config", str(tmp_path / "c.yaml"), "x", "-o", "y"]) == 3

"""Command line driver: pipeline runs, option precedence, exit codes."""

import csv

import pytest

from pairrank.cli import build_parser, main, read_config_file, resolve_options
from pairrank.errors import DataError
from pairrank.image_features import read_embeddings
from pairrank.pairing import read_pairs


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """One simulated market taken through pairs and a trained model."""
    root = tmp_path_factory.mktemp("cli")
    market = root / "market"
    rc = main(["simulate", "--out", str(market), "--n", "900", "--days", "2",
               "--seed", "0", "--alpha", "1.5", "--noise", "0.3",
               "--vote-steps", "150"])
    assert rc == 0
    pairs = root / "pairs.tsv"
    rc = main(["pairs", "--in", str(market), "--out", str(pairs),
               "--max-window-secs", "3600", "--seed", "1"])
    assert rc == 0
    model = root / "model.tsv"
    rc = main(["train", "--in", str(market), "--pairs", str(pairs),
               "--out", str(model), "--features", "structural,unigram,time",
               "--min-df", "2", "--epochs", "15", "--patience", "4",
               "--seed", "0"])
    assert rc == 0
    return {"root": root, "market": market, "pairs": pairs, "model": model}


def test_simulate_writes_market(work):
    market = work["market"]
    for name in ("submissions.jsonl", "comments.jsonl", "truth.tsv", "market.json"):
        assert (market / name).exists()
    assert sum(1 for _ in open(market / "submissions.jsonl")) == 900


def test_pairs_output(work):
    pairs = read_pairs(work["pairs"])
    assert len(pairs) >= 50
    assert all(p.gap_seconds <= 3600 for p in pairs)
    assert all(abs(p.score_a - p.score_b) >= 20 for p in pairs)


def test_train_then_score(work, tmp_path, capsys):
    assert work["model"].exists()
    out = tmp_path / "scores.tsv"
    rc = main(["score", "--model", str(work["model"]), "--out", str(out)])
    assert rc == 0
    assert "scored 900 submissions" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert len(lines) == 900
    sid, value = lines[0].split("\t")
    assert sid == "s000000"
    float(value)


def test_evaluate_writes_report(work, tmp_path, capsys):
    out = tmp_path / "eval"
    rc = main(["evaluate", "--model", str(work["model"]), "--out", str(out),
               "--folds", "3"])
    assert rc == 0
    assert "mean accuracy" in capsys.readouterr().out
    assert (out / "report.txt").exists()
    assert (out / "accuracies.png").exists()
    assert (out / "group_shares.png").exists()
    with open(out / "report.csv", newline="") as fp:
        rows = list(csv.reader(fp))
    assert rows[0] == ["section", "key", "value"]
    by_key = {(r[0], r[1]): r[2] for r in rows[1:]}
    assert 0.0 <= float(by_key[("cv", "mean_accuracy")]) <= 1.0
    assert int(by_key[("cv", "n_splits")]) == 3
    text = (out / "report.txt").read_text()
    assert "== cross-validation ==" in text
    assert "== pair sample ==" in text


def test_heldout_runs_once(work, capsys):
    model, pairs = str(work["model"]), str(work["pairs"])
    assert main(["heldout", "--model", model, "--pairs", pairs]) == 0
    assert "held out accuracy" in capsys.readouterr().out
    ledger = work["pairs"].with_suffix(".ledger")
    assert ledger.exists()
    assert main(["heldout", "--model", model, "--pairs", pairs]) == 2
    assert "already evaluated" in capsys.readouterr().err
    assert main(["heldout", "--model", model, "--pairs", pairs, "--force"]) == 0


def test_analyze_writes_everything(work, tmp_path):
    out = tmp_path / "analysis"
    rc = main(["analyze", "--in", str(work["market"]), "--out", str(out),
               "--pairs", str(work["pairs"]), "--model", str(work["model"]),
               "--sample", "500"])
    assert rc == 0
    for name in ("report.txt", "report.csv", "diurnal.csv", "weekly.csv",
                 "yearly.csv", "diurnal.png", "weekly.png", "yearly.png",
                 "score_distribution.png", "feature_correlations.csv"):
        assert (out / name).exists(), name
    header = open(out / "feature_correlations.csv").readline().strip()
    assert header == "index,feature,r,ci_low,ci_high,significant,defined"
    text = (out / "report.txt").read_text()
    assert "rank correlation of model score with vote score" in text
    assert "strongest feature correlations" in text
    with open(out / "diurnal.csv", newline="") as fp:
        rows = list(csv.reader(fp))
    assert rows[0][0] == "minute"
    assert len(rows) == 1 + 1440


def test_featurize_exports_vectors(work, tmp_path):
    out = tmp_path / "vectors.tsv"
    rc = main(["featurize", "--in", str(work["market"]), "--out", str(out),
               "--features", "structural,time"])
    assert rc == 0
    table = read_embeddings(out)
    # 4 structural + 60 minute + 24 hour + 7 weekday + 1 observed year
    assert table.dim == 96
    assert len(table.vectors) == 900


# ---------------------------------------------------------------------------
# option plumbing

def test_config_file_precedence(tmp_path):
    cfg_file = tmp_path / "opts.cfg"
    cfg_file.write_text(
        "# window from the file\n"
        "max-window-secs = 100\n"
        "min_diff=30\n"
        "random = yes\n")
    ns = build_parser().parse_args(
        ["pairs", "--in", "d", "--out", "p",
         "--config", str(cfg_file), "--min-diff", "25"])
    cfg = resolve_options(ns, ns.opts)
    assert cfg["max_window_secs"] == 100   # file overrides default
    assert cfg["min_diff"] == 25           # flag overrides file
    assert cfg["random"] is True           # boolean words accepted
    assert cfg["min_score"] == 2           # untouched default survives
    assert cfg["seed"] == 0


def test_config_file_repeatable_option(tmp_path):
    cfg_file = tmp_path / "opts.cfg"
    cfg_file.write_text("embeddings=clip=a.tsv\n")
    ns = build_parser().parse_args(
        ["featurize", "--in", "d", "--out", "p", "--config", str(cfg_file)])
    assert resolve_options(ns, ns.opts)["embeddings"] == ["clip=a.tsv"]
    # a flag replaces the file value outright, like any other option
    ns = build_parser().parse_args(
        ["featurize", "--in", "d", "--out", "p", "--config", str(cfg_file),
         "--embeddings", "other=b.tsv"])
    assert resolve_options(ns, ns.opts)["embeddings"] == ["other=b.tsv"]


def test_read_config_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("key value\n")
    with pytest.raises(DataError, match="expected key=value"):
        read_config_file(path)
    path.write_text("=value\n")
    with pytest.raises(DataError, match="empty key"):
        read_config_file(path)
    path.write_text("seed=1\nseed=2\n")
    with pytest.raises(DataError, match="duplicate key"):
        read_config_file(path)
    path.write_text("\n# only comments\n\n")
    assert read_config_file(path) == {}
    with pytest.raises(DataError, match="cannot read config file"):
        read_config_file(tmp_path / "missing.cfg")


def test_unknown_config_key_fails(tmp_path, capsys):
    cfg_file = tmp_path / "opts.cfg"
    cfg_file.write_text("not-an-option=1\n")
    rc = main(["pairs", "--in", "d", "--out", "p", "--config", str(cfg_file)])
    assert rc == 2
    assert "unknown config key" in capsys.readouterr().err


def test_bad_config_value_fails(tmp_path, capsys):
    cfg_file = tmp_path / "opts.cfg"
    cfg_file.write_text("min-diff=lots\n")
    rc = main(["pairs", "--in", "d", "--out", "p", "--config", str(cfg_file)])
    assert rc == 2
    assert "bad value for 'min_diff'" in capsys.readouterr().err
    cfg_file.write_text("random=maybe\n")
    rc = main(["pairs", "--in", "d", "--out", "p", "--config", str(cfg_file)])
    assert rc == 2
    assert "not a boolean" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# exit codes

def test_missing_required_option_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["pairs", "--out", "somewhere"])
    assert exc.value.code == 1
    assert "missing required option(s): --in" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["pairs", "--bogus-flag", "1"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["not-a-command"])
    assert exc.value.code == 1


def test_data_errors_exit_2(tmp_path, capsys):
    rc = main(["pairs", "--in", str(tmp_path / "void"), "--out",
               str(tmp_path / "p.tsv")])
    assert rc == 2
    rc = main(["simulate", "--out", str(tmp_path / "m"), "--days", "0"])
    assert rc == 2
    assert "days must be positive" in capsys.readouterr().err


def test_pairs_any_day_requires_random(work, tmp_path, capsys):
    rc = main(["pairs", "--in", str(work["market"]),
               "--out", str(tmp_path / "p.tsv"), "--any-day"])
    assert rc == 2
    assert "--any-day only applies with --random" in capsys.readouterr().err


def test_bad_embedding_spec_exits_2(work, tmp_path, capsys):
    rc = main(["featurize", "--in", str(work["market"]),
               "--out", str(tmp_path / "v.tsv"), "--embeddings", "noequals"])
    assert rc == 2
    assert "bad embedding spec" in capsys.readouterr().err


def test_serve_bind_validation(capsys):
    rc = main(["serve-annotate", "--in", "x", "--pairs", "y", "--bind", "noport"])
    assert rc == 2
    assert "bad --bind" in capsys.readouterr().err
    rc = main(["serve-annotate", "--in", "x", "--pairs", "y",
               "--bind", "127.0.0.1:http"])
    assert rc == 2
    assert "bad port" in capsys.readouterr().err

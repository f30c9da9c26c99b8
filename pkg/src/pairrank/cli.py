"""Command line front end for the ranking pipeline.

Subcommands cover the full path from raw dumps (or the synthetic market)
through pair sampling, training, evaluation, and the judgment server.
Every option can also come from a key=value config file (--config);
explicit flags win over file values.

Exit codes: 0 on success, 1 for usage errors, 2 for data errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import report
from .errors import DataError
from .evaluation import (HeldoutLedger, baseline_accuracy, cross_validate,
                         diurnal_profile, feature_correlations,
                         featurizer_from_model, heldout_digest, heldout_eval,
                         mean_normalize, score_moments, spearman,
                         weekly_profile, yearly_profile)
from .featurize import DataBundle, FeatureParams, Featurizer
from .image_features import EmbeddingTable, read_embeddings, write_embeddings
from .images import load_image, phash64
from .ingest import (dedup, filter_active_days, read_comments, read_hashes,
                     read_submissions, write_comments, write_hashes,
                     write_submissions)
from .pairing import (PairConfig, pair_stats, read_pairs, sample_pairs,
                      sample_random_pairs, write_pairs)
from .ranker import TrainConfig, load_model, save_model, score, train_pairwise
from .server import serve_annotate
from .synth import MarketConfig, generate, write_market
from .textio import format_float

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# option plumbing

class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


@dataclasses.dataclass(frozen=True)
class Opt:
    name: str                      # flag name with hyphens, e.g. "max-window-secs"
    conv: object                   # str/int/float converter
    default: object
    help: str
    kind: str = "value"            # value | flag | repeat
    required: bool = False

    @property
    def key(self) -> str:
        return self.name.replace("-", "_")


def _flag(name: str, help: str) -> Opt:
    return Opt(name, None, False, help, kind="flag")


def _repeat(name: str, help: str) -> Opt:
    return Opt(name, str, [], help, kind="repeat")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict[str, str]:
    """key=value per line, # comments, blank lines ignored. Keys may use
    hyphens or underscores interchangeably."""
    out: dict[str, str] = {}
    try:
        fp = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from exc
    with fp:
        for lineno, raw in enumerate(fp, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key = key.strip().replace("-", "_")
            if not key:
                raise DataError(f"{path}:{lineno}: empty key")
            if key in out:
                raise DataError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def _attach(sub: argparse.ArgumentParser, opts: list[Opt]) -> None:
    for o in opts:
        flag = "--" + o.name
        if o.kind == "flag":
            sub.add_argument(flag, action="store_true",
                             default=argparse.SUPPRESS, help=o.help)
        elif o.kind == "repeat":
            sub.add_argument(flag, action="append", type=o.conv,
                             default=argparse.SUPPRESS, help=o.help)
        else:
            sub.add_argument(flag, type=o.conv,
                             default=argparse.SUPPRESS, help=o.help)
    sub.add_argument("--config", default=argparse.SUPPRESS,
                     help="key=value option file; explicit flags override it")


def resolve_options(ns: argparse.Namespace, opts: list[Opt]) -> dict:
    """Merge defaults, config file values, and command line flags (in that
    order of increasing precedence) into a plain dict keyed by option name."""
    table = {o.key: o for o in opts}
    cfg = {o.key: o.default for o in opts}
    given = dict(vars(ns))
    for internal in ("func", "opts", "verbose", "command"):
        given.pop(internal, None)
    config_path = given.pop("config", None)
    if config_path is not None:
        for key, raw in read_config_file(config_path).items():
            o = table.get(key)
            if o is None:
                raise DataError(f"{config_path}: unknown config key {key!r}")
            try:
                if o.kind == "flag":
                    cfg[key] = _parse_bool(raw)
                elif o.kind == "repeat":
                    cfg[key] = list(cfg[key]) + [raw]
                else:
                    cfg[key] = o.conv(raw)
            except ValueError as exc:
                raise DataError(f"{config_path}: bad value for {key!r}: {exc}") from exc
    cfg.update(given)
    missing = [o.name for o in opts if o.required and cfg[o.key] is None]
    if missing:
        flags = ", ".join("--" + m for m in missing)
        print(f"error: missing required option(s): {flags}", file=sys.stderr)
        sys.exit(1)
    return cfg


# ---------------------------------------------------------------------------
# shared loaders

def _parse_embedding_specs(specs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise DataError(f"bad embedding spec {spec!r}, expected name=path")
        if name in out:
            raise DataError(f"embedding table {name!r} given twice")
        out[name] = path
    return out


def load_bundle(data_dir, embedding_specs: list[str]) -> DataBundle:
    d = Path(data_dir)
    subs_file = d / "submissions.jsonl"
    if not subs_file.exists():
        raise DataError(f"no submissions file at {subs_file}")
    subs = read_submissions(subs_file)
    comments_file = d / "comments.jsonl"
    comments = read_comments(comments_file) if comments_file.exists() else []
    image_dir = d / "images"
    embeddings = {name: read_embeddings(path)
                  for name, path in _parse_embedding_specs(embedding_specs).items()}
    return DataBundle.build(subs, comments,
                            image_dir if image_dir.is_dir() else None,
                            embeddings)


def _feature_params(cfg: dict) -> FeatureParams:
    groups = [g.strip() for g in cfg["features"].split(",") if g.strip()]
    return FeatureParams(groups=groups,
                         min_df=cfg["min_df"],
                         unigram_counts=cfg["unigram_counts"],
                         quality_indices=not cfg["quality_rates_only"],
                         projection_dim=cfg["projection_dim"],
                         projection_seed=cfg["projection_seed"])


def _link_images(src_dir: Path, out_dir: Path) -> None:
    """Point out_dir/images at src_dir/images so later stages can resolve
    pixels without copying files."""
    src = src_dir / "images"
    if not src.is_dir():
        return
    dst = out_dir / "images"
    if dst.resolve() == src.resolve():
        return
    if dst.is_symlink():
        dst.unlink()
    if dst.exists():
        log.warning("not replacing existing %s", dst)
        return
    os.symlink(src.resolve(), dst)


FEATURE_OPTS = [
    Opt("features", str, "structural,unigram", "comma separated feature groups"),
    Opt("min-df", int, 5, "vocabulary document frequency floor"),
    _flag("unigram-counts", "use token counts instead of presence"),
    _flag("quality-rates-only", "drop per-index author quality features"),
    Opt("projection-dim", int, 2048, "projected gradient histogram width"),
    Opt("projection-seed", int, 0, "seed for the sign projection matrix"),
    _repeat("embeddings", "external embedding table as name=path (repeatable)"),
]


# ---------------------------------------------------------------------------
# subcommands

SIMULATE_OPTS = [
    Opt("out", str, None, "output directory", required=True),
    Opt("seed", int, 0, "generator seed"),
    Opt("n", int, 2000, "number of submissions"),
    Opt("days", int, 7, "span of the market in days"),
    Opt("start-utc", int, 1356998400, "epoch seconds of the first day"),
    Opt("community", str, "synthetic", "community name for every submission"),
    Opt("arrival-amp", float, 0.4, "amplitude of the daily arrival cycle"),
    Opt("mu-q", float, 0.0, "log quality mean"),
    Opt("sigma-q", float, 1.0, "log quality spread"),
    Opt("vote-steps", int, 200, "vote rounds per submission"),
    Opt("vote-bias", float, -1.0, "base log odds of an upvote"),
    Opt("alpha", float, 1.0, "quality weight in the vote model"),
    Opt("beta", float, 0.0, "herding weight on the running score"),
    Opt("gamma", float, 0.0, "time of day weight in the vote model"),
    Opt("noise", float, 0.5, "per item idiosyncratic vote noise"),
    _flag("no-downvotes", "score counts upvotes only"),
    Opt("n-vocab", int, 200, "background vocabulary size"),
    Opt("planted-pos", int, 8, "tokens correlated with quality"),
    Opt("planted-neg", int, 8, "tokens anti-correlated with quality"),
    Opt("plant-strength", float, 0.9, "emission rate scale for planted tokens"),
    Opt("drift-frac", float, None, "swap planted vocabulary after this fraction of the span"),
    _flag("images", "render synthetic thumbnails"),
    Opt("image-bias", float, 0.6, "quality share of the signal colors"),
    Opt("n-authors", int, 40, "author pool size"),
    Opt("author-skew", float, 1.0, "rank exponent for author activity"),
    Opt("author-mix", float, 0.0, "author trait share of log quality"),
    Opt("user-signal", float, 0.0, "correlation of author trait with activity"),
    Opt("comment-rate", float, 0.0, "expected comments per submission"),
]


def cmd_simulate(cfg: dict) -> None:
    mc = MarketConfig(
        n_submissions=cfg["n"], days=cfg["days"], start_utc=cfg["start_utc"],
        community=cfg["community"], seed=cfg["seed"],
        arrival_amp=cfg["arrival_amp"], mu_q=cfg["mu_q"], sigma_q=cfg["sigma_q"],
        vote_steps=cfg["vote_steps"], vote_bias=cfg["vote_bias"],
        alpha=cfg["alpha"], beta=cfg["beta"], gamma=cfg["gamma"],
        noise=cfg["noise"], downvotes=not cfg["no_downvotes"],
        n_vocab=cfg["n_vocab"], planted_pos=cfg["planted_pos"],
        planted_neg=cfg["planted_neg"], plant_strength=cfg["plant_strength"],
        drift_epoch_frac=cfg["drift_frac"], images=cfg["images"],
        image_bias=cfg["image_bias"], n_authors=cfg["n_authors"],
        author_activity_skew=cfg["author_skew"], author_mix=cfg["author_mix"],
        user_signal=cfg["user_signal"], comment_rate=cfg["comment_rate"])
    market = generate(mc)
    write_market(market, cfg["out"])
    print(f"wrote {len(market.submissions)} submissions, "
          f"{len(market.comments)} comments to {cfg['out']}")


INGEST_OPTS = [
    Opt("in", str, None, "input directory with submissions.jsonl", required=True),
    Opt("out", str, None, "output directory", required=True),
    Opt("min-active", int, 15, "keep communities active on at least this many days"),
    Opt("max-error-rate", float, 0.01, "tolerated share of malformed rows"),
]


def cmd_ingest(cfg: dict) -> None:
    src = Path(cfg["in"])
    subs = read_submissions(src / "submissions.jsonl", cfg["max_error_rate"])
    comments_file = src / "comments.jsonl"
    comments = (read_comments(comments_file, cfg["max_error_rate"])
                if comments_file.exists() else [])
    kept = filter_active_days(subs, cfg["min_active"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_submissions(kept, out / "submissions.jsonl")
    write_comments(comments, out / "comments.jsonl")
    hashes_file = src / "hashes.tsv"
    if hashes_file.exists():
        ids = {s.id for s in kept}
        hashes = {k: v for k, v in read_hashes(hashes_file).items() if k in ids}
        write_hashes(hashes, out / "hashes.tsv")
    _link_images(src, out)
    print(f"kept {len(kept)} of {len(subs)} submissions "
          f"({len(comments)} comments) -> {out}")


DEDUP_OPTS = [
    Opt("in", str, None, "input directory", required=True),
    Opt("out", str, None, "output directory", required=True),
    Opt("hamming", int, 5, "perceptual hash distance treated as duplicate"),
    Opt("max-error-rate", float, 0.01, "tolerated share of malformed rows"),
]


def cmd_dedup(cfg: dict) -> None:
    src = Path(cfg["in"])
    subs = read_submissions(src / "submissions.jsonl", cfg["max_error_rate"])
    hashes_file = src / "hashes.tsv"
    if hashes_file.exists():
        hashes = read_hashes(hashes_file)
    else:
        hashes = {}
        for sub in subs:
            if not sub.image:
                continue
            pixels, reason = load_image(src / sub.image)
            if pixels is None:
                log.warning("unreadable image for %s: %s", sub.id, reason)
                continue
            hashes[sub.id] = phash64(pixels)
    kept = dedup(subs, hashes, cfg["hamming"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_submissions(kept, out / "submissions.jsonl")
    comments_file = src / "comments.jsonl"
    if comments_file.exists():
        write_comments(read_comments(comments_file, cfg["max_error_rate"]),
                       out / "comments.jsonl")
    ids = {s.id for s in kept}
    write_hashes({k: v for k, v in hashes.items() if k in ids}, out / "hashes.tsv")
    _link_images(src, out)
    print(f"kept {len(kept)} of {len(subs)} submissions -> {out}")


PAIRS_OPTS = [
    Opt("in", str, None, "data directory", required=True),
    Opt("out", str, None, "output pair file", required=True),
    Opt("max-window-secs", int, 30, "largest creation time gap inside a pair"),
    Opt("min-diff", int, 20, "smallest admissible score difference"),
    Opt("min-ratio", float, 2.0, "smallest admissible score ratio"),
    Opt("min-score", int, 2, "smallest admissible member score"),
    Opt("seed", int, 0, "seed for slot randomization"),
    _flag("random", "sample random partners instead of minimizing the gap"),
    _flag("any-day", "with --random, allow partners from different days"),
]


def cmd_pairs(cfg: dict) -> None:
    pc = PairConfig(max_window_secs=cfg["max_window_secs"],
                    min_score_diff=cfg["min_diff"],
                    min_score_ratio=cfg["min_ratio"],
                    min_score=cfg["min_score"],
                    seed=cfg["seed"])
    subs = read_submissions(Path(cfg["in"]) / "submissions.jsonl")
    if cfg["random"]:
        pairs = sample_random_pairs(subs, pc, same_day=not cfg["any_day"])
    else:
        if cfg["any_day"]:
            raise DataError("--any-day only applies with --random")
        pairs = sample_pairs(subs, pc)
    write_pairs(pairs, cfg["out"])
    if pairs:
        st = pair_stats(pairs)
        print(f"{st.n_pairs} pairs, median gap {format_float(st.median_gap)}s, "
              f"median score diff {format_float(st.median_score_diff)} -> {cfg['out']}")
    else:
        print(f"0 pairs -> {cfg['out']}")


FEATURIZE_OPTS = [
    Opt("in", str, None, "data directory", required=True),
    Opt("out", str, None, "output vector table", required=True),
] + FEATURE_OPTS


def cmd_featurize(cfg: dict) -> None:
    bundle = load_bundle(cfg["in"], cfg["embeddings"])
    ids = sorted(bundle.submissions)
    params = _feature_params(cfg)
    fz = Featurizer.fit(params, bundle, ids)
    vectors = {sid: fz.vector(sid).dense() for sid in ids}
    write_embeddings(EmbeddingTable(dim=fz.space.dim, vectors=vectors), cfg["out"])
    print(f"wrote {len(ids)} vectors of dim {fz.space.dim} to {cfg['out']}")


TRAIN_OPTS = [
    Opt("in", str, None, "data directory", required=True),
    Opt("pairs", str, None, "training pair file", required=True),
    Opt("out", str, None, "output model file", required=True),
    Opt("lr", float, 0.05, "learning rate"),
    Opt("epochs", int, 120, "maximum passes over the pairs"),
    Opt("patience", int, 10, "epochs without validation gain before stopping"),
    Opt("l1", float, 0.0, "l1 penalty"),
    Opt("l2", float, 1e-4, "l2 penalty"),
    Opt("margin", float, 1.0, "hinge margin"),
    Opt("val-fraction", float, 0.1, "share of pairs held out for early stopping"),
    Opt("seed", int, 0, "shuffle and validation split seed"),
    Opt("hidden", int, 0, "hidden units (0 trains the linear model)"),
] + FEATURE_OPTS


def cmd_train(cfg: dict) -> None:
    bundle = load_bundle(cfg["in"], cfg["embeddings"])
    pairs = read_pairs(cfg["pairs"])
    params = _feature_params(cfg)
    item_ids: list[str] = []
    seen: set[str] = set()
    for p in pairs:
        for sid in (p.id_a, p.id_b):
            if sid not in seen:
                seen.add(sid)
                item_ids.append(sid)
    fz = Featurizer.fit(params, bundle, item_ids)
    tc = TrainConfig(learning_rate=cfg["lr"], epochs=cfg["epochs"],
                     patience=cfg["patience"], l1=cfg["l1"], l2=cfg["l2"],
                     margin=cfg["margin"], val_fraction=cfg["val_fraction"],
                     seed=cfg["seed"], hidden_units=cfg["hidden"])
    model = train_pairwise(pairs, fz, tc)
    model.meta = {"data_dir": str(cfg["in"]), "pairs_file": str(cfg["pairs"])}
    if cfg["embeddings"]:
        model.meta["embeddings"] = "\t".join(cfg["embeddings"])
    save_model(model, cfg["out"])
    print(f"{model.kind} model, val accuracy "
          f"{format_float(model.best_val_accuracy)} after {model.epochs_run} "
          f"epochs -> {cfg['out']}")


def _meta_fallback(cfg: dict, model, key: str, meta_key: str):
    if cfg.get(key) is not None:
        return cfg[key]
    value = model.meta.get(meta_key)
    if value is None:
        raise DataError(f"--{key.replace('_', '-')} not given and the model "
                        f"records no {meta_key}")
    return value


def _meta_embeddings(cfg: dict, model) -> list[str]:
    if cfg["embeddings"]:
        return cfg["embeddings"]
    stored = model.meta.get("embeddings")
    return stored.split("\t") if stored else []


EVALUATE_OPTS = [
    Opt("model", str, None, "trained model file", required=True),
    Opt("in", str, None, "data directory (defaults to the one recorded in the model)"),
    Opt("pairs", str, None, "pair file (defaults to the one recorded in the model)"),
    Opt("out", str, None, "report directory (defaults next to the model)"),
    Opt("folds", int, 15, "number of resampled splits"),
    Opt("test-fraction", float, 0.2, "share of pairs per test split"),
    Opt("seed", int, 0, "split seed"),
    _repeat("embeddings", "external embedding table as name=path (repeatable)"),
]


def cmd_evaluate(cfg: dict) -> None:
    model = load_model(cfg["model"])
    if model.feature_params is None:
        raise DataError("model records no feature parameters")
    bundle = load_bundle(_meta_fallback(cfg, model, "in", "data_dir"),
                         _meta_embeddings(cfg, model))
    pairs = read_pairs(_meta_fallback(cfg, model, "pairs", "pairs_file"))
    cv = cross_validate(pairs, bundle, model.feature_params, model.config,
                        n_splits=cfg["folds"],
                        test_fraction=cfg["test_fraction"], seed=cfg["seed"])
    baselines = {
        "earlier": baseline_accuracy(pairs, bundle, "earlier", seed=cfg["seed"]),
        "random": baseline_accuracy(pairs, bundle, "random", seed=cfg["seed"]),
    }
    out = Path(cfg["out"]) if cfg["out"] else Path(cfg["model"]).parent
    out.mkdir(parents=True, exist_ok=True)

    text, records = report.cv_section(cv, baselines)
    st_text, st_records = report.pair_stats_section(pair_stats(pairs))
    body = (f"pairwise ranking evaluation ({model.kind} model, "
            f"{cv.n_splits} splits)\n\n" + text + "\n" + st_text)
    (out / "report.txt").write_text(body, encoding="utf-8")
    report.write_records_csv(records + st_records, out / "report.csv")
    report.cv_accuracy_figure(cv, out / "accuracies.png", baselines)
    if cv.group_shares:
        report.group_share_figure(cv.group_shares, out / "group_shares.png")
    print(f"mean accuracy {format_float(cv.mean)} "
          f"+/- {format_float(cv.ci_half_width)} over {cv.n_splits} splits; "
          f"report in {out}")


HELDOUT_OPTS = [
    Opt("model", str, None, "trained model file", required=True),
    Opt("pairs", str, None, "held out pair file", required=True),
    Opt("in", str, None, "data directory (defaults to the one recorded in the model)"),
    Opt("ledger", str, None, "evaluation ledger (defaults next to the pair file)"),
    _flag("force", "evaluate again even if this model/pair digest was used"),
    _repeat("embeddings", "external embedding table as name=path (repeatable)"),
]


def cmd_heldout(cfg: dict) -> None:
    model_bytes = Path(cfg["model"]).read_bytes()
    pairs_bytes = Path(cfg["pairs"]).read_bytes()
    digest = heldout_digest(model_bytes, pairs_bytes)
    ledger_path = (Path(cfg["ledger"]) if cfg["ledger"]
                   else Path(cfg["pairs"]).with_suffix(".ledger"))
    ledger = HeldoutLedger(ledger_path)
    ledger.claim(digest, force=cfg["force"])

    model = load_model(cfg["model"])
    bundle = load_bundle(_meta_fallback(cfg, model, "in", "data_dir"),
                         _meta_embeddings(cfg, model))
    pairs = read_pairs(cfg["pairs"])
    fz = featurizer_from_model(model, bundle)
    acc = heldout_eval(model, fz, pairs)
    print(f"held out accuracy {format_float(acc)} over {len(pairs)} pairs "
          f"(digest {digest[:12]})")


SCORE_OPTS = [
    Opt("model", str, None, "trained model file", required=True),
    Opt("in", str, None, "data directory (defaults to the one recorded in the model)"),
    Opt("out", str, None, "output id<TAB>score file", required=True),
    _repeat("embeddings", "external embedding table as name=path (repeatable)"),
]


def cmd_score(cfg: dict) -> None:
    model = load_model(cfg["model"])
    bundle = load_bundle(_meta_fallback(cfg, model, "in", "data_dir"),
                         _meta_embeddings(cfg, model))
    fz = featurizer_from_model(model, bundle)
    ids = sorted(bundle.submissions)
    with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fp:
        for sid in ids:
            fp.write(f"{sid}\t{format_float(score(model, fz.vector(sid)))}\n")
    print(f"scored {len(ids)} submissions -> {cfg['out']}")


ANALYZE_OPTS = [
    Opt("in", str, None, "data directory", required=True),
    Opt("out", str, None, "report directory", required=True),
    Opt("pairs", str, None, "pair file for baseline accuracy"),
    Opt("model", str, None, "model file for score correlations"),
    Opt("diurnal-window", int, 30, "smoothing window in minutes"),
    Opt("mn-window", int, 3600, "mean normalization window in seconds"),
    Opt("sample", int, 2000, "row cap for the feature correlation scan"),
    Opt("seed", int, 0, "sampling seed"),
    _repeat("embeddings", "external embedding table as name=path (repeatable)"),
]


def _feature_label(fz: Featurizer, index: int) -> str:
    group = fz.space.group_of(index)
    start, _ = fz.space.offset(group)
    local = index - start
    if group == "unigram" and fz.vocab is not None:
        return f"unigram:{fz.vocab.tokens[local]}"
    return f"{group}[{local}]"


def cmd_analyze(cfg: dict) -> None:
    bundle = load_bundle(cfg["in"], cfg["embeddings"])
    subs = [bundle.submissions[k] for k in sorted(bundle.submissions)]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    skew, kurt = score_moments(subs)
    mn = mean_normalize(subs, window_secs=cfg["mn_window"])
    text_parts: list[str] = []
    records: list[tuple[str, str, object]] = []
    mo_text, mo_records = report.moments_section(skew, kurt, mn)
    text_parts.append(mo_text)
    records.extend(mo_records)

    diurnal = diurnal_profile(subs, window_minutes=cfg["diurnal_window"])
    weekly = weekly_profile(subs)
    yearly = yearly_profile(subs)
    report.write_profile_csv(diurnal, out / "diurnal.csv", x_name="minute")
    report.write_profile_csv(weekly, out / "weekly.csv", x_name="weekday")
    report.write_profile_csv(yearly, out / "yearly.csv", x_name="year")
    report.profile_figure(diurnal, out / "diurnal.png",
                          "mean score by minute of day", "minute of day")
    report.profile_figure(weekly, out / "weekly.png",
                          "mean score by weekday", "weekday (0 = Monday)",
                          bars=True)
    report.profile_figure(yearly, out / "yearly.png",
                          "mean score by year", "year", bars=True)
    report.score_distribution_figure(
        np.array([s.score for s in subs], dtype=float),
        out / "score_distribution.png", "score distribution")

    if cfg["pairs"]:
        pairs = read_pairs(cfg["pairs"])
        st_text, st_records = report.pair_stats_section(pair_stats(pairs))
        text_parts.append(st_text)
        records.extend(st_records)
        for kind in ("earlier", "random"):
            acc = baseline_accuracy(pairs, bundle, kind, seed=cfg["seed"])
            records.append(("baselines", kind, acc))
            text_parts.append(f"{kind} baseline accuracy: {report.fmt(acc)}")

    if cfg["model"]:
        model = load_model(cfg["model"])
        fz = featurizer_from_model(model, bundle)
        model_scores = np.array([score(model, fz.vector(s.id)) for s in subs])
        raw_scores = np.array([float(s.score) for s in subs])
        rho = spearman(model_scores, raw_scores)
        records.append(("model", "spearman_vs_score", rho))
        text_parts.append(f"rank correlation of model score with vote score: "
                          f"{report.fmt(rho)}")

        idx = np.arange(len(subs))
        if len(subs) > cfg["sample"]:
            rng = np.random.default_rng(cfg["seed"])
            idx = np.sort(rng.choice(len(subs), size=cfg["sample"], replace=False))
        matrix = np.stack([fz.vector(subs[i].id).dense() for i in idx])
        corrs = feature_correlations(model_scores[idx], matrix)
        rows = []
        with open(out / "feature_correlations.csv", "w", encoding="utf-8",
                  newline="\n") as fp:
            fp.write("index,feature,r,ci_low,ci_high,significant,defined\n")
            for c in corrs:
                label = _feature_label(fz, c.index)
                fp.write(",".join([str(c.index), label, report.fmt_csv(c.r),
                                   report.fmt_csv(c.ci_low),
                                   report.fmt_csv(c.ci_high),
                                   str(int(c.significant)),
                                   str(int(c.defined))]) + "\n")
                if c.defined:
                    rows.append((abs(c.r), label, c))
        rows.sort(key=lambda t: (-t[0], t[2].index))
        table = [[label, report.fmt(c.r),
                  f"[{report.fmt(c.ci_low)}, {report.fmt(c.ci_high)}]",
                  "yes" if c.significant else "no"]
                 for _, label, c in rows[:20]]
        text_parts.append("strongest feature correlations with the model score:\n"
                          + report.text_table(table, ["feature", "r", "ci", "significant"]))

    (out / "report.txt").write_text("\n\n".join(text_parts) + "\n", encoding="utf-8")
    report.write_records_csv(records, out / "report.csv")
    print(f"analysis written to {out}")


SERVE_OPTS = [
    Opt("in", str, None, "data directory", required=True),
    Opt("pairs", str, None, "pair file to collect judgments for", required=True),
    Opt("log", str, None, "judgment log (defaults to judgments.log in the data directory)"),
    Opt("static", str, None, "directory with the browser client"),
    Opt("bind", str, "127.0.0.1:8080", "host:port to listen on"),
    Opt("seed", int, 0, "per session pair order seed"),
]


def cmd_serve_annotate(cfg: dict) -> None:
    host, sep, port_text = cfg["bind"].rpartition(":")
    if not sep or not host:
        raise DataError(f"bad --bind {cfg['bind']!r}, expected host:port")
    try:
        port = int(port_text)
    except ValueError as exc:
        raise DataError(f"bad port in --bind {cfg['bind']!r}") from exc
    src = Path(cfg["in"])
    subs = read_submissions(src / "submissions.jsonl")
    pairs = read_pairs(cfg["pairs"])
    log_path = Path(cfg["log"]) if cfg["log"] else src / "judgments.log"
    image_dir = src / "images"
    serve_annotate(pairs, {s.id: s for s in subs},
                   image_dir if image_dir.is_dir() else None,
                   log_path, static_dir=cfg["static"], seed=cfg["seed"],
                   host=host, port=port)


# ---------------------------------------------------------------------------
# driver

COMMANDS = [
    ("simulate", cmd_simulate, SIMULATE_OPTS, "generate a synthetic vote market"),
    ("ingest", cmd_ingest, INGEST_OPTS, "read raw dumps and keep active communities"),
    ("dedup", cmd_dedup, DEDUP_OPTS, "drop lower scoring near-duplicate images"),
    ("pairs", cmd_pairs, PAIRS_OPTS, "sample time matched ranking pairs"),
    ("featurize", cmd_featurize, FEATURIZE_OPTS, "export feature vectors"),
    ("train", cmd_train, TRAIN_OPTS, "fit a pairwise ranker"),
    ("evaluate", cmd_evaluate, EVALUATE_OPTS, "cross validate and write a report"),
    ("heldout", cmd_heldout, HELDOUT_OPTS, "single shot held out accuracy"),
    ("score", cmd_score, SCORE_OPTS, "score every submission with a model"),
    ("analyze", cmd_analyze, ANALYZE_OPTS, "descriptive statistics and figures"),
    ("serve-annotate", cmd_serve_annotate, SERVE_OPTS, "run the judgment server"),
]


def build_parser() -> _Parser:
    parser = _Parser(prog="pairrank",
                     description="time matched pairwise popularity ranking")
    parser.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log at INFO level")
    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, func, opts, help_text in COMMANDS:
        sub = subs.add_parser(name, help=help_text)
        _attach(sub, opts)
        sub.set_defaults(func=func, opts=opts)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_options(ns, ns.opts)
        ns.func(cfg)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

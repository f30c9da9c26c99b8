"""Evaluation protocol and exploratory score statistics.

Covers the repeated-split cross-validation harness, one-shot held-out
evaluation with an evaluate-once ledger, rank correlation, per-feature
correlation screening with Bonferroni-adjusted intervals, and the
descriptive statistics used to motivate time-controlled pairing (diurnal /
weekly / yearly score profiles, windowed mean normalization, distribution
moments, human-judgment accuracy).
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import stats

from . import time_features
from .errors import DataError
from .featurize import DataBundle, FeatureParams, Featurizer
from .ingest import SECONDS_PER_DAY, Submission
from .pairing import A_WINS, RankedPair
from .ranker import RankerModel, TrainConfig, score, train_pairwise, weight_mass_by_group
from .text_features import Vocabulary

log = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
CI_LEVEL = 0.95


def t_half_width(values: np.ndarray, level: float = CI_LEVEL) -> float:
    """Half-width of a Student-t confidence interval for the mean."""
    n = len(values)
    if n < 2:
        return float("nan")
    sd = float(np.std(values, ddof=1))
    crit = float(stats.t.ppf(0.5 + level / 2.0, n - 1))
    return crit * sd / math.sqrt(n)


def pair_accuracy(model: RankerModel, featurizer: Featurizer,
                  pairs: list[RankedPair]) -> float:
    """Fraction of pairs whose score difference agrees with the label.

    Exact zero margins earn half credit, the same convention training uses
    for validation accuracy.
    """
    if not pairs:
        raise DataError("cannot compute accuracy over zero pairs")
    correct = 0.0
    for p in pairs:
        m = score(model, featurizer.vector(p.id_a)) - score(model, featurizer.vector(p.id_b))
        y = 1.0 if p.label == A_WINS else -1.0
        if m * y > 0:
            correct += 1.0
        elif m == 0.0:
            correct += 0.5
    return correct / len(pairs)


def baseline_accuracy(pairs: list[RankedPair], bundle: DataBundle,
                      kind: str = "earlier", seed: int = 0) -> float:
    """Accuracy of the non-learned baselines: "earlier" guesses the earlier
    post wins (coin flip on equal timestamps), "random" is a fair coin."""
    if not pairs:
        raise DataError("cannot compute accuracy over zero pairs")
    rng = random.Random(seed)
    correct = 0
    for p in pairs:
        if kind == "earlier":
            t_a = bundle.submission(p.id_a).created_utc
            t_b = bundle.submission(p.id_b).created_utc
            guess = time_features.earlier_baseline(t_a, t_b, rng)
        elif kind == "random":
            guess = time_features.random_baseline(rng)
        else:
            raise DataError(f"unknown baseline {kind!r}")
        correct += guess == p.label
    return correct / len(pairs)


# ---------------------------------------------------------------------------
# cross-validation

@dataclass
class CVReport:
    accuracies: list[float]          # one test accuracy per split
    mean: float
    ci_half_width: float             # t-based 95% over splits
    group_shares: dict[str, float]   # mean absolute-weight share per group
    n_pairs: int
    n_splits: int
    test_fraction: float
    seed: int


def cv_split(n_pairs: int, test_fraction: float, seed: int,
             split_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (test, train) index partition for one split.

    Membership depends only on (seed, split_index), never on prior splits,
    so any split can be recomputed in isolation.
    """
    n_test = int(round(test_fraction * n_pairs))
    if n_test < 1 or n_test >= n_pairs:
        raise DataError(
            f"test split of {n_test} out of {n_pairs} pairs "
            f"(test_fraction={test_fraction}) leaves nothing to train or test on")
    rng = np.random.default_rng([seed, split_index])
    perm = rng.permutation(n_pairs)
    return perm[:n_test], perm[n_test:]


def _pair_item_ids(pairs: list[RankedPair]) -> list[str]:
    seen = set()
    ids = []
    for p in pairs:
        for sid in (p.id_a, p.id_b):
            if sid not in seen:
                seen.add(sid)
                ids.append(sid)
    return ids


def cross_validate(pairs: list[RankedPair], bundle: DataBundle,
                   params: FeatureParams, cfg: TrainConfig,
                   n_splits: int = 15, test_fraction: float = 0.20,
                   seed: int = 0) -> CVReport:
    """Repeated random 80/20 split evaluation.

    Each split draws an independent seeded partition of the PAIRS (the pair
    is the atomic unit, so no submission straddles train and test within a
    split), refits the featurizer on that split's training pairs only, and
    trains with a per-split seed. Reported accuracy is the mean over splits
    with a t-based confidence half-width.
    """
    n = len(pairs)
    if n < 50:
        raise DataError(f"cross-validation needs at least 50 pairs, got {n}")
    accs: list[float] = []
    shares: list[dict[str, float]] = []
    for i in range(n_splits):
        test_idx, train_idx = cv_split(n, test_fraction, seed, i)
        test_pairs = [pairs[j] for j in test_idx]
        train_pairs = [pairs[j] for j in train_idx]
        featurizer = Featurizer.fit(params, bundle, _pair_item_ids(train_pairs))
        model = train_pairwise(train_pairs, featurizer, replace(cfg, seed=cfg.seed + i))
        acc = pair_accuracy(model, featurizer, test_pairs)
        accs.append(acc)
        shares.append(weight_mass_by_group(model))
        log.info("split %d/%d: test accuracy %.4f", i + 1, n_splits, acc)
    group_shares = {
        name: float(np.mean([s[name] for s in shares])) for name in shares[0]
    }
    arr = np.array(accs)
    return CVReport(
        accuracies=accs,
        mean=float(arr.mean()),
        ci_half_width=t_half_width(arr),
        group_shares=group_shares,
        n_pairs=n,
        n_splits=n_splits,
        test_fraction=test_fraction,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# held-out evaluation

def heldout_digest(model_bytes: bytes, pairs_bytes: bytes) -> str:
    """Digest identifying one (model, pair file) evaluation."""
    h = hashlib.sha256()
    h.update(hashlib.sha256(model_bytes).digest())
    h.update(hashlib.sha256(pairs_bytes).digest())
    return h.hexdigest()


class HeldoutLedger:
    """Append-only record of which held-out evaluations already ran.

    A held-out set is meant to be scored exactly once per model; repeats
    must be forced explicitly. The ledger holds one digest per line.
    """

    def __init__(self, path):
        self.path = Path(path)

    def seen(self, digest: str) -> bool:
        if not self.path.exists():
            return False
        return digest in self.path.read_text(encoding="utf-8").split()

    def claim(self, digest: str, force: bool = False) -> None:
        if self.seen(digest):
            if not force:
                raise DataError(
                    f"this model/pair-file combination was already evaluated "
                    f"(digest {digest[:12]}); pass --force to repeat")
            return
        with open(self.path, "a", encoding="utf-8") as fp:
            fp.write(digest + "\n")
            fp.flush()


def heldout_eval(model: RankerModel, featurizer: Featurizer,
                 pairs: list[RankedPair]) -> float:
    """Single-pass accuracy on a held-out pair set.

    The evaluate-once discipline (time-disjoint pairs, one look) is the
    caller's contract; the CLI enforces it through HeldoutLedger.
    """
    return pair_accuracy(model, featurizer, pairs)


def featurizer_from_model(model: RankerModel, bundle: DataBundle) -> Featurizer:
    """Rebuild the feature pipeline a saved model was trained with, pointed
    at a (possibly different) data bundle."""
    if model.feature_params is None:
        raise DataError("model carries no feature parameters; cannot rebuild a featurizer")
    vocab = Vocabulary(model.vocab) if model.vocab is not None else None
    return Featurizer.from_state(model.feature_params, bundle, vocab=vocab,
                                 year_range=model.year_range,
                                 imputation=model.imputation)


# ---------------------------------------------------------------------------
# correlations

def average_ranks(xs) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    return stats.rankdata(np.asarray(xs, dtype=np.float64), method="average")


def spearman(xs, ys) -> float:
    """Rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DataError("spearman needs two equal-length 1-d sequences")
    if len(x) < 2:
        raise DataError("spearman needs at least 2 observations")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise DataError("spearman is undefined when either side has constant ranks")
    return float((dx @ dy) / math.sqrt(vx * vy))


@dataclass
class FeatureCorrelation:
    index: int
    r: float          # NaN when the column is constant
    ci_low: float
    ci_high: float
    significant: bool
    defined: bool


def feature_correlations(scores, features, alpha: float = 0.05) -> list[FeatureCorrelation]:
    """Pearson correlation of each feature column against the scores.

    Confidence intervals use the Fisher z transform at a Bonferroni-adjusted
    level alpha / n_columns; a column is significant when its interval
    excludes zero. Constant columns have no defined correlation and are
    flagged rather than fatal.
    """
    s = np.asarray(scores, dtype=np.float64)
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or s.ndim != 1 or X.shape[0] != len(s):
        raise DataError("feature correlations need scores (n,) and features (n, k)")
    n, k = X.shape
    if n < 3:
        raise DataError(f"feature correlations need at least 3 rows, got {n}")
    if k == 0:
        return []
    sc = s - s.mean()
    ss = float(sc @ sc)
    if ss == 0.0:
        raise DataError("scores are constant; no correlation is defined")
    Xc = X - X.mean(axis=0)
    col_ss = np.einsum("ij,ij->j", Xc, Xc)
    defined = col_ss > 0.0
    r = np.full(k, np.nan)
    r[defined] = (sc @ Xc[:, defined]) / np.sqrt(ss * col_ss[defined])
    np.clip(r, -1.0, 1.0, out=r)

    crit = float(stats.norm.ppf(1.0 - (alpha / k) / 2.0))
    se = 1.0 / math.sqrt(n - 3) if n > 3 else math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.arctanh(r)
        lo = np.tanh(z - crit * se)
        hi = np.tanh(z + crit * se)
    exact = defined & (np.abs(r) == 1.0)
    lo[exact] = r[exact]
    hi[exact] = r[exact]
    out = []
    for j in range(k):
        ok = bool(defined[j])
        sig = ok and bool(lo[j] > 0.0 or hi[j] < 0.0)
        out.append(FeatureCorrelation(
            index=j, r=float(r[j]), ci_low=float(lo[j]), ci_high=float(hi[j]),
            significant=sig, defined=ok))
    return out


# ---------------------------------------------------------------------------
# score profiles over time

@dataclass
class ProfileCurve:
    """A plottable curve: one row per bin in x order."""
    x: np.ndarray
    mean: np.ndarray       # NaN where a bin is empty
    ci_low: np.ndarray     # NaN where fewer than 2 observations
    ci_high: np.ndarray
    count: np.ndarray


def _curve_from_sums(x: np.ndarray, c: np.ndarray, s1: np.ndarray,
                     s2: np.ndarray, level: float) -> ProfileCurve:
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = s1 / c
        var = (s2 - c * mean ** 2) / (c - 1.0)
    var = np.where(c >= 2, np.maximum(var, 0.0), np.nan)
    half = np.full(len(c), np.nan)
    enough = c >= 2
    if enough.any():
        crit = stats.t.ppf(0.5 + level / 2.0, c[enough] - 1.0)
        half[enough] = crit * np.sqrt(var[enough] / c[enough])
    return ProfileCurve(x=x, mean=mean, ci_low=mean - half, ci_high=mean + half,
                        count=c.astype(np.int64))


def diurnal_profile(subs: list[Submission], window_minutes: int = 30,
                    level: float = CI_LEVEL) -> ProfileCurve:
    """Sliding-window mean score against minute of day.

    For each UTC minute m the window covers minutes m - w/2 .. m + w/2 - 1
    (wrapping midnight), so every submission contributes to exactly
    window_minutes bins and the counts sum to n * window_minutes.
    """
    if not subs:
        raise DataError("diurnal profile needs at least one submission")
    if not 1 <= window_minutes <= MINUTES_PER_DAY:
        raise DataError(f"window of {window_minutes} minutes is out of range")
    mins = np.array([(s.created_utc % SECONDS_PER_DAY) // 60 for s in subs])
    scores = np.array([float(s.score) for s in subs])
    c = np.bincount(mins, minlength=MINUTES_PER_DAY).astype(np.float64)
    s1 = np.bincount(mins, weights=scores, minlength=MINUTES_PER_DAY)
    s2 = np.bincount(mins, weights=scores ** 2, minlength=MINUTES_PER_DAY)
    wc = np.zeros(MINUTES_PER_DAY)
    ws1 = np.zeros(MINUTES_PER_DAY)
    ws2 = np.zeros(MINUTES_PER_DAY)
    half_lo = window_minutes // 2
    for d in range(-half_lo, window_minutes - half_lo):
        wc += np.roll(c, -d)
        ws1 += np.roll(s1, -d)
        ws2 += np.roll(s2, -d)
    return _curve_from_sums(np.arange(MINUTES_PER_DAY), wc, ws1, ws2, level)


def weekly_profile(subs: list[Submission], level: float = CI_LEVEL) -> ProfileCurve:
    """Mean score per UTC day of week (0 = Monday)."""
    if not subs:
        raise DataError("weekly profile needs at least one submission")
    # epoch day 0 (1970-01-01) was a Thursday, index 3 with Monday = 0
    dows = np.array([(s.created_utc // SECONDS_PER_DAY + 3) % 7 for s in subs])
    scores = np.array([float(s.score) for s in subs])
    c = np.bincount(dows, minlength=7).astype(np.float64)
    s1 = np.bincount(dows, weights=scores, minlength=7)
    s2 = np.bincount(dows, weights=scores ** 2, minlength=7)
    return _curve_from_sums(np.arange(7), c, s1, s2, level)


def yearly_profile(subs: list[Submission], level: float = CI_LEVEL) -> ProfileCurve:
    """Mean score per UTC calendar year over the observed range."""
    if not subs:
        raise DataError("yearly profile needs at least one submission")
    years = np.array([
        datetime.fromtimestamp(s.created_utc, tz=timezone.utc).year for s in subs])
    scores = np.array([float(s.score) for s in subs])
    lo, hi = int(years.min()), int(years.max())
    idx = years - lo
    n_bins = hi - lo + 1
    c = np.bincount(idx, minlength=n_bins).astype(np.float64)
    s1 = np.bincount(idx, weights=scores, minlength=n_bins)
    s2 = np.bincount(idx, weights=scores ** 2, minlength=n_bins)
    return _curve_from_sums(np.arange(lo, hi + 1), c, s1, s2, level)


# ---------------------------------------------------------------------------
# windowed mean normalization

@dataclass
class MNResult:
    mn: dict[str, float]      # id -> score / mean neighbor score (NaN if undefined)
    covered_fraction: float   # share of submissions with >= min_neighbors neighbors
    mean_neighbors: float     # average in-window neighbor count


def mean_normalize(subs: list[Submission], window_secs: int = 3600,
                   min_neighbors: int = 5) -> MNResult:
    """Score of each submission divided by the mean score of its temporal
    neighbors (other submissions within half the window on either side).

    A submission with no neighbors, or whose neighbor mean is zero, has no
    defined normalized score and gets NaN. Coverage statistics quantify how
    often the window is actually populated.
    """
    if not subs:
        raise DataError("mean normalization needs at least one submission")
    half = window_secs // 2
    order = sorted(range(len(subs)), key=lambda k: (subs[k].created_utc, subs[k].id))
    ts = [subs[k].created_utc for k in order]
    sc = [float(subs[k].score) for k in order]
    n = len(order)
    prefix = np.concatenate([[0.0], np.cumsum(sc)])
    mn: dict[str, float] = {}
    counts = np.empty(n, dtype=np.int64)
    lo = 0
    hi = 0
    for i in range(n):
        while ts[lo] < ts[i] - half:
            lo += 1
        while hi < n and ts[hi] <= ts[i] + half:
            hi += 1
        count = hi - lo - 1
        counts[i] = count
        sid = subs[order[i]].id
        if count == 0:
            mn[sid] = float("nan")
            continue
        neighbor_mean = (prefix[hi] - prefix[lo] - sc[i]) / count
        mn[sid] = sc[i] / neighbor_mean if neighbor_mean != 0.0 else float("nan")
    return MNResult(
        mn=mn,
        covered_fraction=float(np.mean(counts >= min_neighbors)),
        mean_neighbors=float(counts.mean()),
    )


def score_moments(subs: list[Submission]) -> tuple[float, float]:
    """Sample skewness and excess kurtosis of the score distribution."""
    if len(subs) < 4:
        raise DataError(f"score moments need at least 4 submissions, got {len(subs)}")
    x = np.array([float(s.score) for s in subs])
    d = x - x.mean()
    m2 = float(np.mean(d ** 2))
    if m2 == 0.0:
        raise DataError("score moments are undefined for constant scores")
    skew = float(np.mean(d ** 3)) / m2 ** 1.5
    kurt = float(np.mean(d ** 4)) / m2 ** 2 - 3.0
    return skew, kurt


# ---------------------------------------------------------------------------
# human judgments

@dataclass
class AnnotatorStats:
    session_id: str
    n: int
    accuracy: float


@dataclass
class HumanAccuracy:
    per_annotator: list[AnnotatorStats]   # sorted by session id
    n_judgments: int
    accuracy: float                       # over all judgments; NaN when empty


def human_accuracy(judgments, pairs: list[RankedPair]) -> HumanAccuracy:
    """Agreement of human judgments with pair labels.

    Judgments need session_id, pair_id, and choice fields. Aggregate
    accuracy is per judgment, not per annotator, so prolific annotators
    weigh more, matching how the judgment log accumulates.
    """
    labels = {p.pair_id: p.label for p in pairs}
    per: dict[str, list[int]] = {}
    total = 0
    correct = 0
    for j in judgments:
        label = labels.get(j.pair_id)
        if label is None:
            raise DataError(f"judgment references unknown pair {j.pair_id!r}")
        ok = int(j.choice == label)
        per.setdefault(j.session_id, []).append(ok)
        total += 1
        correct += ok
    table = [
        AnnotatorStats(session_id=sid, n=len(oks), accuracy=sum(oks) / len(oks))
        for sid, oks in sorted(per.items())
    ]
    acc = correct / total if total else float("nan")
    return HumanAccuracy(per_annotator=table, n_judgments=total, accuracy=acc)

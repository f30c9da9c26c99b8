import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from pairrank.errors import DataError
from pairrank.evaluation import (CVReport, HeldoutLedger, baseline_accuracy,
                                 cross_validate, cv_split, diurnal_profile,
                                 feature_correlations, featurizer_from_model,
                                 heldout_digest, human_accuracy,
                                 mean_normalize, pair_accuracy, score_moments,
                                 spearman, t_half_width, weekly_profile,
                                 yearly_profile)
from pairrank.featurize import DataBundle, FeatureParams, Featurizer
from pairrank.features import FeatureSpace, FeatureVector
from pairrank.ingest import SECONDS_PER_DAY
from pairrank.pairing import PairConfig, RankedPair, sample_random_pairs
from pairrank.ranker import RankerModel, TrainConfig, train_pairwise

from conftest import mk_sub


# --- rank correlation ---------------------------------------------------------

def brute_spearman(xs, ys):
    """O(n^2) counting ranks, then a from-scratch Pearson."""
    def ranks(v):
        out = []
        for i, a in enumerate(v):
            less = sum(1 for b in v if b < a)
            ties = sum(1 for j, b in enumerate(v) if b == a and j != i)
            out.append(1.0 + less + ties / 2.0)
        return out

    rx, ry = ranks(list(xs)), ranks(list(ys))
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return num / math.sqrt(vx * vy)


def test_spearman_frozen_values():
    xs = (1, 2, 3, 4, 5)
    assert spearman(xs, (10, 20, 30, 40, 50)) == 1.0
    assert spearman(xs, (5, 4, 3, 2, 1)) == -1.0
    # two small instances pinned by hand rank computation
    assert abs(spearman(xs, (2, 1, 4, 3, 5)) - 0.8) < 1e-12
    assert abs(spearman(xs, (2, 3, 1, 4, 5)) - 0.7) < 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_spearman_matches_counting_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    xs = rng.integers(0, 8, size=n).astype(float)    # heavy ties
    ys = rng.normal(size=n)
    if len(set(xs)) == 1:
        xs[0] += 1.0
    assert abs(spearman(xs, ys) - brute_spearman(xs, ys)) <= 1e-12


def test_spearman_rejects_degenerate_input():
    with pytest.raises(DataError):
        spearman([1.0], [2.0])
    with pytest.raises(DataError):
        spearman([1, 2, 3], [1, 2])
    with pytest.raises(DataError):
        spearman([5, 5, 5], [1, 2, 3])


# --- confidence intervals ------------------------------------------------------

def test_t_half_width_values():
    assert t_half_width(np.array([0.5] * 10)) == 0.0
    # n = 2, sd = sqrt(0.5), t crit (df 1) = 12.7062047361747
    want = 12.7062047361747 * math.sqrt(0.5) / math.sqrt(2.0)
    assert abs(t_half_width(np.array([0.0, 1.0])) - want) < 1e-9
    assert math.isnan(t_half_width(np.array([1.0])))


# --- pair accuracy and baselines ------------------------------------------------

def linear_model(space, w):
    return RankerModel(space=space, mean=np.zeros(space.dim),
                       scale=np.ones(space.dim), weights=np.asarray(w, float),
                       hidden=None, config=TrainConfig())


class TinyFeats:
    def __init__(self, space, arrays):
        self.space = space
        self._vecs = {k: FeatureVector(space, np.arange(space.dim), v)
                      for k, v in arrays.items()}

    def vector(self, sid):
        return self._vecs[sid]


def test_pair_accuracy_hand_count():
    space = FeatureSpace((("g", 1),))
    feats = TinyFeats(space, {"hi": np.array([2.0]), "lo": np.array([1.0]),
                              "eq1": np.array([3.0]), "eq2": np.array([3.0])})
    model = linear_model(space, [1.0])
    pairs = [
        RankedPair("p0", "hi", "lo", "a", 5, 100, 2),    # correct
        RankedPair("p1", "lo", "hi", "a", 5, 100, 2),    # wrong
        RankedPair("p2", "eq1", "eq2", "a", 5, 100, 2),  # exact tie, half credit
    ]
    assert pair_accuracy(model, feats, pairs) == (1.0 + 0.0 + 0.5) / 3
    with pytest.raises(DataError):
        pair_accuracy(model, feats, [])


def coin_label_pairs(n, seed, spacing=100):
    """Pairs where a coin decides whether the earlier post is the winner."""
    rng = np.random.default_rng(seed)
    subs, pairs = [], []
    for k in range(n):
        t = k * spacing
        early_wins = rng.random() < 0.5
        se, sl = (100, 2) if early_wins else (2, 100)
        subs.append(mk_sub(f"e{k}", t, se))
        subs.append(mk_sub(f"l{k}", t + 30, sl))
        pairs.append(RankedPair(f"p{k}", f"e{k}", f"l{k}",
                                "a" if early_wins else "b", 30, se, sl))
    return DataBundle.build(subs), pairs


def test_earlier_baseline_is_chance_on_coin_labels():
    bundle, pairs = coin_label_pairs(5000, 0)
    acc = baseline_accuracy(pairs, bundle, kind="earlier")
    assert 0.48 <= acc <= 0.52
    acc_r = baseline_accuracy(pairs, bundle, kind="random")
    assert 0.48 <= acc_r <= 0.52


def test_earlier_baseline_is_perfect_when_age_decides():
    subs = [mk_sub("old", 0, 100), mk_sub("new", 30, 2)]
    pairs = [RankedPair("p0", "old", "new", "a", 30, 100, 2)]
    assert baseline_accuracy(pairs, DataBundle.build(subs)) == 1.0
    with pytest.raises(DataError):
        baseline_accuracy(pairs, DataBundle.build(subs), kind="oracle")
    with pytest.raises(DataError):
        baseline_accuracy([], DataBundle.build(subs))


# --- cross-validation ------------------------------------------------------------

def test_cv_split_is_a_pure_function_of_seed_and_index():
    t1, tr1 = cv_split(100, 0.2, seed=7, split_index=3)
    t2, tr2 = cv_split(100, 0.2, seed=7, split_index=3)
    np.testing.assert_array_equal(t1, t2)
    np.testing.assert_array_equal(tr1, tr2)
    assert len(t1) == 20 and len(tr1) == 80
    assert sorted(np.concatenate([t1, tr1]).tolist()) == list(range(100))
    other, _ = cv_split(100, 0.2, seed=7, split_index=4)
    assert sorted(other.tolist()) != sorted(t1.tolist())
    with pytest.raises(DataError):
        cv_split(10, 0.01, seed=0, split_index=0)
    with pytest.raises(DataError):
        cv_split(10, 1.0, seed=0, split_index=0)


@pytest.fixture(scope="module")
def market_pairs(small_market):
    cfg = PairConfig(max_window_secs=86400, seed=0)
    return sample_random_pairs(small_market.submissions, cfg, same_day=True)


def test_cross_validate_report_shape(small_bundle, market_pairs):
    params = FeatureParams(groups=["structural", "time"])
    cfg = TrainConfig(epochs=30, patience=5)
    rep = cross_validate(market_pairs, small_bundle, params, cfg, n_splits=3)
    assert isinstance(rep, CVReport)
    assert rep.n_splits == 3 and len(rep.accuracies) == 3
    assert rep.n_pairs == len(market_pairs)
    assert all(0.0 <= a <= 1.0 for a in rep.accuracies)
    assert rep.mean == float(np.mean(rep.accuracies))
    assert rep.ci_half_width == t_half_width(np.array(rep.accuracies))
    assert set(rep.group_shares) == {"structural", "time"}
    again = cross_validate(market_pairs, small_bundle, params, cfg, n_splits=3)
    assert again == rep


def test_cross_validate_needs_enough_pairs(small_bundle, market_pairs):
    with pytest.raises(DataError):
        cross_validate(market_pairs[:49], small_bundle,
                       FeatureParams(groups=["structural"]), TrainConfig())


# --- held-out ledger -------------------------------------------------------------

def test_heldout_digest_separates_inputs():
    d1 = heldout_digest(b"model-a", b"pairs-1")
    assert d1 == heldout_digest(b"model-a", b"pairs-1")
    assert d1 != heldout_digest(b"model-b", b"pairs-1")
    assert d1 != heldout_digest(b"model-a", b"pairs-2")
    assert len(d1) == 64


def test_ledger_enforces_evaluate_once(tmp_path):
    led = HeldoutLedger(tmp_path / "seen.ledger")
    d = heldout_digest(b"m", b"p")
    assert not led.seen(d)
    led.claim(d)
    assert led.seen(d)
    with pytest.raises(DataError, match="already evaluated"):
        led.claim(d)
    led.claim(d, force=True)                      # explicit repeat allowed
    led.claim(heldout_digest(b"m2", b"p"))        # other evaluations unaffected
    lines = (tmp_path / "seen.ledger").read_text().splitlines()
    assert lines == [d, heldout_digest(b"m2", b"p")]


def test_featurizer_from_model_rebuilds_the_pipeline():
    subs = [mk_sub(f"s{i}", 1_326_000_000 + i * 3600, 10 + i,
                   title=f"cat dog word{i % 3}", author=f"u{i % 2}")
            for i in range(8)]
    bundle = DataBundle.build(subs)
    params = FeatureParams(groups=["structural", "unigram", "time"], min_df=1)
    ids = [s.id for s in subs]
    fitted = Featurizer.fit(params, bundle, ids)
    rng = np.random.default_rng(0)
    pairs = []
    for k in range(60):
        i, j = rng.choice(8, size=2, replace=False)
        a, b = subs[i], subs[j]
        lab = "a" if a.score > b.score else "b"
        pairs.append(RankedPair(f"p{k}", a.id, b.id, lab, 5,
                                a.score, b.score))
    model = train_pairwise(pairs, fitted, TrainConfig(epochs=10, patience=3))
    rebuilt = featurizer_from_model(model, bundle)
    for sid in ids:
        np.testing.assert_array_equal(rebuilt.vector(sid).dense(),
                                      fitted.vector(sid).dense())
    model.feature_params = None
    with pytest.raises(DataError):
        featurizer_from_model(model, bundle)


# --- feature correlation screening -----------------------------------------------

def test_planted_columns_are_detected_with_sign():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(400, 15))
    scores = 2.0 * X[:, 5] - 1.5 * X[:, 7] + 0.5 * rng.normal(size=400)
    out = feature_correlations(scores, X)
    assert out[5].significant and out[5].r > 0.5
    assert out[7].significant and out[7].r < -0.5
    others = [c for c in out if c.index not in (5, 7)]
    assert sum(c.significant for c in others) <= 2
    for c in out:
        assert c.ci_low <= c.r <= c.ci_high


def test_bonferroni_keeps_null_false_positives_rare():
    rng = np.random.default_rng(2)
    datasets_with_hits = 0
    for _ in range(60):
        X = rng.normal(size=(100, 15))
        scores = rng.normal(size=100)
        out = feature_correlations(scores, X)
        datasets_with_hits += any(c.significant for c in out)
    # familywise error is held at 5% per dataset
    assert datasets_with_hits <= 9


def test_constant_column_is_flagged_not_fatal():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    X[:, 1] = 4.0
    out = feature_correlations(X[:, 0] + rng.normal(size=50) * 0.1, X)
    assert not out[1].defined and not out[1].significant
    assert math.isnan(out[1].r)
    assert out[0].defined


def test_perfect_correlation_has_degenerate_interval():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    # integer-valued column keeps the arithmetic exact, so r lands on 1.0
    X[:, 0] = np.arange(30)
    out = feature_correlations(np.arange(30, dtype=float), X)
    assert out[0].r == 1.0
    assert out[0].ci_low == 1.0 and out[0].ci_high == 1.0
    assert out[0].significant


def test_correlation_input_validation():
    with pytest.raises(DataError):
        feature_correlations([1.0, 2.0], np.zeros((2, 3)))
    with pytest.raises(DataError):
        feature_correlations([1.0, 1.0, 1.0], np.zeros((3, 2)))
    with pytest.raises(DataError):
        feature_correlations([1.0, 2.0, 3.0], np.zeros((4, 2)))
    assert feature_correlations([1.0, 2.0, 3.0], np.zeros((3, 0))) == []


# --- time-of-day / weekly / yearly profiles ----------------------------------------

def random_day_subs(seed, n=200, days=2, max_score=100):
    rng = np.random.default_rng(seed)
    return [mk_sub(f"s{i:04d}", int(rng.integers(0, days * SECONDS_PER_DAY)),
                   int(rng.integers(0, max_score))) for i in range(n)]


def brute_diurnal(subs, w):
    mins = [(s.created_utc % SECONDS_PER_DAY) // 60 for s in subs]
    half = w // 2
    mean = np.full(1440, np.nan)
    count = np.zeros(1440, dtype=np.int64)
    for m in range(1440):
        window = {(m + d) % 1440 for d in range(-half, w - half)}
        vals = [float(s.score) for s, mm in zip(subs, mins) if mm in window]
        count[m] = len(vals)
        if vals:
            mean[m] = float(np.mean(vals))
    return mean, count


def test_diurnal_counts_conserve_mass():
    subs = random_day_subs(0)
    for w in (1, 2, 30, 1440):
        prof = diurnal_profile(subs, window_minutes=w)
        assert int(prof.count.sum()) == len(subs) * w


def test_diurnal_matches_brute_recount():
    subs = random_day_subs(1, n=150)
    prof = diurnal_profile(subs, window_minutes=30)
    mean, count = brute_diurnal(subs, 30)
    np.testing.assert_array_equal(prof.count, count)
    np.testing.assert_allclose(prof.mean, mean, rtol=1e-9, equal_nan=True)
    assert prof.x.tolist() == list(range(1440))


def test_diurnal_window_alignment_and_wraparound():
    subs = [mk_sub("s0", 10 * 60, 40)]          # 00:10
    prof = diurnal_profile(subs, window_minutes=2)
    covered = np.nonzero(prof.count)[0]
    assert covered.tolist() == [10, 11]          # bins m cover minutes m-1, m
    late = diurnal_profile([mk_sub("s1", 1439 * 60 + 30, 7)], window_minutes=4)
    assert np.nonzero(late.count)[0].tolist() == [0, 1, 1438, 1439]


def test_diurnal_interval_matches_direct_t_formula():
    subs = [mk_sub("a", 100 * 60, 10), mk_sub("b", 100 * 60 + 30, 20),
            mk_sub("c", 101 * 60, 60)]
    prof = diurnal_profile(subs, window_minutes=4)
    vals = np.array([10.0, 20.0, 60.0])          # all three fall in bin 101
    want_half = float(stats.t.ppf(0.975, 2)) * vals.std(ddof=1) / math.sqrt(3)
    got_half = (prof.ci_high[101] - prof.ci_low[101]) / 2
    assert abs(got_half - want_half) < 1e-9
    assert prof.mean[101] == 30.0
    # empty and single-sub bins: NaN mean / NaN interval respectively
    assert math.isnan(prof.mean[500])
    one = np.nonzero(prof.count == 1)[0][0]
    assert math.isnan(prof.ci_low[one]) and not math.isnan(prof.mean[one])


def test_diurnal_input_validation():
    with pytest.raises(DataError):
        diurnal_profile([])
    with pytest.raises(DataError):
        diurnal_profile([mk_sub("s", 0, 1)], window_minutes=0)
    with pytest.raises(DataError):
        diurnal_profile([mk_sub("s", 0, 1)], window_minutes=1441)


def test_weekly_profile_uses_real_weekdays():
    # 2012-01-02 00:00 UTC was a Monday; epoch day zero was a Thursday
    monday = 1325462400
    subs = [mk_sub("m1", monday, 10), mk_sub("m2", monday + 60, 30),
            mk_sub("t1", monday + SECONDS_PER_DAY, 50),
            mk_sub("epoch", 0, 70)]
    prof = weekly_profile(subs)
    assert prof.x.tolist() == list(range(7))
    assert prof.count.tolist() == [2, 1, 0, 1, 0, 0, 0]
    assert prof.mean[0] == 20.0 and prof.mean[1] == 50.0 and prof.mean[3] == 70.0
    assert math.isnan(prof.mean[2])


def test_yearly_profile_covers_observed_range():
    subs = [mk_sub("a", 1293840000, 10),   # 2011-01-01
            mk_sub("b", 1293840060, 20),
            mk_sub("c", 1356998400 + 60, 90)]  # 2013-01-01
    prof = yearly_profile(subs)
    assert prof.x.tolist() == [2011, 2012, 2013]
    assert prof.count.tolist() == [2, 0, 1]
    assert prof.mean[0] == 15.0 and math.isnan(prof.mean[1]) and prof.mean[2] == 90.0


# --- windowed mean normalization ----------------------------------------------------

def brute_mn(subs, window):
    half = window // 2
    mn, counts = {}, []
    for s in subs:
        nb = [o for o in subs
              if o is not s and abs(o.created_utc - s.created_utc) <= half]
        counts.append(len(nb))
        if not nb:
            mn[s.id] = float("nan")
        else:
            m = sum(float(o.score) for o in nb) / len(nb)
            mn[s.id] = float(s.score) / m if m != 0.0 else float("nan")
    return mn, counts


def test_mean_normalize_matches_brute_recount():
    subs = random_day_subs(5, n=120, days=1)
    res = mean_normalize(subs, window_secs=3600, min_neighbors=5)
    want, counts = brute_mn(subs, 3600)
    assert set(res.mn) == set(want)
    for sid in want:
        a, b = res.mn[sid], want[sid]
        assert (math.isnan(a) and math.isnan(b)) or abs(a - b) < 1e-9
    assert res.covered_fraction == float(np.mean(np.array(counts) >= 5))
    assert abs(res.mean_neighbors - np.mean(counts)) < 1e-12


def test_mean_normalize_constant_scores_give_exactly_one():
    subs = [mk_sub(f"s{i}", i * 60, 7) for i in range(50)]
    res = mean_normalize(subs, window_secs=3600)
    assert all(v == 1.0 for v in res.mn.values())


def test_mean_normalize_edge_cases():
    lone = mean_normalize([mk_sub("only", 0, 5)])
    assert math.isnan(lone.mn["only"])
    assert lone.covered_fraction == 0.0 and lone.mean_neighbors == 0.0

    # neighbor mean of zero leaves the score undefined, not infinite
    res = mean_normalize([mk_sub("a", 0, 5), mk_sub("z", 10, 0)])
    assert math.isnan(res.mn["a"]) and res.mn["z"] == 0.0

    # the window is closed: exactly half a window away still counts
    res = mean_normalize([mk_sub("a", 0, 10), mk_sub("b", 1800, 20)],
                         window_secs=3600)
    assert res.mn["a"] == 0.5 and res.mn["b"] == 2.0
    res = mean_normalize([mk_sub("a", 0, 10), mk_sub("b", 1801, 20)],
                         window_secs=3600)
    assert math.isnan(res.mn["a"]) and math.isnan(res.mn["b"])

    with pytest.raises(DataError):
        mean_normalize([])


# --- distribution moments -------------------------------------------------------------

def test_score_moments_symmetric_fixture():
    subs = [mk_sub(f"s{i}", i, v) for i, v in enumerate((1, 2, 3, 4, 5))]
    skew, kurt = score_moments(subs)
    assert skew == 0.0
    assert abs(kurt - (6.8 / 4.0 - 3.0)) < 1e-12


def test_score_moments_sign_tracks_tail():
    heavy = [mk_sub(f"s{i}", i, v) for i, v in enumerate([1] * 30 + [1000])]
    skew, kurt = score_moments(heavy)
    assert skew > 3.0 and kurt > 10.0
    with pytest.raises(DataError):
        score_moments(heavy[:3])
    with pytest.raises(DataError):
        score_moments([mk_sub(f"c{i}", i, 5) for i in range(10)])


# --- human judgments --------------------------------------------------------------------

def J(session_id, pair_id, choice):
    return SimpleNamespace(session_id=session_id, pair_id=pair_id, choice=choice)


def test_human_accuracy_hand_count():
    pairs = [RankedPair("p0", "x", "y", "a", 5, 100, 2),
             RankedPair("p1", "u", "v", "b", 5, 2, 100)]
    js = [J("an0000", "p0", "a"), J("an0000", "p1", "a"),
          J("an0001", "p0", "a"), J("an0001", "p1", "b"),
          J("an0001", "p0", "b")]
    res = human_accuracy(js, pairs)
    assert res.n_judgments == 5
    assert res.accuracy == 3 / 5
    assert [(a.session_id, a.n, a.accuracy) for a in res.per_annotator] == [
        ("an0000", 2, 0.5), ("an0001", 3, 2 / 3)]


def test_human_accuracy_empty_and_unknown():
    pairs = [RankedPair("p0", "x", "y", "a", 5, 100, 2)]
    res = human_accuracy([], pairs)
    assert res.n_judgments == 0 and math.isnan(res.accuracy)
    with pytest.raises(DataError):
        human_accuracy([J("an0000", "nope", "a")], pairs)

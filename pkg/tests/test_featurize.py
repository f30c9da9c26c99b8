import numpy as np
import pytest

from pairrank import text_features, time_features, user_features
from pairrank.errors import DataError
from pairrank.featurize import DataBundle, FeatureParams, Featurizer, expand_groups
from pairrank.features import FeatureSpace, FeatureVector, sparse_diff
from pairrank.image_features import EmbeddingTable

from conftest import mk_com, mk_sub


def bundle_of(subs, coms=(), **kw):
    return DataBundle.build(list(subs), list(coms), **kw)


def text_bundle():
    subs = [
        mk_sub("s0", 1_326_000_000, 10, title="cat cat dog", author="a"),
        mk_sub("s1", 1_326_100_000, 40, title="cat bird", author="b"),
        mk_sub("s2", 1_326_200_000, 90, title="dog bird", author="a"),
        mk_sub("s3", 1_356_700_000, 5, title="zebra only here", author="c"),
    ]
    coms = [mk_com("c0", "a", "s0", "s0", 1_326_000_500, score=7,
                   body="nice dog you have")]
    return bundle_of(subs, coms)


# --- group algebra -----------------------------------------------------------

def test_user_alias_expands_in_order():
    assert expand_groups(["structural", "user", "time"]) == [
        "structural", "activity", "type", "quality", "time"]


def test_duplicates_collapse_and_unknown_is_fatal():
    assert expand_groups(["unigram", "unigram"]) == ["unigram"]
    assert expand_groups(["embedding:clip"]) == ["embedding:clip"]
    with pytest.raises(DataError):
        expand_groups(["colour"])
    with pytest.raises(DataError):
        expand_groups([])


# --- fitting is confined to the training split --------------------------------

def test_vocabulary_comes_only_from_train_titles():
    b = text_bundle()
    f = Featurizer.fit(FeatureParams(groups=["unigram"], min_df=1), b,
                       ["s0", "s1", "s2"])
    assert "zebra" not in f.vocab.tokens
    assert set(f.vocab.tokens) == {"cat", "dog", "bird"}
    # held-out items can still be transformed over the fitted vocabulary
    v = f.vector("s3")
    assert v.nnz == 0


def test_year_range_comes_only_from_train_times():
    b = text_bundle()
    f = Featurizer.fit(FeatureParams(groups=["time"]), b, ["s0", "s1", "s2"])
    assert f.year_range == (2012, 2012)
    # s3 is a 2012-12-28 timestamp, still inside; shift it out via a fresh sub
    assert f.space.dim == time_features.encoding_dim((2012, 2012))


def test_imputation_means_come_only_from_train_rows():
    subs = [mk_sub("s0", 1000, 10, author="veteran"),
            mk_sub("s1", 2000, 30, author="veteran"),
            mk_sub("s2", 3000, 50, author="fresh")]
    b = bundle_of(subs)
    f = Featurizer.fit(FeatureParams(groups=["activity"]), b, ["s0", "s1"])
    # the fresh author's row is entirely imputed from the two training rows
    train_raw = np.stack([
        user_features.user_feature_arrays(b.history(), "veteran", 1000)["activity"],
        user_features.user_feature_arrays(b.history(), "veteran", 2000)["activity"],
    ])
    want = np.nanmean(train_raw, axis=0)
    got = f.vector("s2").group("activity")
    # s2's author has no past at all, so every coordinate is the training mean
    np.testing.assert_allclose(got, want)


def test_vocab_empty_after_min_df_is_fatal():
    b = text_bundle()
    with pytest.raises(DataError):
        Featurizer.fit(FeatureParams(groups=["unigram"], min_df=10), b,
                       ["s0", "s1", "s2"])


# --- assembled vectors match the underlying functions --------------------------

def test_group_layout_and_values():
    b = text_bundle()
    params = FeatureParams(groups=["structural", "unigram", "time"], min_df=1)
    f = Featurizer.fit(params, b, ["s0", "s1", "s2"])
    assert [g for g, _ in f.space.groups] == ["structural", "unigram", "time"]
    sub = b.submission("s1")
    v = f.vector("s1")
    np.testing.assert_array_equal(
        v.group("structural"), text_features.structural_features(sub.title))
    np.testing.assert_array_equal(
        v.group("time"), time_features.time_onehot(sub.created_utc, f.year_range))
    uni = v.group("unigram")
    present = {f.vocab.tokens[i] for i in np.nonzero(uni)[0]}
    assert present == {"cat", "bird"}
    assert v.dense().shape == (f.space.dim,)


def test_quality_indices_toggle_changes_width():
    b = text_bundle()
    full = Featurizer.fit(FeatureParams(groups=["quality"]), b, ["s0", "s1"])
    half = Featurizer.fit(FeatureParams(groups=["quality"], quality_indices=False),
                          b, ["s0", "s1"])
    assert full.space.dim == user_features.N_QUALITY
    assert half.space.dim == user_features.N_QUALITY // 2


def test_embedding_group_reads_table():
    table = EmbeddingTable(dim=3, vectors={"s0": np.array([1.0, 0.0, 2.0]),
                                           "s1": np.array([0.5, 0.5, 0.5])})
    b = bundle_of([mk_sub("s0", 1000, 10), mk_sub("s1", 2000, 30)],
                  embeddings={"clip": table})
    f = Featurizer.fit(FeatureParams(groups=["embedding:clip"]), b, ["s0"])
    assert f.vector("s0").group("embedding:clip").tolist() == [1.0, 0.0, 2.0]
    b2 = bundle_of([mk_sub("s9", 1000, 10)], embeddings={"clip": table})
    f2 = Featurizer.fit(FeatureParams(groups=["embedding:clip"]), b2, ["s9"])
    with pytest.raises(DataError):
        f2.vector("s9")


def test_missing_embedding_table_is_fatal():
    b = text_bundle()
    with pytest.raises(DataError):
        Featurizer.fit(FeatureParams(groups=["embedding:resnet"]), b, ["s0"])


def test_unknown_submission_is_fatal():
    b = text_bundle()
    f = Featurizer.fit(FeatureParams(groups=["structural"]), b, ["s0"])
    with pytest.raises(DataError):
        f.vector("nope")


def test_image_groups_without_images_are_fatal():
    b = text_bundle()
    f = Featurizer.fit(FeatureParams(groups=["color"]), b, ["s0"])
    with pytest.raises(DataError):
        f.vector("s0")


# --- saved-state rebuild ------------------------------------------------------

def test_from_state_reproduces_fitted_vectors():
    b = text_bundle()
    params = FeatureParams(groups=["structural", "unigram", "user", "time"],
                           min_df=1)
    fitted = Featurizer.fit(params, b, ["s0", "s1", "s2"])
    rebuilt = Featurizer.from_state(params, b, vocab=fitted.vocab,
                                    year_range=fitted.year_range,
                                    imputation=fitted.imputation)
    assert rebuilt.space == fitted.space
    for sid in ("s0", "s1", "s2", "s3"):
        a, bvec = fitted.vector(sid), rebuilt.vector(sid)
        np.testing.assert_array_equal(a.indices, bvec.indices)
        np.testing.assert_array_equal(a.values, bvec.values)


def test_from_state_missing_pieces_are_fatal():
    b = text_bundle()
    with pytest.raises(DataError):
        Featurizer.from_state(FeatureParams(groups=["unigram"]), b,
                              vocab=None, year_range=None, imputation={})
    with pytest.raises(DataError):
        Featurizer.from_state(FeatureParams(groups=["time"]), b,
                              vocab=None, year_range=None, imputation={})
    with pytest.raises(DataError):
        Featurizer.from_state(FeatureParams(groups=["activity"]), b,
                              vocab=None, year_range=None, imputation={})


# --- caching ------------------------------------------------------------------

def test_vectors_are_cached_per_featurizer():
    b = text_bundle()
    f = Featurizer.fit(FeatureParams(groups=["structural"]), b, ["s0"])
    assert f.vector("s0") is f.vector("s0")


def test_fit_independent_work_is_shared_through_the_bundle(small_bundle):
    ids = sorted(small_bundle.submissions)
    with_img = [s for s in ids if small_bundle.submissions[s].image][:3]
    params = FeatureParams(groups=["color", "hog"])
    f1 = Featurizer.fit(params, small_bundle, with_img[:2])
    v1 = [f1.vector(s) for s in with_img]
    f2 = Featurizer.fit(params, small_bundle, with_img[1:])
    assert f2.projector() is f1.projector()
    for s, old in zip(with_img, v1):
        new = f2.vector(s)
        np.testing.assert_array_equal(new.indices, old.indices)
        np.testing.assert_array_equal(new.values, old.values)


# --- sparse vector plumbing ----------------------------------------------------

def test_sparse_diff_is_exact_subtraction():
    space = FeatureSpace((("g", 5),))
    a = FeatureVector(space, [0, 2, 4], [1.0, 2.0, 3.0])
    b = FeatureVector(space, [2, 3], [2.0, 5.0])
    idx, val = sparse_diff(a, b)
    assert idx.tolist() == [0, 3, 4]
    assert val.tolist() == [1.0, -5.0, 3.0]


def test_feature_vector_rejects_junk():
    space = FeatureSpace((("g", 3),))
    with pytest.raises(ValueError):
        FeatureVector(space, [0, 5], [1.0, 1.0])
    with pytest.raises(ValueError):
        FeatureVector(space, [0, 0], [1.0, 1.0])
    with pytest.raises(ValueError):
        FeatureVector(space, [0], [float("inf")])
    v = FeatureVector(space, [2, 0], [1.0, 3.0])   # unsorted input is sorted
    assert v.indices.tolist() == [0, 2] and v.values.tolist() == [3.0, 1.0]
    z = FeatureVector(space, [1], [0.0])           # explicit zeros are dropped
    assert z.nnz == 0

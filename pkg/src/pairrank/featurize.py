"""Fitted feature pipelines: from raw records to FeatureVectors.

A Featurizer is fit on a training split (vocabulary, imputation means, year
range come only from that split) and then maps any submission id to a sparse
vector over a fixed FeatureSpace. Anything fitted here is carried inside
saved models so novel submissions can be scored later.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import image_features, text_features, time_features, user_features
from .errors import DataError
from .features import FeatureSpace, FeatureVector
from .image_features import EmbeddingTable, SignProjector
from .images import load_image
from .ingest import Comment, Submission
from .user_features import UserHistory

log = logging.getLogger(__name__)

HAND_GROUPS = ("structural", "unigram", "color", "hog",
               "activity", "type", "quality", "time")
USER_GROUPS = ("activity", "type", "quality")
EMBEDDING_PREFIX = "embedding:"


def expand_groups(names: list[str]) -> list[str]:
    """Validate and expand group names; "user" is an alias for the three
    author-history groups. Order is preserved, duplicates are dropped."""
    out: list[str] = []
    for name in names:
        parts = USER_GROUPS if name == "user" else (name,)
        for part in parts:
            if part not in HAND_GROUPS and not part.startswith(EMBEDDING_PREFIX):
                raise DataError(f"unknown feature group {part!r}")
            if part not in out:
                out.append(part)
    if not out:
        raise DataError("no feature groups requested")
    return out


@dataclass
class FeatureParams:
    groups: list[str]
    min_df: int = 5
    unigram_counts: bool = False
    quality_indices: bool = True
    projection_dim: int = image_features.PROJECTION_DIM
    projection_seed: int = 0


@dataclass
class DataBundle:
    """The raw tables a featurizer draws from."""
    submissions: dict[str, Submission]
    comments: list[Comment] = field(default_factory=list)
    image_dir: Path | None = None
    embeddings: dict[str, EmbeddingTable] = field(default_factory=dict)
    _history: UserHistory | None = None
    # memo for per-item values that do not depend on any fitted state, shared
    # by every featurizer over this bundle (e.g. across CV splits)
    _memo: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, submissions: list[Submission], comments: list[Comment] | None = None,
              image_dir=None, embeddings: dict[str, EmbeddingTable] | None = None):
        return cls(
            submissions={s.id: s for s in submissions},
            comments=list(comments or []),
            image_dir=Path(image_dir) if image_dir is not None else None,
            embeddings=dict(embeddings or {}),
        )

    def history(self) -> UserHistory:
        if self._history is None:
            subs = sorted(self.submissions.values(), key=lambda s: s.created_utc)
            coms = sorted(self.comments, key=lambda c: c.created_utc)
            self._history = UserHistory(subs, coms)
        return self._history

    def submission(self, sid: str) -> Submission:
        sub = self.submissions.get(sid)
        if sub is None:
            raise DataError(f"unknown submission id {sid!r}")
        return sub

    def pixels(self, sid: str) -> np.ndarray:
        sub = self.submission(sid)
        if sub.image is None:
            raise DataError(f"submission {sid!r} has no image but image features were requested")
        if self.image_dir is None:
            raise DataError("image features requested but no image directory configured")
        pixels, reason = load_image(self.image_dir / sub.image)
        if pixels is None:
            raise DataError(f"image for submission {sid!r} unusable: {reason}")
        return pixels


class Featurizer:
    """A feature pipeline fitted on one training split."""

    def __init__(self, params: FeatureParams, bundle: DataBundle, *,
                 space: FeatureSpace,
                 vocab: text_features.Vocabulary | None,
                 year_range: tuple[int, int] | None,
                 imputation: dict[str, user_features.ImputationMeans]):
        self.params = params
        self.bundle = bundle
        self.space = space
        self.vocab = vocab
        self._vocab_index = vocab.index() if vocab is not None else None
        self.year_range = year_range
        self.imputation = imputation
        self._projector: SignProjector | None = None
        self._cache: dict[str, FeatureVector] = {}

    # -- fitting ------------------------------------------------------------

    @classmethod
    def fit(cls, params: FeatureParams, bundle: DataBundle,
            train_ids: list[str]) -> "Featurizer":
        groups = expand_groups(params.groups)
        params = FeatureParams(groups=groups, min_df=params.min_df,
                               unigram_counts=params.unigram_counts,
                               quality_indices=params.quality_indices,
                               projection_dim=params.projection_dim,
                               projection_seed=params.projection_seed)
        train_subs = [bundle.submission(sid) for sid in train_ids]

        vocab = None
        if "unigram" in groups:
            vocab = text_features.build_vocab([s.title for s in train_subs], params.min_df)
            if len(vocab) == 0:
                raise DataError(
                    f"training vocabulary is empty at min_df={params.min_df}")

        year_range = None
        if "time" in groups:
            if not train_subs:
                raise DataError("cannot fit a time encoding on an empty training split")
            years = [datetime.fromtimestamp(s.created_utc, tz=timezone.utc).year
                     for s in train_subs]
            year_range = (min(years), max(years))

        imputation: dict[str, user_features.ImputationMeans] = {}
        wanted_user = [g for g in groups if g in USER_GROUPS]
        if wanted_user:
            history = bundle.history()
            rows: dict[str, list[np.ndarray]] = {g: [] for g in wanted_user}
            for sub in train_subs:
                arrays = user_features.user_feature_arrays(
                    history, sub.author, sub.created_utc, params.quality_indices)
                for g in wanted_user:
                    rows[g].append(arrays[g])
            for g in wanted_user:
                imputation[g] = user_features.fit_imputation(np.stack(rows[g]))

        space = cls._build_space(params, bundle, vocab, year_range)
        return cls(params, bundle, space=space, vocab=vocab,
                   year_range=year_range, imputation=imputation)

    @classmethod
    def from_state(cls, params: FeatureParams, bundle: DataBundle, *,
                   vocab: text_features.Vocabulary | None,
                   year_range: tuple[int, int] | None,
                   imputation: dict[str, user_features.ImputationMeans]) -> "Featurizer":
        """Rebuild a featurizer from previously fitted state (as carried in
        a saved model) without refitting anything."""
        groups = expand_groups(params.groups)
        params = FeatureParams(groups=groups, min_df=params.min_df,
                               unigram_counts=params.unigram_counts,
                               quality_indices=params.quality_indices,
                               projection_dim=params.projection_dim,
                               projection_seed=params.projection_seed)
        if "unigram" in groups and vocab is None:
            raise DataError("unigram features need a fitted vocabulary")
        if "time" in groups and year_range is None:
            raise DataError("time features need a fitted year range")
        for g in groups:
            if g in USER_GROUPS and g not in imputation:
                raise DataError(f"user feature group {g!r} has no imputation means")
        space = cls._build_space(params, bundle, vocab, year_range)
        return cls(params, bundle, space=space, vocab=vocab,
                   year_range=year_range, imputation=imputation)

    @staticmethod
    def _build_space(params: FeatureParams, bundle: DataBundle,
                     vocab, year_range) -> FeatureSpace:
        dims = []
        for g in params.groups:
            if g == "structural":
                dims.append((g, text_features.N_STRUCTURAL))
            elif g == "unigram":
                dims.append((g, len(vocab)))
            elif g == "color":
                dims.append((g, image_features.N_PALETTE))
            elif g == "hog":
                dims.append((g, params.projection_dim))
            elif g == "activity":
                dims.append((g, user_features.N_ACTIVITY))
            elif g == "type":
                dims.append((g, user_features.N_TYPE))
            elif g == "quality":
                n = user_features.N_QUALITY
                dims.append((g, n if params.quality_indices else n // 2))
            elif g == "time":
                dims.append((g, time_features.encoding_dim(year_range)))
            elif g.startswith(EMBEDDING_PREFIX):
                name = g[len(EMBEDDING_PREFIX):]
                table = bundle.embeddings.get(name)
                if table is None:
                    raise DataError(f"no embedding table named {name!r} was loaded")
                dims.append((g, table.dim))
        return FeatureSpace(tuple(dims))

    # -- transforming -------------------------------------------------------

    def projector(self) -> SignProjector:
        if self._projector is None:
            key = ("projector", image_features.HOG_DIM,
                   self.params.projection_dim, self.params.projection_seed)
            proj = self.bundle._memo.get(key)
            if proj is None:
                proj = SignProjector(image_features.HOG_DIM,
                                     self.params.projection_dim,
                                     self.params.projection_seed)
                self.bundle._memo[key] = proj
            self._projector = proj
        return self._projector

    def vector(self, sid: str) -> FeatureVector:
        cached = self._cache.get(sid)
        if cached is not None:
            return cached
        sub = self.bundle.submission(sid)
        idx_parts: list[np.ndarray] = []
        val_parts: list[np.ndarray] = []
        pixels = None
        user_arrays = None

        def add_dense(group: str, arr: np.ndarray) -> None:
            start, gdim = self.space.offset(group)
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (gdim,):
                raise DataError(f"group {group!r}: expected dim {gdim}, got {arr.shape}")
            nz = np.nonzero(arr)[0]
            idx_parts.append(nz + start)
            val_parts.append(arr[nz])

        for g in self.params.groups:
            if g == "structural":
                add_dense(g, text_features.structural_features(sub.title))
            elif g == "unigram":
                start, _ = self.space.offset(g)
                idx, val = text_features.unigram_features(
                    sub.title, self.vocab, self._vocab_index,
                    counts=self.params.unigram_counts)
                idx_parts.append(idx + start)
                val_parts.append(val)
            elif g in ("color", "hog"):
                key = ((g, sid) if g == "color" else
                       (g, sid, self.params.projection_dim, self.params.projection_seed))
                arr = self.bundle._memo.get(key)
                if arr is None:
                    if pixels is None:
                        pixels = self.bundle.pixels(sid)
                    if g == "color":
                        arr = image_features.color_histogram(pixels)
                    else:
                        arr = self.projector().project(image_features.hog_features(pixels))
                    self.bundle._memo[key] = arr
                add_dense(g, arr)
            elif g in USER_GROUPS:
                if user_arrays is None:
                    user_arrays = user_features.user_feature_arrays(
                        self.bundle.history(), sub.author, sub.created_utc,
                        self.params.quality_indices)
                add_dense(g, user_features.impute(user_arrays[g], self.imputation[g]))
            elif g == "time":
                add_dense(g, time_features.time_onehot(sub.created_utc, self.year_range))
            elif g.startswith(EMBEDDING_PREFIX):
                name = g[len(EMBEDDING_PREFIX):]
                table = self.bundle.embeddings[name]
                vec = table.vectors.get(sid)
                if vec is None:
                    raise DataError(f"embedding table {name!r} has no vector for {sid!r}")
                add_dense(g, vec)

        if idx_parts:
            indices = np.concatenate(idx_parts)
            values = np.concatenate(val_parts)
        else:
            indices = np.empty(0, dtype=np.int64)
            values = np.empty(0, dtype=np.float64)
        fv = FeatureVector(self.space, indices, values)
        self._cache[sid] = fv
        return fv

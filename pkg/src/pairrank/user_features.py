"""Author history features.

Every feature of an author at time T is computed from events strictly
before T, so two events at the same timestamp never see each other. A
statistic whose underlying population is empty is returned as NaN, the
imputation sentinel; training-set means fill those in later.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .ingest import Comment, DELETED_AUTHOR, Submission
from .text_features import tokenize

log = logging.getLogger(__name__)

QUALITY_KS = (5, 10, 50, 100)

N_ACTIVITY = 4
N_TYPE = 6
N_QUALITY = 2 * 2 * len(QUALITY_KS)   # {index, rate} x {posts, comments} x ks

SENTINEL = float("nan")


@dataclass
class _AuthorPosts:
    times: np.ndarray          # sorted
    scores: np.ndarray
    second_own_comment: np.ndarray   # time the author's 2nd comment in own thread appeared, inf if never


@dataclass
class _AuthorComments:
    times: np.ndarray          # sorted
    scores: np.ndarray
    n_tokens: np.ndarray
    ttr: np.ndarray
    depth: np.ndarray          # nan when the parent chain is unresolvable
    latency: np.ndarray        # seconds from thread start, nan for orphans
    first_reply: np.ndarray    # time of earliest reply, inf if never replied


@dataclass
class UserSnapshot:
    """An author's visible history strictly before as_of."""
    author: str
    as_of: int
    n_posts: int
    n_comments: int
    first_seen: float           # nan when no prior events
    last_interaction: float     # nan when no prior events
    post_scores: np.ndarray
    comment_scores: np.ndarray
    comment_tokens: np.ndarray
    comment_ttr: np.ndarray
    comment_depth: np.ndarray
    comment_latency: np.ndarray
    n_comments_with_reply: int
    n_own_posts_multi_comment: int


def _check_sorted(times, what: str) -> None:
    for prev, cur in zip(times, times[1:]):
        if cur < prev:
            raise DataError(f"{what} are not sorted by created_utc")


class UserHistory:
    """Per-author event index supporting strictly-prior snapshots."""

    def __init__(self, submissions: list[Submission], comments: list[Comment]):
        _check_sorted([s.created_utc for s in submissions], "submissions")
        _check_sorted([c.created_utc for c in comments], "comments")

        sub_times = {s.id: s.created_utc for s in submissions}
        by_id = {c.id: c for c in comments}

        first_reply: dict[str, int] = {}
        for c in comments:
            if c.parent_id in by_id:
                t = first_reply.get(c.parent_id)
                if t is None or c.created_utc < t:
                    first_reply[c.parent_id] = c.created_utc

        depth = self._resolve_depths(comments, by_id)

        # author's own comments inside their own threads, for the
        # multi-comment share feature
        own_thread_comments: dict[tuple[str, str], list[int]] = {}
        for c in comments:
            own_thread_comments.setdefault((c.author, c.link_id), []).append(c.created_utc)

        posts_by_author: dict[str, list[Submission]] = {}
        for s in submissions:
            posts_by_author.setdefault(s.author, []).append(s)
        comments_by_author: dict[str, list[Comment]] = {}
        for c in comments:
            comments_by_author.setdefault(c.author, []).append(c)

        self._posts: dict[str, _AuthorPosts] = {}
        for author, posts in posts_by_author.items():
            second = []
            for s in posts:
                times = sorted(own_thread_comments.get((author, s.id), []))
                second.append(times[1] if len(times) >= 2 else np.inf)
            self._posts[author] = _AuthorPosts(
                times=np.array([s.created_utc for s in posts], dtype=np.float64),
                scores=np.array([s.score for s in posts], dtype=np.float64),
                second_own_comment=np.array(second, dtype=np.float64),
            )

        n_orphans = 0
        self._comments: dict[str, _AuthorComments] = {}
        for author, coms in comments_by_author.items():
            lat = []
            for c in coms:
                t0 = sub_times.get(c.link_id)
                if t0 is None:
                    lat.append(np.nan)
                    n_orphans += 1
                else:
                    lat.append(float(c.created_utc - t0))
            toks = [tokenize(c.body) for c in coms]
            self._comments[author] = _AuthorComments(
                times=np.array([c.created_utc for c in coms], dtype=np.float64),
                scores=np.array([c.score for c in coms], dtype=np.float64),
                n_tokens=np.array([len(t) for t in toks], dtype=np.float64),
                ttr=np.array([len(set(t)) / len(t) if t else 0.0 for t in toks]),
                depth=np.array([depth[c.id] for c in coms], dtype=np.float64),
                latency=np.array(lat, dtype=np.float64),
                first_reply=np.array(
                    [first_reply.get(c.id, np.inf) for c in coms], dtype=np.float64),
            )
        if n_orphans:
            log.warning("%d comments reference unknown submissions; "
                        "their latency is excluded", n_orphans)

    @staticmethod
    def _resolve_depths(comments: list[Comment], by_id: dict[str, Comment]) -> dict[str, float]:
        """Tree depth per comment, top-level = 1; unresolvable chains are NaN."""
        depth: dict[str, float] = {}
        n_dangling = 0
        for c in comments:
            chain: list[str] = []
            cur = c
            seen: set[str] = set()
            while True:
                if cur.id in depth:
                    base = depth[cur.id]
                    break
                if cur.id in seen:       # cycle; corrupted data
                    base = np.nan
                    break
                seen.add(cur.id)
                chain.append(cur.id)
                if cur.parent_id == cur.link_id:
                    # parent is the submission itself: top-level, depth 1
                    depth[chain.pop()] = 1.0
                    base = 1.0
                    break
                parent = by_id.get(cur.parent_id)
                if parent is None:
                    base = np.nan        # dangling parent; cur stays on chain
                    n_dangling += 1
                    break
                cur = parent
            for cid in reversed(chain):
                base = base + 1.0 if np.isfinite(base) else np.nan
                depth[cid] = base
        if n_dangling:
            log.warning("%d comments have dangling parents; depth excluded", n_dangling)
        return depth

    def snapshot(self, author: str, as_of: int) -> UserSnapshot:
        posts = self._posts.get(author)
        coms = self._comments.get(author)
        # side="left" makes every comparison strict: same-timestamp events
        # never see each other
        kp = int(np.searchsorted(posts.times, as_of, side="left")) if posts else 0
        kc = int(np.searchsorted(coms.times, as_of, side="left")) if coms else 0

        times = []
        if posts is not None and kp:
            times.extend((posts.times[0], posts.times[kp - 1]))
        if coms is not None and kc:
            times.extend((coms.times[0], coms.times[kc - 1]))
        first_seen = min(times) if times else np.nan
        last_seen = max(times) if times else np.nan

        if coms is not None:
            replies = int(np.sum(coms.first_reply[:kc] < as_of))
        else:
            replies = 0
        if posts is not None:
            multi = int(np.sum(posts.second_own_comment[:kp] < as_of))
        else:
            multi = 0

        empty = np.empty(0)
        return UserSnapshot(
            author=author,
            as_of=as_of,
            n_posts=kp,
            n_comments=kc,
            first_seen=first_seen,
            last_interaction=last_seen,
            post_scores=posts.scores[:kp] if posts else empty,
            comment_scores=coms.scores[:kc] if coms else empty,
            comment_tokens=coms.n_tokens[:kc] if coms else empty,
            comment_ttr=coms.ttr[:kc] if coms else empty,
            comment_depth=coms.depth[:kc] if coms else empty,
            comment_latency=coms.latency[:kc] if coms else empty,
            n_comments_with_reply=replies,
            n_own_posts_multi_comment=multi,
        )


def build_history(submissions: list[Submission], comments: list[Comment]) -> UserHistory:
    return UserHistory(submissions, comments)


def activity_features(snap: UserSnapshot) -> np.ndarray:
    """[total prior events, seconds since first seen, seconds since last
    interaction, share of events that are posts]. All NaN for a fresh
    author."""
    total = snap.n_posts + snap.n_comments
    if total == 0:
        return np.full(N_ACTIVITY, SENTINEL)
    return np.array([
        float(total),
        float(snap.as_of) - snap.first_seen,
        float(snap.as_of) - snap.last_interaction,
        snap.n_posts / total,
    ])


def type_features(snap: UserSnapshot) -> np.ndarray:
    """[avg comment tokens, avg comment TTR, avg tree depth, share of
    comments with replies, share of own posts the author commented on more
    than once, median seconds from thread start to the author's comment]."""
    out = np.full(N_TYPE, SENTINEL)
    if snap.n_comments > 0:
        out[0] = float(np.mean(snap.comment_tokens))
        out[1] = float(np.mean(snap.comment_ttr))
        depth = snap.comment_depth[np.isfinite(snap.comment_depth)]
        if depth.size:
            out[2] = float(np.mean(depth))
        out[3] = snap.n_comments_with_reply / snap.n_comments
        latency = snap.comment_latency[np.isfinite(snap.comment_latency)]
        if latency.size:
            out[5] = float(np.median(latency))
    if snap.n_posts > 0:
        out[4] = snap.n_own_posts_multi_comment / snap.n_posts
    return out


def quality_features(snap: UserSnapshot, include_indices: bool = True) -> np.ndarray:
    """k-indices and k-rates over prior posts and comments.

    The k-index is the number of prior items scoring strictly above k; the
    k-rate divides by the number of prior items. Layout is indices for posts
    then comments, followed by rates for posts then comments, one entry per
    k in QUALITY_KS. With include_indices=False the index half is omitted.
    Populations that are empty give NaN across their entries.
    """
    post_idx = np.full(len(QUALITY_KS), SENTINEL)
    post_rate = np.full(len(QUALITY_KS), SENTINEL)
    com_idx = np.full(len(QUALITY_KS), SENTINEL)
    com_rate = np.full(len(QUALITY_KS), SENTINEL)
    if snap.n_posts > 0:
        for i, k in enumerate(QUALITY_KS):
            post_idx[i] = float(np.sum(snap.post_scores > k))
            post_rate[i] = post_idx[i] / snap.n_posts
    if snap.n_comments > 0:
        for i, k in enumerate(QUALITY_KS):
            com_idx[i] = float(np.sum(snap.comment_scores > k))
            com_rate[i] = com_idx[i] / snap.n_comments
    if include_indices:
        return np.concatenate([post_idx, com_idx, post_rate, com_rate])
    return np.concatenate([post_rate, com_rate])


def user_feature_arrays(history: UserHistory, author: str, as_of: int,
                        include_indices: bool = True) -> dict[str, np.ndarray]:
    """Raw (sentinel-bearing) per-group arrays for one author at one time.

    Deleted authors carry no usable history, so every entry is the sentinel.
    """
    n_quality = N_QUALITY if include_indices else N_QUALITY // 2
    if author == DELETED_AUTHOR:
        return {
            "activity": np.full(N_ACTIVITY, SENTINEL),
            "type": np.full(N_TYPE, SENTINEL),
            "quality": np.full(n_quality, SENTINEL),
        }
    snap = history.snapshot(author, as_of)
    return {
        "activity": activity_features(snap),
        "type": type_features(snap),
        "quality": quality_features(snap, include_indices),
    }


@dataclass
class ImputationMeans:
    values: np.ndarray
    defined: np.ndarray   # bool mask; False where no training value existed

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.defined = np.asarray(self.defined, dtype=bool)
        if self.values.shape != self.defined.shape:
            raise ValueError("values and defined mask differ in shape")


def fit_imputation(raw: np.ndarray) -> ImputationMeans:
    """Column means of the defined entries of a (n, d) matrix of raw
    sentinel-bearing feature rows."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError("expected a 2-D matrix of feature rows")
    defined = np.isfinite(raw).any(axis=0)
    values = np.zeros(raw.shape[1])
    for j in range(raw.shape[1]):
        col = raw[:, j]
        col = col[np.isfinite(col)]
        if col.size:
            values[j] = float(col.mean())
    return ImputationMeans(values=values, defined=defined)


def impute(vec: np.ndarray, means: ImputationMeans) -> np.ndarray:
    """Replace sentinel entries with training means; a sentinel at a
    position with no training mean is fatal."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != means.values.shape:
        raise ValueError("vector and means differ in shape")
    nan = ~np.isfinite(vec)
    if np.any(nan & ~means.defined):
        bad = int(np.nonzero(nan & ~means.defined)[0][0])
        raise DataError(
            f"feature {bad} needs imputation but the training split never defined it")
    out = vec.copy()
    out[nan] = means.values[nan]
    return out

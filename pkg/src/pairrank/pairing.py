"""Time-controlled pair sampling.

Pairs two submissions from the same community that were posted within a
small time window of each other but ended up with clearly different scores.
Candidates are matched greedily by ascending time gap so each submission is
used at most once and the emitted gaps are as small as possible.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError
from .ingest import Submission

log = logging.getLogger(__name__)

A_WINS = "a"
B_WINS = "b"

PAIRS_HEADER = ["pair_id", "id_a", "id_b", "label", "gap_seconds", "score_a", "score_b"]


@dataclass
class PairConfig:
    max_window_secs: int = 30
    min_score_diff: int = 20       # |score_a - score_b| must be at least this
    min_score_ratio: float = 2.0   # max(score)/min(score) must be at least this
    min_score: int = 2             # both members must score at least this
    seed: int = 0


@dataclass
class RankedPair:
    pair_id: str
    id_a: str
    id_b: str
    label: str          # which slot won, "a" or "b"
    gap_seconds: int
    score_a: int
    score_b: int


@dataclass
class PairStats:
    n_pairs: int
    mean_gap: float
    median_gap: float
    mean_score_diff: float
    median_score_diff: float


def eligible(sub: Submission, cfg: PairConfig) -> bool:
    return sub.score >= cfg.min_score


def admissible(sa: Submission, sb: Submission, cfg: PairConfig) -> bool:
    """Score-side constraints for a candidate pair (the gap is checked by the
    candidate scan)."""
    lo, hi = sorted((sa.score, sb.score))
    if lo < cfg.min_score:
        return False
    if hi - lo < cfg.min_score_diff:
        return False
    if lo <= 0 or hi / lo < cfg.min_score_ratio:
        return False
    return True


def _candidates(subs: list[Submission], cfg: PairConfig):
    """All admissible candidate pairs with gap <= max_window_secs.

    Submissions are scanned in (created_utc, id) order with a sliding window,
    so the cost is O(E) after sorting where E is the number of in-window
    pairs. Candidates come out canonically oriented: the earlier submission
    (ties by id) is first.
    """
    order = sorted(range(len(subs)), key=lambda i: (subs[i].created_utc, subs[i].id))
    out = []
    lo = 0
    for j_pos, j in enumerate(order):
        sj = subs[j]
        while subs[order[lo]].created_utc < sj.created_utc - cfg.max_window_secs:
            lo += 1
        for i_pos in range(lo, j_pos):
            si = subs[order[i_pos]]
            if admissible(si, sj, cfg):
                gap = sj.created_utc - si.created_utc
                out.append((gap, si.created_utc, si.id, sj.id, si, sj))
    return out


def _emit(matched: list[tuple[Submission, Submission, int]], seed: int) -> list[RankedPair]:
    """Assign slots randomly (seeded), label the higher-scoring slot, and
    number the pairs in acceptance order."""
    rng = random.Random(seed)
    pairs = []
    for k, (first, second, gap) in enumerate(matched):
        if rng.random() < 0.5:
            sa, sb = first, second
        else:
            sa, sb = second, first
        label = A_WINS if sa.score > sb.score else B_WINS
        pairs.append(RankedPair(
            pair_id=f"p{k:06d}",
            id_a=sa.id, id_b=sb.id, label=label,
            gap_seconds=gap, score_a=sa.score, score_b=sb.score,
        ))
    return pairs


def _by_community(subs: list[Submission]) -> list[list[Submission]]:
    groups: dict[str, list[Submission]] = {}
    for s in subs:
        groups.setdefault(s.community, []).append(s)
    return [groups[name] for name in sorted(groups)]


def sample_pairs(subs: list[Submission], cfg: PairConfig) -> list[RankedPair]:
    """Greedy min-gap matching over all admissible candidates.

    Matching happens within each community separately (pairs never cross
    communities). Candidates are taken in ascending (gap, created_utc, id,
    id) order and accepted when both submissions are still unmatched, so
    each submission appears in at most one pair. When all candidate gaps
    are distinct the sorted gap sequence is lexicographically minimal among
    maximal matchings; under tied gaps the candidate order above is what
    defines the result, and it may trade a shorter gap multiset for the
    earlier candidate.
    """
    pool = [s for s in subs if eligible(s, cfg)]
    matched = []
    for community_subs in _by_community(pool):
        cands = _candidates(community_subs, cfg)
        cands.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
        used: set[str] = set()
        for gap, _, ida, idb, si, sj in cands:
            if ida in used or idb in used:
                continue
            used.add(ida)
            used.add(idb)
            matched.append((si, sj, gap))
    return _emit(matched, cfg.seed)


def sample_random_pairs(subs: list[Submission], cfg: PairConfig,
                        same_day: bool = True, max_tries: int = 64) -> list[RankedPair]:
    """Baseline sampler: random matching instead of min-gap.

    Uses the same admissibility constraints but matches each submission to a
    randomly drawn partner (seeded, up to max_tries draws each), optionally
    restricted to the same UTC day, with the gap cap from
    cfg.max_window_secs as usual. Avoids enumerating the quadratic candidate
    set, so it stays cheap even with a day-wide window. Used to build
    wide-window comparison sets.
    """
    pool = [s for s in subs if eligible(s, cfg)]
    groups: dict[tuple, list[Submission]] = {}
    for s in pool:
        groups.setdefault((s.community, s.day() if same_day else 0), []).append(s)
    for members in groups.values():
        members.sort(key=lambda s: (s.created_utc, s.id))
    rng = np.random.default_rng(cfg.seed)
    used: set[str] = set()
    matched = []
    order = sorted(pool, key=lambda s: (s.created_utc, s.id))
    for s in [order[k] for k in rng.permutation(len(order))]:
        if s.id in used:
            continue
        members = groups[(s.community, s.day() if same_day else 0)]
        for _ in range(max_tries):
            t = members[int(rng.integers(len(members)))]
            if t.id == s.id or t.id in used:
                continue
            if abs(t.created_utc - s.created_utc) > cfg.max_window_secs:
                continue
            if not admissible(s, t, cfg):
                continue
            first, second = sorted((s, t), key=lambda x: (x.created_utc, x.id))
            used.add(s.id)
            used.add(t.id)
            matched.append((first, second, second.created_utc - first.created_utc))
            break
    return _emit(matched, cfg.seed + 1)


def pair_stats(pairs: list[RankedPair]) -> PairStats:
    if not pairs:
        raise DataError("no pairs to summarize")
    gaps = np.array([p.gap_seconds for p in pairs], dtype=np.float64)
    diffs = np.array([abs(p.score_a - p.score_b) for p in pairs], dtype=np.float64)
    return PairStats(
        n_pairs=len(pairs),
        mean_gap=float(gaps.mean()),
        median_gap=float(np.median(gaps)),
        mean_score_diff=float(diffs.mean()),
        median_score_diff=float(np.median(diffs)),
    )


def write_pairs(pairs: list[RankedPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(PAIRS_HEADER)
        for p in pairs:
            writer.writerow([p.pair_id, p.id_a, p.id_b, p.label,
                             p.gap_seconds, p.score_a, p.score_b])


def read_pairs(path) -> list[RankedPair]:
    pairs = []
    with open(path, "r", encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header != PAIRS_HEADER:
            raise FormatError(f"unexpected pairs header: {header!r}")
        for row in reader:
            if len(row) != len(PAIRS_HEADER):
                raise FormatError(f"bad pairs row: {row!r}")
            label = row[3]
            if label not in (A_WINS, B_WINS):
                raise FormatError(f"bad label {label!r} in row {row!r}")
            try:
                pairs.append(RankedPair(row[0], row[1], row[2], label,
                                        int(row[4]), int(row[5]), int(row[6])))
            except ValueError as exc:
                raise FormatError(f"bad numeric field in row {row!r}: {exc}") from exc
    return pairs

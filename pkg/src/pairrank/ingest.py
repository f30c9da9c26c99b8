"""Submission and comment records: parsing, filtering, duplicate removal.

File format is line-oriented JSON, one record per line, UTF-8. Unknown keys
on a line are tolerated (real dumps carry many extra fields); missing or
unusable required keys make the line malformed. Malformed lines are skipped
and counted, and parsing aborts if their rate exceeds a cap.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .errors import ConsistencyError, FormatError

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400

# A day of a community is "active" when it has strictly more than this many
# submissions; inactive days are dropped wholesale.
ACTIVE_DAY_THRESHOLD = 15

DELETED_AUTHOR = "[deleted]"


@dataclass
class Submission:
    id: str
    author: str
    community: str
    created_utc: int
    score: int
    title: str
    image: str | None = None      # relative path to the post's image, if any
    link_key: str | None = None   # canonical link target, used for dedup

    def day(self) -> int:
        """UTC calendar day as an epoch-day ordinal."""
        return self.created_utc // SECONDS_PER_DAY


@dataclass
class Comment:
    id: str
    author: str
    link_id: str      # id of the submission whose thread this comment is in
    parent_id: str    # submission id for top-level comments, else a comment id
    created_utc: int
    score: int
    body: str


def _coerce_int(value) -> int:
    # Dumps carry timestamps/scores as int, float or string; accept any
    # representation of an integral value.
    if isinstance(value, bool):
        raise ValueError("bool is not an int here")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value != int(value):
            raise ValueError(f"non-integral number {value!r}")
        return int(value)
    if isinstance(value, str):
        return _coerce_int(float(value) if "." in value else int(value))
    raise ValueError(f"not a number: {value!r}")


def _submission_from_obj(obj: dict) -> Submission:
    sub = Submission(
        id=str(obj["id"]),
        author=str(obj["author"]),
        community=str(obj["subreddit"]),
        created_utc=_coerce_int(obj["created_utc"]),
        score=_coerce_int(obj["score"]),
        title=str(obj["title"]),
        image=str(obj["image"]) if obj.get("image") is not None else None,
        link_key=str(obj["link_key"]) if obj.get("link_key") is not None else None,
    )
    if not sub.id:
        raise ValueError("empty id")
    if sub.created_utc <= 0:
        raise ValueError("non-positive created_utc")
    return sub


def _comment_from_obj(obj: dict) -> Comment:
    com = Comment(
        id=str(obj["id"]),
        author=str(obj["author"]),
        link_id=str(obj["link_id"]),
        parent_id=str(obj["parent_id"]),
        created_utc=_coerce_int(obj["created_utc"]),
        score=_coerce_int(obj["score"]),
        body=str(obj["body"]),
    )
    if not com.id:
        raise ValueError("empty id")
    if com.created_utc <= 0:
        raise ValueError("non-positive created_utc")
    return com


def _parse_lines(lines: Iterable[str], builder, max_error_rate: float, what: str):
    records = []
    seen_ids: set[str] = set()
    n_lines = 0
    n_bad = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        n_lines += 1
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("record is not an object")
            rec = builder(obj)
        except (ValueError, KeyError, TypeError) as exc:
            n_bad += 1
            log.debug("skipping malformed %s line %d: %s", what, lineno, exc)
            continue
        if rec.id in seen_ids:
            raise ConsistencyError(f"duplicate {what} id {rec.id!r} at line {lineno}")
        seen_ids.add(rec.id)
        records.append(rec)
    if n_lines > 0 and n_bad / n_lines > max_error_rate:
        raise FormatError(
            f"{n_bad} of {n_lines} {what} lines malformed "
            f"(rate {n_bad / n_lines:.3f} exceeds cap {max_error_rate})"
        )
    if n_bad:
        log.warning("skipped %d malformed %s lines out of %d", n_bad, what, n_lines)
    return records


def parse_submissions(lines: Iterable[str] | IO[str],
                      max_error_rate: float = 0.01) -> list[Submission]:
    """Parse a line-oriented submission file. Malformed lines are skipped;
    a malformed rate above max_error_rate raises FormatError."""
    return _parse_lines(lines, _submission_from_obj, max_error_rate, "submission")


def parse_comments(lines: Iterable[str] | IO[str],
                   max_error_rate: float = 0.01) -> list[Comment]:
    """Parse a line-oriented comment file, same error policy as submissions."""
    return _parse_lines(lines, _comment_from_obj, max_error_rate, "comment")


def submission_to_line(sub: Submission) -> str:
    obj = {
        "id": sub.id,
        "author": sub.author,
        "subreddit": sub.community,
        "created_utc": sub.created_utc,
        "score": sub.score,
        "title": sub.title,
    }
    if sub.image is not None:
        obj["image"] = sub.image
    if sub.link_key is not None:
        obj["link_key"] = sub.link_key
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def comment_to_line(com: Comment) -> str:
    obj = {
        "id": com.id,
        "author": com.author,
        "link_id": com.link_id,
        "parent_id": com.parent_id,
        "created_utc": com.created_utc,
        "score": com.score,
        "body": com.body,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def serialize_submissions(subs: Iterable[Submission]) -> Iterator[str]:
    for sub in subs:
        yield submission_to_line(sub) + "\n"


def serialize_comments(coms: Iterable[Comment]) -> Iterator[str]:
    for com in coms:
        yield comment_to_line(com) + "\n"


def write_submissions(subs: Iterable[Submission], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.writelines(serialize_submissions(subs))


def write_comments(coms: Iterable[Comment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.writelines(serialize_comments(coms))


def read_submissions(path, max_error_rate: float = 0.01) -> list[Submission]:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_submissions(fp, max_error_rate)


def read_comments(path, max_error_rate: float = 0.01) -> list[Comment]:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_comments(fp, max_error_rate)


def filter_active_days(subs: list[Submission],
                       threshold: int = ACTIVE_DAY_THRESHOLD) -> list[Submission]:
    """Keep submissions whose (community, UTC day) has strictly more than
    `threshold` submissions. Order is preserved; the filter is idempotent."""
    counts: dict[tuple[str, int], int] = {}
    for sub in subs:
        key = (sub.community, sub.day())
        counts[key] = counts.get(key, 0) + 1
    return [s for s in subs if counts[(s.community, s.day())] > threshold]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


def _hamming_close_pairs(ids: list[str], hashes: list[int], threshold: int):
    """All index pairs whose 64-bit hashes differ in at most `threshold` bits."""
    import numpy as np

    n = len(hashes)
    if n < 2:
        return
    arr = np.array(hashes, dtype=np.uint64)
    lut = np.array([bin(b).count("1") for b in range(256)], dtype=np.uint8)
    # chunked O(n^2) scan; fine at corpus scales this package targets
    chunk = max(1, min(n, 2_000_000 // max(n, 1) + 1))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        xor = arr[lo:hi, None] ^ arr[None, :]
        dist = lut[xor.view(np.uint8)].reshape(hi - lo, n, 8).sum(axis=2, dtype=np.uint16)
        rows, cols = np.nonzero(dist <= threshold)
        for r, c in zip(rows.tolist(), cols.tolist()):
            i = lo + r
            if i < c:
                yield i, c


def dedup(subs: list[Submission], hashes: dict[str, int],
          hamming_threshold: int = 5) -> list[Submission]:
    """Remove every member of every duplicate group.

    Two submissions are duplicates when they share a link_key or their image
    hashes are within `hamming_threshold` bits; groups are the transitive
    closure of that relation. Every submission with an image must have a hash
    in `hashes`, else ConsistencyError.
    """
    for sub in subs:
        if sub.image is not None and sub.id not in hashes:
            raise ConsistencyError(f"submission {sub.id!r} has an image but no hash")

    uf = _UnionFind(len(subs))
    by_link: dict[str, int] = {}
    for i, sub in enumerate(subs):
        if sub.link_key is not None:
            if sub.link_key in by_link:
                uf.union(by_link[sub.link_key], i)
            else:
                by_link[sub.link_key] = i

    hashed_idx = [i for i, s in enumerate(subs) if s.id in hashes]
    hashed_vals = [hashes[subs[i].id] for i in hashed_idx]
    for a, b in _hamming_close_pairs([subs[i].id for i in hashed_idx],
                                     hashed_vals, hamming_threshold):
        uf.union(hashed_idx[a], hashed_idx[b])

    group_size: dict[int, int] = {}
    for i in range(len(subs)):
        root = uf.find(i)
        group_size[root] = group_size.get(root, 0) + 1
    kept = [s for i, s in enumerate(subs) if group_size[uf.find(i)] == 1]
    if len(kept) != len(subs):
        log.info("dedup removed %d of %d submissions", len(subs) - len(kept), len(subs))
    return kept


def write_hashes(hashes: dict[str, int], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for sid, h in hashes.items():
            fp.write(f"{sid}\t{h:016x}\n")


def read_hashes(path) -> dict[str, int]:
    hashes: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"bad hash line {lineno}: {line!r}")
            try:
                hashes[parts[0]] = int(parts[1], 16)
            except ValueError as exc:
                raise FormatError(f"bad hash value at line {lineno}: {exc}") from exc
    return hashes

"""HTTP service for collecting pairwise human judgments.

Serves a pair set over a small JSON API plus static UI assets and image
bytes. Each session sees the pairs in its own seeded order; judgments are
appended to a line-oriented log and flushed before the request is
acknowledged, so replaying the log always reconstructs the server state.
The API never transmits scores or labels for unjudged pairs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import textio
from .errors import DataError
from .evaluation import human_accuracy
from .ingest import Submission
from .pairing import A_WINS, B_WINS, RankedPair

log = logging.getLogger(__name__)

SESSION_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")
MAX_BODY = 64 * 1024
MAX_RATIONALE = 10_000

STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}
IMAGE_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
}


@dataclass
class Judgment:
    session_id: str
    pair_id: str
    choice: str          # "a" or "b"
    rationale: str = ""
    submitted_at: int = 0


def judgment_to_line(j: Judgment) -> str:
    return textio.dumps({
        "session_id": j.session_id,
        "pair_id": j.pair_id,
        "choice": j.choice,
        "rationale": j.rationale,
        "submitted_at": j.submitted_at,
    })


def parse_judgment_line(line: str) -> Judgment:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("judgment record is not an object")
    j = Judgment(
        session_id=str(obj["session_id"]),
        pair_id=str(obj["pair_id"]),
        choice=str(obj["choice"]),
        rationale=str(obj.get("rationale", "")),
        submitted_at=int(obj.get("submitted_at", 0)),
    )
    if j.choice not in (A_WINS, B_WINS):
        raise ValueError(f"bad choice {j.choice!r}")
    return j


class AnnotationStore:
    """Thread-safe judgment state over an immutable pair set.

    The log file is the source of truth: it is replayed on construction and
    every accepted judgment is appended and flushed to disk before the
    caller is told it succeeded.
    """

    def __init__(self, pairs: list[RankedPair], submissions: dict[str, Submission],
                 image_dir: Path | None, log_path, seed: int = 0):
        if not pairs:
            raise DataError("cannot serve an empty pair set")
        self.pairs = list(pairs)
        self.by_id = {p.pair_id: p for p in self.pairs}
        if len(self.by_id) != len(self.pairs):
            raise DataError("pair set contains duplicate pair ids")
        self.submissions = submissions
        for p in self.pairs:
            for sid in (p.id_a, p.id_b):
                if sid not in submissions:
                    raise DataError(f"pair {p.pair_id} references unknown submission {sid!r}")
        self.image_dir = Path(image_dir) if image_dir is not None else None
        self.seed = seed
        self.log_path = Path(log_path)
        self.judgments: list[Judgment] = []
        self.judged: dict[str, set[str]] = {}
        self._order_cache: dict[str, list[str]] = {}
        self._lock = threading.Lock()
        self._replay()
        self._log_fp = open(self.log_path, "a", encoding="utf-8", newline="\n")
        self._counter = self._next_counter()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with open(self.log_path, "r", encoding="utf-8") as fp:
            for lineno, line in enumerate(fp, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    j = parse_judgment_line(line)
                except (ValueError, KeyError) as exc:
                    log.warning("%s:%d: skipping bad judgment line (%s)",
                                self.log_path, lineno, exc)
                    continue
                if j.pair_id not in self.by_id:
                    log.warning("%s:%d: skipping judgment for unknown pair %r",
                                self.log_path, lineno, j.pair_id)
                    continue
                if j.pair_id in self.judged.get(j.session_id, set()):
                    log.warning("%s:%d: skipping duplicate judgment (%s, %s)",
                                self.log_path, lineno, j.session_id, j.pair_id)
                    continue
                self.judgments.append(j)
                self.judged.setdefault(j.session_id, set()).add(j.pair_id)

    def _next_counter(self) -> int:
        top = 0
        for sid in self.judged:
            m = re.fullmatch(r"an(\d+)", sid)
            if m:
                top = max(top, int(m.group(1)) + 1)
        return top

    # -- session API ---------------------------------------------------------

    def new_session(self) -> str:
        with self._lock:
            sid = f"an{self._counter:04d}"
            self._counter += 1
            return sid

    def session_order(self, session_id: str) -> list[str]:
        """The session's pair order: a shuffle keyed by (seed, session id),
        so any session id always sees the same order."""
        cached = self._order_cache.get(session_id)
        if cached is not None:
            return cached
        digest = hashlib.blake2b(
            f"{self.seed}|{session_id}".encode(), digest_size=8).digest()
        rng = random.Random(int.from_bytes(digest, "big"))
        order = [p.pair_id for p in self.pairs]
        rng.shuffle(order)
        with self._lock:
            self._order_cache[session_id] = order
        return order

    def next_pair(self, session_id: str) -> RankedPair | None:
        order = self.session_order(session_id)
        with self._lock:
            done = self.judged.get(session_id, set())
        for pid in order:
            if pid not in done:
                return self.by_id[pid]
        return None

    def progress(self, session_id: str) -> tuple[int, int]:
        with self._lock:
            return len(self.judged.get(session_id, set())), len(self.pairs)

    # -- judgments -------------------------------------------------------------

    def add_judgment(self, session_id: str, pair_id: str, choice: str,
                     rationale: str) -> Judgment:
        """Validate, append durably, then publish to in-memory state.

        Raises KeyError for an unknown pair and ValueError for a duplicate
        (session, pair); the HTTP layer maps both to a conflict response.
        """
        if pair_id not in self.by_id:
            raise KeyError(pair_id)
        j = Judgment(session_id=session_id, pair_id=pair_id, choice=choice,
                     rationale=rationale, submitted_at=int(time.time()))
        with self._lock:
            if pair_id in self.judged.get(session_id, set()):
                raise ValueError(f"duplicate judgment ({session_id}, {pair_id})")
            self._log_fp.write(judgment_to_line(j) + "\n")
            self._log_fp.flush()
            os.fsync(self._log_fp.fileno())
            self.judgments.append(j)
            self.judged.setdefault(session_id, set()).add(pair_id)
        return j

    def stats(self) -> dict:
        with self._lock:
            snapshot = list(self.judgments)
        report = human_accuracy(snapshot, self.pairs)
        acc = report.accuracy if report.n_judgments else None
        return {
            "n_judgments": report.n_judgments,
            "accuracy": acc,
            "per_annotator": [
                {"session_id": a.session_id, "n": a.n, "accuracy": a.accuracy}
                for a in report.per_annotator
            ],
        }

    def close(self) -> None:
        self._log_fp.close()


class AnnotationHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # headers and body go out as separate writes; without this, Nagle plus
    # delayed ACK adds ~40ms to every keep-alive response
    disable_nagle_algorithm = True

    # -- plumbing -------------------------------------------------------------

    def log_message(self, fmt, *args):   # quiet the default stderr chatter
        log.debug("%s %s", self.address_string(), fmt % args)

    @property
    def store(self) -> AnnotationStore:
        return self.server.store

    @property
    def static_dir(self) -> Path | None:
        return self.server.static_dir

    def _send(self, code: int, ctype: str, body: bytes) -> None:
        self.send_response(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        if self.close_connection:
            self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    def _drain_body(self) -> None:
        """Consume an unused request body so a keep-alive connection stays
        in sync; close instead when the declared length cannot be trusted."""
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if 0 <= length <= MAX_BODY:
            if length:
                self.rfile.read(length)
        else:
            self.close_connection = True

    def _send_doc(self, code: int, doc: dict) -> None:
        self._send(code, "application/json", (textio.dumps(doc) + "\n").encode())

    def _error(self, code: int, message: str) -> None:
        self._send_doc(code, {"error": message})

    # -- routes ---------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlsplit(self.path)
        path = url.path
        if path == "/api/session":
            self._get_session()
        elif path == "/api/pairs/next":
            self._get_next(parse_qs(url.query))
        elif path == "/api/stats":
            self._send_doc(200, self.store.stats())
        elif path.startswith("/img/"):
            self._get_image(path[len("/img/"):])
        else:
            self._get_static(path)

    def do_POST(self):
        if urlsplit(self.path).path != "/api/judgments":
            self._drain_body()
            self._error(404, "unknown endpoint")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self.close_connection = True
            self._error(400, "bad Content-Length")
            return
        if length <= 0 or length > MAX_BODY:
            if length > 0:
                self.close_connection = True
            self._error(400, "missing or oversized body")
            return
        body = self.rfile.read(length)
        try:
            obj = json.loads(body)
            if not isinstance(obj, dict):
                raise ValueError("body is not an object")
            session_id = str(obj["session_id"])
            pair_id = str(obj["pair_id"])
            choice = str(obj["choice"])
            rationale = str(obj.get("rationale", ""))
        except (ValueError, KeyError) as exc:
            self._error(400, f"malformed judgment: {exc}")
            return
        if not SESSION_RE.fullmatch(session_id):
            self._error(400, "bad session_id")
            return
        if choice not in (A_WINS, B_WINS):
            self._error(400, f"choice must be {A_WINS!r} or {B_WINS!r}")
            return
        if len(rationale) > MAX_RATIONALE:
            self._error(400, "rationale too long")
            return
        try:
            self.store.add_judgment(session_id, pair_id, choice, rationale)
        except KeyError:
            self._error(409, f"unknown pair {pair_id!r}")
            return
        except ValueError as exc:
            self._error(409, str(exc))
            return
        judged, total = self.store.progress(session_id)
        self._send_doc(201, {"ok": True, "judged": judged, "total": total})

    # -- GET helpers ------------------------------------------------------------

    def _get_session(self):
        sid = self.store.new_session()
        judged, total = self.store.progress(sid)
        self._send_doc(200, {"session_id": sid, "judged": judged, "total": total})

    def _get_next(self, query: dict):
        sids = query.get("session", [])
        if len(sids) != 1 or not SESSION_RE.fullmatch(sids[0]):
            self._error(400, "need exactly one valid session parameter")
            return
        session_id = sids[0]
        judged, total = self.store.progress(session_id)
        pair = self.store.next_pair(session_id)
        if pair is None:
            self._send_doc(200, {"done": True, "judged": judged, "total": total})
            return
        sub_a = self.store.submissions[pair.id_a]
        sub_b = self.store.submissions[pair.id_b]
        self._send_doc(200, {
            "done": False,
            "pair_id": pair.pair_id,
            "a": {"title": sub_a.title, "image_url": f"/img/{sub_a.id}"},
            "b": {"title": sub_b.title, "image_url": f"/img/{sub_b.id}"},
            "judged": judged,
            "total": total,
        })

    def _get_image(self, sid: str):
        sub = self.store.submissions.get(sid)
        if sub is None or sub.image is None or self.store.image_dir is None:
            self._error(404, "no image")
            return
        path = (self.store.image_dir / sub.image).resolve()
        try:
            path.relative_to(self.store.image_dir.resolve())
        except ValueError:
            self._error(404, "no image")
            return
        if not path.is_file():
            self._error(404, "no image")
            return
        ctype = IMAGE_TYPES.get(path.suffix.lower(), "application/octet-stream")
        self._send(200, ctype, path.read_bytes())

    def _get_static(self, path: str):
        root = self.static_dir
        if root is None:
            if path == "/":
                self._send(200, "text/plain; charset=utf-8",
                           b"annotation API only; no UI assets configured\n")
            else:
                self._error(404, "not found")
            return
        rel = path.lstrip("/") or "index.html"
        full = (root / rel).resolve()
        try:
            full.relative_to(root.resolve())
        except ValueError:
            self._error(404, "not found")
            return
        if not full.is_file():
            self._error(404, "not found")
            return
        ctype = STATIC_TYPES.get(full.suffix.lower(), "application/octet-stream")
        self._send(200, ctype, full.read_bytes())


def build_server(pairs: list[RankedPair], submissions: dict[str, Submission],
                 image_dir, log_path, static_dir=None, seed: int = 0,
                 host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Construct the HTTP server (not yet serving). Port 0 picks a free
    port; the bound address is available as server.server_address."""
    store = AnnotationStore(pairs, submissions,
                            Path(image_dir) if image_dir is not None else None,
                            log_path, seed=seed)
    server = ThreadingHTTPServer((host, port), AnnotationHandler)
    server.store = store
    server.static_dir = Path(static_dir) if static_dir is not None else None
    return server


def serve_annotate(pairs, submissions, image_dir, log_path, static_dir=None,
                   seed: int = 0, host: str = "127.0.0.1", port: int = 8080) -> None:
    """Run the annotation service until interrupted."""
    server = build_server(pairs, submissions, image_dir, log_path,
                          static_dir=static_dir, seed=seed, host=host, port=port)
    bound = server.server_address
    log.info("annotation service listening on http://%s:%d/", bound[0], bound[1])
    print(f"serving on http://{bound[0]}:{bound[1]}/ (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
        server.store.close()

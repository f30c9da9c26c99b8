"""Seeded rich-get-richer market generator with known latent quality.

Produces a synthetic community whose posts arrive through a time-varying
Poisson process, carry log-normal latent quality, and accumulate score
through repeated logistic vote steps:

    P(upvote) = sigmoid(bias + alpha*log q + beta*log1p(max(score, 0))
                + gamma*curve(t) + noise*eta)

where curve(t) falls linearly over each UTC day (an audience-receptiveness
ramp) and eta is per-item noise. Titles plant quality-correlated tokens,
images plant a quality-correlated palette bias, and the author pool can tie
activity to quality, so every feature family in the pipeline has a tunable
amount of recoverable signal. Output files use the exact ingest formats
plus a tab-separated ground-truth table, and are byte-identical across runs
with the same config.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.special import expit

from . import textio
from .errors import DataError, FormatError
from .image_features import color_palette
from .images import phash64
from .ingest import (SECONDS_PER_DAY, Comment, Submission, write_comments,
                     write_hashes, write_submissions)
from .pairing import A_WINS, B_WINS, RankedPair

log = logging.getLogger(__name__)

TRUTH_FILE = "truth.tsv"
CONFIG_FILE = "market.json"
BLOCK = 16   # synthetic images are BLOCK x BLOCK grids of solid 16px tiles


@dataclass
class MarketConfig:
    n_submissions: int = 2000
    days: int = 7
    start_utc: int = 1356998400          # 2013-01-01 00:00 UTC, a Tuesday
    community: str = "synthetic"
    seed: int = 0
    # arrival process: rate(t) = base * (1 + amp*sin(2*pi*day_frac)) * weekly[dow]
    arrival_amp: float = 0.4
    weekly_mult: tuple = (1.0, 1.0, 1.0, 1.0, 1.1, 0.8, 0.8)
    # latent quality q = exp(mu_q + sigma_q * z), z standard normal
    mu_q: float = 0.0
    sigma_q: float = 1.0
    # vote dynamics
    vote_steps: int = 200
    vote_bias: float = -1.0
    alpha: float = 1.0       # weight on log q
    beta: float = 0.0        # reinforcement weight on log1p(current score)
    gamma: float = 0.0       # weight on the diurnal audience curve
    noise: float = 0.5       # per-item idiosyncratic log-odds noise
    downvotes: bool = True   # losing vote steps subtract instead of no-op
    # planted text signal
    n_vocab: int = 200
    planted_pos: int = 8     # tokens planted with probability ~ quality quantile
    planted_neg: int = 8     # tokens planted with probability ~ (1 - quantile)
    plant_strength: float = 0.9
    drift_epoch_frac: float | None = None   # swap planted vocabulary after this point
    # images
    images: bool = False
    image_bias: float = 0.6  # total tile share split between hot and cold colors
    hot_color: int = 2       # palette index favored by high quality
    cold_color: int = 7      # palette index favored by low quality
    # author pool
    n_authors: int = 40
    author_activity_skew: float = 1.0   # power-law exponent over author draw weights
    author_mix: float = 0.0   # share of item quality inherited from the author trait
    user_signal: float = 0.0  # correlation between author activity and author trait
    # comments
    comment_rate: float = 0.0   # mean comments per submission


@dataclass(frozen=True)
class GroundTruth:
    quality: dict[str, float]
    planted: dict[str, tuple[str, ...]]


@dataclass(frozen=True)
class ImageRecipe:
    key: tuple            # rng key, unique per item
    hot_color: int        # palette index whose share grows with quality
    cold_color: int       # palette index whose share shrinks with quality
    hot_share: float
    cold_share: float


@dataclass
class Market:
    config: MarketConfig
    submissions: list[Submission]
    comments: list[Comment]
    truth: GroundTruth
    image_recipes: dict[str, ImageRecipe] = field(default_factory=dict)


def _validate(cfg: MarketConfig) -> None:
    if cfg.n_submissions < 2:
        raise DataError("a market needs at least 2 submissions")
    if cfg.days <= 0:
        raise DataError("days must be positive")
    if not 0.0 <= cfg.arrival_amp < 1.0:
        raise DataError("arrival_amp must be in [0, 1) to keep the rate positive")
    if len(cfg.weekly_mult) != 7 or min(cfg.weekly_mult) <= 0:
        raise DataError("weekly_mult needs 7 positive entries")
    for name in ("alpha", "beta", "gamma", "noise", "vote_bias", "mu_q", "sigma_q"):
        if not math.isfinite(getattr(cfg, name)):
            raise DataError(f"{name} must be finite")
    if cfg.sigma_q < 0 or cfg.noise < 0:
        raise DataError("sigma_q and noise must be nonnegative")
    if not 0.0 <= cfg.plant_strength <= 1.0:
        raise DataError("plant_strength must be in [0, 1]")
    if not 0.0 <= cfg.image_bias <= 0.9:
        raise DataError("image_bias must be in [0, 0.9] so tiles keep some randomness")
    if cfg.hot_color == cfg.cold_color:
        raise DataError("hot and cold palette colors must differ")
    if not 0.0 <= cfg.author_mix <= 1.0 or not -1.0 <= cfg.user_signal <= 1.0:
        raise DataError("author_mix in [0, 1] and user_signal in [-1, 1]")
    if cfg.n_authors < 1 or cfg.n_vocab < 1:
        raise DataError("need at least one author and one vocabulary token")
    if cfg.drift_epoch_frac is not None and not 0.0 < cfg.drift_epoch_frac < 1.0:
        raise DataError("drift_epoch_frac must be strictly inside (0, 1)")


def time_curve(times) -> np.ndarray:
    """Diurnal audience curve in [-1, 1]: 1 at midnight UTC, falling
    linearly through the day. Monotone within a day, so posting earlier is
    strictly better whenever gamma > 0."""
    frac = (np.asarray(times, dtype=np.float64) % SECONDS_PER_DAY) / SECONDS_PER_DAY
    return 1.0 - 2.0 * frac


def _arrival_times(cfg: MarketConfig, rng: np.random.Generator) -> np.ndarray:
    """Time-varying Poisson arrivals by thinning against the peak rate."""
    weekly = np.asarray(cfg.weekly_mult, dtype=np.float64)
    lam_base = cfg.n_submissions / float(cfg.days * SECONDS_PER_DAY)
    lam_max = lam_base * (1.0 + cfg.arrival_amp) * float(weekly.max())
    chunks: list[np.ndarray] = []
    got = 0
    t = float(cfg.start_utc)
    guard = 0
    while got < cfg.n_submissions:
        guard += 1
        if guard > 1000 + cfg.n_submissions:
            raise DataError("arrival sampling failed to converge")
        gaps = rng.exponential(1.0 / lam_max, size=8192)
        ts = t + np.cumsum(gaps)
        t = float(ts[-1])
        frac = (ts % SECONDS_PER_DAY) / SECONDS_PER_DAY
        dow = ((ts // SECONDS_PER_DAY).astype(np.int64) + 3) % 7
        rate = lam_base * (1.0 + cfg.arrival_amp * np.sin(2.0 * np.pi * frac)) * weekly[dow]
        keep = rng.random(len(ts)) * lam_max < rate
        chunks.append(ts[keep])
        got += int(keep.sum())
    times = np.concatenate(chunks)[:cfg.n_submissions]
    return np.floor(times).astype(np.int64)


def _author_pool(cfg: MarketConfig, rng: np.random.Generator):
    """Draw weights and quality traits for the author pool. Draw weights
    follow a power law; traits correlate with log-activity at user_signal."""
    w = np.arange(1, cfg.n_authors + 1, dtype=np.float64) ** (-cfg.author_activity_skew)
    p = w / w.sum()
    logw = np.log(w)
    sd = float(logw.std())
    act_z = (logw - logw.mean()) / sd if sd > 0 else np.zeros_like(logw)
    eps = rng.standard_normal(cfg.n_authors)
    rho = cfg.user_signal
    trait = rho * act_z + math.sqrt(max(0.0, 1.0 - rho * rho)) * eps
    return p, trait


def _run_votes(cfg: MarketConfig, rng: np.random.Generator, times: np.ndarray,
               logq: np.ndarray) -> np.ndarray:
    """Sequential vote steps, vectorized across items. The reinforcement
    term reads each item's current score, so steps cannot be collapsed."""
    n = len(times)
    eta = rng.standard_normal(n)
    base = (cfg.vote_bias + cfg.alpha * logq + cfg.gamma * time_curve(times)
            + cfg.noise * eta)
    scores = np.zeros(n)
    for _ in range(cfg.vote_steps):
        p = expit(base + cfg.beta * np.log1p(np.maximum(scores, 0.0)))
        up = rng.random(n) < p
        if cfg.downvotes:
            scores += np.where(up, 1.0, -1.0)
        else:
            scores += up
    return scores.astype(np.int64)


def _planted_names(shifted: bool, cfg: MarketConfig) -> tuple[list[str], list[str]]:
    pre = "z" if shifted else "q"
    pos = [f"{pre}hi{k}" for k in range(cfg.planted_pos)]
    neg = [f"{pre}lo{k}" for k in range(cfg.planted_neg)]
    return pos, neg


def _titles(cfg: MarketConfig, rng: np.random.Generator, times: np.ndarray,
            u: np.ndarray) -> tuple[list[str], list[tuple[str, ...]]]:
    n = len(times)
    vw = np.arange(1, cfg.n_vocab + 1, dtype=np.float64) ** -1.0
    vp = vw / vw.sum()
    lengths = rng.integers(5, 13, size=n)
    background = rng.choice(cfg.n_vocab, size=int(lengths.sum()), p=vp)
    pos_mask = rng.random((n, cfg.planted_pos)) < cfg.plant_strength * u[:, None]
    neg_mask = rng.random((n, cfg.planted_neg)) < cfg.plant_strength * (1.0 - u)[:, None]
    cutoff = (cfg.start_utc + cfg.drift_epoch_frac * cfg.days * SECONDS_PER_DAY
              if cfg.drift_epoch_frac is not None else None)
    titles: list[str] = []
    planted: list[tuple[str, ...]] = []
    at = 0
    for i in range(n):
        toks = [f"w{k:03d}" for k in background[at:at + lengths[i]]]
        at += lengths[i]
        pos, neg = _planted_names(cutoff is not None and times[i] >= cutoff, cfg)
        extra = [t for t, hit in zip(pos, pos_mask[i]) if hit]
        extra += [t for t, hit in zip(neg, neg_mask[i]) if hit]
        toks += extra
        toks = [toks[j] for j in rng.permutation(len(toks))]
        titles.append(" ".join(toks))
        planted.append(tuple(extra))
    return titles, planted


def render_image(recipe: ImageRecipe) -> np.ndarray:
    """Deterministic 256x256 RGB tile field for one recipe: each 16px tile
    is a solid palette color, with the hot/cold colors taking the biased
    shares and the rest drawn uniformly from the other palette entries."""
    palette = np.asarray(color_palette(), dtype=np.uint8)
    rng = np.random.default_rng(list(recipe.key))
    n_tiles = BLOCK * BLOCK
    draw = rng.random(n_tiles)
    others = np.array([k for k in range(len(palette))
                       if k not in (recipe.hot_color, recipe.cold_color)])
    filler = others[rng.integers(len(others), size=n_tiles)]
    tiles = np.where(draw < recipe.hot_share, recipe.hot_color,
                     np.where(draw < recipe.hot_share + recipe.cold_share,
                              recipe.cold_color, filler))
    grid = tiles.reshape(BLOCK, BLOCK)
    side = 256 // BLOCK
    idx = np.repeat(np.repeat(grid, side, axis=0), side, axis=1)
    return palette[idx]


def generate(cfg: MarketConfig) -> Market:
    """Run the market. The rng consumption order is fixed (arrivals,
    authors, quality, titles, votes, comments), so identical configs give
    identical markets."""
    _validate(cfg)
    rng = np.random.default_rng(cfg.seed)

    times = _arrival_times(cfg, rng)
    n = len(times)
    p_author, trait = _author_pool(cfg, rng)
    author_of = rng.choice(cfg.n_authors, size=n, p=p_author)

    mix = cfg.author_mix
    z = mix * trait[author_of] + math.sqrt(1.0 - mix * mix) * rng.standard_normal(n)
    q = np.exp(cfg.mu_q + cfg.sigma_q * z)
    logq = np.log(q)
    u = np.argsort(np.argsort(q)).astype(np.float64)
    u = u / (n - 1) if n > 1 else np.full(n, 0.5)

    titles, planted = _titles(cfg, rng, times, u)
    scores = _run_votes(cfg, rng, times, logq)

    submissions: list[Submission] = []
    recipes: dict[str, ImageRecipe] = {}
    truth_q: dict[str, float] = {}
    truth_planted: dict[str, tuple[str, ...]] = {}
    for i in range(n):
        sid = f"s{i:06d}"
        image = None
        if cfg.images:
            image = f"{sid}.png"
            recipes[sid] = ImageRecipe(
                key=(cfg.seed, i, 11),
                hot_color=cfg.hot_color, cold_color=cfg.cold_color,
                hot_share=cfg.image_bias * float(u[i]),
                cold_share=cfg.image_bias * float(1.0 - u[i]))
        submissions.append(Submission(
            id=sid, author=f"u{int(author_of[i]):03d}", community=cfg.community,
            created_utc=int(times[i]), score=int(scores[i]), title=titles[i],
            image=image, link_key=None))
        truth_q[sid] = float(q[i])
        truth_planted[sid] = planted[i]

    comments = _comments(cfg, rng, submissions, p_author)
    return Market(config=cfg, submissions=submissions, comments=comments,
                  truth=GroundTruth(quality=truth_q, planted=truth_planted),
                  image_recipes=recipes)


def _comments(cfg: MarketConfig, rng: np.random.Generator,
              submissions: list[Submission], p_author: np.ndarray) -> list[Comment]:
    if cfg.comment_rate <= 0:
        return []
    vw = np.arange(1, cfg.n_vocab + 1, dtype=np.float64) ** -1.0
    vp = vw / vw.sum()
    counts = rng.poisson(cfg.comment_rate, size=len(submissions))
    comments: list[Comment] = []
    serial = 0
    for sub, count in zip(submissions, counts):
        thread: list[str] = []
        t = sub.created_utc
        for _ in range(int(count)):
            t += 1 + int(rng.exponential(600.0))
            cid = f"c{serial:07d}"
            serial += 1
            if thread and rng.random() < 0.45:
                parent = thread[int(rng.integers(len(thread)))]
            else:
                parent = sub.id
            if rng.random() < 0.2:
                author = sub.author
            else:
                author = f"u{int(rng.choice(len(p_author), p=p_author)):03d}"
            body = " ".join(
                f"w{k:03d}" for k in rng.choice(cfg.n_vocab, size=int(rng.integers(3, 9)), p=vp))
            comments.append(Comment(id=cid, author=author, link_id=sub.id,
                                    parent_id=parent, created_utc=int(t),
                                    score=int(rng.poisson(3)) - 1, body=body))
            thread.append(cid)
    return comments


def label_oracle(truth: GroundTruth, pair: RankedPair) -> str:
    """Which slot the latent quality prefers (what should win absent noise)."""
    qa = truth.quality.get(pair.id_a)
    qb = truth.quality.get(pair.id_b)
    if qa is None or qb is None:
        missing = pair.id_a if qa is None else pair.id_b
        raise DataError(f"pair {pair.pair_id} references id {missing!r} "
                        f"missing from ground truth")
    if qa == qb:
        raise DataError(f"pair {pair.pair_id} is a quality tie; no preferred label")
    return A_WINS if qa > qb else B_WINS


# ---------------------------------------------------------------------------
# files

def write_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for sid in truth.quality:
            fp.write(f"{sid}\t{textio.format_float(truth.quality[sid])}\n")


def read_truth(path) -> dict[str, float]:
    out: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected id<TAB>quality")
            try:
                out[parts[0]] = float(parts[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad quality value") from exc
    return out


def write_market(market: Market, out_dir) -> None:
    """Write the market in the pipeline's own input formats: submissions
    and comments as record streams, images as PNG tiles plus a hash table,
    the ground truth, and the generating config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_submissions(market.submissions, out / "submissions.jsonl")
    write_comments(market.comments, out / "comments.jsonl")
    write_truth(market.truth, out / TRUTH_FILE)
    doc = asdict(market.config)
    with open(out / CONFIG_FILE, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(textio.dumps(doc) + "\n")
    if market.image_recipes:
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        hashes: dict[str, int] = {}
        for sid, recipe in market.image_recipes.items():
            pixels = render_image(recipe)
            Image.fromarray(pixels, mode="RGB").save(img_dir / f"{sid}.png")
            hashes[sid] = phash64(pixels)
        write_hashes(hashes, out / "hashes.tsv")

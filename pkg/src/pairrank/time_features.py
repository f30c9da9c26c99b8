"""Posting-time encodings and order-based baselines.

A timestamp is encoded as four concatenated one-hot blocks: minute-in-hour
(60), hour-in-day (24), day-in-week (7, Monday first), and year over a fixed
training range. For a pair the two encodings are concatenated, not
subtracted, so a classifier sees both absolute and relative timing.
"""

from __future__ import annotations

import logging
import random
from datetime import datetime, timezone

import numpy as np

from .pairing import A_WINS, B_WINS

log = logging.getLogger(__name__)

MINUTE_DIM = 60
HOUR_DIM = 24
DOW_DIM = 7
BASE_DIM = MINUTE_DIM + HOUR_DIM + DOW_DIM


def encoding_dim(year_range: tuple[int, int]) -> int:
    lo, hi = year_range
    if hi < lo:
        raise ValueError(f"bad year range {year_range}")
    return BASE_DIM + (hi - lo + 1)


def time_onehot(created_utc: int, year_range: tuple[int, int]) -> np.ndarray:
    """One-hot encoding of a UTC timestamp; exactly four ones.

    Years outside year_range are clamped to the nearest boundary year and
    logged.
    """
    lo, hi = year_range
    dt = datetime.fromtimestamp(created_utc, tz=timezone.utc)
    out = np.zeros(encoding_dim(year_range))
    out[dt.minute] = 1.0
    out[MINUTE_DIM + dt.hour] = 1.0
    out[MINUTE_DIM + HOUR_DIM + dt.weekday()] = 1.0
    year = dt.year
    if year < lo or year > hi:
        log.info("year %d outside training range [%d, %d]; clamping", year, lo, hi)
        year = min(max(year, lo), hi)
    out[BASE_DIM + (year - lo)] = 1.0
    return out


def pair_time_features(t1: int, t2: int, year_range: tuple[int, int]) -> np.ndarray:
    """Concatenation [enc(t1), enc(t2)] for a pair's two posting times.

    Swapping the arguments swaps the halves (the training label flips with
    the slot swap); the result is never a difference of the encodings.
    """
    return np.concatenate([time_onehot(t1, year_range),
                           time_onehot(t2, year_range)])


def earlier_baseline(t_a: int, t_b: int, rng: random.Random) -> str:
    """Predict that the earlier-posted member wins; exact ties are decided
    by a coin flip from the caller's seeded generator."""
    if t_a < t_b:
        return A_WINS
    if t_b < t_a:
        return B_WINS
    return A_WINS if rng.random() < 0.5 else B_WINS


def random_baseline(rng: random.Random) -> str:
    return A_WINS if rng.random() < 0.5 else B_WINS

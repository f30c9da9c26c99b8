"""Time-controlled pairwise popularity ranking for community image posts.

The package covers the full pipeline: ingesting post and comment dumps,
screening for active days and near-duplicate images, sampling time-matched
pairs of differently scored posts, extracting text, image, author-history,
and posting-time features, training pairwise hinge rankers, and analyzing
the resulting models and scores.
"""

__version__ = "0.1.0"

from .errors import ConsistencyError, DataError, FormatError

__all__ = [
    "ConsistencyError",
    "DataError",
    "FormatError",
    "__version__",
]

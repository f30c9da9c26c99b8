"""Image loading, normalization, and the 64-bit perceptual hash.

Every image entering the pipeline is normalized to a 256x256 RGB uint8 array
(bilinear resample). Animated or undecodable files are rejected with a
reason; callers drop them and log.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.fft
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

IMAGE_SIDE = 256

# Rec.601 luma weights, also used by the gradient features.
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Perceptual hash keeps the DCT coefficients (u, v) with u < 8 and v < 8,
# drops the DC term, and adds one fixed extra low-frequency coefficient so
# the hash is exactly 64 bits.
PHASH_EXTRA_COEF = (0, 8)
PHASH_SIDE = 32
PHASH_BLOCK = 8


def check_normalized(pixels: np.ndarray) -> np.ndarray:
    if pixels.shape != (IMAGE_SIDE, IMAGE_SIDE, 3) or pixels.dtype != np.uint8:
        raise ValueError(f"not a normalized image: shape {pixels.shape}, dtype {pixels.dtype}")
    return pixels


def normalize_image(im: Image.Image) -> np.ndarray:
    rgb = im.convert("RGB").resize((IMAGE_SIDE, IMAGE_SIDE), Image.BILINEAR)
    return np.asarray(rgb, dtype=np.uint8)


def load_image(path) -> tuple[np.ndarray | None, str | None]:
    """Load and normalize an image file.

    Returns (pixels, None) on success and (None, reason) for files the
    pipeline must drop (animated, corrupt, unreadable).
    """
    try:
        with Image.open(path) as im:
            if getattr(im, "n_frames", 1) > 1:
                return None, "animated"
            return normalize_image(im), None
    except UnidentifiedImageError:
        return None, "undecodable"
    except OSError as exc:
        return None, f"unreadable ({exc})"


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Luma-weighted grayscale as float64, same height/width."""
    return pixels.astype(np.float64) @ GRAY_WEIGHTS


def phash64(pixels: np.ndarray) -> int:
    """64-bit DCT perceptual hash of a normalized image.

    Downscales to 32x32 grayscale by 8x8 box means, applies an orthonormal
    2-D DCT, keeps the top-left 8x8 block without the DC term plus one fixed
    extra low-frequency coefficient, and sets bit i when the i-th kept
    coefficient is strictly above the median of the kept set. Bit 0 is the
    most significant bit.
    """
    check_normalized(pixels)
    gray = to_gray(pixels)
    step = IMAGE_SIDE // PHASH_SIDE
    small = gray.reshape(PHASH_SIDE, step, PHASH_SIDE, step).mean(axis=(1, 3))
    coef = scipy.fft.dctn(small, type=2, norm="ortho")
    kept = [coef[u, v]
            for u in range(PHASH_BLOCK)
            for v in range(PHASH_BLOCK)
            if (u, v) != (0, 0)]
    kept.append(coef[PHASH_EXTRA_COEF])
    kept = np.array(kept)
    assert kept.shape == (64,)
    med = float(np.median(kept))
    value = 0
    for bit in kept > med:
        value = (value << 1) | int(bit)
    return value


def hamming64(a: int, b: int) -> int:
    return bin(a ^ b).count("1")

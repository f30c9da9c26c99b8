"""Hand-built image features: a fixed 50-color histogram, dense oriented
gradient descriptors, and a sign random projection to make the gradient
features tractable. External embedding tables ride alongside in a simple
tab-separated format.
"""

from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, FormatError
from .images import IMAGE_SIDE, check_normalized, to_gray

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# color palette

N_PALETTE = 50
_PALETTE_HUES = 8
_PALETTE_SATS = (1.0 / 3.0, 2.0 / 3.0, 1.0)
_PALETTE_VALS = (0.5, 1.0)


def color_palette() -> np.ndarray:
    """The fixed palette: black, white, then an 8 hue x 3 saturation x 2
    value HSV grid, hue-major. Shape (50, 3) uint8."""
    colors = [(0, 0, 0), (255, 255, 255)]
    for hi in range(_PALETTE_HUES):
        for s in _PALETTE_SATS:
            for v in _PALETTE_VALS:
                r, g, b = colorsys.hsv_to_rgb(hi / _PALETTE_HUES, s, v)
                colors.append((round(r * 255), round(g * 255), round(b * 255)))
    out = np.array(colors, dtype=np.uint8)
    assert out.shape == (N_PALETTE, 3)
    return out


_PALETTE = color_palette()
_PALETTE_F = _PALETTE.astype(np.float32)
_PALETTE_SQ = (_PALETTE_F ** 2).sum(axis=1)


def nearest_palette_index(pixels_flat: np.ndarray) -> np.ndarray:
    """Nearest palette color by Euclidean distance in RGB; ties go to the
    lowest palette index. Input (n, 3) uint8, output (n,) int64.

    All squared distances are integers below 2**24, so float32 arithmetic is
    exact and the tie rule is honored exactly.
    """
    px = pixels_flat.astype(np.float32)
    d2 = (px ** 2).sum(axis=1, keepdims=True) - 2.0 * (px @ _PALETTE_F.T) + _PALETTE_SQ
    return np.argmin(d2, axis=1)


def color_histogram(pixels: np.ndarray) -> np.ndarray:
    """L1-normalized histogram of nearest palette colors over all pixels."""
    check_normalized(pixels)
    idx = nearest_palette_index(pixels.reshape(-1, 3))
    counts = np.bincount(idx, minlength=N_PALETTE).astype(np.float64)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# oriented gradient descriptor

HOG_CELL = 8
HOG_BINS = 9
HOG_BLOCK = 2           # cells per block side, stride one cell
HOG_CLIP = 0.2
_CELLS = IMAGE_SIDE // HOG_CELL                      # 32
_BLOCKS = _CELLS - HOG_BLOCK + 1                     # 31
HOG_DIM = _BLOCKS * _BLOCKS * HOG_BLOCK * HOG_BLOCK * HOG_BINS


def _gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # central differences inside, one-sided at the borders
    gx = np.empty_like(gray)
    gx[:, 1:-1] = gray[:, 2:] - gray[:, :-2]
    gx[:, 0] = gray[:, 1] - gray[:, 0]
    gx[:, -1] = gray[:, -1] - gray[:, -2]
    gy = np.empty_like(gray)
    gy[1:-1, :] = gray[2:, :] - gray[:-2, :]
    gy[0, :] = gray[1, :] - gray[0, :]
    gy[-1, :] = gray[-1, :] - gray[-2, :]
    return gx, gy


def cell_histograms(pixels: np.ndarray) -> np.ndarray:
    """Per-cell orientation histograms, shape (32, 32, 9).

    Unsigned orientation over [0, 180) with bin centers at 0, 20, ..., 160
    degrees; each pixel votes its gradient magnitude into the two nearest
    centers with linear interpolation (wrapping at 180).
    """
    gray = to_gray(check_normalized(pixels))
    gx, gy = _gradients(gray)
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    pos = ang / (180.0 / HOG_BINS)
    k0 = np.floor(pos).astype(np.int64) % HOG_BINS
    frac = pos - np.floor(pos)
    k1 = (k0 + 1) % HOG_BINS

    rows, cols = np.indices(gray.shape)
    cell_flat = (rows // HOG_CELL) * _CELLS + (cols // HOG_CELL)
    base = cell_flat * HOG_BINS
    size = _CELLS * _CELLS * HOG_BINS
    hist = (np.bincount((base + k0).ravel(), weights=(mag * (1.0 - frac)).ravel(),
                        minlength=size)
            + np.bincount((base + k1).ravel(), weights=(mag * frac).ravel(),
                          minlength=size))
    return hist.reshape(_CELLS, _CELLS, HOG_BINS)


def hog_features(pixels: np.ndarray) -> np.ndarray:
    """Flattened block-normalized descriptor, shape (34596,), values in [0, 1].

    Blocks are 2x2 cells at stride one cell, normalized with L2 hysteresis:
    L2-normalize, clip at 0.2, L2-normalize again. All-zero blocks stay zero.
    """
    cells = cell_histograms(pixels)
    blocks = np.concatenate([
        cells[:-1, :-1], cells[:-1, 1:], cells[1:, :-1], cells[1:, 1:],
    ], axis=2)                                          # (31, 31, 36)
    norms = np.sqrt((blocks ** 2).sum(axis=2, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        normed = np.where(norms > 0.0, blocks / norms, 0.0)
    clipped = np.minimum(normed, HOG_CLIP)
    norms2 = np.sqrt((clipped ** 2).sum(axis=2, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        final = np.where(norms2 > 0.0, clipped / norms2, 0.0)
    return final.reshape(-1)


# ---------------------------------------------------------------------------
# sign random projection

PROJECTION_DIM = 2048


class SignProjector:
    """Deterministic sign random projection y = R v / sqrt(out_dim).

    Entry R[r, c] is +-1 drawn from a counter-based Philox stream keyed by
    (seed, r) at position c, so the matrix is a pure function of
    (row, column, seed) and never depends on call order.
    """

    def __init__(self, in_dim: int, out_dim: int = PROJECTION_DIM, seed: int = 0):
        if in_dim <= 0 or out_dim <= 0:
            raise ValueError("projection dimensions must be positive")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.seed = seed
        self._matrix: np.ndarray | None = None

    def _row_signs(self, row: int) -> np.ndarray:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, row], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        bits = rng.integers(0, 2, size=self.in_dim, dtype=np.int8)
        return (2 * bits - 1).astype(np.int8)

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            rows = [self._row_signs(r) for r in range(self.out_dim)]
            self._matrix = np.stack(rows)
        return self._matrix

    def project(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.in_dim,):
            raise ValueError(f"expected shape ({self.in_dim},), got {vec.shape}")
        R = self.matrix()
        out = np.zeros(self.out_dim)
        # chunk the int8 -> float64 cast to bound transient memory
        step = 4096
        for lo in range(0, self.in_dim, step):
            hi = min(self.in_dim, lo + step)
            out += R[:, lo:hi].astype(np.float64) @ vec[lo:hi]
        return out / np.sqrt(self.out_dim)


# ---------------------------------------------------------------------------
# external embedding tables

@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)


def write_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(f"#dim\t{table.dim}\tn\t{len(table.vectors)}\n")
        for sid, vec in table.vectors.items():
            fp.write(sid + "\t" + ",".join(repr(float(x)) for x in vec) + "\n")


def read_embeddings(path) -> EmbeddingTable:
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline().rstrip("\n")
        parts = header.split("\t")
        if len(parts) != 4 or parts[0] != "#dim" or parts[2] != "n":
            raise FormatError(f"bad embedding header: {header!r}")
        try:
            dim, count = int(parts[1]), int(parts[3])
        except ValueError as exc:
            raise FormatError(f"bad embedding header numbers: {header!r}") from exc
        if dim <= 0:
            raise FormatError(f"non-positive embedding dim in header: {header!r}")
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fp, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            sid, sep, rest = line.partition("\t")
            if not sep or not sid:
                raise FormatError(f"embedding row {lineno} has no id field")
            if sid in vectors:
                raise ConsistencyError(f"duplicate embedding id {sid!r} at row {lineno}")
            fields = rest.split(",")
            if len(fields) != dim:
                raise FormatError(
                    f"embedding row {lineno} has {len(fields)} components, expected {dim}")
            try:
                vec = np.array([float(x) for x in fields])
            except ValueError as exc:
                raise FormatError(f"embedding row {lineno}: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"embedding row {lineno} has non-finite components")
            vectors[sid] = vec
    if len(vectors) != count:
        raise FormatError(f"embedding header promises {count} rows, found {len(vectors)}")
    return EmbeddingTable(dim=dim, vectors=vectors)

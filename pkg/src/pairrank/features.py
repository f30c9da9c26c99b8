"""Sparse feature vectors over a named, ordered group layout.

A FeatureSpace is an ordered list of (group name, dimension) ranges laid out
contiguously; a FeatureVector stores only its nonzero coordinates. Vectors
from different spaces never mix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureSpace:
    groups: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [g[0] for g in self.groups]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate group names in {names}")
        if any(d <= 0 for _, d in self.groups):
            raise ValueError("group dimensions must be positive")

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.groups)

    def offset(self, name: str) -> tuple[int, int]:
        """(start, dim) of a named group."""
        start = 0
        for gname, gdim in self.groups:
            if gname == name:
                return start, gdim
            start += gdim
        raise KeyError(f"no feature group named {name!r}")

    def group_slice(self, name: str) -> slice:
        start, gdim = self.offset(name)
        return slice(start, start + gdim)

    def group_of(self, index: int) -> str:
        start = 0
        for gname, gdim in self.groups:
            if start <= index < start + gdim:
                return gname
            start += gdim
        raise IndexError(index)

    def describe(self) -> str:
        return " ".join(f"{name}[{dim}]" for name, dim in self.groups)


class FeatureVector:
    """Sparse vector: sorted unique indices plus their (finite) values."""

    __slots__ = ("space", "indices", "values")

    def __init__(self, space: FeatureSpace, indices, values, *, _trusted: bool = False):
        self.space = space
        idx = np.asarray(indices, dtype=np.int64)
        val = np.asarray(values, dtype=np.float64)
        if not _trusted:
            if idx.shape != val.shape or idx.ndim != 1:
                raise ValueError("indices and values must be matching 1-D arrays")
            if idx.size:
                if idx[0] < 0 or idx[-1] >= space.dim or np.any(np.diff(idx) <= 0):
                    order = np.argsort(idx, kind="stable")
                    idx, val = idx[order], val[order]
                    if idx.size and (idx[0] < 0 or idx[-1] >= space.dim):
                        raise ValueError("index out of range for feature space")
                    if np.any(np.diff(idx) == 0):
                        raise ValueError("duplicate indices")
            if not np.all(np.isfinite(val)):
                raise ValueError("feature values must be finite")
            keep = val != 0.0
            if not keep.all():
                idx, val = idx[keep], val[keep]
        self.indices = idx
        self.values = val

    @classmethod
    def from_groups(cls, space: FeatureSpace, parts: dict[str, np.ndarray]) -> "FeatureVector":
        """Assemble from dense per-group arrays; zeros are compressed away."""
        idx_parts = []
        val_parts = []
        for name, vec in parts.items():
            start, gdim = space.offset(name)
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (gdim,):
                raise ValueError(f"group {name!r} expects dim {gdim}, got {arr.shape}")
            nz = np.nonzero(arr)[0]
            idx_parts.append(nz + start)
            val_parts.append(arr[nz])
        if idx_parts:
            indices = np.concatenate(idx_parts)
            values = np.concatenate(val_parts)
        else:
            indices = np.empty(0, dtype=np.int64)
            values = np.empty(0, dtype=np.float64)
        return cls(space, indices, values)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.space.dim)
        out[self.indices] = self.values
        return out

    def group(self, name: str) -> np.ndarray:
        """Dense copy of one group's coordinates."""
        start, gdim = self.space.offset(name)
        out = np.zeros(gdim)
        mask = (self.indices >= start) & (self.indices < start + gdim)
        out[self.indices[mask] - start] = self.values[mask]
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dot(self, w: np.ndarray) -> float:
        return float(w[self.indices] @ self.values)


def sparse_diff(a: FeatureVector, b: FeatureVector) -> tuple[np.ndarray, np.ndarray]:
    """Indices and values of (a - b), zeros dropped."""
    if a.space is not b.space and a.space != b.space:
        raise ValueError("feature vectors come from different spaces")
    idx = np.concatenate([a.indices, b.indices])
    val = np.concatenate([a.values, -b.values])
    if idx.size == 0:
        return idx, val
    order = np.argsort(idx, kind="stable")
    idx, val = idx[order], val[order]
    uniq, start = np.unique(idx, return_index=True)
    summed = np.add.reduceat(val, start)
    keep = summed != 0.0
    return uniq[keep], summed[keep]

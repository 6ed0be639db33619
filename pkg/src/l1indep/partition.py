"""Cubic partitions of the two sample spaces and sparse cell counts.

Cells are half-open cubes ``[o + m*h, o + (m+1)*h)`` per coordinate, so every
point of R^d lands in exactly one cell. The joint space R^d x R^d' is tiled
by the product cells ``A_j x B_k``. Only occupied cells are stored.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidInput


def _as_points(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be a vector or an (n, d) matrix")
    if arr.shape[1] < 1:
        raise InvalidInput(f"{name} has no coordinates")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class PairedSample:
    """n pairs ``(X_i, Y_i)`` with ``X_i`` in R^d and ``Y_i`` in R^d'.

    One-dimensional inputs are promoted to column matrices.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _as_points(self.x, "x")
        y = _as_points(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise InvalidInput(f"x has {x.shape[0]} points but y has {y.shape[0]}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def d_prime(self):
        return self.y.shape[1]

    @property
    def univariate(self):
        return self.d == 1 and self.d_prime == 1

    def take(self, idx):
        return PairedSample(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class CubicPartition:
    """Pair of cubic partitions: cells of edge ``width_x`` in R^d and ``width_y`` in R^d'."""

    d: int
    d_prime: int
    width_x: float
    width_y: float
    origin_x: tuple = None
    origin_y: tuple = None

    def __post_init__(self):
        if self.d < 1 or self.d_prime < 1:
            raise InvalidInput("partition dimensions must be positive")
        for name in ("width_x", "width_y"):
            w = getattr(self, name)
            if not (math.isfinite(w) and w > 0):
                raise InvalidInput(f"{name} must be a positive finite number, got {w}")
            object.__setattr__(self, name, float(w))
        ox = (0.0,) * self.d if self.origin_x is None else tuple(float(v) for v in np.ravel(self.origin_x))
        oy = (0.0,) * self.d_prime if self.origin_y is None else tuple(float(v) for v in np.ravel(self.origin_y))
        if len(ox) != self.d or len(oy) != self.d_prime:
            raise InvalidInput("origin length does not match partition dimension")
        object.__setattr__(self, "origin_x", ox)
        object.__setattr__(self, "origin_y", oy)

    @classmethod
    def unit_grid(cls, cells=4, d=1, d_prime=1):
        """Fixed data-independent grid with ``cells`` cells per unit edge, origin 0."""
        return cls(d, d_prime, 1.0 / cells, 1.0 / cells)

    @classmethod
    def from_sample(cls, sample, width_x=None, width_y=None, origin_x=None, origin_y=None):
        """Partition with the default width rule for any width not given.

        Returns ``(partition, warnings)``; warnings lists blocks that fell back
        to width 1 because a coordinate was constant.
        """
        total_dim = sample.d + sample.d_prime
        warnings = []
        if width_x is None:
            width_x, degenerate = default_width(sample.x, sample.n, total_dim)
            if degenerate:
                warnings.append("x: constant coordinate, width fell back to 1")
        if width_y is None:
            width_y, degenerate = default_width(sample.y, sample.n, total_dim)
            if degenerate:
                warnings.append("y: constant coordinate, width fell back to 1")
        part = cls(sample.d, sample.d_prime, width_x, width_y, origin_x, origin_y)
        return part, warnings

    @property
    def cell_volume_x(self):
        return self.width_x**self.d

    @property
    def cell_volume_y(self):
        return self.width_y**self.d_prime

    def lattice_x(self, points):
        return _lattice(points, self.origin_x, self.width_x)

    def lattice_y(self, points):
        return _lattice(points, self.origin_y, self.width_y)

    def to_dict(self):
        return {
            "d": self.d,
            "d_prime": self.d_prime,
            "width_x": self.width_x,
            "width_y": self.width_y,
            "origin_x": list(self.origin_x),
            "origin_y": list(self.origin_y),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["d"], doc["d_prime"], doc["width_x"], doc["width_y"],
                   tuple(doc["origin_x"]), tuple(doc["origin_y"]))


def _lattice(points, origin, width):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return np.floor((pts - np.asarray(origin)) / width).astype(np.int64)


def bin_point(p, origin, width):
    """Lattice index of the half-open cell containing ``p``.

    ``lattice[i] = floor((p[i] - origin[i]) / width)``.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    origin = np.broadcast_to(np.asarray(origin, dtype=float), p.shape)
    if not np.all(np.isfinite(p)):
        raise InvalidInput("point has a non-finite coordinate")
    if not width > 0:
        raise InvalidInput("width must be positive")
    return tuple(int(v) for v in np.floor((p - origin) / width))


def cell_bounds(index, origin, width):
    """Lower and upper corners of the cell with lattice ``index``."""
    idx = np.asarray(index, dtype=float)
    lo = np.asarray(origin, dtype=float) + idx * width
    return lo, lo + width


class WidthChoice(NamedTuple):
    width: float
    degenerate: bool


def default_width(coords, n, total_dim):
    """Scott-like bin edge ``3.5 * sigma * n ** (-1 / (2 + total_dim))``.

    ``sigma`` is the mean of the per-coordinate sample standard deviations of
    the block. A constant coordinate makes the rule meaningless; the width
    then falls back to 1 and ``degenerate`` is set.
    """
    arr = np.asarray(coords, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if n < 2 or arr.shape[0] < 2:
        return WidthChoice(1.0, True)
    if np.any(np.ptp(arr, axis=0) == 0):
        return WidthChoice(1.0, True)
    sigma = float(np.mean(np.std(arr, axis=0, ddof=1)))
    return WidthChoice(3.5 * sigma * n ** (-1.0 / (2 + total_dim)), False)


@dataclass(frozen=True)
class CellCounts:
    """Occupied-cell counts: ``n * nu_n(A_j x B_k)``, ``n * mu_n1(A_j)``, ``n * mu_n2(B_k)``.

    ``codes_x``/``codes_y`` give, per sample point, the position of its cell in
    ``cells_x``/``cells_y``; they back the vectorised statistics.
    """

    n: int
    joint: dict
    marginal_x: dict
    marginal_y: dict
    cells_x: tuple = field(repr=False, default=())
    cells_y: tuple = field(repr=False, default=())
    codes_x: np.ndarray = field(repr=False, default=None)
    codes_y: np.ndarray = field(repr=False, default=None)

    def joint_matrix(self):
        """Dense ``(len(cells_x), len(cells_y))`` integer matrix of joint counts."""
        pos_x = {c: i for i, c in enumerate(self.cells_x)}
        pos_y = {c: i for i, c in enumerate(self.cells_y)}
        mat = np.zeros((len(self.cells_x), len(self.cells_y)), dtype=np.int64)
        for (jx, jy), v in self.joint.items():
            mat[pos_x[jx], pos_y[jy]] = v
        return mat

    def marginal_vectors(self):
        mx = np.array([self.marginal_x[c] for c in self.cells_x], dtype=np.int64)
        my = np.array([self.marginal_y[c] for c in self.cells_y], dtype=np.int64)
        return mx, my


def dense_codes(lattice):
    """Map lattice rows to ``(cells, codes)`` with ``cells`` sorted lexicographically."""
    lattice = np.asarray(lattice, dtype=np.int64)
    lo = lattice.min(axis=0)
    span = lattice.max(axis=0) - lo + 1
    if np.sum(np.log2(span.astype(float))) > 62:
        cells, codes = np.unique(lattice, axis=0, return_inverse=True)
        return [tuple(int(v) for v in row) for row in cells], codes.reshape(-1).astype(np.int64)
    # mixed-radix key, first coordinate most significant, preserves lexicographic order
    stride = np.ones(len(span), dtype=np.int64)
    for i in range(len(span) - 2, -1, -1):
        stride[i] = stride[i + 1] * span[i + 1]
    keys = (lattice - lo) @ stride
    total = int(stride[0] * span[0])
    if total <= 4 * len(keys) + 1024:
        present = np.bincount(keys, minlength=total) > 0
        uniq = np.flatnonzero(present)
        codes = (np.cumsum(present) - 1)[keys]
    else:
        uniq, codes = np.unique(keys, return_inverse=True)
    rows = lo + (uniq[:, None] // stride) % span
    return [tuple(int(v) for v in row) for row in rows], codes.reshape(-1).astype(np.int64)


def build_counts(sample, part):
    """Bin ``sample`` on ``part`` and return the sparse joint and marginal counts."""
    if sample.n < 1:
        raise InvalidInput("sample is empty")
    if sample.d != part.d or sample.d_prime != part.d_prime:
        raise InvalidInput(
            f"sample dimensions ({sample.d}, {sample.d_prime}) do not match "
            f"partition dimensions ({part.d}, {part.d_prime})"
        )
    cells_x, codes_x = dense_codes(part.lattice_x(sample.x))
    cells_y, codes_y = dense_codes(part.lattice_y(sample.y))
    kx, ky = len(cells_x), len(cells_y)
    flat = np.bincount(codes_x * ky + codes_y, minlength=kx * ky).reshape(kx, ky)
    mx = flat.sum(axis=1)
    my = flat.sum(axis=0)
    joint = {(cells_x[i], cells_y[j]): int(flat[i, j]) for i, j in zip(*np.nonzero(flat))}
    codes_x.setflags(write=False)
    codes_y.setflags(write=False)
    return CellCounts(
        n=sample.n,
        joint=joint,
        marginal_x={c: int(v) for c, v in zip(cells_x, mx)},
        marginal_y={c: int(v) for c, v in zip(cells_y, my)},
        cells_x=tuple(cells_x),
        cells_y=tuple(cells_y),
        codes_x=codes_x,
        codes_y=codes_y,
    )

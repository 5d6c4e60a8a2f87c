"""Particle ensembles, pseudonorms and empirical Wasserstein distances.

A probability measure is represented by ``N`` equally weighted points in
``R^dim``. All distances use the Euclidean ground metric.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "Ensemble",
    "MetricConfig",
    "pseudo_norm",
    "gamma_p",
    "wp_exact_1d",
    "wp_exact_assignment",
    "wp_sliced",
    "resample",
    "save_csv",
    "load_csv",
    "save_bin",
    "load_bin",
    "ASSIGNMENT_CAP",
]

UNCONSTRAINED = "unconstrained"
NONNEGATIVE = "nonnegative-orthant"
CONSTRAINT_TAGS = (UNCONSTRAINED, NONNEGATIVE)

ASSIGNMENT_CAP = 256

MAGIC = b"ERGO"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQd")


@dataclass(frozen=True)
class Ensemble:
    """Equal-weight empirical measure.

    Parameters
    ----------
    points : array_like, shape (N, dim) or (N,)
        Sample locations. One-dimensional input is read as ``dim = 1``.
    base_point : array_like, optional
        Reference point ``x0`` of the pseudonorm; defaults to the origin.
    constraint : str
        ``"unconstrained"`` or ``"nonnegative-orthant"``.
    """

    points: np.ndarray
    base_point: np.ndarray | None = None
    constraint: str = UNCONSTRAINED

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("an ensemble needs at least one point and one coordinate")
        if not np.all(np.isfinite(pts)):
            raise ValueError("ensemble contains non-finite coordinates")
        if self.constraint not in CONSTRAINT_TAGS:
            raise ValueError(f"unknown constraint tag {self.constraint!r}")
        if self.constraint == NONNEGATIVE and np.any(pts < 0):
            raise ValueError("nonnegative-orthant ensemble has a negative coordinate")
        base = np.zeros(pts.shape[1]) if self.base_point is None else np.asarray(self.base_point, float).ravel()
        if base.shape != (pts.shape[1],):
            raise ValueError("base_point dimension does not match points")
        pts.setflags(write=False)
        base.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "base_point", base)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, points) -> "Ensemble":
        """Same base point and constraint, new locations."""
        return Ensemble(points, self.base_point, self.constraint)

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def var(self) -> np.ndarray:
        return self.points.var(axis=0)


@dataclass(frozen=True)
class MetricConfig:
    """Exponent ``p`` of the Wasserstein cost ``|x - y|^p``."""

    p: float = 2.0
    norm: str = "euclidean"

    def __post_init__(self):
        if not np.isfinite(self.p) or self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.norm != "euclidean":
            raise ValueError("only the Euclidean ground distance is supported")


def _cfg(cfg) -> MetricConfig:
    if cfg is None:
        return MetricConfig()
    if isinstance(cfg, MetricConfig):
        return cfg
    return MetricConfig(float(cfg))


def _same_dim(mu: Ensemble, nu: Ensemble):
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _same_size(mu: Ensemble, nu: Ensemble):
    if mu.n != nu.n:
        raise ValueError(f"size mismatch: {mu.n} vs {nu.n}; resample to a common size first")


def pseudo_norm(mu: Ensemble, cfg=None) -> float:
    """Return ``(1/N) sum_i |x_i - x0|^p``, the p-th power of the pseudonorm."""
    p = _cfg(cfg).p
    r = np.linalg.norm(mu.points - mu.base_point, axis=1)
    return float(np.mean(r**p))


def gamma_p(mu: Ensemble, nu: Ensemble, cfg=None) -> float:
    """Moment factor ``1 + ||mu||_p^p + ||nu||_p^p``."""
    _same_dim(mu, nu)
    return 1.0 + pseudo_norm(mu, cfg) + pseudo_norm(nu, cfg)


def wp_exact_1d(mu: Ensemble, nu: Ensemble, cfg=None) -> float:
    """Exact W_p on the line by pairing order statistics."""
    p = _cfg(cfg).p
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("wp_exact_1d requires dim == 1")
    _same_size(mu, nu)
    return _w1d_sorted(np.sort(mu.points[:, 0]), np.sort(nu.points[:, 0]), p)


def _w1d_sorted(a: np.ndarray, b: np.ndarray, p: float) -> float:
    d = np.abs(a - b)
    m = d.max()
    if m == 0 or not np.isfinite(m):
        return float(m)
    # scale by the largest gap so tiny or huge gaps neither underflow nor overflow in d**p
    return float(m * np.mean((d / m) ** p) ** (1.0 / p))


def wp_exact_assignment(mu: Ensemble, nu: Ensemble, cfg=None, cap: int = ASSIGNMENT_CAP) -> float:
    """Exact W_p between equal-size ensembles via minimal-cost assignment."""
    p = _cfg(cfg).p
    _same_dim(mu, nu)
    _same_size(mu, nu)
    if mu.n > cap:
        raise ValueError(f"ensemble size {mu.n} exceeds assignment cap {cap}")
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    cost = np.linalg.norm(diff, axis=2) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean() ** (1.0 / p))


def _direction(seed: int, index: int, dim: int) -> np.ndarray:
    # Projection j depends only on (seed, j), never on evaluation order.
    g = np.random.default_rng([int(seed), int(index)])
    v = g.standard_normal(dim)
    return v / np.linalg.norm(v)


def wp_sliced(mu: Ensemble, nu: Ensemble, cfg=None, n_proj: int = 64, seed: int = 0) -> float:
    """Sliced W_p: the p-th root of the mean of 1-D W_p^p over random directions."""
    p = _cfg(cfg).p
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    _same_dim(mu, nu)
    _same_size(mu, nu)
    if mu.dim == 1:
        return _w1d_sorted(np.sort(mu.points[:, 0]), np.sort(nu.points[:, 0]), p)
    acc = 0.0
    for j in range(n_proj):
        d = _direction(seed, j, mu.dim)
        acc += _w1d_sorted(np.sort(mu.points @ d), np.sort(nu.points @ d), p) ** p
    return float((acc / n_proj) ** (1.0 / p))


def resample(mu: Ensemble, n: int, seed: int = 0) -> Ensemble:
    """Bring an ensemble to size ``n``.

    Dimension one uses the empirical quantile function at mid-point levels;
    higher dimensions draw a seeded bootstrap sample.
    """
    if n == mu.n:
        return mu
    if mu.dim == 1:
        xs = np.sort(mu.points[:, 0])
        levels = (np.arange(n) + 0.5) / n
        idx = np.minimum((levels * mu.n).astype(np.int64), mu.n - 1)
        return mu.with_points(xs[idx][:, None])
    g = np.random.default_rng([int(seed), 0xB007])
    return mu.with_points(mu.points[g.integers(0, mu.n, size=n)])


# -- serialization -----------------------------------------------------------

def save_csv(mu: Ensemble, path) -> None:
    """One point per row, one column per coordinate."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in mu.points:
            w.writerow([repr(float(v)) for v in row])


def load_csv(path, base_point=None, constraint=UNCONSTRAINED) -> Ensemble:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(v) for v in row])
    return Ensemble(np.array(rows, dtype=float), base_point, constraint)


def save_bin(mu: Ensemble, path, p: float = 2.0) -> None:
    """Binary checkpoint: header (magic, version, dim, N, p) then little-endian f64."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, mu.dim, mu.n, float(p))
    Path(path).write_bytes(header + mu.points.astype("<f8").tobytes(order="C"))


def load_bin(path, base_point=None, constraint=UNCONSTRAINED) -> tuple[Ensemble, float]:
    """Read a binary checkpoint; returns ``(ensemble, p)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, dim, n, p = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * dim * n
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    pts = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, dim).astype(float)
    return Ensemble(pts, base_point, constraint), p

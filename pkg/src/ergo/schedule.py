"""Decreasing-step time grids and the accumulated-error weights sigma_{b,eps}(n)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "SigmaParams",
    "BoundReport",
    "gamma_of",
    "t_of",
    "sigma",
    "sigma_sequence",
    "varpi",
    "check_sigma_bound",
    "check_a3",
    "sigma_table",
    "bound_shape",
]

HARMONIC = "harmonic"
UNIFORM = "uniform"
EXPLICIT = "explicit"


class TimeGrid:
    """Time grid ``t_n = t0 + sum_{i<=n} gamma_i``.

    ``harmonic`` steps are ``gamma_n = 1/(n + 1/h)``; ``uniform`` steps are a
    constant ``gamma``; ``explicit`` grids take a finite step array (used for
    probing). Prefix sums are cached append-only with compensated summation.
    """

    def __init__(self, rule: str = HARMONIC, h: float = 0.5, t0: float = 0.0, steps=None):
        if rule not in (HARMONIC, UNIFORM, EXPLICIT):
            raise ValueError(f"unknown grid rule {rule!r}")
        self.rule = rule
        self.t0 = float(t0)
        if rule == HARMONIC:
            if not 0.0 < h < 1.0:
                raise ValueError(f"harmonic step cap h must lie in (0, 1), got {h}")
        elif rule == UNIFORM:
            if not (h > 0 and math.isfinite(h)):
                raise ValueError(f"uniform step must be positive, got {h}")
        self.h = float(h)
        self._explicit = None
        if rule == EXPLICIT:
            arr = np.asarray(steps, dtype=float).ravel()
            if arr.size == 0 or np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise ValueError("explicit steps must be positive and finite")
            self._explicit = arr
            self.h = float(arr.max())
        self._gamma = np.zeros(1)          # index 0 unused
        self._t = np.array([self.t0])
        self._len = 0                      # cached through n = _len
        self._sum = self.t0
        self._comp = 0.0

    @classmethod
    def harmonic(cls, h: float = 0.5, t0: float = 0.0) -> "TimeGrid":
        return cls(HARMONIC, h, t0)

    @classmethod
    def uniform(cls, gamma: float, t0: float = 0.0) -> "TimeGrid":
        return cls(UNIFORM, gamma, t0)

    @classmethod
    def explicit(cls, steps, t0: float = 0.0) -> "TimeGrid":
        return cls(EXPLICIT, t0=t0, steps=steps)

    def _raw_gamma(self, n: np.ndarray) -> np.ndarray:
        if self.rule == HARMONIC:
            return 1.0 / (n + 1.0 / self.h)
        if self.rule == UNIFORM:
            return np.full(n.shape, self.h)
        return self._explicit[n.astype(np.int64) - 1]

    @property
    def max_index(self) -> int | None:
        """Largest available step index, ``None`` when unbounded."""
        return None if self._explicit is None else self._explicit.size

    def extend(self, n: int) -> None:
        """Make ``gamma_1..gamma_n`` and ``t_0..t_n`` available."""
        if n <= self._len:
            return
        if self.max_index is not None and n > self.max_index:
            raise IndexError(f"explicit grid has only {self.max_index} steps")
        new = max(n, 2 * self._len)
        if self.max_index is not None:
            new = min(new, self.max_index)
        idx = np.arange(self._len + 1, new + 1, dtype=float)
        g = self._raw_gamma(idx)
        t = np.empty(g.size)
        s, c = self._sum, self._comp
        for i, gi in enumerate(g.tolist()):
            # Neumaier compensated running sum
            tot = s + gi
            if abs(s) >= abs(gi):
                c += (s - tot) + gi
            else:
                c += (gi - tot) + s
            s = tot
            t[i] = s + c
        self._sum, self._comp = s, c
        self._gamma = np.concatenate([self._gamma, g])
        self._t = np.concatenate([self._t, t])
        self._len = new

    def gammas(self, n: int) -> np.ndarray:
        """Array ``[gamma_1, ..., gamma_n]``."""
        self.extend(n)
        return self._gamma[1 : n + 1]

    def times(self, n: int) -> np.ndarray:
        """Array ``[t_0, ..., t_n]``."""
        self.extend(n)
        return self._t[: n + 1]

    def gamma_of(self, n: int) -> float:
        if n < 1:
            raise ValueError("step indices start at 1")
        self.extend(n)
        return float(self._gamma[n])

    def t_of(self, n: int) -> float:
        if n < 0:
            raise ValueError("time indices start at 0")
        self.extend(n)
        return float(self._t[n])

    def varpi_limit(self) -> float | None:
        """Exact limsup of (gamma_n - gamma_{n+1}) / gamma_{n+1}^2 when known."""
        if self.rule == HARMONIC:
            return 1.0
        if self.rule == UNIFORM:
            return 0.0
        return None

    def to_dict(self) -> dict:
        d = {"rule": self.rule, "t0": self.t0}
        if self.rule == HARMONIC:
            d["h"] = self.h
        elif self.rule == UNIFORM:
            d["gamma"] = self.h
        else:
            d["steps"] = self._explicit.tolist()
        return d


def gamma_of(grid: TimeGrid, n: int) -> float:
    return grid.gamma_of(n)


def t_of(grid: TimeGrid, n: int) -> float:
    return grid.t_of(n)


@dataclass(frozen=True)
class SigmaParams:
    b: float
    eps: float

    def __post_init__(self):
        for name in ("b", "eps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")


def sigma_sequence(grid: TimeGrid, params: SigmaParams, n_max: int) -> np.ndarray:
    """``[sigma(0), ..., sigma(n_max)]`` by the forward recursion.

    ``sigma(n+1) = exp(-b gamma_{n+1}) sigma(n) + gamma_{n+1}^(1+eps)``; each
    factor is a single-step exponential, so nothing underflows for long runs.
    """
    g = grid.gammas(n_max)
    decay = np.exp(-params.b * g).tolist()
    inc = (g ** (1.0 + params.eps)).tolist()
    out = [0.0] * (n_max + 1)
    acc = 0.0
    for i in range(n_max):
        acc = decay[i] * acc + inc[i]
        out[i + 1] = acc
    return np.array(out)


def sigma(grid: TimeGrid, params: SigmaParams, n: int) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    return float(sigma_sequence(grid, params, n)[n])


def varpi(grid: TimeGrid, n_probe: int) -> float:
    """Windowed probe of limsup (gamma_n - gamma_{n+1}) / gamma_{n+1}^2 over [n/2, n]."""
    if n_probe < 2:
        raise ValueError("n_probe must be >= 2")
    g = grid.gammas(n_probe + 1)
    lo = max(1, n_probe // 2)
    gn = g[lo - 1 : n_probe]
    gn1 = g[lo : n_probe + 1]
    return float(np.max((gn - gn1) / gn1**2))


@dataclass
class BoundReport:
    """Outcome of a numeric bound check."""

    name: str
    passed: bool
    n_max: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "n_max": self.n_max, "details": self.details}


def bound_shape(kind: str, n: np.ndarray, gam: np.ndarray, params: SigmaParams, lam: float | None = None):
    """Evaluate one of the named bound shapes at indices ``n`` (steps ``gam``)."""
    b, e = params.b, params.eps
    if kind == "n_power":
        return n ** (-min(b, e))
    if kind == "n_power_log":
        return n ** (-e) * np.log1p(n)
    if kind == "gamma_eps":
        return gam**e
    if kind == "gamma_lambda":
        return gam**lam
    raise ValueError(f"unknown bound shape {kind!r}")


def _default_shapes(grid: TimeGrid, params: SigmaParams, lam):
    shapes = []
    w = grid.varpi_limit()
    if w is not None:
        if w == 0 or params.b / w > params.eps:
            shapes.append("gamma_eps")
        elif lam is not None:
            if not lam < params.b / w:
                raise ValueError(f"lambda={lam} must be below b/varpi={params.b / w}")
            shapes.append("gamma_lambda")
    if grid.rule == HARMONIC:
        shapes.append("n_power_log" if params.b == params.eps else "n_power")
    return shapes


def check_sigma_bound(
    grid: TimeGrid,
    params: SigmaParams,
    n_max: int,
    shapes=None,
    lam: float | None = None,
    tol: float = 1.01,
) -> BoundReport:
    """Check that sigma(n) / shape(n) stays bounded up to ``n_max``.

    A shape passes when the maximum ratio over the last decade
    ``(n_max/10, n_max]`` is at most ``tol`` times the maximum over
    ``[1, n_max/10]``; the running maximum doubles as the empirical constant.
    """
    if n_max < 10:
        raise ValueError("n_max must be >= 10")
    if shapes is None:
        shapes = _default_shapes(grid, params, lam)
    if "n_power" in shapes or "n_power_log" in shapes:
        if grid.rule != HARMONIC:
            raise ValueError("power-of-n shapes apply to the harmonic grid only")
    sig = sigma_sequence(grid, params, n_max)[1:]
    n = np.arange(1, n_max + 1, dtype=float)
    gam = grid.gammas(n_max)
    cut = n_max // 10
    details = {}
    ok = True
    for kind in shapes:
        ratio = sig / bound_shape(kind, n, gam, params, lam)
        head, tail = float(ratio[:cut].max()), float(ratio[cut:].max())
        passed = tail <= tol * head
        ok &= passed
        details[kind] = {
            "constant": float(ratio.max()),
            "head_max": head,
            "tail_max": tail,
            "tail_over_head": tail / head,
            "passed": bool(passed),
        }
    return BoundReport("sigma_bound", bool(ok), n_max, details)


def check_a3(grid: TimeGrid, n_max: int) -> BoundReport:
    """Check ``h * exp(-(t_n - t0)) >= gamma_n`` for every ``n <= n_max`` (no tolerance)."""
    if grid.rule != HARMONIC:
        raise ValueError("check_a3 requires a harmonic grid")
    g = grid.gammas(n_max)
    t = grid.times(n_max)[1:]
    lhs = grid.h * np.exp(-(t - grid.t0))
    bad = np.nonzero(lhs < g)[0]
    details = {"min_ratio": float(np.min(lhs / g))}
    if bad.size:
        details["first_violation"] = int(bad[0] + 1)
    return BoundReport("a3", bad.size == 0, n_max, details)


def sigma_table(grid: TimeGrid, params: SigmaParams, n_max: int, shape: str | None = None):
    """Rows ``(n, gamma_n, t_n, sigma, bound_shape, ratio)`` for ``n = 1..n_max``."""
    if shape is None:
        shape = _default_shapes(grid, params, None)[-1]
    sig = sigma_sequence(grid, params, n_max)[1:]
    n = np.arange(1, n_max + 1, dtype=float)
    gam = grid.gammas(n_max)
    t = grid.times(n_max)[1:]
    shp = bound_shape(shape, n, gam, params)
    return [
        (int(k), float(gk), float(tk), float(sk), float(bk), float(sk / bk))
        for k, gk, tk, sk, bk in zip(n, gam, t, sig, shp)
    ], shape

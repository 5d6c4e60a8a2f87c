"""Reference measures, convergence-rate fits and aggregated regime verdicts."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import run_scheme
from .errors import InsufficientCheckpoints, StationarityError
from .measure import Ensemble, wp_exact_1d, wp_sliced
from .schedule import TimeGrid

__all__ = [
    "ReferenceMeasure",
    "ou_invariant",
    "empirical_invariant",
    "gaussian_w2_1d",
    "moment_w2",
    "bias_floor",
    "RateReport",
    "fit_rate",
    "Verdict",
    "theorem_verdict",
    "THEOREMS",
    "write_json",
    "write_csv",
]


@dataclass
class ReferenceMeasure:
    """Invariant-measure reference: analytic Gaussian or an empirical ensemble."""

    kind: str
    mean: np.ndarray | None = None
    variance: np.ndarray | None = None
    ensemble: Ensemble | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("analytic_gaussian", "empirical"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if self.kind == "empirical":
            if self.ensemble is None:
                raise ValueError("empirical reference needs an ensemble")
            missing = {"seed", "gamma", "burn_in"} - set(self.provenance)
            if missing:
                raise ValueError(f"empirical reference provenance lacks {sorted(missing)}")

    def sample(self, n: int, seed: int) -> Ensemble:
        if self.kind == "empirical":
            return self.ensemble
        g = np.random.default_rng([int(seed), 0x5EF])
        m, v = np.atleast_1d(self.mean), np.atleast_1d(self.variance)
        return Ensemble(m + np.sqrt(v) * g.standard_normal((n, m.size)))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "analytic_gaussian":
            return np.atleast_1d(self.mean), np.atleast_1d(self.variance)
        return self.ensemble.mean(), self.ensemble.var()

    def to_dict(self):
        if self.kind == "analytic_gaussian":
            return {"kind": self.kind, "mean": np.atleast_1d(self.mean).tolist(),
                    "variance": np.atleast_1d(self.variance).tolist()}
        return {"kind": self.kind, "n": self.ensemble.n, "provenance": self.provenance}


def ou_invariant(k: float, sigma: float, dim: int = 1) -> ReferenceMeasure:
    """Stationary law ``N(0, sigma^2 / (2k))`` per coordinate of ``dX = -kX dt + sigma dB``."""
    if not k > 0:
        raise ValueError("k must be > 0")
    return ReferenceMeasure("analytic_gaussian", np.zeros(dim), np.full(dim, sigma**2 / (2 * k)))


def _moment_se(x: np.ndarray):
    n = x.shape[0]
    m, v = x.mean(axis=0), x.var(axis=0, ddof=1)
    c = x - m
    var_of_var = ((c**4).mean(axis=0) - v**2) / n
    return m, v, np.sqrt(v / n), np.sqrt(np.maximum(var_of_var, 0.0))


def empirical_invariant(model, gamma: float, burn_in: int, n_collect: int, mu0: Ensemble, seed: int,
                        tol: float = 3.0, workers: int = 1) -> ReferenceMeasure:
    """Run a constant-step scheme and keep the final ensemble as a reference.

    The first two moments after ``burn_in + n_collect // 2`` and
    ``burn_in + n_collect`` steps must agree within ``tol`` combined standard
    errors; otherwise :class:`StationarityError` reports the drift.
    """
    if burn_in < 1:
        raise ValueError("burn_in must be >= 1")
    if n_collect < 2:
        raise ValueError("n_collect must be >= 2")
    grid = TimeGrid.uniform(gamma)
    half, end = burn_in + n_collect // 2, burn_in + n_collect
    out = run_scheme(model, mu0, grid, end, seed, {half, end}, workers=workers)
    a, b = out[half].points, out[end].points
    ma, va, sma, sva = _moment_se(a)
    mb, vb, smb, svb = _moment_se(b)
    zm = np.abs(ma - mb) / np.maximum(np.hypot(sma, smb), 1e-300)
    zv = np.abs(va - vb) / np.maximum(np.hypot(sva, svb), 1e-300)
    drift = {"mean_shift": (mb - ma).tolist(), "var_shift": (vb - va).tolist(),
             "mean_z": zm.tolist(), "var_z": zv.tolist()}
    still = (np.all(ma == mb) and np.all(va == vb))
    if not still and (np.any(zm > tol) or np.any(zv > tol)):
        raise StationarityError("stationarity probe failed: moments still drifting", drift)
    prov = {"seed": int(seed), "gamma": float(gamma), "burn_in": int(burn_in), "n_collect": int(n_collect),
            "model": model.describe(), "probe": drift}
    return ReferenceMeasure("empirical", ensemble=out[end], provenance=prov)


def gaussian_w2_1d(m1: float, v1: float, m2: float, v2: float) -> float:
    """Closed-form ``W_2`` between ``N(m1, v1)`` and ``N(m2, v2)``."""
    if v1 < 0 or v2 < 0:
        raise ValueError("variances must be >= 0")
    return math.sqrt((m1 - m2) ** 2 + (math.sqrt(v1) - math.sqrt(v2)) ** 2)


def moment_w2(mu: Ensemble, ref: ReferenceMeasure) -> float:
    """Gaussian-moment-matched ``W_2``: the closed form applied to the empirical first two moments."""
    m1, v1 = mu.mean(), mu.var()
    m2, v2 = ref.moments()
    return float(math.sqrt(sum(gaussian_w2_1d(a, b, c, d) ** 2 for a, b, c, d in zip(m1, v1, m2, v2))))


def bias_floor(sampler, n: int, seeds=range(20), method: str = "moment", p: float = 2.0) -> float:
    """Median distance between two independent same-law ensembles of size ``n``.

    ``sampler(n, seed)`` returns an :class:`Ensemble`. ``method`` is
    ``"moment"`` (moment-matched W_2), ``"exact"`` (1-D) or ``"sliced"``.
    """
    vals = []
    for s in seeds:
        a, b = sampler(n, 2 * s), sampler(n, 2 * s + 1)
        if method == "moment":
            ref = ReferenceMeasure("analytic_gaussian", b.mean(), b.var())
            vals.append(moment_w2(a, ref))
        elif method == "exact":
            vals.append(wp_exact_1d(a, b, p))
        else:
            vals.append(wp_sliced(a, b, p, seed=s))
    return float(np.median(vals))


# -- rate fits ----------------------------------------------------------------

@dataclass
class RateReport:
    ns: np.ndarray
    values: np.ndarray
    used: np.ndarray
    slope: float
    slope_se: float
    intercept: float
    predicted: float
    bias_floor: float
    log_corrected: bool
    passed: bool
    tol: float = 0.3

    def rows(self):
        """CSV rows ``(n, value, used)``."""
        return [(int(n), float(v), int(u)) for n, v, u in zip(self.ns, self.values, self.used)]

    def to_dict(self):
        return {"slope": self.slope, "slope_se": self.slope_se, "intercept": self.intercept,
                "predicted_exponent": -self.predicted, "threshold": -self.predicted + self.tol,
                "bias_floor": self.bias_floor, "log_corrected": self.log_corrected,
                "n_used": int(self.used.sum()), "passed": bool(self.passed)}


def fit_rate(ns, values, predicted: float, bias_floor: float = 0.0, log_corrected: bool = False,
             tol: float = 0.3, min_points: int = 4, floor_factor: float = 5.0) -> RateReport:
    """Least-squares slope of ``log values`` against ``log n``.

    ``values`` are the quantities whose decay is predicted, e.g. ``W_p^p``.
    Only checkpoints with ``value > floor_factor * bias_floor`` are used; with
    ``log_corrected`` the values are divided by ``1 + ln(1 + n)`` first. The
    fit passes iff ``slope <= -predicted + tol``.
    """
    ns = np.asarray(ns, dtype=float)
    vals = np.asarray(values, dtype=float)
    if ns.shape != vals.shape:
        raise ValueError("ns and values must have equal length")
    used = (vals > floor_factor * bias_floor) & (vals > 0) & np.isfinite(vals)
    if used.sum() < min_points:
        raise InsufficientCheckpoints(
            f"only {int(used.sum())} checkpoints exceed {floor_factor} x bias floor {bias_floor:.3g}; need {min_points}"
        )
    y = vals / (1.0 + np.log1p(ns)) if log_corrected else vals.copy()
    lx, ly = np.log(ns[used]), np.log(y[used])
    X = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ coef
    dof = lx.size - 2
    se = math.sqrt(float(resid @ resid) / dof / np.sum((lx - lx.mean()) ** 2)) if dof > 0 else float("nan")
    slope = float(coef[0])
    return RateReport(ns, vals, used, slope, se, float(coef[1]), float(predicted), float(bias_floor),
                      bool(log_corrected), slope <= -predicted + tol, tol)


# -- verdicts -----------------------------------------------------------------

THEOREMS = {
    "ou_langevin": "Langevin OU: p-bounded, coupled, W_2^2 rate n^-(b*^eps)",
    "double_well": "Langevin with drift contractive at large distances",
    "kinetic": "kinetic McKean-Vlasov Langevin",
    "reflected_w2": "reflected SDE in W_2",
    "neuronal_w2": "neuronal model in W_2",
    "neuronal_w1": "neuronal model in W_1",
    "boltzmann_fv": "Boltzmann finite-variation regime in W_1",
    "boltzmann_martingale": "Boltzmann martingale regime in W_2",
}


@dataclass
class Verdict:
    theorem: str
    passed: bool
    regime: dict
    clauses: dict
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def theorem_verdict(theorem_id: str, regime: dict | None = None, monitor=None, coupling=None,
                    rate=None) -> Verdict:
    """Aggregate clause-level results for a named model regime.

    Clauses: ``p_bounded`` (Foster-Lyapunov monitor), ``coupling`` (fitted
    ``b_star > 0``) and ``rate`` (slope fit). At least one artifact is
    required. When the declared regime condition fails, clauses are still
    listed but the rate clause is skipped and the verdict is FAIL.
    """
    if theorem_id not in THEOREMS:
        raise KeyError(f"unknown theorem id {theorem_id!r}; known: {sorted(THEOREMS)}")
    if monitor is None and coupling is None and rate is None:
        raise ValueError("theorem_verdict needs at least one run artifact")
    regime = dict(regime or {"condition": "none", "holds": True})
    clauses = {}
    notes = []
    if monitor is not None:
        clauses["p_bounded"] = {"passed": bool(monitor.passed), **monitor.to_dict()}
    if coupling is not None:
        clauses["coupling"] = {"passed": bool(coupling.b_star > 0), "b_star": coupling.b_star,
                               "se_b": coupling.se_b, "C_star": coupling.C_star}
    if rate is not None:
        if regime.get("holds", True):
            clauses["rate"] = rate.to_dict()
            if rate.log_corrected:
                notes.append("rate fit divides out 1 + ln(1 + n)")
        else:
            clauses["rate"] = {"passed": None, "skipped": "regime condition violated"}
    if not regime.get("holds", True):
        notes.append(f"regime condition violated: {regime.get('condition')}")
    passed = bool(regime.get("holds", True)) and all(c["passed"] for c in clauses.values() if c["passed"] is not None)
    return Verdict(theorem_id, passed, regime, clauses, notes)


# -- output -------------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable, allow_nan=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])

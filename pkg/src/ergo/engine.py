"""Composed schemes along a time grid, moment monitoring and coupling probes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateFit, NoiseConventionError, NumericalBlowup, StepCapError
from .measure import ASSIGNMENT_CAP, Ensemble, gamma_p
from .models.base import OneStepModel, Refined
from .noise import StepNoise
from .schedule import SigmaParams, TimeGrid, sigma_sequence

__all__ = [
    "run_scheme",
    "iterate_scheme",
    "FLParams",
    "MonitorReport",
    "fl_monitor",
    "ou_fl_params",
    "CoupledEnsemble",
    "couple_one_step",
    "CouplingEstimate",
    "estimate_coupling",
    "one_step_error",
]


def _check_finite(x: np.ndarray, step: int):
    if not np.all(np.isfinite(x)):
        bad = np.nonzero(~np.all(np.isfinite(x), axis=1))[0]
        raise NumericalBlowup(step, int(bad[0]))


def _check_cap(model: OneStepModel, gammas: np.ndarray, first_step: int):
    if gammas.size and gammas.max() > model.step_cap:
        i = int(np.argmax(gammas > model.step_cap))
        raise StepCapError(
            f"step {first_step + i} has size {gammas[i]:.6g} above the {model.name} cap {model.step_cap:.6g}"
        )


def _refine_of(*models) -> int:
    ms = {m.m for m in models if isinstance(m, Refined)}
    if len(ms) > 1:
        raise NoiseConventionError(f"models refine the noise differently: {sorted(ms)}")
    return ms.pop() if ms else 1


def iterate_scheme(model: OneStepModel, mu0: Ensemble, grid: TimeGrid, n_steps: int, seed: int,
                   workers: int = 1, start_step: int = 0):
    """Yield ``(n, points)`` for ``n = start_step, ..., start_step + n_steps``.

    Step ``n`` maps ``t_{n-1}`` to ``t_n`` and draws its noise from
    ``StepNoise(seed, n)``, so a run continued from a checkpoint reproduces
    the uninterrupted run bit for bit. The yielded arrays must not be modified.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if mu0.dim != model.dim:
        raise ValueError(f"ensemble dim {mu0.dim} does not match model dim {model.dim}")
    end = start_step + n_steps
    gam = grid.gammas(end)[start_step:end] if n_steps else np.empty(0)
    _check_cap(model, gam, start_step + 1)
    times = grid.times(end)
    refine = _refine_of(model)
    x = np.array(mu0.points, dtype=float)
    yield start_step, x
    for n in range(start_step + 1, end + 1):
        noise = StepNoise(seed, n, refine=refine, workers=workers)
        law = x if model.mean_field else None
        x = model.step(x, law, times[n - 1], times[n], noise)
        _check_finite(x, n)
        yield n, x


def run_scheme(model: OneStepModel, mu0: Ensemble, grid: TimeGrid, n_steps: int, seed: int,
               checkpoints=None, workers: int = 1, start_step: int = 0) -> dict:
    """Run ``Theta^pi`` from ``mu0`` and return ``{k: Ensemble}`` at the checkpoint steps.

    Checkpoints are global step indices in ``[start_step, start_step + n_steps]``;
    by default only the final step is kept. Mean-field models receive the
    current ensemble as their law argument.
    """
    end = start_step + n_steps
    keep = {end} if checkpoints is None else {int(k) for k in checkpoints}
    bad = [k for k in keep if not start_step <= k <= end]
    if bad:
        raise ValueError(f"checkpoints {sorted(bad)} outside [{start_step}, {end}]")
    out = {}
    for n, x in iterate_scheme(model, mu0, grid, n_steps, seed, workers, start_step):
        if n in keep:
            out[n] = mu0.with_points(x)
    return out


# -- Foster-Lyapunov monitor --------------------------------------------------

@dataclass(frozen=True)
class FLParams:
    """Constants of ``||Theta_{s,t} mu||^p <= (1 - b_bar (t-s)) ||mu||^p + C_bar (t-s)``."""

    b_bar: float
    C_bar: float
    h: float
    p: float = 2.0

    def __post_init__(self):
        if not self.b_bar > 0:
            raise ValueError("b_bar must be > 0")
        if not self.C_bar >= 0:
            raise ValueError("C_bar must be >= 0")
        if not 0 < self.h < 1:
            raise ValueError("h must lie in (0, 1)")

    @property
    def plateau(self) -> float:
        return self.C_bar * np.exp(self.b_bar) / self.b_bar


def ou_fl_params(k: float, sigma: float, h: float, dim: int = 1) -> FLParams:
    """Exact constants from ``E|x'|^2 = (1 - k g)^2 E|x|^2 + sigma^2 dim g`` for ``g <= h``."""
    return FLParams(2 * k - k * k * h, sigma * sigma * dim, h, 2.0)


@dataclass
class MonitorReport:
    passed: bool
    bound: float
    a0: float
    steps: np.ndarray
    times: np.ndarray
    moments: np.ndarray
    stderr: np.ndarray
    telescoped: np.ndarray
    first_violation: int | None = None
    reason: str = ""

    def rows(self):
        """CSV rows ``(step, t, moment, bound, pass)``."""
        ok = self.moments <= self.bound + 3 * self.stderr
        return [
            (int(n), float(t), float(a), float(self.bound), int(o))
            for n, t, a, o in zip(self.steps, self.times, self.moments, ok)
        ]

    def to_dict(self):
        return {"passed": bool(self.passed), "bound": self.bound, "a0": self.a0,
                "max_moment": float(np.max(self.moments)) if self.moments.size else self.a0,
                "first_violation": self.first_violation, "reason": self.reason}


def fl_monitor(model: OneStepModel, mu0: Ensemble, grid: TimeGrid, n_steps: int, seed: int,
               params: FLParams, slack: float = 3.0, workers: int = 1) -> MonitorReport:
    """Track ``a_k = ||Theta^pi(mu0)||_p^p`` at every step.

    PASS iff every ``a_k <= a_0 + C_bar e^{b_bar} / b_bar + slack * SE_k``, where
    ``SE_k`` is the standard error of the empirical moment. A non-finite state
    counts as a violation. The telescoped bound
    ``e^{-b_bar (t_k - t_0)} a_0 + C_bar e^{b_bar} / b_bar`` is reported alongside.
    """
    if grid.gamma_of(1) > params.h:
        raise StepCapError(f"first grid step {grid.gamma_of(1):.6g} exceeds h = {params.h}")
    p = params.p
    x0 = mu0.base_point
    steps, times, moms, ses = [], [], [], []
    t_all = grid.times(n_steps)
    a0 = bound = np.nan
    first = None
    reason = ""
    try:
        for n, x in iterate_scheme(model, mu0, grid, n_steps, seed, workers):
            r = np.linalg.norm(x - x0, axis=1) ** p
            a = float(r.mean())
            se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
            if not np.isfinite(a):
                raise NumericalBlowup(n, int(np.argmax(~np.isfinite(r))))
            if n == 0:
                a0 = a
                bound = a0 + params.plateau
            steps.append(n)
            times.append(t_all[n])
            moms.append(a)
            ses.append(se)
            if first is None and a > bound + slack * se:
                first = n
                reason = f"moment {a:.6g} exceeds bound {bound:.6g} at step {n}"
                break
    except NumericalBlowup as exc:
        first = exc.step
        reason = str(exc)
    times = np.array(times)
    tel = np.exp(-params.b_bar * (times - grid.t0)) * a0 + params.plateau
    return MonitorReport(first is None, bound, a0, np.array(steps), times, np.array(moms), np.array(ses),
                         tel, first, reason)


# -- synchronous coupling -----------------------------------------------------

def pair_points(mu1: Ensemble, mu2: Ensemble, method: str = "auto"):
    """Order ``mu2`` against ``mu1``: ``index`` (as given), ``sorted`` (1-D) or ``assignment``."""
    if mu1.n != mu2.n or mu1.dim != mu2.dim:
        raise ValueError("coupled margins need equal size and dimension")
    if method == "auto":
        method = "sorted" if mu1.dim == 1 else "index"
    a, b = mu1.points, mu2.points
    if method == "index":
        return a.copy(), b.copy()
    if method == "sorted":
        if mu1.dim != 1:
            raise ValueError("sorted pairing needs dim 1")
        return np.sort(a, axis=0), np.sort(b, axis=0)
    if method == "assignment":
        if mu1.n > ASSIGNMENT_CAP:
            raise ValueError(f"assignment pairing limited to {ASSIGNMENT_CAP} points")
        cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2) ** 2
        rows, cols = linear_sum_assignment(cost)
        return a[rows].copy(), b[cols].copy()
    raise ValueError(f"unknown pairing {method!r}")


@dataclass
class CoupledEnsemble:
    """``N`` pairs ``(x1_i, x2_i)`` evolved under shared noise."""

    x1: Ensemble
    x2: Ensemble

    def __post_init__(self):
        if self.x1.n != self.x2.n or self.x1.dim != self.x2.dim:
            raise ValueError("coupled margins need equal size and dimension")

    @classmethod
    def from_margins(cls, mu1: Ensemble, mu2: Ensemble, method: str = "auto") -> "CoupledEnsemble":
        a, b = pair_points(mu1, mu2, method)
        return cls(mu1.with_points(a), mu2.with_points(b))

    def cost(self, p: float = 2.0) -> float:
        """Coupling cost ``mean |x1_i - x2_i|^p``, an upper bound on ``W_p^p``."""
        return float(np.mean(np.linalg.norm(self.x1.points - self.x2.points, axis=1) ** p))


def _coupled_step(model1, model2, a, b, s, t, noise):
    out1 = model1.step(a, a if model1.mean_field else None, s, t, noise)
    out2 = model2.step(b, b if model2.mean_field else None, s, t, noise)
    return out1, out2


def couple_one_step(model1: OneStepModel, model2: OneStepModel, coupled: CoupledEnsemble, s: float, t: float,
                    seed: int, p: float = 2.0, step: int = 0, workers: int = 1):
    """Advance both margins with the same noise; return ``(coupled', cost_before, cost_after)``."""
    if model1.dim != model2.dim:
        raise ValueError("models must share dim")
    for m in (model1, model2):
        if t - s > m.step_cap:
            raise StepCapError(f"step {t - s:.6g} above the {m.name} cap {m.step_cap:.6g}")
    noise = StepNoise(seed, step, refine=_refine_of(model1, model2), workers=workers)
    before = coupled.cost(p)
    a, b = _coupled_step(model1, model2, coupled.x1.points, coupled.x2.points, s, t, noise)
    _check_finite(a, step)
    _check_finite(b, step)
    new = CoupledEnsemble(coupled.x1.with_points(a), coupled.x2.with_points(b))
    return new, before, new.cost(p)


@dataclass
class CouplingEstimate:
    """Least-squares fit of ``y(g) = -b_star d + C_star Gamma g^eps``."""

    b_star: float
    C_star: float
    eps: float
    se_b: float
    se_C: float
    gammas: np.ndarray
    y: np.ndarray
    residuals: np.ndarray
    d_before: float
    gamma_p: float
    p: float = 2.0

    def smallness(self, h: float, n_max: int = 10_000) -> dict:
        """Whether ``2^p C_star sigma_{b_star, eps}(k) <= 1/2`` for ``k <= n_max`` on the harmonic grid."""
        if not self.b_star > 0:
            return {"holds": False, "reason": "b_star <= 0"}
        sig = sigma_sequence(TimeGrid.harmonic(h), SigmaParams(self.b_star, self.eps), n_max)
        lhs = float(2**self.p * max(self.C_star, 0.0) * sig.max())
        return {"holds": lhs <= 0.5, "lhs": lhs, "h": h, "n_max": n_max}

    def rows(self):
        return [(float(g), float(y), float(r)) for g, y, r in zip(self.gammas, self.y, self.residuals)]

    def to_dict(self):
        return {"b_star": self.b_star, "C_star": self.C_star, "eps": self.eps, "se_b": self.se_b,
                "se_C": self.se_C, "d_before": self.d_before, "gamma_p": self.gamma_p, "p": self.p,
                "gammas": self.gammas.tolist(), "y": self.y.tolist(), "residuals": self.residuals.tolist()}


def estimate_coupling(model1: OneStepModel, model2: OneStepModel, mu1: Ensemble, mu2: Ensemble, gammas,
                      reps: int = 1, seed: int = 0, eps_assumed: float = 1.0, p: float = 2.0,
                      pairing: str = "auto", s: float = 0.0, workers: int = 1) -> CouplingEstimate:
    """Estimate ``(b_star, C_star)`` from one-step synchronous couplings at several step sizes.

    For each ``g`` the coupled step from ``(mu1, mu2)`` is repeated ``reps``
    times with independent noise, and ``y(g) = (cost_after - cost_before) / g``
    is averaged. Standard errors come from the regression residuals.
    """
    g = np.asarray(gammas, dtype=float).ravel()
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if g.size < 2 or np.ptp(g) == 0:
        raise DegenerateFit("need at least two distinct step sizes")
    coupled = CoupledEnsemble.from_margins(mu1, mu2, pairing)
    d = coupled.cost(p)
    if d == 0:
        raise DegenerateFit("margins coincide: cost before the step is zero")
    Gam = gamma_p(mu1, mu2, p)
    y = np.empty(g.size)
    for i, gi in enumerate(g):
        acc = 0.0
        for r in range(reps):
            _, before, after = couple_one_step(model1, model2, coupled, s, s + gi, seed, p,
                                               step=i * reps + r, workers=workers)
            acc += (after - before) / gi
        y[i] = acc / reps
    X = np.column_stack([-d * np.ones_like(g), Gam * g**eps_assumed])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = g.size - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(X.T @ X)
        var = np.diag(cov)
        if np.any(var < -1e-300):
            raise DegenerateFit("negative variance in coupling fit")
        se = np.sqrt(np.maximum(var, 0.0))
    else:
        se = np.array([np.nan, np.nan])
    return CouplingEstimate(float(coef[0]), float(coef[1]), float(eps_assumed), float(se[0]), float(se[1]),
                            g, y, resid, d, Gam, p)


def one_step_error(model_coarse: OneStepModel, model_fine: OneStepModel, mu: Ensemble, s: float, t: float,
                   substeps: int, seed: int, p: float = 1.0, workers: int = 1) -> float:
    """``(mean |X_coarse - X_fine|^p)^{1/p}`` for one step from ``mu`` under synchronous noise.

    ``model_fine`` is refined into ``substeps`` equal substeps (unless it is
    already a :class:`Refined` with that count); the coarse model sees the sum
    of the fine Brownian increments.
    """
    if substeps < 2:
        raise ValueError("substeps must be >= 2")
    if model_coarse.dim != model_fine.dim:
        raise ValueError("models must share dim")
    if isinstance(model_coarse, Refined):
        raise NoiseConventionError("coarse model must not be refined")
    if isinstance(model_fine, Refined):
        if model_fine.m != substeps:
            raise NoiseConventionError(f"fine reference uses {model_fine.m} substeps, asked for {substeps}")
        fine = model_fine
    else:
        fine = Refined(model_fine, substeps)
    if model_coarse.noise_kind == "jump":
        raise NoiseConventionError("jump-driven coarse model cannot share a Brownian refinement")
    noise = StepNoise(seed, 0, refine=substeps, workers=workers)
    x = np.array(mu.points, dtype=float)
    xc = model_coarse.step(x, x if model_coarse.mean_field else None, s, t, noise)
    xf = fine.step(x, x if fine.mean_field else None, s, t, noise)
    return float(np.mean(np.linalg.norm(xc - xf, axis=1) ** p) ** (1.0 / p))

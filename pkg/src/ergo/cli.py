"""Batch experiment runner.

Usage::

    ergo simulate   --config run.json [--out DIR] [--workers K] [--seed N]
    ergo rate       --config run.json ...
    ergo couple     --config run.json ...
    ergo sigma      --config run.json ...
    ergo flmonitor  --config run.json ...
    ergo wasserstein A.bin B.bin [--p 2] [--method auto]

Exit codes: 0 pass, 1 verdict fail, 2 config error, 3 numerical blow-up,
4 bias-floor starvation.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    ReferenceMeasure,
    bias_floor,
    empirical_invariant,
    fit_rate,
    moment_w2,
    ou_invariant,
    theorem_verdict,
    write_csv,
    write_json,
)
from .engine import FLParams, estimate_coupling, fl_monitor, iterate_scheme
from .errors import (
    ConfigError,
    DegenerateFit,
    InsufficientCheckpoints,
    NumericalBlowup,
    StationarityError,
    StepCapError,
)
from .measure import (
    ASSIGNMENT_CAP,
    Ensemble,
    load_bin,
    load_csv,
    resample,
    save_bin,
    wp_exact_1d,
    wp_exact_assignment,
    wp_sliced,
)
from .models import build_model
from .schedule import SigmaParams, TimeGrid, check_a3, check_sigma_bound, sigma_table

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP, EXIT_STARVED = 0, 1, 2, 3, 4
COMMANDS = ("simulate", "rate", "couple", "sigma", "flmonitor")


# -- configuration ------------------------------------------------------------

def _section(cfg: dict, name: str, required: bool = True) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"{name}: missing section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected an object")
    return sec


def _num(sec: dict, key: str, where: str, default=None, kind=float, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"{where}.{key}: required")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("--config: top level must be an object")
    return cfg


def build_grid(cfg: dict) -> TimeGrid:
    sec = _section(cfg, "grid")
    rule = sec.get("rule", "harmonic")
    t0 = _num(sec, "t0", "grid", 0.0)
    try:
        if rule == "harmonic":
            return TimeGrid.harmonic(_num(sec, "h", "grid", 0.5), t0)
        if rule == "uniform":
            return TimeGrid.uniform(_num(sec, "gamma", "grid", required=True), t0)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    raise ConfigError(f"grid.rule: unknown rule {rule!r}")


def build_init(sec: dict, where: str, model, seed: int, base_dir: Path) -> tuple[Ensemble, float | None]:
    """Initial ensemble from an ``init`` section; also returns the ``p`` stored in a binary file."""
    kind = sec.get("kind")
    n = _num(sec, "n", where, None, int)
    dim = model.dim
    try:
        if kind == "file":
            if "path" not in sec:
                raise ConfigError(f"{where}.path: required")
            path = Path(sec["path"])
            path = path if path.is_absolute() else base_dir / path
            if not path.exists():
                raise ConfigError(f"{where}.path: no such file {path}")
            if path.suffix == ".csv":
                ens, p = load_csv(path, constraint=model.constraint), None
            else:
                ens, p = load_bin(path, constraint=model.constraint)
            if ens.dim != dim:
                raise ConfigError(f"{where}.path: file has dim {ens.dim}, model needs {dim}")
            if n is not None and n != ens.n:
                ens = resample(ens, n, seed)
            return ens, p
        if n is None or n < 1:
            raise ConfigError(f"{where}.n: required positive integer")
        rng = np.random.default_rng([int(seed), 0x1A17])
        if kind == "gaussian":
            mean = np.broadcast_to(np.asarray(sec.get("mean", 0.0), dtype=float), (dim,))
            std = np.broadcast_to(np.asarray(sec.get("std", 1.0), dtype=float), (dim,))
            pts = mean + std * rng.standard_normal((n, dim))
            if sec.get("abs", False):
                pts = np.abs(pts)
        elif kind == "uniform":
            lo = np.broadcast_to(np.asarray(sec.get("low", 0.0), dtype=float), (dim,))
            hi = np.broadcast_to(np.asarray(sec.get("high", 1.0), dtype=float), (dim,))
            pts = lo + (hi - lo) * rng.random((n, dim))
        elif kind == "point":
            val = np.broadcast_to(np.asarray(sec.get("value", 0.0), dtype=float), (dim,))
            pts = np.tile(val, (n, 1))
        else:
            raise ConfigError(f"{where}.kind: expected gaussian, uniform, point or file, got {kind!r}")
        return Ensemble(pts, constraint=model.constraint), None
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _run_section(cfg: dict, seed_override, need_steps: bool = True):
    run = _section(cfg, "run")
    seed = seed_override if seed_override is not None else _num(run, "seed", "run", None, int, required=True)
    if seed < 0:
        raise ConfigError("run.seed: must be >= 0")
    n_steps = _num(run, "n_steps", "run", None if need_steps else 0, int, required=need_steps)
    if n_steps is not None and n_steps < 0:
        raise ConfigError("run.n_steps: must be >= 0")
    ck = run.get("checkpoints")
    if ck is not None:
        if not isinstance(ck, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in ck):
            raise ConfigError("run.checkpoints: expected a list of integers")
        if ck != sorted(ck) or len(set(ck)) != len(ck):
            raise ConfigError("run.checkpoints: must be strictly ascending")
        if ck and (ck[0] < 0 or ck[-1] > n_steps):
            raise ConfigError(f"run.checkpoints: values must lie in [0, run.n_steps={n_steps}]")
    return seed, n_steps, ck


def _model(cfg: dict, key: str = "model"):
    return build_model(_section(cfg, key), key)


# -- outputs ------------------------------------------------------------------

def _canonical(cfg: dict) -> bytes:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()


def write_manifest(out: Path, command: str, cfg: dict, seed: int) -> None:
    import scipy

    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": hashlib.sha256(_canonical(cfg)).hexdigest(),
        "seed": seed,
        "version": f"ergo {__version__}",
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    write_json(manifest, out / "manifest.json")


# -- commands -----------------------------------------------------------------

def cmd_simulate(cfg, out: Path, workers: int, seed, base_dir: Path) -> int:
    seed, n_steps, ck = _run_section(cfg, seed)
    model = _model(cfg)
    grid = build_grid(cfg)
    mu0, file_p = build_init(_section(cfg, "init"), "init", model, seed, base_dir)
    p = float(_section(cfg, "output", required=False).get("p", file_p if file_p is not None else 2.0))
    keep = set(ck) if ck is not None else {n_steps}
    ckdir = out / "checkpoints"
    ckdir.mkdir(parents=True, exist_ok=True)
    rows = []
    times = grid.times(n_steps)
    for n, x in iterate_scheme(model, mu0, grid, n_steps, seed, workers):
        if n in keep:
            ens = mu0.with_points(x)
            save_bin(ens, ckdir / f"ckpt_{n:08d}.bin", p)
            m, v = ens.mean(), ens.var()
            rows.append([n, float(times[n])] + [float(a) for a in m] + [float(a) for a in v])
    header = ["step", "t"] + [f"mean_{i}" for i in range(model.dim)] + [f"var_{i}" for i in range(model.dim)]
    write_csv(out / "report.csv", header, rows)
    write_json({"command": "simulate", "passed": True, "checkpoints": sorted(keep),
                "regime": model.regime()}, out / "verdict.json")
    return EXIT_PASS


def _reference(pipe: dict, model, mu0: Ensemble, grid: TimeGrid, n_steps: int, seed: int, workers: int):
    ref = pipe.get("reference")
    if not isinstance(ref, dict):
        raise ConfigError("pipeline.reference: required object")
    kind = ref.get("kind")
    where = "pipeline.reference"
    try:
        if kind == "ou":
            return ou_invariant(_num(ref, "k", where, 1.0), _num(ref, "sigma", where, 1.0), model.dim)
        if kind == "gaussian":
            m = np.broadcast_to(np.asarray(ref.get("mean", 0.0), float), (model.dim,))
            v = np.broadcast_to(np.asarray(ref.get("variance", 1.0), float), (model.dim,))
            return ReferenceMeasure("analytic_gaussian", m.copy(), v.copy())
        if kind == "initial":
            return ReferenceMeasure("empirical", ensemble=mu0,
                                    provenance={"seed": seed, "gamma": 0.0, "burn_in": 0, "source": "initial"})
        if kind == "empirical":
            smallest = float(grid.gamma_of(max(n_steps, 1)))
            gamma = _num(ref, "gamma", where, min(1e-3, smallest / 8))
            burn = _num(ref, "burn_in", where, 1000, int)
            ncol = _num(ref, "n_collect", where, 1000, int)
            rseed = _num(ref, "seed", where, seed + 1, int)
            return empirical_invariant(model, gamma, burn, ncol, mu0, rseed, workers=workers)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.kind: expected ou, gaussian, empirical or initial, got {kind!r}")


def _distance(mu: Ensemble, ref: ReferenceMeasure, how: str, p: float, seed: int) -> float:
    """``W_p^p`` between an ensemble and the reference."""
    if how == "moment":
        return moment_w2(mu, ref) ** 2
    other = ref.sample(mu.n, seed) if ref.kind == "analytic_gaussian" else ref.ensemble
    if other.n != mu.n:
        other = resample(other, mu.n, seed)
    if how == "exact":
        return wp_exact_1d(mu, other, p) ** p
    return wp_sliced(mu, other, p, seed=seed) ** p


def cmd_rate(cfg, out: Path, workers: int, seed, base_dir: Path) -> int:
    seed, n_steps, ck = _run_section(cfg, seed)
    model = _model(cfg)
    grid = build_grid(cfg)
    mu0, _ = build_init(_section(cfg, "init"), "init", model, seed, base_dir)
    pipe = _section(cfg, "pipeline")
    how = pipe.get("distance", "moment")
    if how not in ("moment", "exact", "sliced"):
        raise ConfigError(f"pipeline.distance: expected moment, exact or sliced, got {how!r}")
    p = _num(pipe, "p", "pipeline", 2.0)
    if how == "moment" and p != 2:
        raise ConfigError("pipeline.p: moment-matched distance is W_2 only")
    predicted = _num(pipe, "predicted", "pipeline", 1.0)
    log_corr = bool(pipe.get("log_corrected", False))
    theorem = pipe.get("theorem", "ou_langevin")
    n_bias = _num(pipe, "bias_seeds", "pipeline", 20, int)
    ref = _reference(pipe, model, mu0, grid, n_steps, seed, workers)
    if ck is None:
        ck = [2**j for j in range(0, 64) if 2**j <= n_steps]
    keep = set(ck)
    ns, vals = [], []
    times = grid.times(n_steps)
    trows = {}
    for n, x in iterate_scheme(model, mu0, grid, n_steps, seed, workers):
        if n in keep:
            ns.append(n)
            vals.append(_distance(mu0.with_points(x), ref, how, p, seed))
            trows[n] = float(times[n])

    def sampler(n, s):
        if ref.kind == "analytic_gaussian":
            return ref.sample(n, 10_000 + s)
        return _bootstrap(ref.ensemble, n, s)

    floor = bias_floor(sampler, mu0.n, range(n_bias), method=how, p=p) ** (2 if how == "moment" else p)
    try:
        rep = fit_rate(ns, vals, predicted, floor, log_corr)
    except InsufficientCheckpoints as exc:
        rows = [(n, trows[n], v, 0) for n, v in zip(ns, vals)]
        write_csv(out / "report.csv", ["n", "t", "distance_p", "used"], rows)
        write_json({"command": "rate", "passed": False, "reason": str(exc), "bias_floor": floor,
                    "log_corrected": log_corr}, out / "verdict.json")
        print(f"ergo rate: {exc}", file=sys.stderr)
        return EXIT_STARVED
    rows = [(n, trows[n], v, u) for n, v, u in rep.rows()]
    write_csv(out / "report.csv", ["n", "t", "distance_p", "used"], rows)
    verdict = theorem_verdict(theorem, model.regime(), rate=rep)
    write_json({"command": "rate", "reference": ref.to_dict(), **verdict.to_dict()}, out / "verdict.json")
    return EXIT_PASS if verdict.passed else EXIT_FAIL


def _bootstrap(ens: Ensemble, n: int, seed: int) -> Ensemble:
    g = np.random.default_rng([int(seed), 0xB007])
    return ens.with_points(ens.points[g.integers(0, ens.n, size=n)])


def cmd_couple(cfg, out: Path, workers: int, seed, base_dir: Path) -> int:
    seed, _, _ = _run_section(cfg, seed, need_steps=False)
    model1 = _model(cfg)
    pipe = _section(cfg, "pipeline")
    model2 = build_model(pipe["model2"], "pipeline.model2") if "model2" in pipe else model1
    mu1, _ = build_init(_section(cfg, "init"), "init", model1, seed, base_dir)
    if not isinstance(pipe.get("init2"), dict):
        raise ConfigError("pipeline.init2: required object (second margin)")
    mu2, _ = build_init(pipe["init2"], "pipeline.init2", model2, seed + 1, base_dir)
    gammas = pipe.get("gammas")
    if not isinstance(gammas, list) or not gammas:
        raise ConfigError("pipeline.gammas: required non-empty list of step sizes")
    reps = _num(pipe, "reps", "pipeline", 1, int)
    eps = _num(pipe, "eps", "pipeline", 1.0)
    p = _num(pipe, "p", "pipeline", 2.0)
    pairing = pipe.get("pairing", "auto")
    theorem = pipe.get("theorem", "ou_langevin")
    try:
        est = estimate_coupling(model1, model2, mu1, mu2, gammas, reps, seed, eps, p, pairing, workers=workers)
    except DegenerateFit as exc:
        write_json({"command": "couple", "passed": False, "reason": str(exc)}, out / "verdict.json")
        write_csv(out / "report.csv", ["gamma", "y", "residual"], [])
        print(f"ergo couple: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from None
    write_csv(out / "report.csv", ["gamma", "y", "residual"], est.rows())
    verdict = theorem_verdict(theorem, model2.regime(), coupling=est)
    payload = {"command": "couple", **verdict.to_dict(), "estimate": est.to_dict()}
    if "h" in pipe:
        payload["smallness"] = est.smallness(_num(pipe, "h", "pipeline"))
    write_json(payload, out / "verdict.json")
    return EXIT_PASS if verdict.passed else EXIT_FAIL


def cmd_sigma(cfg, out: Path, workers: int, seed, base_dir: Path) -> int:
    grid = build_grid(cfg)
    pipe = _section(cfg, "pipeline")
    try:
        params = SigmaParams(_num(pipe, "b", "pipeline", required=True), _num(pipe, "eps", "pipeline", required=True))
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from None
    n_max = _num(pipe, "n_max", "pipeline", 1000, int)
    if n_max < 1:
        raise ConfigError("pipeline.n_max: must be >= 1")
    lam = _num(pipe, "lambda", "pipeline", None)
    shape = pipe.get("shape")
    try:
        rows, shape = sigma_table(grid, params, n_max, shape)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"pipeline.shape: {exc}") from None
    write_csv(out / "report.csv", ["n", "gamma_n", "t_n", "sigma", "bound_shape", "ratio"], rows)
    verdict = {"command": "sigma", "shape": shape, "passed": True, "checks": {}}
    if n_max >= 10:
        try:
            rep = check_sigma_bound(grid, params, n_max, lam=lam)
        except ValueError as exc:
            raise ConfigError(f"pipeline: {exc}") from None
        verdict["checks"]["sigma_bound"] = rep.to_dict()
        verdict["passed"] &= rep.passed
    if grid.rule == "harmonic":
        a3 = check_a3(grid, n_max)
        verdict["checks"]["a3"] = a3.to_dict()
        verdict["passed"] &= a3.passed
    write_json(verdict, out / "verdict.json")
    return EXIT_PASS if verdict["passed"] else EXIT_FAIL


def cmd_flmonitor(cfg, out: Path, workers: int, seed, base_dir: Path) -> int:
    seed, n_steps, _ = _run_section(cfg, seed)
    model = _model(cfg)
    grid = build_grid(cfg)
    mu0, _ = build_init(_section(cfg, "init"), "init", model, seed, base_dir)
    pipe = _section(cfg, "pipeline")
    h = _num(pipe, "h", "pipeline", grid.h if grid.h < 1 else None)
    if h is None:
        raise ConfigError("pipeline.h: required when the grid step is >= 1")
    p = _num(pipe, "p", "pipeline", 2.0)
    if "b_bar" in pipe or "C_bar" in pipe:
        b_bar = _num(pipe, "b_bar", "pipeline", required=True)
        C_bar = _num(pipe, "C_bar", "pipeline", required=True)
    else:
        got = model.fl_params(h)
        if got is None:
            raise ConfigError("pipeline.b_bar: model has no derived Foster-Lyapunov constants; declare b_bar and C_bar")
        b_bar, C_bar = got
    try:
        params = FLParams(b_bar, C_bar, h, p)
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from None
    slack = _num(pipe, "slack", "pipeline", 3.0)
    theorem = pipe.get("theorem", "ou_langevin")
    rep = fl_monitor(model, mu0, grid, n_steps, seed, params, slack, workers)
    write_csv(out / "report.csv", ["step", "t", "moment", "bound", "pass"], rep.rows())
    verdict = theorem_verdict(theorem, model.regime(), monitor=rep)
    write_json({"command": "flmonitor", "b_bar": b_bar, "C_bar": C_bar, **verdict.to_dict()}, out / "verdict.json")
    return EXIT_PASS if rep.passed else EXIT_FAIL


HANDLERS = {
    "simulate": cmd_simulate,
    "rate": cmd_rate,
    "couple": cmd_couple,
    "sigma": cmd_sigma,
    "flmonitor": cmd_flmonitor,
}


def _read_ensemble(path: str) -> tuple[Ensemble, float | None]:
    pth = Path(path)
    if not pth.exists():
        raise ConfigError(f"{path}: no such file")
    try:
        if pth.suffix == ".csv":
            return load_csv(pth), None
        return load_bin(pth)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_wasserstein(file_a: str, file_b: str, p: float, method: str, n_proj: int, seed: int) -> float:
    a, _ = _read_ensemble(file_a)
    b, _ = _read_ensemble(file_b)
    if a.dim != b.dim:
        raise ConfigError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.n != b.n:
        n = min(a.n, b.n)
        a, b = resample(a, n, seed), resample(b, n, seed)
    if method == "auto":
        method = "exact" if a.dim == 1 else ("assignment" if a.n <= ASSIGNMENT_CAP else "sliced")
    try:
        if method == "exact":
            return wp_exact_1d(a, b, p)
        if method == "assignment":
            return wp_exact_assignment(a, b, p)
        return wp_sliced(a, b, p, n_proj=n_proj, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ergo", description="Decreasing-step invariant-measure experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment configuration (JSON)")
        sp.add_argument("--out", help="output directory (overrides ERGO_OUT and output.dir)")
        sp.add_argument("--workers", type=int, help="thread count; never changes results")
        sp.add_argument("--seed", type=int, help="overrides run.seed")
    w = sub.add_parser("wasserstein")
    w.add_argument("file_a")
    w.add_argument("file_b")
    w.add_argument("--p", type=float, default=2.0)
    w.add_argument("--method", choices=("auto", "exact", "assignment", "sliced"), default="auto")
    w.add_argument("--n-proj", type=int, default=64)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--workers", type=int, help="accepted for symmetry; unused")
    w.add_argument("--out", help="optionally write distance.json here")
    return ap


def _workers(args) -> int:
    if args.workers is not None:
        w = args.workers
    else:
        env = os.environ.get("ERGO_WORKERS")
        try:
            w = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"ERGO_WORKERS: expected an integer, got {env!r}") from None
    if w < 1:
        raise ConfigError("--workers: must be >= 1")
    return w


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        workers = _workers(args)
        if args.command == "wasserstein":
            val = cmd_wasserstein(args.file_a, args.file_b, args.p, args.method, args.n_proj, args.seed)
            print(repr(val))
            out = args.out or os.environ.get("ERGO_OUT")
            if out:
                Path(out).mkdir(parents=True, exist_ok=True)
                write_json({"command": "wasserstein", "p": args.p, "method": args.method, "distance": val},
                           Path(out) / "distance.json")
            return EXIT_PASS
        cfg = load_config(args.config)
        out = args.out or os.environ.get("ERGO_OUT") or _section(cfg, "output", required=False).get("dir")
        if not out:
            raise ConfigError("output.dir: no output directory (use --out, ERGO_OUT or output.dir)")
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        effective = copy.deepcopy(cfg)
        if args.seed is not None:
            effective.setdefault("run", {})["seed"] = args.seed
        seed = effective.get("run", {}).get("seed")
        base_dir = Path(args.config).resolve().parent
        code = HANDLERS[args.command](effective, out, workers, args.seed, base_dir)
        write_manifest(out, args.command, effective, seed)
        return code
    except (ConfigError, StepCapError) as exc:
        print(f"ergo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"ergo: numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except StationarityError as exc:
        print(f"ergo: {exc} {json.dumps(exc.drift)}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

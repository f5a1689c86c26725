"""Command-line front end: ``ordsel {simulate,bounds,calibrate,verify}``.

Every command reads a JSON config, writes CSV/JSON artifacts plus a
``manifest.json`` listing each artifact with its SHA-256 digest, and exits
with 0 (ok), 2 (bad config), 3 (degenerate or saturated model),
4 (calibration failed) or 5 (verification failed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _io
from .calibration import CalibrationConfig, calibrate, default_k_grid
from .errors import (
    CalibrationFailed,
    ConfigError,
    DegenerateFitError,
    DomainError,
    RankDeficiencyError,
    SaturatedModelError,
)
from .estimation import plugin_estimate
from .fdrbounds import (
    DEFAULT_MC_SAMPLES,
    BoundInput,
    bound_curve,
    bound_input_from_model,
    fdr_factorized,
    pr_table,
)
from .linmodel import Dataset, GroundTruth, orthonormalize, read_dataset_csv, select_model
from .simulation import ScenarioSpec, empirical_curves, make_beta_star, make_design

__all__ = ["main", "RunManifest", "EXIT_OK", "EXIT_CONFIG", "EXIT_DEGENERATE",
           "EXIT_CALIBRATION", "EXIT_VERIFY"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_CALIBRATION = 4
EXIT_VERIFY = 5

VERIFY_MAX_Q = 10




@dataclass
class RunManifest:
    command: str
    config_path: str
    seed: int
    outputs: list = field(default_factory=list)
    wall_time_ms: int = 0
    verified: bool = True

    def add(self, path: Path):
        self.outputs.append({"path": str(path), "sha256": _io.sha256(path)})

    def write(self, path: Path):
        return _io.write_json(path, {
            "command": self.command,
            "configPath": self.config_path,
            "seed": self.seed,
            "outputs": self.outputs,
            "wallTimeMs": self.wall_time_ms,
        })


def _note(msg: str):
    print(msg, file=sys.stderr)


def _g4(x) -> str:
    return format(float(x), ".4g")


# ---------------------------------------------------------------- config parsing

def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return cfg


def _get(cfg, key, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = cfg[key]
    if kind is int and not (isinstance(val, int) and not isinstance(val, bool)):
        raise ConfigError(f"{key!r} must be an integer")
    if kind is float and not (isinstance(val, (int, float)) and not isinstance(val, bool)):
        raise ConfigError(f"{key!r} must be a number")
    return val


def parse_k_grid(value, default=None) -> np.ndarray:
    """A list of K values or ``{"start", "stop", "step"}``."""
    if value is None:
        if default is None:
            raise ConfigError("missing required key 'kGrid'")
        return default
    if isinstance(value, dict):
        try:
            k = default_k_grid(float(value["start"]), float(value["stop"]), float(value["step"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("kGrid object needs numeric start, stop and step") from exc
    elif isinstance(value, list) and value:
        try:
            k = np.array([float(v) for v in value])
        except (TypeError, ValueError) as exc:
            raise ConfigError("kGrid entries must be numbers") from exc
    else:
        raise ConfigError("kGrid must be a nonempty list or a {start, stop, step} object")
    if np.any(~np.isfinite(k)) or np.any(k <= 0) or np.any(np.diff(k) <= 0):
        raise ConfigError("kGrid must be positive and strictly increasing")
    return k


_SPEC_KEYS = {"name": "name", "n": "n", "p": "p", "dStar": "d_star", "sigma2": "sigma2",
              "base": "base", "incLow": "inc_low", "incHigh": "inc_high", "seed": "seed",
              "design": "design", "beta": "beta"}


def parse_scenario(obj, seed_override=None) -> ScenarioSpec:
    if not isinstance(obj, dict):
        raise ConfigError("'scenario' must be an object")
    unknown = set(obj) - set(_SPEC_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    kwargs = {_SPEC_KEYS[k]: v for k, v in obj.items()}
    if "beta" in kwargs:
        kwargs["beta"] = tuple(kwargs["beta"])
        kwargs.setdefault("name", "custom")
        kwargs.setdefault("p", len(kwargs["beta"]))
    if seed_override is not None:
        kwargs["seed"] = seed_override
    try:
        return ScenarioSpec(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def _seed(cfg, override) -> int:
    """Effective seed: --seed, else the top-level ``seed``, else the scenario's, else 0."""
    if override is not None:
        seed = override
    elif "seed" in cfg:
        seed = _get(cfg, "seed", int)
    elif isinstance(cfg.get("scenario"), dict) and "seed" in cfg["scenario"]:
        seed = _get(cfg["scenario"], "seed", int)
    else:
        seed = 0
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return seed


def _positive_int(cfg, key, default):
    val = _get(cfg, key, int, default)
    if val < 1:
        raise ConfigError(f"{key!r} must be a positive integer")
    return val


# ---------------------------------------------------------------- commands

def cmd_simulate(config, out, seed=None, threads=None) -> RunManifest:
    """Empirical FDR/PR curves for one scenario."""
    cfg = load_config(config)
    seed = _seed(cfg, seed)
    spec = parse_scenario(cfg.get("scenario", {}), seed)
    k = parse_k_grid(cfg.get("kGrid"), default_k_grid())
    reps = _get(cfg, "replicates", int, 200)
    if reps < 2:
        raise ConfigError("'replicates' must be at least 2")
    curve = empirical_curves(spec, k, reps, threads=threads)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("simulate", str(config), seed)
    man.add(curve.to_csv(out / "curve.csv"))
    man.add(curve.to_json(out / "curve.json"))
    i = int(np.argmin(np.abs(k - 2.0)))
    _note(f"K={_g4(k[i])}: fdr={_g4(curve.fdr[i])} +/- {_g4(curve.fdr_ci[i])}, "
          f"pr={_g4(curve.pr[i])} +/- {_g4(curve.pr_ci[i])} ({reps} replicates)")
    return man


def parse_bound_input(cfg, seed=None) -> BoundInput:
    """``input`` (explicit projections), ``beta`` (orthonormal design) or ``scenario`` (its truth)."""
    if "input" in cfg:
        obj = cfg["input"]
        if not isinstance(obj, dict):
            raise ConfigError("'input' must be an object")
        coef = obj.get("signalCoef", [])
        d = _get(obj, "dStar", int, len(coef))
        q = _get(obj, "q", int, required=True)
        s2 = _get(obj, "sigma2", float, 1.0)
    elif "beta" in cfg:
        beta = np.asarray(cfg["beta"], dtype=float)
        q = _get(cfg, "q", int, beta.size)
        s2 = _get(cfg, "sigma2", float, 1.0)
        nz = np.flatnonzero(beta)
        d = 0 if nz.size == 0 else int(nz[-1]) + 1
        coef = beta[:d]
    elif "scenario" in cfg:
        spec = parse_scenario(cfg["scenario"], seed)
        model = orthonormalize(Dataset(Y=np.zeros(spec.n), X=make_design(spec)))
        truth = GroundTruth(make_beta_star(spec), spec.sigma2)
        if truth.d_star >= model.q:
            raise SaturatedModelError(f"true dimension {truth.d_star} equals q={model.q}")
        return bound_input_from_model(model, truth)
    else:
        raise ConfigError("bounds config needs one of 'input', 'beta' or 'scenario'")
    if d >= q:
        raise SaturatedModelError(f"dStar={d} >= q={q}: every FDR bound is identically 0")
    try:
        return BoundInput(np.asarray(coef, dtype=float), float(s2), int(d), int(q))
    except DomainError as exc:
        raise ConfigError(f"invalid bound input: {exc}") from exc


def cmd_bounds(config, out, seed=None, threads=None) -> RunManifest:
    """Lower bound, upper bound and floor on a K grid."""
    cfg = load_config(config)
    seed = _seed(cfg, seed)
    inp = parse_bound_input(cfg, seed)
    k = parse_k_grid(cfg.get("kGrid"), default_k_grid())
    mc = _positive_int(cfg, "mcSamples", DEFAULT_MC_SAMPLES)
    pr = pr_table(inp.q, k, mc, seed, r_min=inp.d_star + 1, threads=threads)
    curve = bound_curve(inp, k, pr)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("bounds", str(config), seed)
    man.add(curve.to_csv(out / "bounds.csv"))
    man.add(curve.to_json(out / "bounds.json"))
    _note(f"B ranges from {_g4(curve.upper[0])} (K={_g4(k[0])}) to {_g4(curve.upper[-1])} "
          f"(K={_g4(k[-1])})")
    return man


def cmd_calibrate(data_csv, config, out, seed=None, threads=None) -> RunManifest:
    """Plug-in estimation then calibration of K on one data set."""
    cfg = load_config(config)
    seed = _seed(cfg, seed)
    try:
        ccfg = CalibrationConfig(
            alpha=_get(cfg, "alpha", float, 0.05),
            gamma=_get(cfg, "gamma", float, 0.1),
            k_grid=parse_k_grid(cfg.get("kGrid"), default_k_grid()),
            mc_samples=_positive_int(cfg, "mcSamples", DEFAULT_MC_SAMPLES),
            seed=seed,
        )
    except DomainError as exc:
        raise ConfigError(f"invalid calibration settings: {exc}") from exc
    window = _get(cfg, "windowFraction", float, 0.5)
    method = cfg.get("sigma2Method", "slope")
    k_plugin = _get(cfg, "kPlugin", float, 4.0)
    try:
        data = read_dataset_csv(data_csv)
    except (DomainError, OSError) as exc:
        raise ConfigError(f"cannot read data: {exc}") from exc

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("calibrate", str(config), seed)
    model = orthonormalize(data)
    try:
        plugin = plugin_estimate(model, data, window, k_plugin, method)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        res = calibrate(model, plugin, ccfg)
    except CalibrationFailed as exc:
        man.add(exc.curve.to_csv(out / "bound_curve.csv"))
        man.add(exc.curve.to_json(out / "bound_curve.json"))
        exc.manifest = man
        raise
    sel = select_model(model, res.k_star, plugin.sigma2_hat)
    payload = res.to_dict()
    payload["selectedDim"] = sel.dim
    man.add(_io.write_json(out / "calibration.json", payload))
    man.add(_io.write_csv(out / "selected_model.csv", ["j", "beta_hat"],
                          [np.arange(1, data.p + 1), sel.beta_hat]))
    _note(f"kStar={_g4(res.k_star)} (fallback={res.fallback_used}), selected dimension {sel.dim}, "
          f"sigma2_hat={_g4(plugin.sigma2_hat)}")
    return man


def cmd_verify(config, out=None, seed=None, threads=None) -> RunManifest:
    """Factorized FDR against full-selection simulation on a small orthonormal instance."""
    cfg = load_config(config)
    seed = _seed(cfg, seed)
    beta = cfg.get("beta")
    if not isinstance(beta, list) or not beta:
        raise ConfigError("verify config needs a nonempty 'beta' list")
    q = len(beta)
    if q > VERIFY_MAX_Q:
        raise ConfigError(f"verify is meant for small instances (q <= {VERIFY_MAX_Q})")
    s2 = _get(cfg, "sigma2", float, 1.0)
    k = parse_k_grid(cfg.get("K"), np.array([1.0, 2.0, 4.0, 8.0]))
    mc = _positive_int(cfg, "mcSamples", 100_000)
    reps = _get(cfg, "replicates", int, mc)
    if reps < 2:
        raise ConfigError("'replicates' must be at least 2")
    scale = _get(cfg, "_fault_pr_scale", float, 1.0)
    spec = parse_scenario({"beta": beta, "sigma2": s2, "seed": seed})
    if spec.d_star >= q:
        raise SaturatedModelError(f"dStar={spec.d_star} >= q={q}")
    inp = BoundInput(np.asarray(beta[: spec.d_star], dtype=float), s2, spec.d_star, q)

    fact, fact_se = fdr_factorized(inp, k, mc, seed, return_se=True, pr_scale=scale)
    sim = empirical_curves(spec, k, reps, threads=threads, with_pr=False)
    se = np.sqrt(fact_se ** 2 + sim.fdr_se ** 2)
    diff = fact - sim.fdr
    ok = np.abs(diff) <= 3 * se + 1e-12

    print("K,factorized,factorized_se,simulated,simulated_se,z,ok")
    for row in zip(k, fact, fact_se, sim.fdr, sim.fdr_se, diff / np.where(se > 0, se, 1.0), ok):
        print(",".join(_io.fmt(v) for v in row))
    man = RunManifest("verify", str(config), seed)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        man.add(_io.write_csv(out / "verify.csv",
                              ["K", "factorized", "factorized_se", "simulated", "simulated_se", "ok"],
                              [k, fact, fact_se, sim.fdr, sim.fdr_se, ok]))
    man.verified = bool(ok.all())
    return man


# ---------------------------------------------------------------- entry point

def _threads(value) -> int | None:
    if value is not None:
        return value
    env = os.environ.get("ORDSEL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ORDSEL_THREADS must be an integer, got {env!r}") from None
    return None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, dest="sub_seed",
                        help="override every seed in the config")
    common.add_argument("--threads", type=int, default=None, dest="sub_threads",
                        help="cap on worker threads (also ORDSEL_THREADS)")

    parser = argparse.ArgumentParser(prog="ordsel", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="empirical FDR/PR curves")
    p.add_argument("config")
    p.add_argument("--out", default=".")
    p = sub.add_parser("bounds", parents=[common], help="FDR bound curves")
    p.add_argument("config")
    p.add_argument("--out", default=".")
    p = sub.add_parser("calibrate", parents=[common], help="calibrate K on a data CSV")
    p.add_argument("data")
    p.add_argument("config")
    p.add_argument("--out", default=".")
    p = sub.add_parser("verify", parents=[common], help="check the FDR factorization by simulation")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.sub_seed if args.sub_seed is not None else args.seed
    start = time.perf_counter()
    man = None
    code = EXIT_OK
    try:
        threads = _threads(args.sub_threads if args.sub_threads is not None else args.threads)
        if args.command == "simulate":
            man = cmd_simulate(args.config, args.out, seed, threads)
        elif args.command == "bounds":
            man = cmd_bounds(args.config, args.out, seed, threads)
        elif args.command == "calibrate":
            man = cmd_calibrate(args.data, args.config, args.out, seed, threads)
        else:
            man = cmd_verify(args.config, args.out, seed, threads)
            if not man.verified:
                _note("verification failed: factorized and simulated FDR disagree beyond 3 SE")
                code = EXIT_VERIFY
    except ConfigError as exc:
        _note(f"config error: {exc}")
        return EXIT_CONFIG
    except (SaturatedModelError, DegenerateFitError, RankDeficiencyError) as exc:
        _note(f"degenerate model: {exc}")
        return EXIT_DEGENERATE
    except CalibrationFailed as exc:
        _note(f"calibration failed: {exc}")
        man = getattr(exc, "manifest", None)
        code = EXIT_CALIBRATION
    if man is not None and getattr(args, "out", None) is not None:
        man.wall_time_ms = int(round((time.perf_counter() - start) * 1000))
        man.write(Path(args.out) / "manifest.json")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

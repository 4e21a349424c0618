"""Command-line interface: gen, calibrate, diagnose, bench.

Every run is driven by flags plus an optional key = value config file (flags
win). All outputs embed the tool version, a hash of the fully resolved
configuration, and the root seed, so runs are reproducible and auditable.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .bench import ExperimentRecipe, run_experiment
from .calibrate import (
    CalibrationSet,
    LocalEmpiricalConfig,
    augment,
    calpit_hpd,
    calpit_interval,
    compute_pit_values,
    fit_local_empirical,
    recalibrate,
)
from .dataio import read_calibration_csv, write_calibration_csv
from .diagnose import alp_curve, mc_confidence_band, mc_p_value
from .errors import ConfigError, PitcalError
from .grid import default_grid, write_grid_csv
from .models import GaussianInitialModel, MarginalHistogramModel, UniformInitialModel
from .baselines import fit_knn_mean
from .synthgen import (
    TwoGroupConfig,
    chunk_tc,
    default_tc_config,
    sample_example1,
    sample_example2,
    simulate_tc,
    write_storms_jsonl,
)

__all__ = ["main"]


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _read_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = line.partition("=")
                out[key.strip().replace("-", "_")] = _parse_value(raw.strip())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


def _resolve(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """Merge config-file values under explicit flags; flags win."""
    resolved = dict(parser_defaults)
    if getattr(args, "config", None):
        file_cfg = _read_config_file(args.config)
        unknown = set(file_cfg) - set(parser_defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("config", "func") or value is None:
            continue
        resolved[key] = value
    return resolved


def _config_hash(cfg: dict) -> str:
    # where outputs land and how many threads run does not change what the
    # run computes; exclude them so equal configurations hash equally
    core = {k: v for k, v in cfg.items() if k not in ("out_dir", "config", "threads")}
    blob = json.dumps(core, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def _stamp(cfg: dict, seed: int) -> str:
    return f"pitcal {__version__} config={_config_hash(cfg)} seed={seed}"


def _meta(cfg: dict, seed: int) -> dict:
    return {"tool_version": __version__, "config_hash": _config_hash(cfg), "seed": seed}


def _parse_points(spec: str) -> list:
    pts = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        pts.append(np.array([float(v) for v in chunk.split(",")]))
    if not pts:
        raise ConfigError(f"no evaluation points in {spec!r}")
    return pts


def _ensure_outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# gen
# ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    defaults = {
        "example": "ex2-skewed", "n": 5000, "storms": 50, "seed": 0,
        "out_dir": "out", "window_mode": "gapped",
    }
    cfg = _resolve(args, defaults)
    out = _ensure_outdir(cfg["out_dir"])
    seed = int(cfg["seed"])
    stamp = _stamp(cfg, seed)
    example = cfg["example"]

    if example == "ex1":
        data = sample_example1(TwoGroupConfig(), int(cfg["n"]), seed)
        write_calibration_csv(out / "dataset.csv", data.cal, comment=stamp)
    elif example in ("ex2-skewed", "ex2-kurtotic"):
        data = sample_example2(example.split("-")[1], int(cfg["n"]), seed)
        write_calibration_csv(out / "dataset.csv", data.cal, comment=stamp)
    elif example == "tc":
        tc_cfg = default_tc_config()
        storms = simulate_tc(tc_cfg, int(cfg["storms"]), seed)
        write_storms_jsonl(storms, out / "storms.jsonl", meta=_meta(cfg, seed))
        chunks = chunk_tc(storms, mode=cfg["window_mode"])
        write_calibration_csv(out / "dataset.csv", chunks.cal, comment=stamp)
        if chunks.skipped_storms:
            print(f"skipped {chunks.skipped_storms} storms shorter than one window")
    else:
        raise ConfigError(f"unknown example {example!r}")

    with open(out / "generator_meta.json", "w", encoding="utf-8") as fh:
        json.dump({**_meta(cfg, seed), "config": cfg}, fh, indent=1)
    print(f"wrote {out / 'dataset.csv'}")
    return 0


# ----------------------------------------------------------------------
# calibrate
# ----------------------------------------------------------------------

def _build_initial_from_config(cfg: dict, cal: CalibrationSet, grid, train: CalibrationSet):
    kind = cfg["initial"]
    if kind == "uniform":
        return UniformInitialModel(grid)
    if kind == "marginal":
        return MarginalHistogramModel(grid, train.ys)
    if kind == "gaussian-fit":
        mu = fit_knn_mean(train, k=int(cfg["mean_k"]))
        resid = np.array([train.ys[i] - mu(train.xs[i]) for i in range(len(train))])
        sd = float(np.std(resid)) or 1.0
        return GaussianInitialModel(grid, mean_fn=mu, sd_fn=sd * float(cfg["sd_scale"]))
    raise ConfigError(f"unknown initial model kind {kind!r}")


def _split_for_initial(cfg: dict, data: CalibrationSet):
    if cfg["initial"] == "gaussian-fit":
        half = int(len(data) * float(cfg["train_fraction"]))
        if half < 1 or half >= len(data):
            raise ConfigError("train_fraction leaves an empty split")
        train = CalibrationSet(data.xs[:half], data.ys[:half])
        cal = CalibrationSet(data.xs[half:], data.ys[half:])
        return train, cal
    return data, data


def _fit_backend(cfg: dict, cal: CalibrationSet, pits, seed: int):
    if cfg["backend"] == "local":
        k = cfg["k"] if cfg["k"] is not None else max(10, min(len(cal) // 10, 1000))
        return fit_local_empirical(cal, pits, LocalEmpiricalConfig(k=int(k), weighting=cfg["weighting"]))
    if cfg["backend"] == "net":
        from .monotone_net import MonotoneNetConfig, fit_monotone_net

        net_cfg = MonotoneNetConfig(
            hidden_layers=tuple(int(h) for h in str(cfg["net_hidden"]).split(",")),
            learning_rate=float(cfg["net_lr"]),
            lr_decay=float(cfg["net_lr_decay"]),
            weight_decay=float(cfg["net_weight_decay"]),
            batch_size=int(cfg["net_batch"]),
            patience=int(cfg["net_patience"]),
            val_fraction=float(cfg["net_val_fraction"]),
            max_epochs=int(cfg["net_max_epochs"]),
            seed=rngmod.derive_seed(seed, "net"),
        )
        aug = augment(cal, pits, int(cfg["k_factor"]), rngmod.derive_seed(seed, "augment"))
        return fit_monotone_net(aug, net_cfg)
    raise ConfigError(f"unknown backend {cfg['backend']!r}")


_CAL_DEFAULTS = {
    "data": None, "initial": "uniform", "backend": "local", "alpha": 0.1,
    "eval_x": None, "hpd": False, "out_dir": "out", "seed": 0, "k": None,
    "weighting": "uniform", "k_factor": 50, "mean_k": 50, "sd_scale": 1.0,
    "train_fraction": 0.5, "grid_points": 201,
    "net_hidden": "64,64,64", "net_lr": 1e-3, "net_lr_decay": 0.95,
    "net_weight_decay": 0.01, "net_batch": 2048, "net_patience": 10,
    "net_val_fraction": 0.1, "net_max_epochs": 100, "threads": None,
}


def cmd_calibrate(args) -> int:
    cfg = _resolve(args, _CAL_DEFAULTS)
    if not cfg["data"]:
        raise ConfigError("--data is required")
    if not os.path.exists(cfg["data"]):
        raise ConfigError(f"dataset not found: {cfg['data']}")
    data = read_calibration_csv(cfg["data"])
    seed = int(cfg["seed"])
    stamp = _stamp(cfg, seed)
    out = _ensure_outdir(cfg["out_dir"])

    grid = default_grid(data.ys, n_points=int(cfg["grid_points"]))
    train, cal = _split_for_initial(cfg, data)
    initial = _build_initial_from_config(cfg, cal, grid, train)
    pits = compute_pit_values(initial, cal)
    model = _fit_backend(cfg, cal, pits, seed)

    doc = model.to_json()
    doc.update(_meta(cfg, seed))
    with open(out / "model.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)

    sets = []
    if cfg["eval_x"]:
        for i, x in enumerate(_parse_points(cfg["eval_x"])):
            rd = recalibrate(initial, model, x)
            write_grid_csv(out / f"recal_cdf_{i}.csv", rd.cdf.grid, rd.cdf.values, comment=stamp)
            entry = {
                "x": [float(v) for v in x],
                "interval": calpit_interval(rd, float(cfg["alpha"])).to_json(),
            }
            if cfg["hpd"]:
                entry["hpd"] = calpit_hpd(rd, float(cfg["alpha"])).to_json()
            sets.append(entry)
    with open(out / "sets.json", "w", encoding="utf-8") as fh:
        json.dump({**_meta(cfg, seed), "alpha": cfg["alpha"], "sets": sets}, fh, indent=1)
    print(f"wrote {out / 'model.json'} and {len(sets)} evaluation points")
    return 0


# ----------------------------------------------------------------------
# diagnose
# ----------------------------------------------------------------------

_DIAG_DEFAULTS = {
    "data": None, "initial": "uniform", "backend": "local", "out_dir": "out",
    "seed": 0, "eval_x": None, "n_eval_points": 20, "n_mc": 100,
    "band_eta": 0.05, "n_gammas": 21, "k": None, "weighting": "uniform",
    "mean_k": 50, "sd_scale": 1.0, "train_fraction": 0.5, "grid_points": 201,
    "threads": None,
}


def cmd_diagnose(args) -> int:
    cfg = _resolve(args, _DIAG_DEFAULTS)
    if not cfg["data"]:
        raise ConfigError("--data is required")
    if not os.path.exists(cfg["data"]):
        raise ConfigError(f"dataset not found: {cfg['data']}")
    if cfg["backend"] != "local":
        print(
            "warning: the local coverage test refits with the local-empirical "
            "backend; the requested backend is ignored for null replicates",
            file=sys.stderr,
        )
    data = read_calibration_csv(cfg["data"])
    seed = int(cfg["seed"])
    stamp = _stamp(cfg, seed)
    out = _ensure_outdir(cfg["out_dir"])

    grid = default_grid(data.ys, n_points=int(cfg["grid_points"]))
    train, cal = _split_for_initial(cfg, data)
    initial = _build_initial_from_config(cfg, cal, grid, train)
    pits = compute_pit_values(initial, cal)

    k = cfg["k"] if cfg["k"] is not None else max(10, min(len(cal) // 10, 1000))
    le_cfg = LocalEmpiricalConfig(k=int(k), weighting=cfg["weighting"])

    def fit_fn(c, p):
        return fit_local_empirical(c, p, le_cfg)

    if cfg["eval_x"]:
        points = _parse_points(cfg["eval_x"])
    else:
        points = [cal.xs[i] for i in range(min(int(cfg["n_eval_points"]), len(cal)))]

    gammas = np.linspace(0.05, 0.95, int(cfg["n_gammas"]))
    eta = float(cfg["band_eta"])
    results = []
    for i, x in enumerate(points):
        point_seed = rngmod.derive_seed(seed, "diagnose", i)
        res = mc_p_value(fit_fn, cal, pits, x, int(cfg["n_mc"]), gammas, seed=point_seed)
        lo, hi = mc_confidence_band(fit_fn, cal, pits, x, int(cfg["n_mc"]), gammas,
                                    eta=eta, seed=point_seed)
        curve = alp_curve(fit_fn(cal, pits), x, gammas, band=(lo, hi))
        with open(out / f"alp_{i}.csv", "w", encoding="utf-8") as fh:
            fh.write(f"# {stamp}\n")
            fh.write("gamma,r,lo,hi\n")
            for j in range(gammas.size):
                fh.write(f"{float(gammas[j])!r},{float(curve.r_values[j])!r},{float(lo[j])!r},{float(hi[j])!r}\n")
        results.append({
            "x": [float(v) for v in np.atleast_1d(x)],
            "statistic": res.statistic,
            "p_value": res.p_value,
            "B": res.n_mc,
        })
    with open(out / "local_tests.json", "w", encoding="utf-8") as fh:
        json.dump({**_meta(cfg, seed), "results": results}, fh, indent=1)
    print(f"wrote {len(results)} ALP curves and {out / 'local_tests.json'}")
    return 0


# ----------------------------------------------------------------------
# bench
# ----------------------------------------------------------------------

_BENCH_DEFAULTS = {
    "example": "ex2-skewed", "method": "calpit-int", "n": 5000, "alpha": 0.1,
    "realizations": 10, "mc_draws": 1000, "seed": 0, "initial": "uniform",
    "backend": "local", "k": None, "experiment": "full", "test_grid": None,
    "out_dir": "out", "quick": False, "threads": None,
}


def cmd_bench(args) -> int:
    cfg = _resolve(args, _BENCH_DEFAULTS)
    out = _ensure_outdir(cfg["out_dir"])
    seed = int(cfg["seed"])
    realizations = int(cfg["realizations"])
    mc_draws = int(cfg["mc_draws"])
    if cfg["quick"]:
        realizations, mc_draws = 3, 300
    backend_params = {}
    if cfg["k"] is not None:
        backend_params["k"] = int(cfg["k"])
    recipe = ExperimentRecipe(
        generator=cfg["example"],
        method=cfg["method"],
        n=int(cfg["n"]),
        alpha=float(cfg["alpha"]),
        n_realizations=realizations,
        n_mc_draws=mc_draws,
        seed=seed,
        initial=cfg["initial"],
        backend=cfg["backend"],
        backend_params=backend_params,
        experiment=cfg["experiment"],
        test_grid_size=int(cfg["test_grid"]) if cfg["test_grid"] else None,
    )
    n_threads = int(cfg["threads"]) if cfg["threads"] else (os.cpu_count() or 1)
    report = run_experiment(recipe, n_threads=n_threads)
    report.summary["tool_version"] = __version__
    report.summary["config_hash"] = _config_hash(cfg)
    report.write_json(out / "report.json")
    report.write_csv(out / "report.csv", comment=_stamp(cfg, seed))
    s = report.summary
    print(
        f"under={s['proportion_under']:.3f} correct={s['proportion_correct']:.3f} "
        f"over={s['proportion_over']:.3f} mean_size={s['mean_size']:.3f}"
    )
    return 0


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None, help="key = value file; flags override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pitcal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pitcal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic datasets with oracle metadata")
    p.add_argument("--example", choices=["ex1", "ex2-skewed", "ex2-kurtotic", "tc"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--storms", type=int, default=None)
    p.add_argument("--window-mode", dest="window_mode", choices=["overlapping", "gapped"], default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("calibrate", help="fit the PIT-CDF map and emit recalibrated outputs")
    p.add_argument("--data", default=None)
    p.add_argument("--initial", choices=["uniform", "marginal", "gaussian-fit"], default=None)
    p.add_argument("--backend", choices=["local", "net"], default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--eval-x", dest="eval_x", default=None,
                   help="semicolon-separated points, comma-separated components")
    p.add_argument("--hpd", action="store_const", const=True, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--weighting", choices=["uniform", "inverse-distance"], default=None)
    p.add_argument("--k-factor", dest="k_factor", type=int, default=None)
    p.add_argument("--mean-k", dest="mean_k", type=int, default=None)
    p.add_argument("--sd-scale", dest="sd_scale", type=float, default=None)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    for flag in ("net-hidden", "net-lr", "net-lr-decay", "net-weight-decay",
                 "net-batch", "net-patience", "net-val-fraction", "net-max-epochs"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("diagnose", help="local P-P curves, bands, and coverage tests")
    p.add_argument("--data", default=None)
    p.add_argument("--initial", choices=["uniform", "marginal", "gaussian-fit"], default=None)
    p.add_argument("--backend", choices=["local", "net"], default=None)
    p.add_argument("--eval-x", dest="eval_x", default=None)
    p.add_argument("--n-eval-points", dest="n_eval_points", type=int, default=None)
    p.add_argument("--n-mc", dest="n_mc", type=int, default=None)
    p.add_argument("--band-eta", dest="band_eta", type=float, default=None)
    p.add_argument("--n-gammas", dest="n_gammas", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--weighting", choices=["uniform", "inverse-distance"], default=None)
    p.add_argument("--mean-k", dest="mean_k", type=int, default=None)
    p.add_argument("--sd-scale", dest="sd_scale", type=float, default=None)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="Monte Carlo conditional-coverage benchmark")
    p.add_argument("--example", choices=["ex1", "ex2-skewed", "ex2-kurtotic"], default=None)
    p.add_argument("--method",
                   choices=["calpit-int", "calpit-hpd", "dcp", "regsplit", "oracle", "initial"],
                   default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--mc-draws", dest="mc_draws", type=int, default=None)
    p.add_argument("--initial", choices=["uniform", "marginal", "gaussian-fit", "generator"],
                   default=None)
    p.add_argument("--backend", choices=["local", "net"], default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--experiment", choices=["full", "split"], default=None)
    p.add_argument("--test-grid", dest="test_grid", type=int, default=None)
    p.add_argument("--quick", action="store_const", const=True, default=None,
                   help="preset: 3 realizations x 300 draws")
    _add_common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses code 2 for usage errors already; pass it through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PitcalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands: generate (synthetic datasets), select (fit + K selection),
baselines (comparison selectors), report (selection-accuracy tables).
Every command is a pure function of its inputs, flags and seed; reruns are
byte-identical. Exit codes: 0 ok, 2 usage, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from . import baselines as baselines_mod
from . import criterion, matfact, mixture, synth
from .divergence import DivergenceConfig, KnnKlConfig

SCHEMA_VERSION = 1

_MODEL_NAMES = {"gmm": "gmm", "pnmf": "poisson-nmf", "gfa": "gaussian-fa"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(path) or "."
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"output directory does not exist: {directory}")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _read_matrix(path: str, header: bool) -> np.ndarray:
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    rows = []
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    if header:
        lines = lines[1:]
    for ln, line in enumerate(lines, start=1 + int(header)):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: unparseable row") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.asarray(rows, dtype=float)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def _merge_config(args: argparse.Namespace, keys) -> dict:
    """Flags win over the config file; config wins over defaults."""
    resolved = {}
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(keys)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key, default in keys.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _build_parser() -> _Parser:
    p = _Parser(prog="acdc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset + ground truth")
    g.add_argument("--preset", required=True, choices=[
        "skew-different", "skew-same", "gmm-blobs", "skew-multivariate",
        "pmf-well-specified", "pmf-perturbed", "pmf-contaminated", "pmf-overdispersed",
    ])
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--d", type=int, default=None)
    g.add_argument("--k", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", type=float, default=0.05)
    g.add_argument("--exposure", type=float, default=0.05)
    g.add_argument("--dispersion", type=float, default=2.0)
    g.add_argument("--output-dir", required=True)

    s = sub.add_parser("select", help="fit models over a K range and select K")
    s.add_argument("--input", required=True)
    s.add_argument("--output-dir", required=True)
    s.add_argument("--model", choices=sorted(_MODEL_NAMES), default=None)
    s.add_argument("--kmin", type=int, default=None)
    s.add_argument("--kmax", type=int, default=None)
    s.add_argument("--divergence", choices=["kl-knn", "kl-knn-percoord", "mmd", "sinkhorn"], default=None)
    s.add_argument("--rho-mode", dest="rho_mode", choices=["fixed", "auto", "supervised"], default=None)
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--delta-min", dest="delta_min", type=float, default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--loss-weighting", dest="loss_weighting", choices=["unweighted", "counts"], default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--restarts", type=int, default=None)
    s.add_argument("--header", action="store_true", default=None)
    s.add_argument("--truth", default=None, help="truth JSON with labels (supervised rho mode)")
    s.add_argument("--config", default=None)

    b = sub.add_parser("baselines", help="run comparison selectors")
    b.add_argument("--input", required=True)
    b.add_argument("--output-dir", required=True)
    b.add_argument("--model", choices=sorted(_MODEL_NAMES), default=None)
    b.add_argument("--methods", default=None, help="comma-separated method names")
    b.add_argument("--kmin", type=int, default=None)
    b.add_argument("--kmax", type=int, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--restarts", type=int, default=None)
    b.add_argument("--header", action="store_true", default=None)
    b.add_argument("--config", default=None)

    r = sub.add_parser("report", help="selection-accuracy metrics from runs + truths")
    r.add_argument("--selections", nargs="+", required=True)
    r.add_argument("--truths", nargs="+", required=True)
    r.add_argument("--output-dir", required=True)
    return p


def _preset_dataset(args):
    preset = args.preset
    seed = args.seed
    if preset in ("skew-different", "skew-same"):
        n = args.n or 10000
        spec = synth.skew_scenario(preset.split("-", 1)[1], n=n, seed=seed)
        x, labels = synth.gen_skew_normal_mixture(spec)
        truth = {
            "k_o": spec.k,
            "labels": labels.tolist(),
            "kind": "mixture",
            "params": {
                "weights": spec.weights.tolist(),
                "locations": spec.locations.tolist(),
                "shapes": spec.shapes.tolist(),
            },
        }
        return x, truth, False
    if preset == "gmm-blobs":
        n = args.n or 5000
        k = args.k or 3
        d = args.d or 2
        angles = 2.0 * np.pi * np.arange(k) / k
        means = np.zeros((k, d))
        means[:, 0] = 6.0 * np.cos(angles)
        means[:, min(1, d - 1)] = 6.0 * np.sin(angles)
        covs = np.tile(np.eye(d), (k, 1, 1))
        x, labels = synth.gen_gmm(np.full(k, 1.0 / k), means, covs, n, seed=seed)
        truth = {
            "k_o": k,
            "labels": labels.tolist(),
            "kind": "mixture",
            "params": {"means": means.tolist()},
        }
        return x, truth, False
    if preset == "skew-multivariate":
        n = args.n or 1000
        k = args.k or 3
        d = args.d or 2
        rng = np.random.default_rng(seed)
        locations = rng.uniform(-1.0, 1.0, size=(k, d))
        locations *= 8.0 / max(1.0, np.max(np.abs(locations)))
        shapes = rng.choice([-8.0, -4.0, 4.0, 8.0], size=(k, d))
        spec = synth.SkewMixtureSpec(
            weights=np.full(k, 1.0 / k),
            locations=locations,
            shapes=shapes,
            sigma_corr=1.0,
            n=n,
            seed=seed,
        )
        x, labels = synth.gen_skew_normal_mixture(spec)
        truth = {
            "k_o": k,
            "labels": labels.tolist(),
            "kind": "mixture",
            "params": {"locations": locations.tolist(), "shapes": shapes.tolist()},
        }
        return x, truth, False
    # pmf presets
    n = args.n or 600
    k = args.k or 5
    d = args.d or 40
    scheme = preset.split("-", 1)[1]
    phi, z = synth.random_pmf_truth(k, n, d, seed=seed)
    spec = synth.PmfSynthSpec(
        signatures=phi,
        loadings=z,
        scheme=scheme,
        scale=args.scale,
        exposure=args.exposure,
        dispersion=args.dispersion,
        seed=seed + 1,
    )
    x, phi_o, z_o = synth.gen_pmf_data(spec)
    truth = {
        "k_o": k,
        "kind": "pmf",
        "signatures": phi_o.tolist(),
        "loadings": z_o.tolist(),
        "params": {"scheme": scheme, "scale": args.scale,
                   "exposure": args.exposure, "dispersion": args.dispersion},
    }
    return x, truth, True


def _cmd_generate(args) -> int:
    x, truth, integer = _preset_dataset(args)
    out = args.output_dir
    if not os.path.isdir(out):
        raise FileNotFoundError(f"output directory does not exist: {out}")
    truth["preset"] = args.preset
    truth["seed"] = args.seed
    rows = (
        [[int(v) for v in row] for row in x]
        if integer
        else [[float(v) for v in row] for row in x]
    )
    # data.csv carries no header; select/baselines read it with --header off
    lines = [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(os.path.join(out, "data.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(out, "truth.json"), truth)
    return 0


_SELECT_DEFAULTS = {
    "model": "gmm",
    "kmin": 1,
    "kmax": 8,
    "divergence": None,
    "rho_mode": "auto",
    "rho": None,
    "delta_min": None,
    "lam": None,
    "loss_weighting": "unweighted",
    "seed": 0,
    "restarts": None,
    "header": False,
    "truth": None,
}


def _divergence_config(name: Optional[str], model: str) -> DivergenceConfig:
    if name is None:
        name = "kl-knn" if model == "gmm" else "kl-knn-percoord"
    return DivergenceConfig(method=name, knn=KnnKlConfig(k_mode="adaptive-sqrt"))


def _cmd_select(args) -> int:
    cfg = _merge_config(args, _SELECT_DEFAULTS)
    out = args.output_dir
    if not os.path.isdir(out):
        raise FileNotFoundError(f"output directory does not exist: {out}")
    model = _MODEL_NAMES[cfg["model"]]
    x = _read_matrix(args.input, bool(cfg["header"]))
    div = _divergence_config(cfg["divergence"], cfg["model"])
    auto_cfg = criterion.AutoRhoConfig(delta_min=cfg["delta_min"], lam=cfg["lam"])
    seed = int(cfg["seed"])
    fit_cfg = None
    if cfg["restarts"] is not None:
        if model == "gmm":
            fit_cfg = mixture.EmConfig(n_restarts=int(cfg["restarts"]), seed=seed)
        else:
            fit_cfg = matfact.NmfConfig(n_restarts=int(cfg["restarts"]), seed=seed)
    true_labels = None
    if cfg["rho_mode"] == "supervised":
        if not cfg["truth"]:
            raise ValueError("supervised rho mode needs --truth")
        with open(cfg["truth"]) as fh:
            true_labels = json.load(fh)["labels"]
    n_threads = int(os.environ.get("ACDC_THREADS", "1") or "1")
    result = criterion.run_acdc(
        x,
        model=model,
        k_min=int(cfg["kmin"]),
        k_max=int(cfg["kmax"]),
        div=div,
        rho_mode=cfg["rho_mode"],
        rho=cfg["rho"],
        auto_cfg=auto_cfg,
        weighting=cfg["loss_weighting"],
        seed=seed,
        fit_cfg=fit_cfg,
        true_labels=true_labels,
        n_threads=max(1, n_threads),
    )
    diag = result.diagnostics
    curves = diag.pop("_curves")
    diag.pop("_fits", None)
    resolved = {k: cfg[k] for k in _SELECT_DEFAULTS}
    resolved["input"] = args.input
    payload = {
        "k_hat": result.k_hat,
        "rho_used": result.rho_used,
        "mode": result.mode,
        "per_k_losses": {str(k): v for k, v in result.per_k_losses.items()},
        "stability_interval": list(result.stability_interval) if result.stability_interval else None,
        "per_k": {str(k): v for k, v in diag.get("per_k", {}).items()},
        "flags": diag.get("flags", []),
        "lambda": diag.get("lambda"),
        "delta_min": diag.get("delta_min"),
        "knots": {str(k): c.knots.tolist() for k, c in curves.items()},
        "config": resolved,
    }
    _write_json(os.path.join(out, "selection.json"), payload)
    lam = diag.get("lambda")
    hi = diag.get("rho_grid_max")
    if lam is None or hi is None:
        # fixed/supervised modes carry no auto-rho diagnostics; resolve the
        # reporting penalty and grid ceiling the same way auto mode would
        _, lam_auto, hi_auto = criterion._resolve_auto_cfg(curves, criterion.AutoRhoConfig())
        lam = lam_auto if lam is None else lam
        hi = hi_auto if hi is None else hi
    hi = max(float(hi), 1e-9)
    grid = np.unique(
        np.concatenate(
            [np.linspace(0.0, hi, 200)]
            + [c.knots[c.knots <= hi] for c in curves.values()]
        )
    )
    rows = []
    for k in sorted(curves):
        vals = curves[k].evaluate(grid)
        for rho, v in zip(grid, vals):
            rows.append([float(rho), k, float(v), float(v + lam * k)])
    _write_csv(
        os.path.join(out, "loss_curves.csv"),
        ["rho", "K", "loss", "penalized_loss"],
        rows,
    )
    return 0


_BASELINE_DEFAULTS = {
    "model": "gmm",
    "methods": None,
    "kmin": 1,
    "kmax": 8,
    "seed": 0,
    "restarts": None,
    "header": False,
}

_KNOWN_METHODS = {
    "gmm": {"bic", "elbow", "silhouette", "gap", "wcss"},
    "pnmf": {"bic", "parallel-analysis", "pa"},
}


def _cmd_baselines(args) -> int:
    cfg = _merge_config(args, _BASELINE_DEFAULTS)
    model_key = cfg["model"]
    if model_key == "gfa":
        raise _UsageError("baselines support gmm and pnmf models")
    model = _MODEL_NAMES[model_key]
    methods = cfg["methods"]
    if methods is None:
        methods = "bic,elbow,silhouette,gap" if model_key == "gmm" else "bic,parallel-analysis"
    methods = tuple(m.strip() for m in methods.split(",") if m.strip())
    unknown = set(methods) - _KNOWN_METHODS[model_key]
    if unknown:
        raise _UsageError(f"unknown methods for {model_key}: {sorted(unknown)}")
    out = args.output_dir
    if not os.path.isdir(out):
        raise FileNotFoundError(f"output directory does not exist: {out}")
    x = _read_matrix(args.input, bool(cfg["header"]))
    seed = int(cfg["seed"])
    fit_cfg = None
    if cfg["restarts"] is not None:
        if model == "gmm":
            fit_cfg = mixture.EmConfig(n_restarts=int(cfg["restarts"]), seed=seed)
        else:
            fit_cfg = matfact.NmfConfig(n_restarts=int(cfg["restarts"]), seed=seed)
    results = baselines_mod.run_baselines(
        x,
        model=model,
        methods=methods,
        k_min=int(cfg["kmin"]),
        k_max=int(cfg["kmax"]),
        seed=seed,
        fit_cfg=fit_cfg,
    )
    resolved = {k: cfg[k] for k in _BASELINE_DEFAULTS}
    resolved["methods"] = ",".join(methods)
    resolved["input"] = args.input
    payload = {
        "results": {
            name: {
                "k_hat": int(res.k_hat),
                "per_k_scores": {str(k): float(v) for k, v in res.per_k_scores.items()},
            }
            for name, res in results.items()
        },
        "config": resolved,
    }
    _write_json(os.path.join(out, "baselines.json"), payload)
    return 0


def _cmd_report(args) -> int:
    if len(args.selections) != len(args.truths):
        raise ValueError(
            f"got {len(args.selections)} selections but {len(args.truths)} truths"
        )
    k_hats = []
    k_os = []
    for sel_path, truth_path in zip(args.selections, args.truths):
        with open(sel_path) as fh:
            k_hats.append(int(json.load(fh)["k_hat"]))
        with open(truth_path) as fh:
            k_os.append(int(json.load(fh)["k_o"]))
    from .metrics import selection_accuracy

    acc = selection_accuracy(k_hats, k_os)
    out = args.output_dir
    if not os.path.isdir(out):
        raise FileNotFoundError(f"output directory does not exist: {out}")
    payload = {
        "mae": acc.mae,
        "zero_one": acc.zero_one,
        "median_dev": acc.median_dev,
        "per_run": [
            {"k_hat": kh, "k_o": ko, "selection": sp, "truth": tp}
            for kh, ko, sp, tp in zip(k_hats, k_os, args.selections, args.truths)
        ],
    }
    _write_json(os.path.join(out, "report.json"), payload)
    _write_csv(
        os.path.join(out, "report.csv"),
        ["mae", "zero_one", "median_dev"],
        [[acc.mae, acc.zero_one, acc.median_dev]],
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "select":
            return _cmd_select(args)
        if args.command == "baselines":
            return _cmd_baselines(args)
        return _cmd_report(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: simulate, estimate, bounds, mc.

Every command writes its outputs plus a manifest JSON describing the run
(command, resolved configuration, seed, tool version, input hash,
timestamps). Outputs are deterministic given the configuration; the
manifest's timestamps are provenance, not inputs. A JSON config file
passed with --config overrides command-line flags key by key.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundFrontiers, outer_set, verify_membership
from .data import DataValidationError, load_csv, save_csv, swap_causes
from .derived import derived_quantities
from .estimator import EstimationError, QuantileGrid, fit_curve, naive_curve
from .inference import BootstrapConfig, bootstrap_band, coverage_study
from .simulate import DgpSpec, generate, mc_study
from .surface import assemble_surface

__all__ = ["main", "build_parser"]

_THREADS_ENV = "CRQIV_THREADS"


def _default_threads() -> int:
    env = os.environ.get(_THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _fmt(v) -> str:
    """Deterministic CSV cell: shortest round-trip float text, blank for NaN."""
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, seed, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(out_dir / "manifest.json", manifest)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(cfg: dict):
    path = Path(cfg["data"])
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    return load_csv(path), path


def _grid(cfg: dict) -> QuantileGrid:
    return QuantileGrid.default(cfg["grid"])


def _fit_kwargs(cfg: dict) -> dict:
    return {
        "grid": _grid(cfg),
        "bandwidth": cfg.get("bandwidth"),
        "delta": cfg.get("delta"),
        "kind": cfg.get("kind", "local_linear"),
    }


# -- commands ----------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    out = _outdir(cfg)
    data, _ = generate(DgpSpec(cfg["design"], cfg["n"], cfg["seed"]))
    data_path = out / "data.csv"
    save_csv(data, data_path)
    _write_manifest(out, "simulate", cfg, cfg["seed"], [])
    print(f"wrote {data_path} ({data.n} records)")
    return 0


def cmd_estimate(cfg: dict) -> int:
    out = _outdir(cfg)
    data, data_path = _load_data(cfg)
    kwargs = _fit_kwargs(cfg)
    fit = fit_curve(data, **kwargs)
    u = fit.grid.points
    L = fit.theta.shape[1]

    fit_json = fit.to_dict()
    fit_json["n"] = data.n
    _write_json(out / "fit.json", fit_json)

    theta_cols = [f"theta_{lbl}" for lbl in fit.treatment_levels]
    rows = []
    nv = naive_curve(data, fit.grid) if cfg.get("naive") else None
    header = ["u"] + theta_cols + ["reported"]
    if nv is not None:
        header += [f"naive_{lbl}" for lbl in fit.treatment_levels]
    for m in range(u.size):
        row = [float(u[m])]
        row += [float(fit.theta[m, l]) if fit.reported_mask[m] else math.nan for l in range(L)]
        row.append(int(fit.reported_mask[m]))
        if nv is not None:
            row += [float(nv[m, l]) for l in range(L)]
        rows.append(row)
    _write_csv(out / "curves.csv", header, rows)

    qte = fit.qte()
    _write_csv(
        out / "qte.csv",
        ["u", "qte", "reported"],
        [(float(u[m]), float(qte[m]), int(fit.reported_mask[m])) for m in range(u.size)],
    )

    if cfg.get("derived"):
        cause2 = fit_curve(swap_causes(data), **kwargs)
        levels = derived_quantities(fit, cause2)
        rows = []
        for l, d in sorted(levels.items()):
            for i in range(d.u.size):
                rows.append(
                    (
                        d.label,
                        float(d.u[i]),
                        float(d.t[i]),
                        float(d.density[i]),
                        float(d.subdist_hazard[i]),
                        float(d.cause_hazard[i]),
                    )
                )
        _write_csv(
            out / "derived.csv",
            ["level", "u", "t", "density", "subdist_hazard", "cause_hazard"],
            rows,
        )

    if cfg.get("boot_draws", 0) > 0:
        boot = BootstrapConfig(
            draws=cfg["boot_draws"],
            seed=cfg["seed"],
            level=cfg["level"],
            workers=cfg["threads"],
        )
        band = bootstrap_band(data, boot, fit=fit, **kwargs)
        _write_csv(out / "band.csv", ["u", "lower", "point", "upper", "n_reported"], band.rows())

    _write_manifest(out, "estimate", cfg, cfg["seed"], [data_path])
    print(f"estimate done: u_hat={fit.frontiers.u_hat} -> {out}")
    return 0


def cmd_bounds(cfg: dict) -> int:
    out = _outdir(cfg)
    data, data_path = _load_data(cfg)
    surface = assemble_surface(data, bandwidth=cfg.get("bandwidth"), kind=cfg.get("kind", "local_linear"))
    if cfg.get("fit_json"):
        fit_path = Path(cfg["fit_json"])
        if not fit_path.exists():
            raise FileNotFoundError(f"fit file not found: {fit_path}")
        with open(fit_path, encoding="utf-8") as fh:
            u_y = float(json.load(fh)["u_hat"])
        frontiers = BoundFrontiers.from_data(data)
        frontiers = BoundFrontiers(frontiers.y1, frontiers.caps, u_y)
        inputs = [data_path, fit_path]
    else:
        fit = fit_curve(data, stop_at_frontier=True, **_fit_kwargs(cfg))
        frontiers = BoundFrontiers.from_data(data, fit)
        inputs = [data_path]

    sets = []
    for u in cfg["u"]:
        os_ = outer_set(u, surface, frontiers)
        sets.append(os_.to_dict())
        if cfg.get("lattice", 0) > 0:
            npts = cfg["lattice"]
            axes = [np.linspace(0.0, 1.5 * frontiers.y1[l], npts) for l in range(frontiers.y1.size)]
            mesh = np.meshgrid(*axes, indexing="ij")
            rows = []
            for idx in np.ndindex(*mesh[0].shape):
                theta = [float(ax[i]) for ax, i in zip(axes, idx)]
                rows.append(theta + [int(verify_membership(theta, u, surface, frontiers))])
            _write_csv(
                out / f"bounds_lattice_u{u:g}.csv",
                [f"theta_{l}" for l in range(frontiers.y1.size)] + ["member"],
                rows,
            )
    _write_json(out / "bounds.json", {"u_y": frontiers.u_y, "sets": sets})
    _write_manifest(out, "bounds", cfg, cfg["seed"], inputs)
    print(f"wrote {out / 'bounds.json'} ({len(sets)} quantile(s))")
    return 0


def cmd_mc(cfg: dict) -> int:
    out = _outdir(cfg)
    spec = DgpSpec(cfg["design"], cfg["n"], cfg["seed"])
    res = mc_study(spec, cfg["reps"], grid=_grid(cfg), workers=cfg["threads"],
                   bandwidth=cfg.get("bandwidth"), delta=cfg.get("delta"))

    means, counts = res.mean_qte()
    naive_means = res.mean_naive_qte()
    _write_csv(
        out / "mc_qte.csv",
        ["u", "mean_qte", "n_reported", "mean_naive_qte"],
        [
            (float(res.grid[m]), float(means[m]), int(counts[m]), float(naive_means[m]))
            for m in range(res.grid.size)
        ],
    )

    edges, hist = res.u_hat_histogram(cfg.get("bins", 20))
    _write_csv(
        out / "mc_u_hat_hist.csv",
        ["bin_low", "bin_high", "count"],
        [(float(edges[i]), float(edges[i + 1]), int(hist[i])) for i in range(hist.size)],
    )

    _write_csv(
        out / "mc_frontier.csv",
        ["rep", "u_hat", "u_prev", "triggered"] + [f"y1_hat_{l}" for l in range(res.y1_hat.shape[1])],
        [
            (r, float(res.u_hat[r]), float(res.u_prev[r]), int(res.triggered[r]))
            + tuple(float(v) for v in res.y1_hat[r])
            for r in range(res.reps)
        ],
    )

    if cfg.get("boot_draws", 0) > 0:
        boot = BootstrapConfig(
            draws=cfg["boot_draws"],
            seed=cfg["seed"],
            level=cfg["level"],
            workers=1,
        )
        cov = coverage_study(
            spec,
            cfg["reps"],
            boot,
            workers=cfg["threads"],
            grid=_grid(cfg),
            bandwidth=cfg.get("bandwidth"),
            delta=cfg.get("delta"),
        )
        _write_csv(out / "mc_coverage.csv", ["u", "coverage", "hits", "n_valid"], cov.rows())

    _write_manifest(out, "mc", cfg, cfg["seed"], [])
    print(f"mc done: {res.reps} replications -> {out}")
    return 0


# -- argument plumbing -------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crqiv",
        description="Instrumental quantile estimation for competing-risks durations",
    )
    parser.add_argument("--version", action="version", version=f"crqiv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_fit_flags=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON config file; entries override flags")
        p.add_argument("--threads", type=_positive_int, default=None,
                       help=f"worker threads (default: ${_THREADS_ENV} or CPU count)")
        if with_fit_flags:
            p.add_argument("--grid", type=_positive_int, default=100, help="quantile grid size M")
            p.add_argument("--bandwidth", type=float, default=None)
            p.add_argument("--delta", type=float, default=None, help="frontier cushion override")
            p.add_argument("--kind", choices=["local_linear", "convolution"], default="local_linear")

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--design", type=int, choices=[1, 2], required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    common(p, with_fit_flags=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit quantile curves from a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--naive", action="store_true", help="include the treatment-only comparator")
    p.add_argument("--derived", action="store_true", help="emit incidence/hazard curves")
    p.add_argument("--boot-draws", type=int, default=0, dest="boot_draws")
    p.add_argument("--level", type=float, default=0.95)
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="outer sets for quantiles beyond the frontier")
    p.add_argument("--data", required=True)
    p.add_argument("--u", type=float, action="append", required=True,
                   help="quantile level (repeatable)")
    p.add_argument("--fit-json", dest="fit_json",
                   help="fit.json from a previous estimate run (reuses its frontier)")
    p.add_argument("--lattice", type=int, default=0,
                   help="emit a membership lattice CSV with this many points per axis")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("mc", help="Monte Carlo study on a synthetic design")
    p.add_argument("--design", type=int, choices=[1, 2], required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--reps", type=_positive_int, required=True)
    p.add_argument("--boot-draws", type=int, default=0, dest="boot_draws")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--bins", type=_positive_int, default=20)
    common(p)
    p.set_defaults(func=cmd_mc)

    return parser


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise FileNotFoundError(f"config file not found: {cfg_path}")
        with open(cfg_path, encoding="utf-8") as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(overrides) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(overrides)
    if cfg.get("threads") is None:
        cfg["threads"] = _default_threads()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.func(cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataValidationError, EstimationError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""labcli: simulate, sweep, fss, theory, regress, sf.

Experiments are described by a JSON config (see ``ExperimentConfig``);
command-line flags override config keys.  Every simulate/sweep run writes
``results.csv`` plus a ``manifest.json`` that embeds the resolved config, so
any run can be reproduced byte-identically with ``--from-manifest``.
The environment variable ``LIQLAB_BUDGET`` overrides per-replica event caps.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, theory
from .analysis import (
    correlation_surface,
    empirical_sf,
    flux_features,
    flux_regression,
    fss_pipeline,
    susceptibility,
)
from .analysis.fss import InsufficientGridError
from .io import (
    SchemaError,
    read_event_stream,
    read_manifest,
    read_results_csv,
    result_columns,
    write_manifest,
    write_results_csv,
)
from .sweep import ConfigError, ExperimentConfig, run_experiment


def _fail(message: str) -> int:
    print(f"labcli: error: {message}", file=sys.stderr)
    return 2


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


# ---------------------------------------------------------------------------
# simulate / sweep
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    try:
        if args.from_manifest:
            config_dict = read_manifest(args.from_manifest)["config"]
        elif args.config:
            with open(args.config, encoding="utf-8") as fh:
                config_dict = json.load(fh)
        else:
            return _fail("simulate needs --config or --from-manifest")
        config_dict = dict(config_dict)
        config_dict.pop("schema_version", None)
        for key in ("replicas", "seed", "workers"):
            value = getattr(args, key)
            if value is not None:
                config_dict[key] = value
        if args.out is not None:
            config_dict["output_dir"] = args.out
        for item in args.set or []:
            if "=" not in item:
                return _fail(f"--set expects key=value, got {item!r}")
            key, _, raw = item.partition("=")
            value = json.loads(raw) if raw and raw[0] in "[0123456789-." else raw
            if key.startswith("params."):
                config_dict.setdefault("params", {})[key.removeprefix("params.")] = value
            else:
                config_dict[key] = value
        config = ExperimentConfig.from_dict(config_dict)
    except (ConfigError, SchemaError, json.JSONDecodeError, OSError, TypeError) as exc:
        return _fail(str(exc))

    rows, manifest = run_experiment(config)
    out_dir = Path(config.output_dir)
    write_results_csv(out_dir / "results.csv", rows, result_columns(config.model))
    write_manifest(out_dir / "manifest.json", manifest)
    n_aborted = sum(1 for r in rows if r["aborted"])
    print(f"wrote {len(rows)} rows to {out_dir / 'results.csv'} ({n_aborted} budget-aborted)")
    return 0


# ---------------------------------------------------------------------------
# fss
# ---------------------------------------------------------------------------


def _cmd_fss(args) -> int:
    try:
        rows = read_results_csv(args.results)
    except (OSError, SchemaError) as exc:
        return _fail(str(exc))
    rows = [r for r in rows if not r.get("aborted")]
    if not rows:
        return _fail(f"{args.results}: no usable rows")
    if any(r.get("model") != "santafe" for r in rows):
        return _fail("fss expects rows from the santafe model")
    horizons = sorted(_parse_floats(args.horizons))
    sim_horizon = min(float(r["horizon"]) for r in rows)
    if horizons[-1] > sim_horizon:
        return _fail(
            f"requested horizon {horizons[-1]} exceeds the simulated horizon {sim_horizon}; "
            "crisis times are censored there"
        )
    alphas = sorted({float(r["alpha_k"]) for r in rows})
    sizes = sorted({int(r["n_levels"]) for r in rows})
    taus: dict[tuple[float, int], list] = {}
    for r in rows:
        taus.setdefault((float(r["alpha_k"]), int(r["n_levels"])), []).append(r["tau_c"])
    missing = [
        (a, n) for a in alphas for n in sizes if len(taus.get((a, n), [])) < 2
    ]
    if missing:
        return _fail(
            "insufficient coverage: need >= 2 replicas per (alpha_k, n_levels) cell; "
            f"missing cells: {missing[:20]}{' ...' if len(missing) > 20 else ''}"
        )
    chi = np.empty((len(horizons), len(sizes), len(alphas)))
    for i, t in enumerate(horizons):
        for j, n in enumerate(sizes):
            for k, a in enumerate(alphas):
                chi[i, j, k] = susceptibility(taus[(a, n)], t)
    try:
        fit = fss_pipeline(chi, alphas, horizons, sizes)
    except InsufficientGridError as exc:
        return _fail(str(exc))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "gamma": fit.gamma,
        "zeta": fit.zeta,
        "eta": fit.eta,
        "alpha_star": fit.alpha_star,
        "collapse_distance": fit.collapse_distance,
        "excluded_cells": fit.excluded_cells,
    }
    (out / "scaling_fit.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    with open(out / "alpha_m.csv", "w", newline="\n") as fh:
        fh.write("horizon,n_levels,alpha_m,chi_peak\n")
        for i, t in enumerate(horizons):
            for j, n in enumerate(sizes):
                fh.write(f"{t!r},{n},{fit.alpha_m[i, j]!r},{fit.chi_peak[i, j]!r}\n")
    for name, (grid, vals) in (
        ("zeta_scan.csv", fit.zeta_scan),
        ("eta_scan.csv", fit.eta_scan),
        ("alpha_star_scan.csv", fit.alpha_star_scan),
    ):
        with open(out / name, "w", newline="\n") as fh:
            fh.write("value,collapse_distance\n")
            for g, v in zip(grid, vals):
                fh.write(f"{float(g)!r},{float(v)!r}\n")
    j_max = len(sizes) - 1
    with open(out / "collapse_chi.csv", "w", newline="\n") as fh:
        fh.write("horizon,x,y\n")
        for i, t in enumerate(horizons):
            if not math.isfinite(fit.alpha_m[i, j_max]):
                continue
            for k, a in enumerate(alphas):
                x = t ** (1.0 / fit.zeta) * (a - fit.alpha_m[i, j_max])
                y = chi[i, j_max, k] / t ** fit.gamma
                fh.write(f"{t!r},{x!r},{y!r}\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------


def _cmd_theory(args) -> int:
    report: dict[str, object] = {"model": args.model}
    try:
        if args.model == "spread_linear":
            th = theory.linear_spread_theory(args.lambda0_plus, args.lambda0_minus, args.alpha)
            report.update(
                alpha_c=th.alpha_c,
                p_open=th.p_open,
                drift=th.drift,
                diffusion=th.diffusion,
                regime=th.regime,
            )
            if args.big_t is not None and args.big_n is not None and th.regime != "explosive":
                report["first_passage_prob"] = theory.first_passage_prob(
                    args.big_n, args.big_t, th.drift, th.diffusion
                )
                report["chi"] = theory.chi_theory(
                    args.alpha, args.big_t, args.big_n, args.lambda0_plus, args.lambda0_minus
                )
        elif args.model == "spread_quadratic":
            if args.eps is None:
                return _fail("spread_quadratic needs --eps")
            th = theory.metastability_theory(args.lambda0_plus, args.alpha, args.beta, args.eps)
            report.update(
                x_eq=th.x_eq,
                x_star=th.x_star,
                x_star_asymptotic=th.x_star_asymptotic,
                barrier=th.barrier,
                barrier_asymptotic=th.barrier_asymptotic,
                kramers_time=th.kramers_time,
                log_time_asymptotic=th.log_time_asymptotic,
            )
        elif args.model == "price_feedback":
            th = theory.price_feedback_theory(args.lambda0_plus, args.lambda0_minus, args.alpha)
            report.update(
                alpha_c=th.alpha_c,
                p_open=th.p_open,
                drift=th.drift,
                price_diffusivity=th.price_diffusivity,
                regime=th.regime,
            )
        else:  # hawkes
            mean, var, laplace = theory.hawkes_cumulants(args.lambda0_plus, args.alpha, args.beta)
            report.update(mean_x=mean, var_x=var, laplace_at_1=laplace(1.0))
    except ValueError as exc:
        return _fail(str(exc))
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for key, value in report.items():
            print(f"{key}: {value}")
    return 0


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------


def _cmd_regress(args) -> int:
    try:
        stream = read_event_stream(args.stream)
    except (OSError, SchemaError) as exc:
        return _fail(str(exc))
    betas = _parse_floats(args.beta_grid) if args.beta_grid else [args.beta / 4, args.beta / 2, args.beta, args.beta * 2, args.beta * 4]
    bps = (
        _parse_floats(args.beta_prime_grid)
        if args.beta_prime_grid
        else [args.beta_prime / 4, args.beta_prime / 2, args.beta_prime, args.beta_prime * 2, args.beta_prime * 4]
    )
    try:
        features = flux_features(
            stream["times"], stream["kinds"], stream["sides"], stream["mid_changes"], args.beta, args.beta_prime
        )
        result = flux_regression(features, n_bins=args.bins)
        surface = correlation_surface(
            stream["times"], stream["kinds"], stream["sides"], stream["mid_changes"], betas, bps
        )
    except ValueError as exc:
        return _fail(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "beta": args.beta,
        "beta_prime": args.beta_prime,
        "c0": result.c0,
        "c1": result.c1,
        "c2": result.c2,
        "c3": result.c3,
        "se": result.se,
        "t_stat": result.t_stat,
        "raw_coefficients": result.raw,
        "n_records": result.n_records,
        "n_bins_sym": result.n_bins_sym,
        "n_bins_asym": result.n_bins_asym,
        "hawkes_used": result.hawkes_used,
        "surface_argmax_beta": surface.argmax_beta,
        "surface_argmax_beta_prime": surface.argmax_beta_prime,
        "surface_corr_at_argmax": surface.corr_at_argmax,
    }
    (out / "regress_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    with open(out / "correlation_surface.csv", "w", newline="\n") as fh:
        fh.write("beta,beta_prime,corr\n")
        for i, b in enumerate(surface.betas):
            for j, bp in enumerate(surface.beta_primes):
                fh.write(f"{float(b)!r},{float(bp)!r},{float(surface.corr[i, j])!r}\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# sf
# ---------------------------------------------------------------------------


def _cmd_sf(args) -> int:
    try:
        rows = read_results_csv(args.input)
    except (OSError, SchemaError) as exc:
        return _fail(str(exc))
    values = []
    weights = []
    for i, row in enumerate(rows, start=2):
        if args.column not in row:
            return _fail(f"{args.input}: no column {args.column!r}")
        v = row[args.column]
        if v is None:
            continue
        values.append(float(v))
        if args.weight_column:
            w = row.get(args.weight_column)
            if w is None:
                return _fail(f"{args.input}:{i}: empty weight")
            weights.append(float(w))
    if not values:
        return _fail(f"{args.input}: no usable values in column {args.column!r}")
    try:
        ccdf = empirical_sf(values, weights if args.weight_column else None)
    except ValueError as exc:
        return _fail(str(exc))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        fh.write("value,sf\n")
        for v, s in zip(ccdf.values, ccdf.sf):
            fh.write(f"{float(v)!r},{float(s)!r}\n")
    print(f"wrote {ccdf.values.size} survival points to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labcli", description=__doc__)
    parser.add_argument("--version", action="version", version=f"labcli {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "sweep"):
        p = sub.add_parser(name, help="run a (gridded) batch of replicas")
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--from-manifest", help="re-run the config embedded in a manifest")
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fss", help="finite-size-scaling fit from result rows")
    p.add_argument("results", help="results.csv from a santafe sweep")
    p.add_argument("--horizons", required=True, help="comma-separated capping horizons")
    p.add_argument("--out", default="fss_out")
    p.set_defaults(func=_cmd_fss)

    p = sub.add_parser("theory", help="closed-form predictions as key: value")
    p.add_argument("model", choices=["spread_linear", "spread_quadratic", "price_feedback", "hawkes"])
    p.add_argument("--lambda0-plus", type=float, default=1.0, dest="lambda0_plus")
    p.add_argument("--lambda0-minus", type=float, default=0.5, dest="lambda0_minus")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--eps", type=float)
    p.add_argument("--big-t", type=float, dest="big_t", help="horizon for passage/susceptibility")
    p.add_argument("--big-n", type=float, dest="big_n", help="barrier for passage/susceptibility")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("regress", help="liquidity-flux regression on an event stream")
    p.add_argument("stream", help="event-stream CSV")
    p.add_argument("--beta", type=float, default=0.001)
    p.add_argument("--beta-prime", type=float, default=0.02, dest="beta_prime")
    p.add_argument("--beta-grid", dest="beta_grid")
    p.add_argument("--beta-prime-grid", dest="beta_prime_grid")
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--out", default="regress_out")
    p.set_defaults(func=_cmd_regress)

    p = sub.add_parser("sf", help="survival function of a result column")
    p.add_argument("input", help="results.csv")
    p.add_argument("--column", default="max_spread")
    p.add_argument("--weight-column")
    p.add_argument("--out", default="ccdf.csv")
    p.set_defaults(func=_cmd_sf)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

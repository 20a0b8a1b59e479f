"""Command line entry point: ``dynlab <subcommand> [options]``.

Exit codes: 0 when every requested audit passes, 2 when an audit fails (or
cannot be completed), 1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import measures, physical, reports, transversality, unstable
from .dynamics import Point, orbit
from .errors import ConstraintViolation, DynlabError
from .params import CONFIG_KEYS, load_config, validate_params

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT = 0, 1, 2

PARAM_FLAGS = {
    "example": str,
    "l": int,
    "lambda_ss": float,
    "lambda_c": float,
    "alpha": float,
    "lambda_c_plus": float,
    "delta_bump": float,
    "mu": float,
    "n_power": int,
}


class ConfigError(Exception):
    pass


def _floats(text: str):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _n_range(text: str):
    """'1:6' -> [1..6]; '2,4,8' -> [2, 4, 8]."""
    text = str(text)
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("parameters (flag > --config file > default)")
    g.add_argument("--config", help="key=value parameter file")
    for key, typ in PARAM_FLAGS.items():
        g.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", default=None,
                   help="worker threads (int or 'auto'); falls back to DYNLAB_THREADS")
    p.add_argument("--out-dir", default=".", help="directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="orbit of one point as CSV")
    _common(p)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--start", default="0.3,0.0,0.0")

    p = sub.add_parser("unstable-field", help="unstable slope field and recursion residuals")
    _common(p)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("transversality", help="sampled audit of the transversality floor")
    _common(p)
    p.add_argument("--epsilon", default="0.1,0.05,0.02")
    p.add_argument("--pairs", type=int, default=20000)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--exhaustive-depth", type=int, default=0,
                   help="also enumerate all Ex1 cylinder pairs at this depth")

    p = sub.add_parser("ugibbs", help="Birkhoff u-Gibbs measure and its regularity scans")
    _common(p)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--atoms", type=int, default=100)
    p.add_argument("--r", default="0.05,0.035,0.025,0.015,0.01,0.0075,0.005")
    p.add_argument("--save-measure", action="store_true", help="write measure.csv")

    p = sub.add_parser("norm-scan", help="r-norm scan of a measure")
    _common(p)
    p.add_argument("--measure", default=None, help="x,y,z,weight CSV (default: Birkhoff measure)")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--atoms", type=int, default=100)
    p.add_argument("--r", default="0.05,0.035,0.025,0.015,0.01,0.0075,0.005")
    p.add_argument("--integration", choices=measures.INTEGRATIONS, default="grid")
    p.add_argument("--threshold", type=float, default=2.0)

    p = sub.add_parser("inequality", help="decay audit of the main inequality")
    _common(p)
    p.add_argument("--n", default="1:6")
    p.add_argument("--r", type=float, default=1e-4)
    p.add_argument("--c-policy", type=float, default=10.0)
    p.add_argument("--spacing", type=float, default=0.5)

    p = sub.add_parser("basins", help="Birkhoff-average clustering over a grid")
    _common(p)
    p.add_argument("--grid", default="32x32x8")
    p.add_argument("--iters", type=int, default=100_000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--min-fraction", type=float, default=0.99,
                   help="pass when the largest basin fraction reaches this")
    return parser


def resolve_params(args):
    raw = {}
    if args.config:
        try:
            raw.update(load_config(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return validate_params(raw)


def _echo(args, params) -> dict:
    """Resolved configuration. The thread count is left out: results do not depend on it."""
    opts = {k: v for k, v in vars(args).items()
            if k not in CONFIG_KEYS and k not in ("config", "threads", "out_dir")}
    return {"params": params.to_dict(), "options": opts}


def cmd_simulate(args, params, out, cfg):
    start = _floats(args.start)
    if len(start) != 3:
        raise ConfigError("--start needs x,y,z")
    if args.iters < 1:
        raise ConfigError("--iters must be >= 1")
    deformed = params.mu > 0 or params.n_power > 1
    orb = orbit(Point(*start), args.iters, params, seed=args.seed, deformed=deformed)
    reports.write_csv(out / "orbit.csv", reports.ORBIT_HEADER, reports.orbit_rows(orb), cfg)
    return True


def cmd_unstable_field(args, params, out, cfg):
    if params.mu > 0:
        field = unstable.alpha_uu_fixed_point(params, n_samples=args.samples, seed=args.seed,
                                              chain_length=max(2, args.depth))
        audit = unstable.perturbation_audit(params, n_samples=args.samples, seed=args.seed)
        ok = audit["sup_diff"] <= audit["bound_rhs"]
        payload = {"kind": "fixed_point", "iterations": field.iterations, "eta": field.eta,
                   "final_change": field.final_change, "sup_bound": field.sup_bound,
                   "perturbation_audit": audit, "pass": ok}
    elif params.example == "Ex1":
        field = unstable.cylinder_field(params, args.depth)
        res = float(np.max(field.residuals))
        bound = field.sup_bound * params.rho ** args.depth
        ok = bool(np.max(np.abs(field.values)) <= field.sup_bound and res <= max(bound, args.tol))
        payload = {"kind": "cylinders", "depth": args.depth, "n": len(field.values),
                   "max_residual": res, "residual_bound": bound, "sup_bound": field.sup_bound,
                   "max_abs_alpha": float(np.max(np.abs(field.values))), "pass": ok}
    else:
        words, xs = unstable.sample_words(params, args.samples, max(args.depth, 40), args.seed,
                                          targeted_fraction=0.0)
        vals = unstable.alpha_uu_batch(words, params, xs)
        res = unstable.recursion_residual(words, params, xs)
        field = unstable.SlopeField(words=words[:, :args.depth], values=vals, depth=words.shape[1],
                                    sup_bound=unstable.sup_bound(params), xs=xs, residuals=res)
        ok = bool(np.max(np.abs(vals)) <= field.sup_bound and np.max(res) <= args.tol)
        payload = {"kind": "samples", "n": len(vals), "max_residual": float(np.max(res)),
                   "sup_bound": field.sup_bound, "max_abs_alpha": float(np.max(np.abs(vals))),
                   "pass": ok}
    reports.write_csv(out / "slope_field.csv", reports.SLOPE_HEADER, field.to_rows(), cfg)
    reports.write_json(out / "unstable_field.json", payload, cfg)
    return ok


def cmd_transversality(args, params, out, cfg):
    eps = _floats(args.epsilon)
    rep = transversality.audit_H1(params, eps, n_pairs=args.pairs, depth=args.depth,
                                  seed=args.seed)
    ok = all(r["pass"] for r in rep["results"])
    payload = {"results": rep["results"], "fundamental_domain": rep["fundamental_domain"],
               "depth": rep["depth"], "example2_constants": rep["example2_constants"]}
    if args.exhaustive_depth and params.example == "Ex1":
        ex = [transversality.exhaustive_floor(params, args.exhaustive_depth, e) for e in eps]
        payload["exhaustive"] = ex
        ok = ok and all(e["pass"] for e in ex)
    payload["pass"] = ok
    reports.write_json(out / "transversality.json", payload, cfg)
    rows = [(w["word1"], w["word2"], w["x"], w["d_ss"], w["slope_gap"], w["angle"])
            for w in rep["worst_pairs"]]
    reports.write_csv(out / "worst_pairs.csv",
                      ("word1", "word2", "x", "d_ss", "slope_gap", "angle"), rows, cfg)
    return ok


def _birkhoff(args, params):
    curve = measures.default_curve(params, span=0.5)
    return measures.birkhoff_measure(curve, args.iters, params, n_atoms=args.atoms,
                                     seed=args.seed, deformed=params.mu > 0)


def cmd_ugibbs(args, params, out, cfg):
    rs = _floats(args.r)
    mu = _birkhoff(args, params)
    scan = measures.abs_continuity_scan(measures.project_measure(mu), rs)
    curve = measures.default_curve(params, span=0.5)
    line = measures.project_measure(measures.lebesgue_on_curve(curve, 20_000, params))
    single = measures.abs_continuity_scan(line, rs)
    ok = scan.bounded and not single.bounded
    payload = {"n_atoms": len(mu), "total_mass": mu.total_mass, "projected_scan": scan.to_dict(),
               "single_curve_scan": single.to_dict(), "pass": ok}
    reports.write_json(out / "ugibbs.json", payload, cfg)
    if args.save_measure:
        reports.write_csv(out / "measure.csv", reports.MEASURE_HEADER, mu.to_rows(), cfg)
    return ok


def cmd_norm_scan(args, params, out, cfg):
    if args.measure:
        try:
            pts, w = reports.read_measure_csv(args.measure)
        except OSError as exc:
            raise ConfigError(f"cannot read measure: {exc}") from exc
        mu = measures.EmpiricalMeasure(pts, w)
    else:
        mu = _birkhoff(args, params)
    scan = measures.abs_continuity_scan(measures.project_measure(mu), _floats(args.r),
                                        threshold=args.threshold, integration=args.integration,
                                        seed=args.seed)
    payload = scan.to_dict()
    payload["pass"] = scan.bounded
    reports.write_json(out / "norm_scan.json", payload, cfg)
    return scan.bounded


def cmd_inequality(args, params, out, cfg):
    try:
        rep = measures.main_inequality_audit(None, params, _n_range(args.n), r=args.r,
                                             c_policy=args.c_policy, spacing=args.spacing,
                                             deformed=params.mu > 0)
        payload = rep.to_dict()
    except DynlabError as exc:
        payload = {"sigma_hat": None, "pass": False, "error": str(exc)}
    reports.write_json(out / "inequality.json", payload, cfg)
    return bool(payload["pass"])


def cmd_basins(args, params, out, cfg):
    rep = physical.survey_basins(args.grid, None, args.iters, args.burn_in, args.tol, params,
                                 seed=args.seed, threads=args.threads,
                                 deformed=params.mu > 0)
    largest = max(rep.basin_fractions) if rep.basin_fractions else 0.0
    ok = largest >= args.min_fraction
    payload = rep.to_dict()
    payload["largest_fraction"] = largest
    payload["pass"] = ok
    reports.write_json(out / "basins.json", payload, cfg)
    reports.write_csv(out / "basins.csv", reports.basin_header(len(rep.observables)),
                      rep.rows(), cfg)
    return ok


COMMANDS = {
    "simulate": cmd_simulate,
    "unstable-field": cmd_unstable_field,
    "transversality": cmd_transversality,
    "ugibbs": cmd_ugibbs,
    "norm-scan": cmd_norm_scan,
    "inequality": cmd_inequality,
    "basins": cmd_basins,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = resolve_params(args)
        if args.threads is None and os.environ.get("DYNLAB_THREADS"):
            args.threads = os.environ["DYNLAB_THREADS"]
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ok = COMMANDS[args.command](args, params, out, _echo(args, params))
    except (ConfigError, ConstraintViolation, OSError) as exc:
        print(f"dynlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DynlabError as exc:
        print(f"dynlab: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    print(f"{args.command}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    qpmdesign design   --wavelength-nm 1550 --out runs/1550
    qpmdesign evaluate runs/1550/profile.csv --wavelength-nm 1550
    qpmdesign evaluate --periodic --wavelength-nm 1550
    qpmdesign dump-jsa runs/1550/profile.csv --wavelength-nm 1550 --log --out dumps
    qpmdesign gvm

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .dispersion import InteractionConfig, gvm_table, load_model, nominal_period
from .design import DesignRequest, _json_default, design, evaluate_profile
from .errors import ConfigError, ProfileFormatError, QpmError
from .jsa import (
    FrequencyGrid,
    GaussianPump,
    apply_filter,
    compute_jsa,
    dump_jsa,
)
from .optimizer import DesignWarning, LearnRunConfig
from .poling import import_profile, periodic_profile

log = logging.getLogger("qpmdesign")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _common(p):
    p.add_argument("--config", type=Path, help="JSON file with request fields; flags win")
    p.add_argument("--wavelength-nm", type=float, help="degenerate design wavelength")
    p.add_argument("--length-mm", type=float)
    p.add_argument("--lambda-min-um", type=float, help="minimum domain length")
    p.add_argument("--filters", type=_floats, help="filter bandwidths in nm, e.g. 8,16,25,40")
    p.add_argument("--filter-shape", choices=["rectangular", "gaussian"])
    p.add_argument("--grid", type=int, help="grid points per axis")
    p.add_argument("--dispersion", type=Path, help="Sellmeier coefficient JSON")
    p.add_argument("--out", type=Path)
    p.add_argument("--strict", action="store_true", help="treat design warnings as errors")


def build_parser():
    ap = argparse.ArgumentParser(prog="qpmdesign", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="run the full poling-design recipe")
    _common(p)
    p.add_argument("--iters", type=int, help="maximum learning iterations")
    p.add_argument("--rates", type=_floats, help="learning rates ra,rb")
    p.add_argument("--samples", type=int, help="slice samples")

    p = sub.add_parser("evaluate", help="filtered purities of an existing profile")
    _common(p)
    p.add_argument("profile", nargs="?", type=Path)
    p.add_argument("--periodic", action="store_true", help="use the 50%% periodic profile")
    p.add_argument("--sigma-p", type=float, help="pump bandwidth (rad/s); default from sidecar or scan")

    p = sub.add_parser("dump-jsa", help="write |f|^2 grids for a profile")
    _common(p)
    p.add_argument("profile", nargs="?", type=Path)
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--log", action="store_true", help="also write log10 intensity")
    p.add_argument("--sigma-p", type=float)
    p.add_argument("--span-nm", type=float, help="grid span; default 3x the filter or 60 nm")
    p.add_argument("--no-filter", action="store_true")

    p = sub.add_parser("gvm", help="GVM wavelength and first-order slopes")
    p.add_argument("--dispersion", type=Path)
    p.add_argument("--at", type=_floats, default=[1310.0, 1550.0, 1600.0],
                   help="degenerate wavelengths to report slopes at")
    p.add_argument("--pump-axis", default="y")
    p.add_argument("--signal-axis", default="y")
    p.add_argument("--idler-axis", default="z")
    p.add_argument("--json", action="store_true")
    return ap


def resolve_request(args):
    """Merge the JSON config file (if any) with command-line flags."""
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise FileNotFoundError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
    learn = dict(data.pop("learn", {}) or {})
    flag_map = {
        "wavelength_nm": "wavelength_nm", "length_mm": "length_mm",
        "lambda_min_um": "lambda_min_um", "filters": "filters_nm",
        "filter_shape": "filter_shape", "grid": "grid_points",
    }
    for flag, key in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    if getattr(args, "dispersion", None) is not None:
        data["dispersion"] = str(args.dispersion)
    if getattr(args, "iters", None) is not None:
        learn["max_iterations"] = args.iters
    if getattr(args, "rates", None) is not None:
        if len(args.rates) != 2:
            raise ConfigError("--rates expects ra,rb")
        learn["rate_target"], learn["rate_poling"] = args.rates
    if getattr(args, "samples", None) is not None:
        learn["samples"] = args.samples
    if "wavelength_nm" not in data:
        raise ConfigError("a design wavelength is required (--wavelength-nm)")
    try:
        data["learn"] = LearnRunConfig(**learn)
    except TypeError as exc:
        raise ConfigError(f"bad learn settings: {exc}") from exc
    return DesignRequest.from_dict(data)


def _load_profile(args, request, model, cfg):
    if args.periodic:
        period = nominal_period(cfg, model)
        return periodic_profile(period, cfg.length_m, request.lambda_min_um * 1e-6), {}
    if args.profile is None:
        raise ConfigError("give a profile CSV or --periodic")
    if not args.profile.exists():
        raise FileNotFoundError(f"{args.profile} not found")
    profile = import_profile(args.profile)
    sidecar = args.profile.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return profile, meta


def cmd_design(args):
    request = resolve_request(args)
    report, _ = design(request, out_dir=args.out)
    for row in report["purity_table"]:
        print(f"{row['filter_shape']:>11s} {row['filter_bw_nm']:6.1f} nm  "
              f"optimized {row['purity']:.6f}  periodic {row['baseline_purity']:.6f}")
    print(f"sigma_S = {report['marginal_sigma_nm']['signal']:.4f} nm, "
          f"sigma_I = {report['marginal_sigma_nm']['idler']:.4f} nm, "
          f"elliptical = {report['elliptical']}")
    print(f"peak separation after period tuning: "
          f"{report['step4']['separation_after_nm']:.4f} nm")
    if args.out is None:
        json.dump(report, sys.stdout, indent=2, default=_json_default)
        print()
    else:
        print(f"report: {report['files']['report']}")
    return report


def cmd_evaluate(args):
    request = resolve_request(args)
    model = load_model(request.dispersion)
    cfg = request.interaction()
    profile, meta = _load_profile(args, request, model, cfg)
    sigma_p = args.sigma_p if args.sigma_p is not None else meta.get("sigma_p")
    marg = meta.get("marginal_sigma_nm")
    points = request.grid_points if args.grid is not None else meta.get(
        "grid_points", request.grid_points)
    ev = evaluate_profile(profile, cfg, model, request.filters(), points, sigma_p, marg)
    table = [{"filter_shape": r["filter_shape"], "filter_bw_nm": r["filter_bw_nm"],
              "purity": r["purity"]} for r in ev.rows]
    result = {"purity_table": table, "sigma_p": ev.sigma_p,
              "marginal_sigma_nm": ev.marginal_sigma_nm, "grid_points": points}
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "evaluation.json").write_text(json.dumps(result, indent=2))
    print(json.dumps(result, indent=2))
    return result


def cmd_dump_jsa(args):
    request = resolve_request(args)
    model = load_model(request.dispersion)
    cfg = request.interaction()
    profile, meta = _load_profile(args, request, model, cfg)
    sigma_p = args.sigma_p if args.sigma_p is not None else meta.get("sigma_p")
    if sigma_p is None:
        sigma_p = evaluate_profile(profile, cfg, model, request.filters()[:1],
                                   request.grid_points).sigma_p
    filt = None if args.no_filter else min(request.filters(), key=lambda f: f.bandwidth_nm)
    span = args.span_nm or (3 * filt.bandwidth_nm if filt else 60.0)
    grid = FrequencyGrid.centered(cfg.degenerate_nm, cfg.degenerate_nm, span, span,
                                  request.grid_points)
    jsa = compute_jsa(grid, GaussianPump(cfg.omega_p0, sigma_p), profile, cfg, model)
    if filt is not None:
        jsa = apply_filter(jsa, filt, filt)
    out = args.out or Path(".")
    stem = "jsa_periodic" if args.periodic else "jsa"
    paths = dump_jsa(jsa, out, stem=stem, log=args.log,
                     extra={"dispersion_sha256": model.source_hash,
                            "filter_convention": "same filter on both arms"})
    print(json.dumps(paths, indent=2))
    return paths


def cmd_gvm(args):
    model = load_model(args.dispersion)
    cfg = InteractionConfig(1550.0 / 2, args.pump_axis, args.signal_axis, args.idler_axis)
    rep = gvm_table(cfg, model, args.at)
    if args.json:
        print(json.dumps({"gvm_nm": rep.gvm_nm, "rows": rep.rows}, indent=2))
    else:
        print(f"GVM wavelength: {rep.gvm_nm:.3f} nm")
        print(f"{'lambda_nm':>10s} {'gamma_S (s/m)':>15s} {'gamma_I (s/m)':>15s} {'period_um':>10s}")
        for r in rep.rows:
            print(f"{r['wavelength_nm']:10.3f} {r['gamma_s']:15.6e} {r['gamma_i']:15.6e} "
                  f"{r['period_um']:10.4f}")
    return rep


COMMANDS = {"design": cmd_design, "evaluate": cmd_evaluate, "dump-jsa": cmd_dump_jsa,
            "gvm": cmd_gvm}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if getattr(args, "strict", False):
                warnings.simplefilter("error", DesignWarning)
            result = COMMANDS[args.command](args)
        if getattr(args, "strict", False) and isinstance(result, dict) and result.get("warnings"):
            raise DesignWarning("; ".join(result["warnings"]))
    except DesignWarning as exc:
        print(f"error: warning treated as error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProfileFormatError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QpmError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line drivers: ``dg solve|converge|sweep|probe``.

Exit codes: 0 success, 2 configuration error, 3 Newton non-convergence,
4 invariant violation found by a self-check.
"""
import argparse
import csv
import io
import json
import sys
from dataclasses import asdict

import numpy as np

from .analysis import (NormSuite, PenaltyError, coercivity_probe, error_report, fit_rate,
                       lipschitz_probe, monotonicity_probe, pairwise_rates)
from .diffusion import EXACT_SOLUTIONS, get_model, make_manufactured, probe_assumptions
from .femspace import DGSpace
from .mesh import MeshError, build_structured, load_mesh
from .scheme import DGScheme, SchemeConfig, SchemeError
from .solver import NewtonConfig, newton_solve

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_INVARIANT = 0, 2, 3, 4

CSV_FIELDS = ["level", "h", "elements", "dofs", "err_l2", "err_energy", "err_theta",
              "err_sigma", "rate_l2", "rate_energy", "newton_iters", "converged"]


class ConfigError(ValueError):
    pass


def _number_or(word_choices):
    def parse(text):
        if text in word_choices:
            return text
        try:
            return float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected one of {sorted(word_choices)} or a number, got {text!r}") from None
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="poisson", help="registered diffusion model")
    common.add_argument("--scheme", default="sipg", choices=["br1", "br2", "sipg", "ldg"])
    common.add_argument("--degree", type=int, default=1, help="polynomial degree q")
    common.add_argument("--n", type=int, default=8, help="cells per side (coarsest level)")
    common.add_argument("--levels", type=int, default=4, help="refinement levels, n doubling")
    common.add_argument("--mesh", default=None, help="mesh file (solve/probe only)")
    common.add_argument("--penalty", type=_number_or({"auto"}), default="auto")
    common.add_argument("--safety", type=float, default=1.5)
    common.add_argument("--beta", type=_number_or({"zero", "switch"}), default="zero")
    common.add_argument("--exact", default="sine", choices=sorted(EXACT_SOLUTIONS))
    common.add_argument("--tol", type=float, default=1e-10, help="Newton residual tolerance")
    common.add_argument("--max-iter", type=int, default=50)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=100, help="probe sample count")
    common.add_argument("--penalties", default="0.25,0.5,1,2,4",
                        help="sweep: comma-separated multiples of the auto penalty")
    common.add_argument("--out", default=None, help="CSV (or JSON for probe) output path")
    common.add_argument("--config", default=None, help="JSON file mirroring the flags")

    parser = argparse.ArgumentParser(prog="dg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="single solve with error report")
    sub.add_parser("converge", parents=[common], help="convergence study over nested meshes")
    sub.add_parser("sweep", parents=[common], help="penalty sweep on one mesh")
    sub.add_parser("probe", parents=[common], help="structural-assumption probes")
    return parser, common


def parse_args(argv=None):
    """Parse flags; values from ``--config`` act as defaults for unset flags."""
    parser, common = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {a.dest for a in common._actions}
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**data)
        args = parser.parse_args(argv)
    return args


def _validate(args):
    try:
        get_model(args.model)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if args.degree < 1:
        raise ConfigError("--degree must be >= 1")
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    if args.command == "converge" and args.levels < 2:
        raise ConfigError("--levels must be >= 2 to compute rates")
    if not args.tol > 0:
        raise ConfigError("--tol must be positive")
    if isinstance(args.penalty, float) and args.penalty <= 0 and args.scheme != "br1":
        raise ConfigError("--penalty must be positive")


def make_scheme(args, mesh, penalty=None):
    cfg = SchemeConfig(family=args.scheme, degree=args.degree,
                       penalty=args.penalty if penalty is None else penalty,
                       beta=args.beta, safety=args.safety)
    return DGScheme(DGSpace(mesh, args.degree), args.model, cfg)


def solve_level(args, mesh, level=0, penalty=None):
    """Solve one manufactured problem; returns (row, scheme, u_h, report)."""
    problem = make_manufactured(args.model, args.exact)
    scheme = make_scheme(args, mesh, penalty)
    newton = NewtonConfig(atol=args.tol, rtol=args.tol, max_iter=args.max_iter)
    u, rep = newton_solve(scheme, problem, newton)
    err = error_report(scheme, u, problem)
    row = {"level": level, "h": mesh.h, "elements": mesh.n_elements,
           "dofs": scheme.ndofs, "err_l2": err.err_l2, "err_energy": err.err_energy,
           "err_theta": err.err_theta, "err_sigma": err.err_sigma,
           "rate_l2": None, "rate_energy": None,
           "newton_iters": rep.iterations, "converged": rep.converged}
    return row, scheme, u, rep


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10e}"


def write_csv(rows, fields, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    text = buf.getvalue()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def add_rates(rows):
    for k in range(1, len(rows)):
        for key, err in (("rate_l2", "err_l2"), ("rate_energy", "err_energy")):
            rows[k][key] = float(pairwise_rates([rows[k - 1][err], rows[k][err]])[0])
    return rows


def summary_rates(rows):
    """Least-squares slopes over all levels (at least three when available)."""
    h = [r["h"] for r in rows]
    return {key: fit_rate(h, [r[key] for r in rows])
            for key in ("err_l2", "err_energy", "err_theta", "err_sigma")}


def _mesh_for(args):
    return load_mesh(args.mesh) if args.mesh else build_structured(args.n)


def run_solve(args):
    row, _, _, rep = solve_level(args, _mesh_for(args))
    write_csv([row], CSV_FIELDS, args.out)
    if not rep.converged:
        print(f"dg: {rep.message}", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


def run_convergence(args):
    rows = []
    for level in range(args.levels):
        row, _, _, rep = solve_level(args, build_structured(args.n * 2 ** level), level)
        rows.append(row)
        if not rep.converged:
            add_rates(rows)
            write_csv(rows, CSV_FIELDS, args.out)
            print(f"dg: level {level}: {rep.message}", file=sys.stderr)
            return EXIT_NONCONV
    add_rates(rows)
    write_csv(rows, CSV_FIELDS, args.out)
    rates = summary_rates(rows)
    print("fitted rates: " + "  ".join(f"{k[4:]}={v:.3f}" for k, v in rates.items()),
          file=sys.stderr)
    bad = [r["level"] for r in rows if not np.isfinite(r["err_energy"])]
    if bad:
        print(f"dg: non-finite errors at levels {bad}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def run_sweep(args):
    mesh = _mesh_for(args)
    try:
        factors = [float(x) for x in str(args.penalties).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--penalties must be comma-separated numbers, got {args.penalties!r}")
    if not factors or min(factors) <= 0:
        raise ConfigError("--penalties needs positive multipliers")
    base = make_scheme(args, mesh).penalty
    rows, code = [], EXIT_OK
    for k, fac in enumerate(factors):
        row, _, _, rep = solve_level(args, mesh, k, penalty=fac * base)
        row["penalty"] = float(fac * base[0]) if len(base) else 0.0
        rows.append(row)
        if not rep.converged:
            code = EXIT_NONCONV
    write_csv(rows, ["penalty"] + CSV_FIELDS, args.out)
    return code


def run_probe(args):
    model = get_model(args.model)
    report = {"model": model.name,
              "continuous": asdict(probe_assumptions(model, max(args.samples, 1) * 20,
                                                     seed=args.seed))}
    mesh = _mesh_for(args)
    scheme = make_scheme(args, mesh)
    norms = NormSuite(scheme.space)
    n = args.samples
    report["discrete"] = {
        "scheme": args.scheme, "degree": args.degree, "elements": mesh.n_elements,
        "penalty": float(scheme.penalty.max()) if len(scheme.penalty) else 0.0,
        "coercivity": asdict(coercivity_probe(scheme, n, args.seed, norms)),
        "monotonicity": asdict(monotonicity_probe(scheme, n, args.seed, norms)),
        "lipschitz": asdict(lipschitz_probe(scheme, n, args.seed, norms)),
    }
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if report["discrete"]["coercivity"]["min"] <= 0:
        print("dg: discrete form is not coercive on the sampled fields", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


COMMANDS = {"solve": run_solve, "converge": run_convergence, "sweep": run_sweep,
            "probe": run_probe}


def main(argv=None):
    try:
        args = parse_args(argv)
        _validate(args)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    except (ConfigError, SchemeError, PenaltyError, MeshError) as exc:
        print(f"dg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

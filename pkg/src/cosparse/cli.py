"""Command-line front end.

Every run writes its outputs and a ``manifest.json`` (the resolved arguments
and seed) under ``--out``. Exit status: 0 on success, 1 on usage errors,
2 on numerical failures. ``COSPARSE_SEED`` overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import io as cio
from .exceptions import ConvergenceWarning, CosparseError
from .guarantees import erc_analysis, gap_one_step_check, gap_relation_residual, heuristic_row_l2, nsc_sampled
from .harness import (
    SMOKE_GRID,
    default_jobs,
    phantom_gap_config,
    phantom_statistics,
    run_phantom_recovery,
    run_phase_diagrams,
    run_snr_vs_lines,
    shepp_logan_phantom,
)
from .model import (
    Cosupport,
    generate_cosparse_signal,
    kappa_brute_force,
    kappa_dif_bounds,
    kappa_general_position,
    subspace_dim_dif,
    uniqueness_verdict,
)
from .operators import (
    PixelGraph,
    finite_difference_2d,
    gaussian_measurement,
    radial_fourier_system,
    random_tight_frame_operator,
)
from .solvers import GapConfig, analysis_l1_solve, debias, gap_solve

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

PRESETS = {
    "smoke": {"delta": SMOKE_GRID, "rho": SMOKE_GRID, "trials": 20},
    "full": {"delta": np.round(np.linspace(0.05, 1.0, 16), 4), "rho": np.round(np.linspace(0.05, 1.0, 16), 4), "trials": 50},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _float_list(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v]


def _int_list(s: str) -> list[int]:
    if ":" in s:
        parts = [int(v) for v in s.split(":")]
        return list(range(*parts))
    return [int(v) for v in s.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default="cosparse-out", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=0, help="random seed (COSPARSE_SEED overrides)")

    parser = _Parser(prog="cosparse", description="Cosparse analysis recovery toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-operator", parents=[common], help="build an analysis operator or a measurement system")
    p.add_argument("--kind", required=True, choices=["tight-frame", "dif2d", "gaussian", "radial"])
    p.add_argument("--p", type=int, help="rows of a tight frame")
    p.add_argument("--d", type=int, help="signal dimension (tight frame, gaussian)")
    p.add_argument("--m", type=int, help="measurements (gaussian)")
    p.add_argument("--n", type=int, help="image side (dif2d, radial)")
    p.add_argument("--lines", type=int, help="radial lines (radial)")

    p = sub.add_parser("gen-signal", parents=[common], help="draw a cosparse signal (and its measurements)")
    p.add_argument("--operator", required=True, help="operator descriptor JSON")
    p.add_argument("--l", type=int, required=True, help="cosparsity")
    p.add_argument("--measurement", help="measurement descriptor JSON; also writes y and problem.json")

    p = sub.add_parser("solve", parents=[common], help="recover a signal")
    p.add_argument("algorithm", choices=["gap", "l1"])
    p.add_argument("--problem", help="problem descriptor JSON (replaces --operator/--measurement/--y)")
    p.add_argument("--operator")
    p.add_argument("--measurement")
    p.add_argument("--y", help="measurement vector (.npy or text)")
    p.add_argument("--t", type=float, default=1.0, help="GAP selection factor in (0, 1]")
    p.add_argument("--lam", type=float, help="GAP regularization weight (regularized initializer)")
    p.add_argument("--initializer", choices=["exact", "regularized"])
    p.add_argument("--target-l", type=int, help="GAP target cosparsity")
    p.add_argument("--max-iter", type=int, help="iteration cap")
    p.add_argument("--static-stop", action="store_true", help="GAP: stop when the estimate is static")
    p.add_argument("--tol", type=float, default=1e-9, help="l1 tolerance")
    p.add_argument("--no-debias", action="store_true", help="l1: skip debiasing")

    p = sub.add_parser("certify", parents=[common], help="evaluate a recovery certificate")
    p.add_argument("kind", choices=["erc", "nsc", "gap-relation", "heuristic", "one-step"])
    p.add_argument("--operator", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--cosupport", help="JSON list of row indices, or a cosupport JSON")
    p.add_argument("--x", help="signal file; its cosupport is used when --cosupport is absent")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--t", type=float, default=1.0)

    p = sub.add_parser("kappa", parents=[common], help="largest analysis subspace dimension")
    p.add_argument("mode", choices=["exact", "bounds", "brute"])
    p.add_argument("--d", type=int)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--dif", action="store_true", help="finite differences on an n x n lattice")
    p.add_argument("--n", type=int)
    p.add_argument("--operator", help="dense operator descriptor (brute)")

    p = sub.add_parser("unique", parents=[common], help="uniqueness verdict for m measurements")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--kappa", type=float, help="exact kappa")
    p.add_argument("--lower", type=float)
    p.add_argument("--upper", type=float)
    p.add_argument("--dif", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--l", type=int)

    p = sub.add_parser("phase-diagram", parents=[common], help="empirical phase diagram")
    p.add_argument("--sigma", type=_float_list, default=[2.0], help="comma-separated redundancies p/d")
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--preset", choices=sorted(PRESETS), default="smoke")
    p.add_argument("--delta", type=_float_list)
    p.add_argument("--rho", type=_float_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--alg", default="gap,l1", help="comma-separated: gap,l1")
    p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")

    p = sub.add_parser("phantom", parents=[common], help="phantom recovery from radial Fourier lines")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--lines", type=int, default=14)
    p.add_argument("--alg", choices=["gap", "l1", "backprojection"], default="gap")
    p.add_argument("--variant", choices=["original", "modified"], default="original")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--bits", type=int, choices=[8, 16], default=8)

    p = sub.add_parser("snr-sweep", parents=[common], help="SNR versus number of radial lines")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--lines", type=_int_list, default=list(range(4, 31, 2)), help="comma list or start:stop:step")
    p.add_argument("--alg", default="gap,l1,backprojection")
    p.add_argument("--jobs", type=int)
    return parser


def _seed(args) -> int:
    env = os.environ.get("COSPARSE_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"COSPARSE_SEED must be an integer, got {env!r}")
    return args.seed


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): " + ", ".join("--" + n for n in missing))


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True, default=cio._default))


def cmd_gen_operator(args, out: Path) -> dict:
    k = args.kind
    if k == "tight-frame":
        _require(args, "p", "d")
        path = cio.save_operator(out, random_tight_frame_operator(args.p, args.d, args.seed))
    elif k == "dif2d":
        _require(args, "n")
        path = cio.save_operator(out, finite_difference_2d(args.n))
    elif k == "gaussian":
        _require(args, "m", "d")
        path = cio.save_measurement(out, gaussian_measurement(args.m, args.d, args.seed))
    else:
        _require(args, "n", "lines")
        M = radial_fourier_system(args.n, args.lines)
        path = cio.save_measurement(out, M)
        return {"descriptor": path.name, "m": M.m, "d": M.d}
    return {"descriptor": path.name}


def cmd_gen_signal(args, out: Path) -> dict:
    omega = cio.load_operator(args.operator)
    sig = generate_cosparse_signal(omega, args.l, args.seed)
    cio.save_array(out / "x.npy", sig.x)
    cio.write_json(out / "cosupport.json", {"p": omega.p, "indices": sig.cosupport.tolist()})
    summary = {"x": "x.npy", "cosupport": "cosupport.json", "cosparsity": sig.cosparsity}
    if args.measurement:
        M = cio.load_measurement(args.measurement)
        cio.save_array(out / "y.npy", M.apply(sig.x))
        cio.write_json(
            out / "problem.json",
            {
                "operator": str(Path(args.operator).resolve()),
                "measurement": str(Path(args.measurement).resolve()),
                "y": "y.npy",
            },
        )
        summary.update({"y": "y.npy", "problem": "problem.json"})
    return summary


def _load_problem(args):
    if args.problem:
        return cio.load_problem(args.problem)
    _require(args, "operator", "measurement", "y")
    return cio.load_operator(args.operator), cio.load_measurement(args.measurement), cio.load_array(args.y)


def cmd_solve(args, out: Path) -> dict:
    omega, M, y = _load_problem(args)
    if args.algorithm == "gap":
        cfg = GapConfig(
            t=args.t,
            lam=args.lam,
            initializer=args.initializer,
            target_cosparsity=args.target_l,
            max_iterations=args.max_iter,
            stop_on_static=args.static_stop,
        )
        res = gap_solve(M, y, omega, cfg)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            x, info = analysis_l1_solve(M, y, omega, tol=args.tol, max_iter=args.max_iter or 20000, full_output=True)
        if args.no_debias:
            from .model import cosupport_of
            from .solvers import RecoveryResult

            status = "converged" if info.converged else "max-iter"
            res = RecoveryResult(x, cosupport_of(omega, x), info.iterations, status, [], {"objective": info.objective})
        else:
            res = debias(x, omega, M, y)
            res.iterations = info.iterations
            res.flags.update({"l1_converged": info.converged, "objective": info.objective})
    cio.write_result(out, res)
    return {"result": "result.json", "status": res.status, "iterations": res.iterations, "cosparsity": len(res.cosupport)}


def _cosupport(args, omega) -> Cosupport:
    if args.cosupport:
        data = cio.read_json(args.cosupport)
        idx = data["indices"] if isinstance(data, dict) else data
        return Cosupport(idx, omega.p)
    if args.x:
        from .model import cosupport_of

        return cosupport_of(omega, cio.load_array(args.x))
    raise UsageError("certify: provide --cosupport or --x")


def cmd_certify(args, out: Path) -> dict:
    omega = cio.load_operator(args.operator)
    M = cio.load_measurement(args.measurement)
    lam = _cosupport(args, omega)
    if args.kind == "erc":
        cert = erc_analysis(omega, lam, M)
    elif args.kind == "nsc":
        cert = nsc_sampled(omega, lam, M, args.samples, args.seed)
    elif args.kind == "heuristic":
        cert = heuristic_row_l2(omega, lam, M)
    else:
        if not args.x:
            raise UsageError(f"certify {args.kind}: --x is required")
        x0 = cio.load_array(args.x)
        if args.kind == "gap-relation":
            cert = gap_relation_residual(omega, lam, M, M.apply(x0), x0)
        else:
            cert = gap_one_step_check(omega, lam, M, x0, args.t)
    data = cert.to_dict()
    data["metadata"]["seed"] = args.seed
    cio.write_json(out / "certificate.json", data)
    return data


def cmd_kappa(args, out: Path) -> dict:
    if args.mode == "exact":
        if args.dif:
            raise UsageError("kappa exact: no closed form for finite differences; use bounds or brute")
        _require(args, "d")
        return {"kappa": kappa_general_position(args.d, args.l), "d": args.d, "l": args.l}
    if args.mode == "bounds":
        if not args.dif:
            raise UsageError("kappa bounds: only available with --dif")
        _require(args, "n")
        d = args.n * args.n
        lo, hi = kappa_dif_bounds(d, args.l)
        verdict = uniqueness_verdict((lo, hi), 0)
        return {
            "d": d,
            "l": args.l,
            "lower": lo,
            "upper": hi,
            "integer_range": verdict.required_m["known"],
            "m_known_cosupport": verdict.required_m["known"],
            "m_unknown_cosupport": verdict.required_m["unknown"],
        }
    if args.dif:
        _require(args, "n")
        target = PixelGraph(args.n)
    else:
        _require(args, "operator")
        target = cio.load_operator(args.operator)
    return {"kappa": kappa_brute_force(target, args.l), "l": args.l}


def cmd_unique(args, out: Path) -> dict:
    if args.kappa is not None:
        kappa = args.kappa
    elif args.lower is not None or args.upper is not None:
        _require(args, "upper")
        kappa = (args.lower, args.upper)
    elif args.dif:
        _require(args, "n", "l")
        kappa = tuple(kappa_dif_bounds(args.n * args.n, args.l))
    else:
        _require(args, "d", "l")
        kappa = kappa_general_position(args.d, args.l)
    data = uniqueness_verdict(kappa, args.m).to_dict()
    cio.write_json(out / "verdict.json", data)
    return data


def cmd_phase_diagram(args, out: Path) -> dict:
    preset = PRESETS[args.preset]
    delta = args.delta or preset["delta"]
    rho = args.rho or preset["rho"]
    trials = args.trials or preset["trials"]
    algs = [a for a in args.alg.split(",") if a]
    for a in algs:
        if a not in ("gap", "l1"):
            raise UsageError(f"phase-diagram: unknown algorithm {a!r}")
    jobs = args.jobs or default_jobs()
    files = []
    for sigma in args.sigma:
        grids = run_phase_diagrams(sigma, args.d, delta, rho, trials, algs, args.seed, jobs)
        for alg, grid in grids.items():
            name = f"phase_{alg}_sigma{sigma:g}.csv"
            cio.write_phase_csv(out / name, grid)
            files.append(name)
    return {"files": files}


def cmd_phantom(args, out: Path) -> dict:
    cfg = phantom_gap_config(t=args.t) if args.alg == "gap" else None
    run = run_phantom_recovery(args.n, args.lines, args.alg, cfg, variant=args.variant)
    truth = shepp_logan_phantom(args.n, args.variant)
    lo, hi = float(truth.min()), float(truth.max())
    cio.write_pgm(out / "phantom.pgm", truth, args.bits)
    cio.write_pgm(out / "recovered.pgm", run.image, args.bits, lo, hi)
    cio.save_array(out / "recovered.npy", run.image)
    if run.missed_mask is not None:
        cio.write_pgm(out / "missed.pgm", run.missed_mask, 8, 0, 1)
    summary = {
        "n": run.n,
        "lines": run.lines,
        "m": run.m,
        "algorithm": run.algorithm,
        "snr_db": run.snr_db,
        "relative_error": run.relative_error,
        "perfect": run.perfect,
        "status": run.status,
        "iterations": run.iterations,
        "phantom": phantom_statistics(truth),
    }
    cio.write_json(out / "result.json", summary)
    return summary


def _snr_task(args_tuple):
    n, L, alg = args_tuple
    return run_snr_vs_lines(n, [L], (alg,))


def cmd_snr_sweep(args, out: Path) -> dict:
    algs = [a for a in args.alg.split(",") if a]
    for a in algs:
        if a not in ("gap", "l1", "backprojection"):
            raise UsageError(f"snr-sweep: unknown algorithm {a!r}")
    jobs = args.jobs or default_jobs()
    tasks = [(args.n, L, a) for L in args.lines for a in algs]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = [r for chunk in pool.map(_snr_task, tasks) for r in chunk]
    else:
        records = [r for t in tasks for r in _snr_task(t)]
    cio.write_snr_csv(out / "snr.csv", records)
    return {"file": "snr.csv", "runs": len(records)}


COMMANDS = {
    "gen-operator": cmd_gen_operator,
    "gen-signal": cmd_gen_signal,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "kappa": cmd_kappa,
    "unique": cmd_unique,
    "phase-diagram": cmd_phase_diagram,
    "phantom": cmd_phantom,
    "snr-sweep": cmd_snr_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        args.seed = _seed(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "command": args.command,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "config": {k: v for k, v in vars(args).items()},
            "seed": args.seed,
            "version": __version__,
        }
        cio.write_json(out / "manifest.json", manifest)
        summary = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"cosparse: cannot read input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CosparseError, np.linalg.LinAlgError, ValueError, MemoryError) as exc:
        print(f"cosparse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _emit(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

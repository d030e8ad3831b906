"""Command-line interface: ``betafact {phantom,fit,sweep,eval,replay}``.

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

Every command accepts ``--config FILE`` with ``key = value`` lines using the
long flag names (``max_iter = 500``, ``fix_factors = true``); flags given on
the command line override the file. Each command writes a ``manifest.json``
whose ``argv`` entry replays the run via ``betafact replay``.
"""

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .divergence import DomainError
from .initialization import InitMethod, InitSpec, initialize
from .metrics import MetricRecord, report
from .models import ModelKind, ModelSpec, Theta, check_constraints, model_image
from .phantom import NOISE_PRESETS, NoiseFamily, NoiseSpec, PhantomSpec, generate
from .solvers import NumericalError, SolverConfig, default_epsilon, default_lambda, fit

log = logging.getLogger("betafact")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_phantom_args(p, prefix=""):
    g = p.add_argument_group("phantom")
    g.add_argument("--L", type=int, default=20, help="frames")
    g.add_argument("--N", type=int, default=2500, help="voxels")
    g.add_argument("--K", type=int, default=4, help="factors")
    g.add_argument("--nv", type=int, default=3, help="variability basis size")
    g.add_argument("--noise", choices=[f.value for f in NoiseFamily], default=None)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--scale", type=float, default=1.0, help="Poisson counts per unit activity")
    g.add_argument("--shape", type=float, default=1.0, help="Gamma shape")
    g.add_argument("--preset", choices=sorted(NOISE_PRESETS), default=None,
                   help="noise regime; also sets the default lambda")
    g.add_argument(f"--{prefix}seed", dest="phantom_seed" if prefix else "seed", type=int, default=0)


def _add_fit_args(p, standalone):
    g = p.add_argument_group("fit")
    g.add_argument("--model", choices=[k.value for k in ModelKind], default="lmm")
    g.add_argument("--lambda", dest="lam", type=float, default=None)
    g.add_argument("--epsilon", type=float, default=None,
                   help="relative-decrease stopping threshold (default 1e-5 with fixed factors, else 1e-4)")
    g.add_argument("--max-iter", type=int, default=10_000)
    g.add_argument("--init", choices=[m.value for m in InitMethod], default="kmeans")
    g.add_argument("--kmeans-iters", type=int, default=100)
    g.add_argument("--fix-factors", action="store_true")
    g.add_argument("--xi", action="store_true", help="use the strict MM exponent in the variability update")
    g.add_argument("--free-sbf", action="store_true", help="also update the first factor under SLMM")
    g.add_argument("--floor-data", type=float, default=None, help="clamp data zeros to this value")
    g.add_argument("--b-scale", type=float, default=0.1)
    if standalone:
        g.add_argument("--beta", type=float, default=1.0)
        g.add_argument("--y", required=True, help="data matrix file")
        g.add_argument("--k", type=int, default=None, help="number of factors")
        g.add_argument("--v", default=None, help="variability basis (SLMM)")
        g.add_argument("--m-init", default=None)
        g.add_argument("--a-init", default=None)
        g.add_argument("--b-init", default=None)
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--preset", choices=sorted(NOISE_PRESETS), default=None,
                       help="take the default lambda from this noise regime")


def build_parser():
    parser = argparse.ArgumentParser(prog="betafact", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic phantom with ground truth")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=[k.value for k in ModelKind], default="slmm")
    p.add_argument("--noise-seed", type=int, default=None)
    _add_phantom_args(p)

    p = sub.add_parser("fit", help="fit a factor model to a data matrix")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    _add_fit_args(p, standalone=True)

    p = sub.add_parser("sweep", help="fit phantom replicates over a grid of beta and seeds")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--betas", type=_float_list, required=True)
    p.add_argument("--seeds", type=_int_list, required=True)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (capped by BETAFACT_THREADS)")
    _add_phantom_args(p, prefix="phantom-")
    _add_fit_args(p, standalone=False)

    p = sub.add_parser("eval", help="score a fit against phantom ground truth")
    p.add_argument("--fit", required=True, help="directory written by 'fit'")
    p.add_argument("--gt", required=True, help="directory written by 'phantom'")
    p.add_argument("--out", default=None, help="metrics CSV (default: <fit>/metrics.csv)")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_tokens(subparser, path):
    """Translate a run-config file into argv tokens for ``subparser``."""
    try:
        entries = io.read_run_config(path)
    except (OSError, io.FormatError) as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    tokens = []
    for key, value in entries.items():
        flag = f"--{key}"
        action = subparser._option_string_actions.get(flag)
        if action is None or flag == "--config":
            raise UsageError(f"{path}: unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("true", "yes", "1", "on"):
                tokens.append(flag)
            elif value.lower() not in ("false", "no", "0", "off"):
                raise UsageError(f"{path}: {key} expects true/false, got {value!r}")
        else:
            tokens += [flag, value]
    return tokens


def expand_argv(parser, argv):
    """Splice ``--config`` contents in front of the explicit flags."""
    argv = list(argv)
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    cmd_idx = next((i for i, a in enumerate(argv) if a in ("phantom", "fit", "sweep")), None)
    if cmd_idx is None:
        return argv
    rest = argv[cmd_idx + 1:]
    path = None
    kept = []
    it = iter(range(len(rest)))
    for i in it:
        a = rest[i]
        if a == "--config" and i + 1 < len(rest):
            path = rest[i + 1]
            next(it, None)
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        else:
            kept.append(a)
    if path is None:
        return argv
    tokens = _config_tokens(_subparser(parser, argv[cmd_idx]), path)
    return argv[: cmd_idx + 1] + tokens + kept


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _noise_from_args(args):
    if args.preset and args.noise:
        raise UsageError("--preset and --noise are mutually exclusive")
    if args.preset:
        return NOISE_PRESETS[args.preset]
    return NoiseSpec(args.noise or "none", sigma=args.sigma, scale=args.scale, shape=args.shape)


def _resolve_lambda(args, kind, beta):
    if kind is not ModelKind.SLMM:
        if args.lam not in (None, 0.0):
            raise UsageError("--lambda only applies to --model slmm")
        return 0.0
    if args.lam is not None:
        return args.lam
    if args.preset:
        return default_lambda(args.preset, beta)
    raise UsageError("--model slmm needs --lambda (or --preset for the tabulated default)")


def _solver_config(args, seed):
    eps = args.epsilon if args.epsilon is not None else default_epsilon(args.fix_factors)
    return SolverConfig(
        epsilon=eps,
        max_iter=args.max_iter,
        use_xi_exponent=args.xi,
        fix_factors=args.fix_factors,
        floor_data=args.floor_data,
        rng_seed=seed,
    )


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read(path, what):
    try:
        return io.read_matrix(path)
    except (OSError, io.FormatError) as exc:
        raise UsageError(f"cannot read {what}: {exc}") from exc


def _manifest(command, argv, **extra):
    return {"command": command, "argv": list(argv), "version": __version__, **extra}


def _write_theta(out, theta):
    io.write_matrix(out / "M.bfmat", theta.M)
    io.write_matrix(out / "A.bfmat", theta.A)
    if theta.B is not None:
        io.write_matrix(out / "B.bfmat", theta.B)
        io.write_matrix(out / "V.bfmat", theta.V)
    io.write_matrix(out / "X.bfmat", model_image(theta))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_phantom(args, argv):
    try:
        spec = PhantomSpec(L=args.L, N=args.N, K=args.K, Nv=args.nv, kind=args.model,
                           noise=_noise_from_args(args), seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    data, gt = generate(spec, noise_seed=args.noise_seed)
    out = _out_dir(args.out)
    io.write_matrix(out / "Y.bfmat", data.values)
    io.write_matrix(out / "gt_M.bfmat", gt.M)
    io.write_matrix(out / "gt_A.bfmat", gt.A)
    io.write_matrix(out / "gt_X.bfmat", gt.X)
    if gt.B is not None:
        io.write_matrix(out / "gt_V.bfmat", gt.V)
        io.write_matrix(out / "gt_B.bfmat", gt.B)
    io.write_manifest(out / "manifest.json", _manifest(
        "phantom", argv,
        spec=spec.to_dict(),
        noise_seed=args.noise_seed,
        frame_durations=data.frame_durations.tolist(),
    ))
    return EXIT_OK


def cmd_fit(args, argv):
    kind = ModelKind(args.model)
    if kind is ModelKind.SLMM and args.v is None:
        raise UsageError("--model slmm requires --v")
    Y = _read(args.y, "data")
    V = _read(args.v, "variability basis") if args.v else None
    if args.init == "file" and args.m_init is None:
        raise UsageError("--init file requires --m-init")
    if args.fix_factors and args.m_init is None and args.init != "kmeans":
        raise UsageError("--fix-factors needs factors from --m-init or k-means")
    K = args.k
    if K is None:
        if args.m_init is None:
            raise UsageError("--k is required unless --m-init is given")
        K = _read(args.m_init, "initial factors").shape[1]
    spec = ModelSpec(kind, args.beta, _resolve_lambda(args, kind, args.beta))
    init = InitSpec(
        method="file" if args.m_init else args.init,
        seed=args.seed,
        kmeans_iters=args.kmeans_iters,
        m_path=args.m_init,
        a_path=args.a_init,
        b_path=args.b_init,
        b_scale=args.b_scale,
    )
    try:
        theta0 = initialize(Y, spec, K, init, V=V, sbf_pinned=kind is ModelKind.SLMM and not args.free_sbf)
    except (ValueError, OSError) as exc:
        raise UsageError(f"invalid initial state: {exc}") from exc
    cfg = _solver_config(args, args.seed)
    try:
        result = fit(Y, spec, theta0, cfg)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc

    out = _out_dir(args.out)
    _write_theta(out, result.theta)
    io.write_csv(out / "objective_trace.csv", ["iteration", "objective"],
                 [(i, float(J)) for i, J in enumerate(result.objective_trace)])
    io.write_manifest(out / "manifest.json", _manifest(
        "fit", argv,
        model=kind.value,
        beta=spec.beta,
        lam=spec.lam,
        epsilon=cfg.epsilon,
        max_iter=cfg.max_iter,
        sbf_pinned=result.theta.sbf_pinned,
        iterations=result.iterations,
        termination=result.termination.value,
        objective=result.objective,
        monotonicity_violations=result.monotonicity_violations,
    ))
    return EXIT_OK


SWEEP_METRICS = ("psnr",) + MetricRecord.FIELDS[1:]


def _sweep_cell(params):
    """Fit one (beta, seed) cell; returns (row dict, wall seconds)."""
    beta, seed, pspec, opts = params
    t0 = time.perf_counter()
    row = {"beta": beta, "seed": seed, "status": "ok", "iterations": "", "termination": ""}
    try:
        data, gt = generate(pspec, noise_seed=seed)
        kind = pspec.kind
        spec = ModelSpec(kind, beta, opts["lam"][beta])
        Y = data.values
        if opts["fix_factors"]:
            N = Y.shape[1]
            rng_seed = seed
            from .initialization import init_internal_random, init_proportions_random

            A0 = init_proportions_random(pspec.K, N, seed=rng_seed, stochastic=spec.stochastic)
            B0 = None
            if kind is ModelKind.SLMM:
                B0 = init_internal_random(pspec.Nv, N, seed=rng_seed + 1, scale=opts["b_scale"])
            theta0 = Theta(gt.M.copy(), A0, gt.V, B0, sbf_pinned=kind is ModelKind.SLMM)
        else:
            init = InitSpec(method=opts["init"], seed=seed, kmeans_iters=opts["kmeans_iters"],
                            b_scale=opts["b_scale"])
            theta0 = initialize(Y, spec, pspec.K, init, V=gt.V,
                                sbf_pinned=kind is ModelKind.SLMM and not opts["free_sbf"])
        result = fit(Y, spec, theta0, opts["cfg"])
        rec = report(result.theta, gt, pin_first=result.theta.sbf_pinned)
        row.update(rec.as_dict())
        row["iterations"] = result.iterations
        row["termination"] = result.termination.value
    except (NumericalError, DomainError, ValueError) as exc:
        row["status"] = f"error: {exc}".replace("\n", " ")
    return row, time.perf_counter() - t0


def _workers(requested):
    cap = os.environ.get("BETAFACT_THREADS")
    n = requested or (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def aggregate_rows(rows, betas):
    """One summary row per beta: mean and sample std over successful runs.

    Infinite PSNRs (exact reconstructions) are excluded from the PSNR
    statistics and counted in the status field.
    """
    out = []
    for beta in betas:
        ok = [r for r in rows if r["beta"] == beta and r["status"] == "ok"]
        agg = {"beta": beta, "seed": "aggregate", "iterations": "", "termination": ""}
        flags = [f"n={len(ok)}"]
        for name in SWEEP_METRICS:
            vals = np.array([float(r[name]) for r in ok], dtype=float)
            if name == "psnr":
                n_inf = int(np.sum(np.isinf(vals)))
                if n_inf:
                    flags.append(f"inf_excluded={n_inf}")
            vals = vals[np.isfinite(vals)]
            agg[name] = float(np.mean(vals)) if vals.size else math.nan
            agg[f"{name}_std"] = float(np.std(vals, ddof=1)) if vals.size > 1 else (0.0 if vals.size else math.nan)
        if ok:
            agg["iterations"] = float(np.mean([r["iterations"] for r in ok]))
        agg["status"] = ";".join(flags)
        out.append(agg)
    return out


def sweep_header():
    cols = ["beta", "seed", "status"]
    for name in SWEEP_METRICS:
        cols += [name, f"{name}_std"]
    return cols + ["iterations", "termination"]


def cmd_sweep(args, argv):
    try:
        pspec = PhantomSpec(L=args.L, N=args.N, K=args.K, Nv=args.nv, kind=args.model,
                            noise=_noise_from_args(args), seed=args.phantom_seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not args.betas or not args.seeds:
        raise UsageError("--betas and --seeds must be non-empty")
    lam = {b: _resolve_lambda(args, pspec.kind, b) for b in args.betas}
    opts = {
        "lam": lam,
        "cfg": _solver_config(args, 0),
        "fix_factors": args.fix_factors,
        "init": args.init,
        "kmeans_iters": args.kmeans_iters,
        "b_scale": args.b_scale,
        "free_sbf": args.free_sbf,
    }
    cells = [(b, s, pspec, opts) for b in args.betas for s in args.seeds]
    workers = _workers(args.jobs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = [r for r, _ in results]
    header = sweep_header()
    table = [[row.get(c, "") for c in header] for row in rows + aggregate_rows(rows, args.betas)]

    out = _out_dir(args.out)
    io.write_csv(out / "summary.csv", header, table)
    io.write_csv(out / "timing.csv", ["beta", "seed", "wall_seconds"],
                 [(r["beta"], r["seed"], t) for r, t in results])
    io.write_manifest(out / "manifest.json", _manifest(
        "sweep", argv, phantom=pspec.to_dict(), betas=args.betas, seeds=args.seeds,
        lam={str(k): v for k, v in lam.items()},
    ))
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        log.warning("%d of %d sweep cells failed", failed, len(rows))
    return EXIT_OK


def cmd_eval(args, argv):
    fdir, gdir = Path(args.fit), Path(args.gt)
    M = _read(fdir / "M.bfmat", "fitted factors")
    A = _read(fdir / "A.bfmat", "fitted proportions")
    B = _read(fdir / "B.bfmat", "fitted variability") if (fdir / "B.bfmat").exists() else None
    V = _read(fdir / "V.bfmat", "variability basis") if B is not None else None
    pinned = False
    if (fdir / "manifest.json").exists():
        pinned = bool(io.read_manifest(fdir / "manifest.json").get("sbf_pinned", False))
    from .phantom import GroundTruth

    gt = GroundTruth(
        M=_read(gdir / "gt_M.bfmat", "ground-truth factors"),
        A=_read(gdir / "gt_A.bfmat", "ground-truth proportions"),
        X=_read(gdir / "gt_X.bfmat", "ground-truth image"),
        V=_read(gdir / "gt_V.bfmat", "ground-truth basis") if (gdir / "gt_V.bfmat").exists() else None,
        B=_read(gdir / "gt_B.bfmat", "ground-truth variability") if (gdir / "gt_B.bfmat").exists() else None,
    )
    if M.shape != gt.M.shape or A.shape != gt.A.shape:
        raise UsageError(f"shape mismatch: fit M{M.shape} A{A.shape} vs truth M{gt.M.shape} A{gt.A.shape}")
    if B is not None and gt.B is not None and B.shape != gt.B.shape:
        raise UsageError(f"shape mismatch: fit B{B.shape} vs truth B{gt.B.shape}")
    try:
        rec = report(Theta(M, A, V, B, sbf_pinned=pinned), gt)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else fdir / "metrics.csv"
    d = rec.as_dict()
    io.write_csv(out, list(d), [[float(v) for v in d.values()]])
    return EXIT_OK


def cmd_replay(args, argv):
    try:
        manifest = io.read_manifest(args.manifest)
        recorded = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot replay {args.manifest}: {exc}") from exc
    return main(recorded)


COMMANDS = {"phantom": cmd_phantom, "fit": cmd_fit, "sweep": cmd_sweep, "eval": cmd_eval, "replay": cmd_replay}


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = expand_argv(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"betafact: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"betafact {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"betafact {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

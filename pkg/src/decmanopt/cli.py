"""Command-line entry point.

Subcommands mirror the harness: ``gen-data`` writes dataset bundles,
``run`` executes one experiment from a config file (any key overridable
with ``--set key=value``), ``sweep`` grid-searches the step size,
``rate-study`` measures consensus contraction, and ``check`` runs the
projection inequality probes.

Exit codes: 0 on success, 1 on configuration or validation errors, 2 when
a run aborts (projection tube violation).  Diagnostics go to stderr; data
only to files under the configured output directory.
"""

import argparse
import os
import sys

import numpy as np

from . import harness, manifolds, problems
from .errors import ConfigError, FormatError, InvalidInputError, TubeViolationError


class _Parser(argparse.ArgumentParser):
    """argparse with the documented exit code for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_workers():
    env = os.environ.get("MC_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _build_parser():
    parser = _Parser(prog="decmanopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    gen = sub.add_parser("gen-data", parents=[], help="generate a synthetic dataset bundle")
    gen.add_argument("--kind", required=True, choices=["pca", "gevp", "lrmc"])
    gen.add_argument("--out", required=True, help="bundle directory (created if missing)")
    gen.add_argument("--n", type=int, default=8, help="agent count")
    gen.add_argument("--d", type=int, default=10, help="ambient columns (pca/gevp)")
    gen.add_argument("--r", type=int, default=5, help="frame columns")
    gen.add_argument("--m-i", type=int, default=1000, help="rows per agent (pca/gevp)")
    gen.add_argument("--xi", type=float, default=0.8, help="singular value decay (pca/gevp)")
    gen.add_argument("--m", type=int, default=100, help="matrix rows (lrmc)")
    gen.add_argument("--T", type=int, default=1000, help="matrix columns (lrmc)")
    gen.add_argument("--seed", type=int, default=0)

    def add_run_flags(p):
        p.add_argument("--config", help="config file of flat dotted keys")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--workers", type=int, default=_default_workers(),
                       help="worker threads for sweep candidates (results do not depend on it)")

    runp = sub.add_parser("run", help="run one experiment")
    add_run_flags(runp)
    runp.add_argument("--no-clobber", action="store_true", help="refuse to overwrite outputs")

    sweepp = sub.add_parser("sweep", help="grid-search the step-size coefficient")
    add_run_flags(sweepp)
    sweepp.add_argument("--betas", required=True, help="comma-separated candidate list")
    sweepp.add_argument("--metric", default="grad_norm_sq", choices=["objective", "grad_norm_sq"])

    ratep = sub.add_parser("rate-study", help="per-step consensus contraction ratios")
    add_run_flags(ratep)

    checkp = sub.add_parser("check", help="projection inequality probes")
    checkp.add_argument("--manifold", default="stiefel", choices=["stiefel", "generalized-stiefel"])
    checkp.add_argument("--d", type=int, default=10)
    checkp.add_argument("--r", type=int, default=5)
    checkp.add_argument("--trials", type=int, default=1000)
    checkp.add_argument("--noise-scale", type=float, default=None)
    checkp.add_argument("--gamma", type=float, default=None)
    checkp.add_argument("--seed", type=int, default=0)
    return parser


def _load_config(args):
    raw = harness.parse_config_file(args.config) if args.config else {}
    return harness.resolve_config(harness.apply_overrides(raw, args.set))


def _cmd_gen_data(args):
    if args.kind == "pca":
        problem, truth = problems.gen_pca_data(args.n, args.m_i, args.d, args.r, args.xi, args.seed)
        problems.save_dataset(args.out, problem, truth, args.seed, xi=args.xi)
    elif args.kind == "gevp":
        problem, truth = problems.gen_gevp_data(args.n, args.m_i, args.d, args.r, args.xi, args.seed)
        problems.save_dataset(args.out, problem, truth, args.seed, xi=args.xi)
    else:
        problem, truth = problems.gen_lrmc_data(args.n, args.m, args.T, args.r, args.seed)
        nu = problems.lrmc_mask_density(args.m, args.T, args.r)
        problems.save_dataset(args.out, problem, truth, args.seed, nu=nu)
    print(f"wrote {args.kind} bundle to {args.out}", file=sys.stderr)
    return 0


def _cmd_run(args):
    cfg = _load_config(args)
    trace_path = harness.run_experiment(cfg, no_clobber=args.no_clobber)
    print(f"trace written to {trace_path}", file=sys.stderr)
    return 0


def _cmd_sweep(args):
    cfg = _load_config(args)
    try:
        betas = [float(tok) for tok in args.betas.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse --betas {args.betas!r}") from exc
    result = harness.sweep(cfg, betas, metric=args.metric, workers=args.workers)
    os.makedirs(cfg.out_dir, exist_ok=True)
    summary_path = os.path.join(cfg.out_dir, "sweep.csv")
    harness.write_sweep_summary(summary_path, result)
    print(f"best beta {result.best_beta!r} by {result.metric}; summary in {summary_path}",
          file=sys.stderr)
    return 0


def _cmd_rate_study(args):
    cfg = _load_config(args)
    result = harness.rate_study(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    rates_path = os.path.join(cfg.out_dir, "rates.csv")
    with open(rates_path, "w") as fh:
        fh.write("k,error,ratio\n")
        for k, err in enumerate(result.errors):
            ratio = repr(float(result.ratios[k - 1])) if 1 <= k <= len(result.ratios) else ""
            fh.write(f"{k},{repr(float(err))},{ratio}\n")
    print(
        f"sigma2={result.sigma2:.6f} t={result.t} bound={result.rate_bound:.6f} "
        f"tail_rate={result.tail_rate:.6f}; rates in {rates_path}",
        file=sys.stderr,
    )
    return 0


def _cmd_check(args):
    if args.manifold == "stiefel":
        spec = manifolds.stiefel(args.d, args.r, gamma=args.gamma or 0.5)
    else:
        rng = np.random.default_rng(args.seed)
        q, rr = np.linalg.qr(rng.standard_normal((args.d, args.d)))
        q = q * np.sign(np.diag(rr))
        b = q @ np.diag(1.1 ** np.linspace(0.0, args.d / 2.0, args.d)) @ q.T
        spec = manifolds.generalized_stiefel(args.d, args.r, 0.5 * (b + b.T), gamma=args.gamma)
    report = manifolds.check_projection_lipschitz(
        spec, args.trials, noise_scale=args.noise_scale, seed=args.seed
    )
    print(
        f"max_ratio_lip={report.max_ratio_lip:.6f} max_ratio_quad={report.max_ratio_quad:.6f} "
        f"trials={report.trials} skipped={report.skipped}",
        file=sys.stderr,
    )
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handler = {
        "gen-data": _cmd_gen_data,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "rate-study": _cmd_rate_study,
        "check": _cmd_check,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, FormatError, InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TubeViolationError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

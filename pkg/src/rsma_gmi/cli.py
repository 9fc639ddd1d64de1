"""Command-line entry point: ``rsma-gmi {sweep,converge,single}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .baselines import ALL_SCHEMES, run_scheme
from .channel import draw_csi, trial_seed
from .errors import ConfigError, DomainError, OptimizationError
from .harness import default_config_path, load_config, run_convergence_trace, run_sweep
from .optimizer import OptimizerConfig

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _pairs(text):
    out = []
    for tok in text.split(","):
        nt, _, k = tok.strip().lower().partition("x")
        out.append((int(nt), int(k)))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsma-gmi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="Monte Carlo sum-rate sweep from a config file")
    sw.add_argument("--config", default=None, help="INI config (default: bundled fig3.cfg)")
    sw.add_argument("--out", default=None, help="output file; overrides [output] path")
    sw.add_argument("--format", choices=("csv", "jsonl"), default=None)
    sw.add_argument("--trials", type=int, default=None, help="override n_trials")
    sw.add_argument("--workers", type=int, default=None)

    cv = sub.add_parser("converge", help="per-iteration objective traces")
    cv.add_argument("--config", default=None)
    cv.add_argument("--out", default=None)
    cv.add_argument("--format", choices=("csv", "jsonl"), default=None)
    cv.add_argument("--pairs", type=_pairs, default=None, help="e.g. 2x2,3x3 (Nt x K)")
    cv.add_argument("--trials", type=int, default=None)
    cv.add_argument("--workers", type=int, default=None)

    sg = sub.add_parser("single", help="optimize one channel draw and print its rates")
    sg.add_argument("--nt", type=int, default=2)
    sg.add_argument("--k", type=int, default=2)
    sg.add_argument("--snr-db", type=float, default=20.0)
    sg.add_argument("--sigma-e2", type=float, default=0.05)
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--scheme", choices=ALL_SCHEMES, default="RSMA")
    sg.add_argument("--no-info", action="store_true", help="design as if the estimate were exact")
    sg.add_argument("--n-random", type=int, default=1000)
    sg.add_argument("--max-iters", type=int, default=100)
    return parser


def _experiment(args):
    path = args.config or default_config_path()
    try:
        cfg = load_config(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    overrides = {}
    if args.out is not None:
        overrides["output_path"] = args.out
    if args.format is not None:
        overrides["output_format"] = args.format
    if args.trials is not None:
        overrides["n_trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        return replace(cfg, **overrides)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_sweep(args, out):
    cfg = _experiment(args)
    result = run_sweep(cfg)
    if cfg.output_path is None:
        out.write(result.to_jsonl() if cfg.output_format == "jsonl" else result.to_csv())
    else:
        out.write(f"wrote {len(result.rows)} rows to {cfg.output_path}\n")


def _cmd_converge(args, out):
    cfg = _experiment(args)
    traces = run_convergence_trace(cfg, args.pairs)
    for (nt, k), per_trial in traces.items():
        lengths = [len(t) for t in per_trial]
        finals = [t[-1] for t in per_trial]
        out.write(
            f"Nt={nt} K={k}: mean iterations {np.mean(lengths):.2f}, "
            f"mean final objective {np.mean(finals):.6f} bits/s/Hz\n"
        )


def _cmd_single(args, out):
    p_t = 10.0 ** (args.snr_db / 10.0)
    csi = draw_csi(args.nt, args.k, args.sigma_e2, 1.0, args.seed)
    cfg = OptimizerConfig(max_iters=args.max_iters, n_random=args.n_random, rng_seed=trial_seed(args.seed, 0, 1))
    res = run_scheme(csi, p_t, cfg, args.scheme, args.no_info)
    r = res.rates
    out.write(f"scheme      {args.scheme}{' (no-info design)' if args.no_info else ''}\n")
    out.write(f"Nt={args.nt} K={args.k} SNR={args.snr_db:g} dB sigma_e2={args.sigma_e2:g} seed={args.seed}\n")
    out.write(f"P_t         {p_t:.6g}\n")
    out.write(f"iterations  {res.iterations} (converged: {res.converged})\n")
    for k in range(args.k):
        gain = float(np.sum(np.abs(csi.h_hat[k]) ** 2))
        out.write(
            f"user {k + 1}: |h_hat|^2={gain:.6f}  R_c,k={r.r_common_per_user[k]:.6f}  R_k={r.r_private[k]:.6f}\n"
        )
    out.write(f"R_c         {r.r_common:.6f}\n")
    out.write(f"R_s         {r.r_sum:.6f}  bits/s/Hz\n")
    if res.precoders is not None:
        powers = res.precoders.stream_powers()
        labels = [f"P_{k + 1}" for k in range(args.k)] + ["P_c"]
        out.write("powers      " + "  ".join(f"{lab}={pw:.6f}" for lab, pw in zip(labels, powers)) + "\n")
    else:
        out.write(f"powers      time-shared, P_t={p_t:.6g} per slot\n")


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {"sweep": _cmd_sweep, "converge": _cmd_converge, "single": _cmd_single}[args.command]
    try:
        handler(args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizationError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


cli_main = main

if __name__ == "__main__":
    sys.exit(main())

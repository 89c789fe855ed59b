"""Command-line interface.

Subcommands: ``certify`` runs a certification campaign over a dataset CSV,
``optimize-sigma`` prints the scale-ascent trace for one input,
``train-demo`` trains the built-in perceptron on synthetic data and compares
data-dependent against fixed-scale certification, and ``report`` recomputes
metrics from an existing results CSV. Exit codes: 0 success, 1 runtime
error, 2 usage error. The environment variable CERTSMOOTH_SEED supplies the
default seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .classifiers import load_classifier
from .pipeline import (DEFAULT_RADII, CampaignConfig, metrics_from_records,
                       read_report_csv, run_campaign, run_training_demo)
from .sigma_opt import SigmaOptConfig, optimize_sigma
from .smoothing import GaussianCertConfig

__all__ = ["build_parser", "cli_main", "main"]


def _default_seed() -> int:
    return int(os.environ.get("CERTSMOOTH_SEED", "0"))


def _add_cert_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma0", type=float, required=True,
                   help="fixed noise scale, or the starting scale in ds modes")
    p.add_argument("--n0", type=int, default=100, help="selection samples")
    p.add_argument("--n-cert", type=int, default=100_000, help="estimation samples")
    p.add_argument("--alpha-fail", type=float, default=0.001,
                   help="certification failure probability")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed (default: CERTSMOOTH_SEED or 0)")


def _add_opt_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-step", type=float, default=1e-4, help="ascent step size")
    p.add_argument("--iters", type=int, default=100, help="ascent iterations")
    p.add_argument("--n", type=int, default=1, help="noise samples per objective value")
    p.add_argument("--sigma-min", type=float, default=1e-3)
    p.add_argument("--sigma-max", type=float, default=2.0)
    p.add_argument("--grad-mode", choices=["analytic", "scalar_fd"],
                   default="scalar_fd")
    p.add_argument("--return-mode", choices=["faithful", "best_iterate"],
                   default="faithful")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothcert",
        description="Certification of smoothed classifiers with per-input "
                    "noise scales and a sound region memory.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cert = sub.add_parser("certify", help="run a certification campaign")
    p_cert.add_argument("--mode", choices=["fixed", "ds", "ds_l1"], required=True)
    p_cert.add_argument("--dataset", required=True, help="dataset CSV path")
    p_cert.add_argument("--classifier", required=True, help="classifier JSON path")
    p_cert.add_argument("--out", required=True, help="results CSV path")
    p_cert.add_argument("--metrics-out", default=None,
                        help="metrics JSON path (default: <out>.metrics.json)")
    p_cert.add_argument("--memory-in", default=None, help="preload memory JSONL")
    p_cert.add_argument("--memory-out", default=None, help="write memory JSONL")
    p_cert.add_argument("--radii", default=None,
                        help="comma-separated certified-accuracy grid (starts at 0)")
    p_cert.add_argument("--workers", type=int, default=1)
    _add_cert_flags(p_cert)
    _add_opt_flags(p_cert)

    p_opt = sub.add_parser("optimize-sigma",
                           help="print the scale-ascent trace for one input")
    p_opt.add_argument("--classifier", required=True)
    p_opt.add_argument("--point", required=True,
                       help="comma-separated input coordinates")
    p_opt.add_argument("--seed", type=int, default=None)
    p_opt.add_argument("--sigma0", type=float, required=True)
    _add_opt_flags(p_opt)

    p_demo = sub.add_parser("train-demo",
                            help="train on synthetic annuli and compare "
                                 "data-dependent vs fixed-scale certification")
    p_demo.add_argument("--seeds", type=int, default=1, help="number of seeds")
    p_demo.add_argument("--seed", type=int, default=None, help="first seed")
    p_demo.add_argument("--epochs", type=int, default=30,
                        help="epochs per phase (warmup and adaptive)")
    p_demo.add_argument("--n-train", type=int, default=120)
    p_demo.add_argument("--n-test", type=int, default=60)
    p_demo.add_argument("--n-cert", type=int, default=2000)
    p_demo.add_argument("--out-json", default=None)

    p_rep = sub.add_parser("report", help="recompute metrics from a results CSV")
    p_rep.add_argument("--in", dest="in_path", required=True)
    p_rep.add_argument("--radii", default=None)
    return parser


def _parse_radii(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_RADII
    return tuple(float(v) for v in text.split(","))


def _cmd_certify(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    cert = GaussianCertConfig(sigma=args.sigma0, n0=args.n0, n_cert=args.n_cert,
                              alpha_fail=args.alpha_fail, seed=seed)
    opt = SigmaOptConfig(sigma0=args.sigma0, step_alpha=args.alpha_step,
                         iters_k=args.iters, n_samples=args.n,
                         sigma_min=min(args.sigma_min, args.sigma0),
                         sigma_max=max(args.sigma_max, args.sigma0),
                         grad_mode=args.grad_mode, return_mode=args.return_mode,
                         seed=seed)
    cfg = CampaignConfig(mode=args.mode, cert=cert, opt=opt,
                         radii_grid=_parse_radii(args.radii),
                         dataset_path=args.dataset,
                         classifier_path=args.classifier,
                         memory_in=args.memory_in, memory_out=args.memory_out,
                         report_csv=args.out,
                         report_json=args.metrics_out or args.out + ".metrics.json",
                         workers=args.workers)
    _, _, metrics = run_campaign(cfg)
    print(f"certified {metrics.n_inputs} inputs: ACR={metrics.acr:.6f} "
          f"abstain_rate={metrics.abstain_rate:.4f} "
          f"overlap_events={metrics.overlap_events}")
    return 0


def _cmd_optimize_sigma(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    c = load_classifier(args.classifier)
    x = np.array([float(v) for v in args.point.split(",")])
    cfg = SigmaOptConfig(sigma0=args.sigma0, step_alpha=args.alpha_step,
                         iters_k=args.iters, n_samples=args.n,
                         sigma_min=min(args.sigma_min, args.sigma0),
                         sigma_max=max(args.sigma_max, args.sigma0),
                         grad_mode=args.grad_mode, return_mode=args.return_mode,
                         seed=seed)
    sigma_star, trace = optimize_sigma(c, x, cfg)
    print("iter,sigma,proxy_radius,top_class")
    for e in trace:
        print(f"{e.iteration},{e.sigma!r},{e.proxy_radius!r},{e.top_class}")
    print(f"sigma_star={sigma_star!r} class_flips={trace.class_flips()}")
    return 0


def _cmd_train_demo(args) -> int:
    first = args.seed if args.seed is not None else _default_seed()
    results = []
    wins = 0
    for s in range(first, first + args.seeds):
        res = run_training_demo(seed=s, n_train=args.n_train, n_test=args.n_test,
                                warmup_epochs=args.epochs, ds_epochs=args.epochs,
                                n_cert=args.n_cert)
        win = res["acr_ds"] > res["acr_fixed"]
        wins += int(win)
        print(f"seed={s} acr_fixed={res['acr_fixed']:.6f} "
              f"acr_ds={res['acr_ds']:.6f} ds_wins={win}")
        results.append({"seed": s, "acr_fixed": res["acr_fixed"],
                        "acr_ds": res["acr_ds"], "ds_wins": win})
    print(f"data-dependent certification won on {wins}/{args.seeds} seeds")
    if args.out_json:
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump({"runs": results, "wins": wins}, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def _cmd_report(args) -> int:
    records = read_report_csv(args.in_path)
    metrics = metrics_from_records(records, _parse_radii(args.radii))
    print(json.dumps(metrics.to_dict(), sort_keys=True, indent=2))
    return 0


_HANDLERS = {
    "certify": _cmd_certify,
    "optimize-sigma": _cmd_optimize_sigma,
    "train-demo": _cmd_train_demo,
    "report": _cmd_report,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> int:
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

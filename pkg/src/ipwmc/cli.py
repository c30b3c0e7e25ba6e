"""Command-line front-end: ``ipwmc <subcommand> ...``.

Matrices are read and written as MCMX (``.mcmx``) or CSV (``.csv``);
reports are JSON. Exit status is 0 on success and 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import pathlib
import sys

import numpy as np

from . import __version__
from . import theta as th
from .completion import fit_completion
from .experiment import run_experiment
from .io import atomic_write_text, ingest_triplets, read_matrix, write_matrix
from .link import LinkFunction
from .metrics import MetricReport, hellinger_sq, numerical_rank, rmse, rmspe, test_error
from .simulation import SimulationSpec, gen_noise_and_observe, gen_target, gen_theta
from .solver import DEFAULT_CONFIG
from .tuning import select_lambda_aic, select_tau_cv

log = logging.getLogger("ipwmc")


def _grid(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _write_json(path, obj):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path is None or str(path) == "-":
        print(text)
    else:
        atomic_write_text(path, text + "\n")


def _link(text):
    try:
        return LinkFunction.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    spec = SimulationSpec(n1=args.n1, n2=args.n2, rank_m=args.rm, rank_a=args.ra,
                          target_rate=args.rate, snr=args.snr, seed=args.seed, link=args.link)
    M, Theta = gen_theta(spec)
    A = gen_target(spec)
    Y, W = gen_noise_and_observe(A, Theta, spec, replicate=args.replicate)
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, mat in (("a", A), ("y", Y), ("theta_star", Theta), ("m_star", M), ("mask", W)):
        write_matrix(out / f"{name}.mcmx", mat)
    _write_json(out / "spec.json", {**spec.to_dict(), "replicate": args.replicate})


def _decomp_record(dec, provenance, beta, z_path, link):
    return {"mu": float(dec.mu), "beta": beta, "provenance": provenance,
            "objective": float(dec.objective), "iterations": int(dec.iterations),
            "lambda": float(dec.lam), "link": link.value, "z_path": str(z_path)}


def _z_path(decomp_path):
    p = pathlib.Path(decomp_path)
    return p.with_name(p.stem + "_z.mcmx")


def cmd_fit_theta(args):
    W = read_matrix(args.mask)
    extra = {}
    if args.lambda_grid is not None:
        alpha1 = 0.0 if args.no_mu_split else args.alpha1
        report, fits = select_lambda_aic(W, args.link, alpha1, args.alpha2, args.lambda_grid,
                                         warm_start=True, mu_split=not args.no_mu_split,
                                         return_fits=True)
        dec = fits[report.grid.index(report.chosen)]
        extra["lambda_report"] = report.to_dict()
    else:
        dec = th.fit_unconstrained(W, args.link, args.alpha1, args.alpha2, args.lam,
                                   mu_split=not args.no_mu_split)
    est = th.theta_from(dec.mu, dec.Z, args.link)
    write_matrix(args.out, est.theta)
    if args.out_decomp:
        zp = _z_path(args.out_decomp)
        write_matrix(zp, dec.Z)
        rec = _decomp_record(dec, est.provenance.value, None, zp, args.link)
        rec.update(alpha1=args.alpha1, alpha2=args.alpha2, mu_split=not args.no_mu_split,
                   rank=numerical_rank(dec.M), **extra)
        _write_json(args.out_decomp, rec)


def cmd_refit_theta(args):
    W = read_matrix(args.mask)
    rec = json.loads(pathlib.Path(args.decomp).read_text())
    zp = pathlib.Path(rec["z_path"])
    if not zp.is_absolute() and not zp.exists():
        zp = pathlib.Path(args.decomp).parent / zp.name
    Z = read_matrix(zp)
    link = LinkFunction.parse(args.link or rec.get("link", "logistic"))
    mu = float(rec["mu"])
    beta = args.beta if args.beta is not None else th.beta_from_fraction(Z, args.winsorize_fraction)
    lam = args.lam if args.lam is not None else float(rec["lambda"])
    if args.mode == "winsorize":
        Zb = th.winsorize(Z, beta)
        est = th.theta_from(mu, Zb, link, provenance="winsorized_beta", beta=beta)
        dec = th.PredictorDecomposition(mu, Zb, lam=lam, objective=th.objective(W, link, mu, Zb, lam),
                                        iterations=0, history=[])
    else:
        dec = th.refit_constrained_full(W, link, mu, beta, lam, init=Z)
        est = th.theta_from(mu, dec.Z, link, provenance="refit_beta", beta=beta)
    write_matrix(args.out, est.theta)
    if args.out_decomp:
        zp = _z_path(args.out_decomp)
        write_matrix(zp, dec.Z)
        _write_json(args.out_decomp, _decomp_record(dec, est.provenance.value, beta, zp, link))


def cmd_complete(args):
    Y, W, Theta = read_matrix(args.y), read_matrix(args.mask), read_matrix(args.theta)
    report = {}
    tau = args.tau
    if args.tau_grid is not None:
        cv = select_tau_cv(Y, W, Theta, args.tau_grid, args.folds, args.seed,
                           a_bound=args.a_bound, warm_start=True, fast_prox=args.fast_prox)
        tau = cv.chosen
        report["tau_report"] = cv.to_dict()
    res = fit_completion(Y, W, Theta, tau, args.a_bound, DEFAULT_CONFIG, fast_prox=args.fast_prox)
    write_matrix(args.out, res.A_hat)
    report.update(res.report())
    report["fast_prox"] = bool(args.fast_prox)
    if args.report:
        _write_json(args.report, report)


def cmd_tune(args):
    W = read_matrix(args.mask)
    if args.target == "lambda":
        alpha1 = 0.0 if args.no_mu_split else args.alpha1
        rep = select_lambda_aic(W, args.link, alpha1, args.alpha2, args.grid, warm_start=True,
                                mu_split=not args.no_mu_split)
    else:
        if args.y is None or args.theta is None:
            raise ValueError("tau tuning needs --y and --theta")
        rep = select_tau_cv(read_matrix(args.y), W, read_matrix(args.theta), args.grid,
                            args.folds, args.seed, a_bound=args.a_bound, warm_start=True,
                            fast_prox=args.fast_prox)
    out = rep.to_dict()
    out["target"] = args.target
    _write_json(args.out, out)


def cmd_evaluate(args):
    pred, truth = read_matrix(args.pred), read_matrix(args.truth)
    fields = {"rmse": rmse(pred, truth), "rank_A": numerical_rank(pred)}
    if args.mask:
        fields["test_error"] = test_error(pred, truth, read_matrix(args.mask))
    if (args.theta_pred is None) != (args.theta_truth is None):
        raise ValueError("--theta-pred and --theta-truth go together")
    if args.theta_pred:
        fields["hellinger_sq"] = hellinger_sq(read_matrix(args.theta_pred),
                                              read_matrix(args.theta_truth), args.hellinger)
    if args.m_pred:
        fields["rank_M"] = numerical_rank(read_matrix(args.m_pred))
    if (args.y_test is None) != (args.mask_test is None):
        raise ValueError("--y-test and --mask-test go together")
    if args.y_test:
        fields["rmspe"] = rmspe(pred, read_matrix(args.y_test), read_matrix(args.mask_test))
    _write_json(args.out, MetricReport(**fields).to_dict())


def cmd_ingest(args):
    Y, W = ingest_triplets(args.triplets, args.n1, args.n2)
    write_matrix(args.out_y, Y)
    write_matrix(args.out_mask, W)
    print(json.dumps({"observed": int(W.sum()), "n1": args.n1, "n2": args.n2}))


def cmd_run_experiment(args):
    from .experiment import load_config

    cfg = load_config(args.config)
    if args.outdir:
        cfg.outdir = pathlib.Path(args.outdir)
        cfg.raw["outdir"] = args.outdir
    if args.replicates:
        cfg.replicates = args.replicates
        cfg.raw["replicates"] = str(args.replicates)
    summary = run_experiment(cfg, resume=args.resume)
    print(json.dumps({"outdir": str(cfg.outdir), "completed": summary["replicates_completed"],
                      "failures": summary["failures"]}))
    if summary["failures"]:
        raise RuntimeError(f"{summary['failures']} replicate(s) failed")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipwmc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic instance")
    s.add_argument("--n1", type=int, required=True)
    s.add_argument("--n2", type=int, required=True)
    s.add_argument("--rm", type=int, default=11)
    s.add_argument("--ra", type=int, default=11)
    s.add_argument("--rate", type=float, default=0.2)
    s.add_argument("--snr", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicate", type=int, default=0)
    s.add_argument("--link", type=_link, default=LinkFunction.LOGISTIC)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-theta", help="penalized likelihood fit of observation probabilities")
    s.add_argument("--mask", required=True)
    s.add_argument("--link", type=_link, default=LinkFunction.LOGISTIC)
    s.add_argument("--alpha1", type=float, default=5.0)
    s.add_argument("--alpha2", type=float, default=5.0)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--lambda-grid", type=_grid, help="comma-separated values, chosen by AIC")
    s.add_argument("--no-mu-split", action="store_true",
                   help="penalize the whole predictor with mu fixed at 0")
    s.add_argument("--out", required=True)
    s.add_argument("--out-decomp")
    s.set_defaults(func=cmd_fit_theta)

    s = sub.add_parser("refit-theta", help="constrained refit or winsorization of a fit")
    s.add_argument("--mask", required=True)
    s.add_argument("--decomp", required=True, help="decomp.json written by fit-theta")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=float)
    g.add_argument("--winsorize-fraction", type=float)
    s.add_argument("--mode", choices=["refit", "winsorize"], default="refit")
    s.add_argument("--lambda", dest="lam", type=float, help="defaults to the fit's lambda")
    s.add_argument("--link", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--out-decomp")
    s.set_defaults(func=cmd_refit_theta)

    s = sub.add_parser("complete", help="weighted nuclear-norm completion")
    s.add_argument("--y", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--theta", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", type=float)
    g.add_argument("--tau-grid", type=_grid, help="comma-separated values, chosen by CV")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--a-bound", type=float)
    s.add_argument("--fast-prox", action="store_true",
                   help="approximate prox: svt followed by clipping")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("tune", help="grid search for lambda (AIC) or tau (CV)")
    s.add_argument("--target", choices=["lambda", "tau"], required=True)
    s.add_argument("--grid", type=_grid, required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--y")
    s.add_argument("--theta")
    s.add_argument("--link", type=_link, default=LinkFunction.LOGISTIC)
    s.add_argument("--alpha1", type=float, default=5.0)
    s.add_argument("--alpha2", type=float, default=5.0)
    s.add_argument("--no-mu-split", action="store_true")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--a-bound", type=float)
    s.add_argument("--fast-prox", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("evaluate", help="compute metrics")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--mask")
    s.add_argument("--theta-pred")
    s.add_argument("--theta-truth")
    s.add_argument("--m-pred")
    s.add_argument("--y-test")
    s.add_argument("--mask-test")
    s.add_argument("--hellinger", choices=["mean", "sqrtn"], default="mean")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ingest", help="convert a 1-based triplet file to matrices")
    s.add_argument("--triplets", required=True)
    s.add_argument("--n1", type=int, required=True)
    s.add_argument("--n2", type=int, required=True)
    s.add_argument("--out-y", required=True)
    s.add_argument("--out-mask", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("run-experiment", help="replicated simulation study")
    s.add_argument("config")
    s.add_argument("--outdir")
    s.add_argument("--replicates", type=int)
    s.add_argument("--resume", action="store_true",
                   help="reuse replicate results already present in the output directory")
    s.set_defaults(func=cmd_run_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

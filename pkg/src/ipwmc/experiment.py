"""Replicated simulation driver.

A run is described by an INI file with an ``[experiment]`` section (see
``configs/`` and the README for the keys). Each replicate writes
``replicates/rep_XXX/metrics.json`` atomically; the aggregate is written to
``summary.csv`` and ``summary.json`` together with ``effective_config.ini``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import pathlib
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import theta as th
from .completion import fit_completion, zero_threshold
from .io import atomic_write_text
from .link import LinkFunction
from .metrics import hellinger_sq, nw_estimator, rmse, test_error, uniform_estimator
from .linalg import numerical_rank
from .simulation import SimulationSpec, gen_noise_and_observe, gen_target, gen_theta
from .solver import SolverConfig
from .tuning import default_lambda_grid, select_lambda_aic, select_tau_cv

log = logging.getLogger(__name__)

DEFAULTS = {
    "outdir": "experiment_out",
    "replicates": "1",
    "seed": "0",
    "n1": "100",
    "n2": "100",
    "rank_m": "3",
    "rank_a": "3",
    "target_rate": "0.2",
    "snr": "1",
    "link": "logistic",
    "estimators": "alpha, beta@0.1, nw, uni",
    "complete": "true",
    "alpha1": "oracle",
    "alpha2": "oracle",
    "lambda_grid": "auto",
    "lambda_prime": "same",
    "tau_grid": "auto",
    "tau_grid_relative": "",
    "folds": "5",
    "retune": "false",
    "a_bound": "auto",
    "nw_normalized": "false",
    "hellinger": "mean",
    "fast_prox": "false",
    "max_outer_iters": "500",
    "outer_tol": "1e-6",
    "admm_tol": "1e-8",
}

_KNOWN_BASE = {"alpha", "beta", "win", "nw", "uni", "known", "1bit"}


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _complete_set(text, estimators):
    """``true``/``false`` or a comma list naming a subset of the estimators."""
    try:
        return frozenset(estimators) if _bool(text) else frozenset()
    except ValueError:
        names = {e.strip().lower() for e in text.split(",") if e.strip()}
    extra = names - set(estimators)
    if extra:
        raise ValueError(f"complete lists estimators that are not run: {sorted(extra)}")
    return frozenset(names)


def parse_estimator(name):
    """``'beta@0.1'`` -> ``('beta', 0.1)``; plain names carry ``None``."""
    name = name.strip().lower()
    base, _, frac = name.partition("@")
    if base not in _KNOWN_BASE:
        raise ValueError(f"unknown estimator {name!r}")
    if base in ("beta", "win"):
        if not frac:
            raise ValueError(f"{base} needs a fraction, e.g. {base}@0.1")
        t = float(frac)
        if not 0 < t < 1:
            raise ValueError("fraction must lie in (0, 1)")
        return base, t
    if frac:
        raise ValueError(f"{base} takes no fraction")
    return base, None


@dataclass
class ExperimentConfig:
    outdir: pathlib.Path
    replicates: int
    spec: SimulationSpec
    estimators: list
    complete: frozenset  # estimator names that are also run through completion
    alpha1: object
    alpha2: object
    lambda_grid: object
    lambda_prime: object
    tau_grid: object
    tau_grid_relative: list
    folds: int
    retune: bool
    a_bound: object
    nw_normalized: bool
    hellinger: str
    fast_prox: bool
    solver: SolverConfig
    raw: dict = field(repr=False, default_factory=dict)


def load_config(path_or_text, *, base_dir=None) -> ExperimentConfig:
    """Read an INI file (or INI text) and fill in defaults."""
    parser = configparser.ConfigParser()
    text = str(path_or_text)
    if "\n" not in text and pathlib.Path(text).exists():
        parser.read(text)
        base_dir = base_dir or pathlib.Path(text).resolve().parent
    else:
        parser.read_string(text)
    if not parser.has_section("experiment"):
        raise ValueError("config needs an [experiment] section")
    sect = dict(parser["experiment"])
    unknown = set(sect) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    raw = {**DEFAULTS, **sect}

    outdir = pathlib.Path(raw["outdir"])
    if not outdir.is_absolute() and base_dir is not None:
        outdir = pathlib.Path(base_dir) / outdir
    spec = SimulationSpec(
        n1=int(raw["n1"]), n2=int(raw["n2"]), rank_m=int(raw["rank_m"]),
        rank_a=int(raw["rank_a"]), target_rate=float(raw["target_rate"]),
        snr=float(raw["snr"]), seed=int(raw["seed"]), link=LinkFunction.parse(raw["link"]),
    )
    estimators = [e.strip().lower() for e in raw["estimators"].split(",") if e.strip()]
    for e in estimators:
        parse_estimator(e)
    if not estimators:
        raise ValueError("no estimators listed")

    def num_or(key, word):
        v = raw[key].strip().lower()
        return v if v == word else float(v)

    cfg = ExperimentConfig(
        outdir=outdir,
        replicates=int(raw["replicates"]),
        spec=spec,
        estimators=estimators,
        complete=_complete_set(raw["complete"], estimators),
        alpha1=num_or("alpha1", "oracle"),
        alpha2=num_or("alpha2", "oracle"),
        lambda_grid="auto" if raw["lambda_grid"].strip() == "auto" else _floats(raw["lambda_grid"]),
        lambda_prime=num_or("lambda_prime", "same"),
        tau_grid="auto" if raw["tau_grid"].strip() == "auto" else _floats(raw["tau_grid"]),
        tau_grid_relative=_floats(raw["tau_grid_relative"]),
        folds=int(raw["folds"]),
        retune=_bool(raw["retune"]),
        a_bound=num_or("a_bound", "auto"),
        nw_normalized=_bool(raw["nw_normalized"]),
        hellinger=raw["hellinger"].strip().lower(),
        fast_prox=_bool(raw["fast_prox"]),
        solver=SolverConfig(max_outer_iters=int(raw["max_outer_iters"]),
                            outer_tol=float(raw["outer_tol"]),
                            admm_tol=float(raw["admm_tol"])),
        raw=raw,
    )
    if cfg.replicates < 1:
        raise ValueError("replicates must be >= 1")
    return cfg


def effective_config_text(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    parser["experiment"] = dict(cfg.raw)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _settings(text):
    """Config keys that determine results; ``outdir`` only says where they live."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    out = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    out.pop("outdir", None)
    return out


# ---------------------------------------------------------------------------
# per-replicate work
# ---------------------------------------------------------------------------

def _theta_estimates(cfg, W, alpha1, alpha2, tuned, truth):
    """Return ``{name: (ThetaEstimate, M_hat or None)}`` and theta-fit info."""
    spec = cfg.spec
    out, info = {}, {}
    bases = {parse_estimator(e)[0] for e in cfg.estimators}
    fit = None
    if bases & {"alpha", "beta", "win"}:
        if "lambda" not in tuned:
            grid = default_lambda_grid(*W.shape) if cfg.lambda_grid == "auto" else cfg.lambda_grid
            report, fits = select_lambda_aic(W, spec.link, alpha1, alpha2, grid, cfg.solver,
                                             warm_start=True, return_fits=True)
            tuned["lambda"] = report.chosen
            tuned["lambda_report"] = report.to_dict()
            fit = fits[report.grid.index(report.chosen)]
        else:
            fit = th.fit_unconstrained(W, spec.link, alpha1, alpha2, tuned["lambda"], cfg.solver)
        info["lambda"] = tuned["lambda"]
        info["alpha_iterations"] = fit.iterations
    lam_prime = tuned.get("lambda") if cfg.lambda_prime == "same" else cfg.lambda_prime
    for name in cfg.estimators:
        base, t = parse_estimator(name)
        if base == "alpha":
            out[name] = (th.theta_from(fit.mu, fit.Z, spec.link), fit.M)
        elif base == "beta":
            beta = th.beta_from_fraction(fit.Z, t)
            dec = th.refit_constrained_full(W, spec.link, fit.mu, beta, lam_prime, cfg.solver,
                                            init=fit.Z)
            est = th.theta_from(fit.mu, dec.Z, spec.link, provenance="refit_beta", beta=beta,
                                decomposition=dec)
            out[name] = (est, dec.M)
        elif base == "win":
            beta = th.beta_from_fraction(fit.Z, t)
            Zw = th.winsorize(fit.Z, beta)
            out[name] = (th.theta_from(fit.mu, Zw, spec.link, provenance="winsorized_beta",
                                       beta=beta), fit.mu + Zw)
        elif base == "nw":
            out[name] = (nw_estimator(W, normalized=cfg.nw_normalized), None)
        elif base == "uni":
            out[name] = (uniform_estimator(W), None)
        elif base == "known":
            out[name] = (th.ThetaEstimate(np.clip(truth, 1e-15, 1 - 1e-15), th.Provenance.KNOWN),
                         None)
        elif base == "1bit":
            if "lambda_1bit" not in tuned:
                grid = default_lambda_grid(*W.shape) if cfg.lambda_grid == "auto" \
                    else cfg.lambda_grid
                report, fits = select_lambda_aic(W, spec.link, 0.0, alpha1 + alpha2, grid,
                                                 cfg.solver, warm_start=True, mu_split=False,
                                                 return_fits=True)
                tuned["lambda_1bit"] = report.chosen
                one = fits[report.grid.index(report.chosen)]
            else:
                one = th.fit_unconstrained(W, spec.link, 0.0, alpha1 + alpha2,
                                           tuned["lambda_1bit"], cfg.solver, mu_split=False)
            out[name] = (th.theta_from(one.mu, one.Z, spec.link), one.M)
    return out, info


def run_replicate(cfg: ExperimentConfig, rep: int, truth: dict, tuned: dict) -> dict:
    """Fit every configured estimator on replicate ``rep``; returns a metrics dict."""
    spec = cfg.spec
    Y, W = gen_noise_and_observe(truth["A"], truth["theta"], spec, replicate=rep)
    alpha1 = truth["alpha1"] if cfg.alpha1 == "oracle" else cfg.alpha1
    alpha2 = truth["alpha2"] if cfg.alpha2 == "oracle" else cfg.alpha2
    t0 = time.perf_counter()
    ests, info = _theta_estimates(cfg, W, alpha1, alpha2, tuned, truth["theta"])
    row = {"replicate": rep, "observed_fraction": float(W.mean()), **info, "estimators": {}}
    a_bound = None if cfg.a_bound == "auto" else cfg.a_bound
    for name, (est, M_hat) in ests.items():
        m = {"hellinger_sq": hellinger_sq(est.theta, truth["theta"], cfg.hellinger),
             "theta_ratio": float(est.theta.max() / est.theta.min())}
        if M_hat is not None:
            m["rmse_M"] = rmse(M_hat, truth["M"])
            m["rank_M"] = numerical_rank(M_hat)
        if est.beta is not None:
            m["beta"] = est.beta
        if name in cfg.complete:
            key = f"tau/{name}"
            if key not in tuned:
                if cfg.tau_grid_relative:
                    z = zero_threshold(Y, W, est)
                    grid = [c * z for c in cfg.tau_grid_relative]
                else:
                    grid = None if cfg.tau_grid == "auto" else cfg.tau_grid
                report = select_tau_cv(Y, W, est, grid, cfg.folds, seed=spec.seed + rep,
                                       cfg=cfg.solver, a_bound=a_bound, warm_start=True,
                                       fast_prox=cfg.fast_prox)
                tuned[key] = report.chosen
                tuned[f"tau_report/{name}"] = report.to_dict()
            res = fit_completion(Y, W, est, tuned[key], a_bound, cfg.solver,
                                 fast_prox=cfg.fast_prox)
            m.update(tau=res.tau, rmse_A=rmse(res.A_hat, truth["A"]),
                     test_error=test_error(res.A_hat, truth["A"], W), rank_A=res.numerical_rank,
                     completion_iterations=res.iterations)
        row["estimators"][name] = m
    row["seconds"] = time.perf_counter() - t0
    return row


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def aggregate(rows: list, failures: int = 0) -> dict:
    """Mean and standard error (``sd / sqrt(k)``, ``ddof=1``) per estimator and metric."""
    values = {}
    for row in rows:
        for name, metrics in row["estimators"].items():
            for key, v in metrics.items():
                values.setdefault(name, {}).setdefault(key, []).append(float(v))
    summary = {}
    for name, metrics in values.items():
        summary[name] = {}
        for key, vs in metrics.items():
            arr = np.asarray(vs)
            se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else float("nan")
            summary[name][key] = {"mean": float(arr.mean()), "stderr": se, "count": int(arr.size)}
    return {"replicates_completed": len(rows), "failures": failures, "estimators": summary}


def summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["estimator", "metric", "mean", "stderr", "count"])
    for name, metrics in summary["estimators"].items():
        for key, s in metrics.items():
            writer.writerow([name, key, repr(s["mean"]), repr(s["stderr"]), s["count"]])
    return buf.getvalue()


def _truth(spec):
    M, Theta = gen_theta(spec)
    A = gen_target(spec)
    mu = float(M.mean())
    return {"M": M, "theta": Theta, "A": A, "alpha1": abs(mu),
            "alpha2": float(np.abs(M - mu).max())}


def run_experiment(config, *, resume=False) -> dict:
    """Run all replicates and write the reports; returns the summary dict.

    Tuning (``lambda`` by AIC, ``tau`` by weighted CV) happens on replicate 0
    and is reused for later replicates unless ``retune = true``. With
    ``resume`` replicates whose ``metrics.json`` already exists (and whose
    stored config matches) are loaded rather than recomputed.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = cfg.outdir
    (out / "replicates").mkdir(parents=True, exist_ok=True)
    cfg_text = effective_config_text(cfg)
    stored = out / "effective_config.ini"
    if resume and stored.exists() and _settings(stored.read_text()) != _settings(cfg_text):
        log.info("config changed; ignoring cached replicates")
        resume = False
    atomic_write_text(stored, cfg_text)

    truth = _truth(cfg.spec)
    tuned = {}
    tuned_path = out / "tuning.json"
    if resume and not cfg.retune and tuned_path.exists():
        tuned = json.loads(tuned_path.read_text())
    rows, failures = [], 0
    for rep in range(cfg.replicates):
        path = out / "replicates" / f"rep_{rep:03d}" / "metrics.json"
        if resume and path.exists():
            row = json.loads(path.read_text())
            if "error" in row:
                failures += 1
            else:
                rows.append(row)
            continue
        if cfg.retune:
            tuned = {}
        try:
            row = run_replicate(cfg, rep, truth, tuned)
        except Exception as exc:  # recorded per replicate, aggregation continues
            log.error("replicate %d failed: %s", rep, exc)
            row = {"replicate": rep, "error": repr(exc), "traceback": traceback.format_exc()}
            failures += 1
        else:
            rows.append(row)
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, json.dumps(row, indent=1, sort_keys=True))
        if not cfg.retune:
            atomic_write_text(tuned_path, json.dumps(tuned, indent=1, sort_keys=True))
        log.info("replicate %d done", rep)
    summary = aggregate(rows, failures)
    atomic_write_text(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True))
    atomic_write_text(out / "summary.csv", summary_csv(summary))
    return summary


def load_replicates(outdir) -> list:
    paths = sorted(pathlib.Path(outdir).glob("replicates/rep_*/metrics.json"))
    return [json.loads(p.read_text()) for p in paths]

"""Command-line entry point: simulate, fit-lse, fit-whittle, mc-study, verify."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import validation as val
from .config import ExperimentConfig, dumps, load_config, write_csv
from .errors import ConfigError, LevyWhittleError, NumericError, ShapeError
from .levy_noise import NoisePath, covariance, simulate_linear_noise, spectral_density
from .regression import RegressionFamily, lse_fit, observe, residuals
from .spectral import residual_periodogram
from .whittle import (asymptotic_matrices, confidence_intervals, mce_covariance,
                      resolve_gamma2, whittle_fit)

log = logging.getLogger("levywhittle")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _horizon(cfg, args):
    return float(args.T) if getattr(args, "T", None) else float(cfg.T_ladder[-1])


def _read_series(path, step):
    """Read a CSV written by ``simulate``/``fit-lse``; prefers the ``residual`` column."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read data: {exc}", "--data") from exc
    if not rows:
        raise ShapeError("data file has no rows")
    column = "residual" if "residual" in rows[0] else "x"
    if column not in rows[0] or "t" not in rows[0]:
        raise ShapeError("data needs columns 't' and 'x' (or 'residual')")
    t = np.array([float(r["t"]) for r in rows])
    values = np.array([float(r[column]) for r in rows])
    if len(t) > 1 and not np.allclose(np.diff(t), step, rtol=1e-9, atol=1e-12):
        raise ShapeError(f"data lattice does not match delta={step}")
    return NoisePath(step, values, None, {"source": column}), column


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, args):
    out = _out_dir(cfg, args)
    T = _horizon(cfg, args)
    noise = simulate_linear_noise(cfg.driver, cfg.kernel, T, cfg.delta, cfg.seed)
    data = observe(cfg.regression, np.array(cfg.alpha0), noise)
    write_csv(out / "path.csv", ["t", "noise", "x"],
              zip(noise.times, noise.values, data.values))
    (out / "path.json").write_text(dumps({"T": T, "delta": cfg.delta, "seed": cfg.seed,
                                          "n": noise.n, "meta": noise.meta}))
    log.info("wrote %d samples to %s", noise.n, out / "path.csv")
    return EXIT_OK


def _fit_lse(cfg, data):
    fit = lse_fit(cfg.regression, data, np.array(cfg.alpha0))
    return fit, residuals(cfg.regression, data, fit.alpha_hat)


def cmd_fit_lse(cfg: ExperimentConfig, args):
    data, _ = _read_series(args.data, cfg.delta)
    out = _out_dir(cfg, args)
    fit, res = _fit_lse(cfg, data)
    (out / "lse.json").write_text(dumps(fit.to_dict()))
    write_csv(out / "residuals.csv", ["t", "residual"], zip(res.times, res.values))
    return EXIT_OK


def cmd_fit_whittle(cfg: ExperimentConfig, args):
    data, column = _read_series(args.data, cfg.delta)
    out = _out_dir(cfg, args)
    summary = {}
    if column == "residual":
        res = data
    else:
        lse, res = _fit_lse(cfg, data)
        summary["lse"] = lse.to_dict()
    pgram = residual_periodogram(res, lambda_max=cfg.weights.cutoff())
    init = np.array(cfg.theta0) if cfg.theta0 is not None else \
        0.5 * (cfg.spectral.lower + cfg.spectral.upper)
    fit = whittle_fit(pgram, cfg.spectral, cfg.weights, init, matrices=False, level=cfg.level)
    g2 = resolve_gamma2(cfg.gamma2_mode, driver_gamma2=cfg.gamma2_driver,
                        user_value=cfg.gamma2_value, residual_path=res, s=cfg.spectral,
                        theta=fit.theta_hat)
    fit.W1, fit.W2, fit.V = asymptotic_matrices(cfg.spectral, cfg.weights, g2, fit.theta_hat)
    fit.W = mce_covariance(fit.W1, fit.W2, fit.V)
    fit.ci = confidence_intervals(fit.theta_hat, fit.W, pgram.T, cfg.level)
    summary.update(whittle=fit.to_dict(), gamma2=g2, gamma2_mode=cfg.gamma2_mode.value,
                   names=list(cfg.spectral.names),
                   ci_reliable=not fit.boundary)
    write_csv(out / "periodogram.csv", ["lambda", "value"], pgram.to_rows())
    (out / "whittle.json").write_text(dumps(summary))
    return EXIT_OK


def cmd_mc_study(cfg: ExperimentConfig, args):
    out = _out_dir(cfg, args)
    reports = val.mce_normality_study(cfg, threads=args.threads)
    summary = {}
    for T, rep in reports.items():
        header, rows = rep.rows()
        write_csv(out / f"mc_T{T:g}.csv", header, rows)
        summary[f"T{T:g}"] = rep.summary()
    (out / "mc_summary.json").write_text(dumps({"config": cfg.to_dict(), "reports": summary}))
    return EXIT_OK


def _verify_checks(cfg: ExperimentConfig):
    d, k = cfg.driver, cfg.kernel
    checks = {}

    T = float(cfg.T_ladder[-1])
    B0 = covariance(k, d, 0.0)
    nu, rel = val.mean_square_check(simulate_linear_noise(d, k, T, cfg.delta, cfg.seed), B0)
    checks["mean_square"] = {"T": T, "B0": B0, "nu_star": nu, "rel_error": rel,
                             "passed": rel < 0.1}

    G = lambda u: np.exp(-np.square(u))
    fej = [abs(val.fejer_limit_check(G, T_) - 1.0) for T_ in (10.0, 100.0, 1000.0)]
    checks["fejer"] = {"T": [10.0, 100.0, 1000.0], "errors": fej,
                       "passed": fej[1] <= 0.05 and fej[0] > fej[1] > fej[2]}

    b = lambda lam: (1.0 + lam * lam) ** -3.0
    b_hat = lambda u: np.pi * math.exp(-abs(u)) * (3 + 3 * abs(u) + u * u) / 8.0
    clt = val.clt_functional_check(d, k, b, float(cfg.T_ladder[0]), 500, cfg.seed,
                                   delta=cfg.delta, b_hat=b_hat)
    ratio = clt.sample_var / clt.sigma2
    checks["clt_functional"] = {"T": float(cfg.T_ladder[0]), "M": 500,
                                "sample_var": clt.sample_var, "sigma2": clt.sigma2,
                                "ratio": ratio, "passed": abs(ratio - 1.0) <= 0.2}

    F = lambda u: np.sinc(np.asarray(u, dtype=float) / np.pi)
    lam = np.linspace(-10.0, 10.0, 2001)
    errs, norms = [], []
    for n in (8, 16, 32, 64):
        Tn = val.levitan_polynomial(F, 1.0, n, lam)
        errs.append(float(np.max(np.abs(Tn - F(lam)))))
        norms.append(float(np.max(np.abs(Tn))))
    checks["levitan"] = {"n": [8, 16, 32, 64], "sup_error": errs, "sup_norm": norms,
                         "passed": all(a > b_ for a, b_ in zip(errs, errs[1:]))
                         and max(norms[1:]) <= 1.1}

    if cfg.regression.family is RegressionFamily.TRIGONOMETRIC:
        alpha0 = np.array(cfg.alpha0)
        h = alpha0.reshape(-1, 3)
        f = spectral_density(k, d, h[:, 2])
        sig = val.sigma_trig(h[:, :2], f)
        T_gram = 1000.0 * 2 * np.pi / float(h[:, 2].min())
        J = val.trig_gram_limit(cfg.regression, alpha0, T_gram)
        route = np.zeros_like(sig)
        for j in range(len(h)):
            blk = slice(3 * j, 3 * j + 3)
            route[blk, blk] = 2 * np.pi * f[j] * np.linalg.inv(J[blk, blk])
        mask = sig != 0
        dev = float(np.max(np.abs(route[mask] / sig[mask] - 1.0)))
        eig = np.linalg.eigvalsh(sig)
        checks["sigma_trig"] = {"max_rel_dev_vs_gram_route": dev, "min_eigenvalue": float(eig[0]),
                                "passed": dev < 1e-2 and eig[0] > 0}
    return checks


def cmd_verify(cfg: ExperimentConfig, args):
    out = _out_dir(cfg, args)
    checks = _verify_checks(cfg)
    ok = all(c["passed"] for c in checks.values())
    (out / "verify.json").write_text(dumps({"passed": ok, "checks": checks}))
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-lse": cmd_fit_lse,
    "fit-whittle": cmd_fit_whittle,
    "mc-study": cmd_mc_study,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="levywhittle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for replicates")
        if name == "simulate":
            p.add_argument("--T", type=float, help="horizon (default: largest T in the ladder)")
        if name in ("fit-lse", "fit-whittle"):
            p.add_argument("--data", required=True, help="CSV with columns t,x or t,residual")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("must be an unsigned 64-bit integer", "--seed")
            cfg = replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("must be at least 1", "--threads")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LevyWhittleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every stochastic criterion draws its replicates from the master seed of the
default configuration; nothing here is tuned per criterion.
"""

import math
import time
from pathlib import Path

import numpy as np

from levywhittle.config import load_config
from levywhittle.levy_noise import (KernelSpec, LevyDriverSpec, covariance,
                                    covariance_car2_closed_form, kernel_transform,
                                    simulate_linear_noise)
from levywhittle.regression import (RegressionModel, Regressor, lse_fit, observe, reg_eval,
                                    reg_grad, reg_hess_entry, residuals)
from levywhittle.spectral import plancherel_gap, residual_periodogram, spectral_eval, spectral_grad
from levywhittle.validation import (clt_functional_check, fejer_limit_check, levitan_polynomial,
                                    lse_normality_check, mce_normality_study, mean_square_rate_check,
                                    sigma_trig)
from levywhittle.whittle import contrast_field, grid_oracle, oracle_periodogram, whittle_fit

CONFIG = load_config(Path(__file__).resolve().parents[1] / "configs" / "default_car2.json")
SEED = CONFIG.seed
CAR2 = CONFIG.spectral
WEIGHT = CONFIG.weights
BM = LevyDriverSpec.brownian(1.0)
OU = KernelSpec.ou(1.0)


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_c01_car2_covariance_closed_form(criterion):
    t = np.round(np.arange(101) * 0.1, 10)
    worst = 0.0
    with Clock() as clock:
        for alpha, omega in [(1.0, 2.0), (0.5, 3.0), (2.0, 1.0)]:
            k = KernelSpec.car2(alpha, omega)
            quad = np.array([covariance(k, BM, tv) for tv in t])
            closed = covariance_car2_closed_form(alpha, omega, 1.0, t)
            worst = max(worst, float(np.max(np.abs(quad - closed) / np.abs(closed))))
    ok = worst <= 1e-6 and clock.seconds < 1.0
    assert criterion(1, "CAR2 covariance", ok, f"max rel err {worst:.2e}, {clock.seconds:.2f} s")


def test_c02_spectral_identity(criterion):
    lam = np.random.default_rng(SEED).uniform(-50.0, 50.0, 1000)
    worst = 0.0
    with Clock() as clock:
        for alpha, d2, omega in [(1.0, 1.0, 2.0), (0.5, 2.5, 3.0), (2.0, 0.3, 1.0)]:
            via_kernel = d2 * np.abs(kernel_transform(KernelSpec.car2(alpha, omega), lam)) ** 2 / (2 * math.pi)
            model = spectral_eval(CAR2, lam, (alpha, d2, omega))
            worst = max(worst, float(np.max(np.abs(via_kernel - model) / model)))
    ok = worst <= 1e-10 and clock.seconds < 1.0
    assert criterion(2, "spectral identity", ok, f"max rel err {worst:.2e}, {clock.seconds:.2f} s")


def _central(fn, x, i, h):
    e = np.zeros_like(x)
    e[i] = h
    return (fn(x + e) - fn(x - e)) / (2 * h)


def test_c03_gradient_checks(criterion):
    rng = np.random.default_rng(SEED)
    trig = CONFIG.regression
    expo = RegressionModel.exponential(Regressor((0.0, 5.0), ((1.0, 0.5), (0.2, 1.0))),
                                       ((-1.0, 1.0), (-1.0, 1.0)))
    worst, count = 0.0, 0
    with Clock() as clock:
        for _ in range(200):
            lam = rng.uniform(-20.0, 20.0)
            theta = rng.uniform(CAR2.lower, CAR2.upper)
            g = spectral_grad(CAR2, lam, theta)
            fd = np.array([_central(lambda th: spectral_eval(CAR2, lam, th, check=False), theta, i,
                                    1e-6 * max(1.0, abs(theta[i]))) for i in range(3)])
            worst = max(worst, float(np.max(np.abs(fd - g)) / np.max(np.abs(g))))
            count += 1
        for m in (trig, expo):
            for _ in range(200):
                alpha = rng.uniform(m.lower, m.upper)
                t = rng.uniform(0.0, 20.0)
                g = reg_grad(m, t, alpha)
                fd = np.array([_central(lambda a: reg_eval(m, t, a, check=False), alpha, i, 1e-6)
                               for i in range(m.q)])
                worst = max(worst, float(np.max(np.abs(fd - g)) / np.max(np.abs(g))))
                H = np.array([[reg_hess_entry(m, t, alpha, i, j) for j in range(m.q)] for i in range(m.q)])
                fdH = np.array([_central(lambda a: reg_grad(m, t, a, check=False), alpha, i, 1e-6)
                                for i in range(m.q)])
                worst = max(worst, float(np.max(np.abs(fdH - H)) / max(np.max(np.abs(H)), 1e-300)))
                count += 1
    ok = worst <= 1e-5 and clock.seconds < 5.0
    assert criterion(3, "gradient checks", ok,
                     f"{count} points, max rel err {worst:.2e}, {clock.seconds:.2f} s")


def test_c04_plancherel(criterion):
    worst, n_paths = 0.0, 0
    drivers = [BM, LevyDriverSpec.compound_poisson(2.0, 1.0)]
    kernels = [OU, CONFIG.kernel, KernelSpec.well_balanced_ou(0.7)]
    with Clock() as clock:
        for i, (d, k) in enumerate((d, k) for d in drivers for k in kernels):
            for T in (100.0, 500.0):
                path = simulate_linear_noise(d, k, T, CONFIG.delta, SEED + i)
                data = observe(CONFIG.regression, np.array(CONFIG.alpha0), path)
                res = residuals(CONFIG.regression, data,
                                lse_fit(CONFIG.regression, data, np.array(CONFIG.alpha0)).alpha_hat)
                for series in (path, res):
                    spectral_side, time_side = plancherel_gap(series)
                    worst = max(worst, abs(spectral_side - time_side) / time_side)
                    n_paths += 1
    ok = worst <= 1e-8
    assert criterion(4, "Plancherel", ok, f"{n_paths} paths, max rel gap {worst:.2e}, {clock.seconds:.2f} s")


def test_c05_mean_square_rate(criterion):
    with Clock() as clock:
        rc = mean_square_rate_check(BM, OU, 1000.0, CONFIG.delta, 200, SEED)
    ok = 1.4 <= rc.ratio <= 2.6 and clock.seconds < 30.0
    assert criterion(5, "mean-square rate", ok,
                     f"Var ratio T/2T = {rc.ratio:.3f} (target 2 +- 30%), {clock.seconds:.1f} s")


def test_c06_fejer_limit(criterion):
    G = lambda u: np.exp(-np.square(u))
    with Clock() as clock:
        errs = [abs(fejer_limit_check(G, T) - 1.0) for T in (10.0, 100.0, 1000.0)]
    ok = errs[1] <= 0.05 and errs[0] > errs[1] > errs[2] and clock.seconds < 5.0
    assert criterion(6, "Fejer limit", ok,
                     "errors " + ", ".join(f"{e:.4g}" for e in errs) + f", {clock.seconds:.2f} s")


def test_c07_whittle_exactness(criterion):
    rng = np.random.default_rng(SEED)
    lo, hi = CAR2.lower, CAR2.upper
    worst_theta = 0.0
    with Clock() as clock:
        for _ in range(20):
            truth = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
            p = oracle_periodogram(CAR2, truth, 1000.0, WEIGHT.cutoff())
            fit = whittle_fit(p, CAR2, WEIGHT, np.array(CONFIG.theta0), matrices=False)
            worst_theta = max(worst_theta, float(np.max(np.abs(fit.theta_hat - truth))))
        path = simulate_linear_noise(BM, CONFIG.kernel, 500.0, CONFIG.delta, SEED)
        p = residual_periodogram(path, lambda_max=WEIGHT.cutoff())
        fit = whittle_fit(p, CAR2, WEIGHT, np.array(CONFIG.theta0), matrices=False)
        _, u_grid = grid_oracle(p, CAR2, WEIGHT, 21, refine=True)
        u_fit = contrast_field(p, CAR2, WEIGHT, fit.theta_hat)
        gap = abs(u_fit - u_grid)
    ok = worst_theta <= 1e-6 and gap <= 1e-8 and clock.seconds < 60.0
    assert criterion(7, "Whittle exactness", ok,
                     f"max |theta_hat - theta*| {worst_theta:.2e}, contrast gap to grid oracle "
                     f"{gap:.2e}, {clock.seconds:.1f} s")


def test_c08_sandwich_covariance(criterion):
    T, M = 2000.0, 400
    with Clock() as clock:
        report = mce_normality_study(CONFIG, T_list=[T], M=M, seed=SEED)[T]
    rel = report.rel_dev
    cov = report.coverage
    ok = (report.failures == 0 and float(np.max(rel)) <= 0.30
          and bool(np.all((cov >= 0.90) & (cov <= 0.99))) and clock.seconds <= 900.0)
    detail = (f"M={report.M}, max entrywise rel dev {np.max(rel):.3f} "
              f"(diag {np.round(np.diag(report.emp_cov) / np.diag(report.target), 3).tolist()}), "
              f"coverage {np.round(cov, 3).tolist()}, {clock.seconds:.0f} s")
    assert criterion(8, "sandwich covariance", ok, detail)


def test_c09_quadratic_form_clt(criterion):
    b = lambda lam: (1.0 + lam * lam) ** -3.0
    b_hat = lambda u: math.pi * math.exp(-abs(u)) * (3 + 3 * abs(u) + u * u) / 8.0
    ratios = {}
    with Clock() as clock:
        for label, d in [("brownian", BM), ("compound Poisson", LevyDriverSpec.compound_poisson(2.0, 1.0))]:
            chk = clt_functional_check(d, CONFIG.kernel, b, 1000.0, 500, SEED, delta=CONFIG.delta, b_hat=b_hat)
            ratios[label] = chk.sample_var / chk.sigma2
    ok = all(abs(r - 1.0) <= 0.2 for r in ratios.values()) and clock.seconds <= 300.0
    assert criterion(9, "quadratic-form CLT", ok,
                     ", ".join(f"{k} var ratio {v:.3f}" for k, v in ratios.items()) + f", {clock.seconds:.0f} s")


def test_c10_sigma_trig(criterion):
    m = CONFIG.regression
    alpha0 = np.array([2.0, 1.0, 1.5])
    with Clock() as clock:
        report = lse_normality_check(m, alpha0, BM, OU, 1000.0, 400, SEED, delta=CONFIG.delta)
    rel = float(np.max(report.rel_dev))
    sig = report.target
    psd = float(np.linalg.eigvalsh(sig)[0])
    base = np.linalg.eigvalsh(sig)
    f = 1.0 / (2 * math.pi * 3.25)
    rot = 0.0
    for angle in np.random.default_rng(SEED).uniform(0.0, 2 * math.pi, 20):
        c, s = math.cos(angle), math.sin(angle)
        rotated = np.linalg.eigvalsh(sigma_trig([(c * 2.0 - s * 1.0, s * 2.0 + c * 1.0)], [f]))
        rot = max(rot, float(np.max(np.abs(rotated - base) / np.abs(base))))
    ok = report.failures == 0 and rel <= 0.25 and psd > 0 and rot <= 1e-9 and clock.seconds <= 600.0
    assert criterion(10, "Sigma_TRIG", ok,
                     f"M={report.M}, max entrywise rel dev {rel:.3f}, min eigenvalue {psd:.3g}, "
                     f"rotation drift {rot:.1e}, {clock.seconds:.0f} s")


def test_c11_levitan(criterion):
    F = lambda u: np.sinc(np.asarray(u, dtype=float) / np.pi)
    lam = np.linspace(-10.0, 10.0, 2001)
    with Clock() as clock:
        errs = [float(np.max(np.abs(levitan_polynomial(F, 1.0, n, lam) - F(lam)))) for n in (8, 16, 32, 64)]
    ok = all(a > b for a, b in zip(errs, errs[1:])) and clock.seconds < 10.0
    assert criterion(11, "Levitan approximation", ok,
                     "sup errors " + ", ".join(f"{e:.3g}" for e in errs) + f", {clock.seconds:.2f} s")

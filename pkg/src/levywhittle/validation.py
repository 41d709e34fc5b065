"""Monte Carlo harness and numerical checks of the limit theorems."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import integrate, signal, stats

from ._quad import gauss_legendre, integrate_real_line_even, panel_gauss_legendre
from .config import ExperimentConfig
from .errors import DegenerateHarmonicError, LevyWhittleError
from .levy_noise import (KernelSpec, LevyDriverSpec, NoisePath, covariance, driver_cumulants,
                         lattice_size, simulate_linear_noise, spectral_density)
from .regression import RegressionModel, lse_fit, observe, reg_grad, residuals
from .spectral import residual_periodogram
from .whittle import (Gamma2Mode, asymptotic_matrices, confidence_intervals, mce_covariance,
                      resolve_gamma2, whittle_fit)


def replicate_seed(master, index):
    """Seed of replicate ``index``: a counter-based child of ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def run_replicates(job, master, M, threads=1):
    """Run ``job(index, seed)`` for ``index < M``; results in index order.

    Exceptions from the package are returned in place of a result so that a
    failing replicate is counted rather than aborting the study.
    """
    tasks = [(i, replicate_seed(master, i)) for i in range(M)]
    guarded = partial(_guarded, job)
    if threads <= 1 or M == 1:
        return [guarded(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, tasks, chunksize=max(1, M // (4 * threads))))


def _guarded(job, task):
    try:
        return job(*task)
    except (LevyWhittleError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return exc


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MCReport:
    """Sampling distribution of normalized estimation errors.

    ``errors`` are the normalized errors of the successful replicates;
    skewness, excess kurtosis and the Kolmogorov distance refer to each
    coordinate standardized by its own sample mean and deviation.
    """

    label: str
    names: tuple
    truth: np.ndarray
    estimates: np.ndarray
    errors: np.ndarray
    target: np.ndarray
    seeds: list
    coverage: np.ndarray | None = None
    failures: int = 0
    flags: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def M(self):
        return len(self.errors)

    @property
    def mean(self):
        return self.estimates.mean(axis=0)

    @property
    def bias(self):
        return self.mean - self.truth

    @property
    def emp_cov(self):
        c = np.cov(self.errors, rowvar=False, ddof=1)
        c = np.atleast_2d(c)
        return 0.5 * (c + c.T)

    @property
    def rel_dev(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.emp_cov - self.target) / np.abs(self.target)

    @property
    def skewness(self):
        return stats.skew(self.errors, axis=0)

    @property
    def excess_kurtosis(self):
        return stats.kurtosis(self.errors, axis=0)

    @property
    def ks_distance(self):
        z = (self.errors - self.errors.mean(axis=0)) / self.errors.std(axis=0, ddof=1)
        return np.array([stats.kstest(z[:, j], "norm").statistic for j in range(z.shape[1])])

    def summary(self):
        return {
            "label": self.label, "names": list(self.names), "M": self.M,
            "failures": self.failures, "truth": self.truth, "mean": self.mean,
            "bias": self.bias, "emp_cov": self.emp_cov, "target": self.target,
            "rel_dev": self.rel_dev,
            "coverage": None if self.coverage is None else self.coverage,
            "skewness": self.skewness, "excess_kurtosis": self.excess_kurtosis,
            "ks_distance": self.ks_distance, "meta": self.meta,
        }

    def rows(self):
        header = ["replicate", "seed"] + [f"{n}_hat" for n in self.names] + \
                 [f"{n}_err" for n in self.names] + ["flags"]
        body = [[i, s, *est, *err, flag] for i, (s, est, err, flag) in
                enumerate(zip(self.seeds, self.estimates, self.errors, self.flags))]
        return header, body


# ---------------------------------------------------------------------------
# ergodicity of the mean square
# ---------------------------------------------------------------------------

def mean_square_check(path: NoisePath, B0):
    """``(nu*, |nu* - B0| / B0)`` with ``nu* = T^-1 int eps^2`` by the rectangle rule."""
    nu = float(np.mean(np.square(path.values)))
    return nu, abs(nu - B0) / B0


@dataclass
class RateCheck:
    var_T: float
    var_2T: float
    ratio: float
    nu_T: np.ndarray = field(repr=False)
    nu_2T: np.ndarray = field(repr=False)


def mean_square_rate_check(d: LevyDriverSpec, k: KernelSpec, T, delta, M, seed) -> RateCheck:
    """Ratio ``Var(nu*_T) / Var(nu*_2T)`` over ``M`` replicates.

    Each replicate simulates ``[0, 2T)``; both halves give a ``nu*_T`` sample
    and the full path gives ``nu*_2T``.  Sharing paths correlates the two
    variance estimates, which tightens the ratio.
    """
    n = lattice_size(T, delta)
    nu_T, nu_2T = [], []
    for i in range(M):
        x = simulate_linear_noise(d, k, 2 * T, delta, replicate_seed(seed, i)).values ** 2
        h1, h2 = x[:n].mean(), x[n:].mean()
        nu_T += [h1, h2]
        nu_2T.append(0.5 * (h1 + h2))
    nu_T, nu_2T = np.array(nu_T), np.array(nu_2T)
    v1, v2 = nu_T.var(ddof=1), nu_2T.var(ddof=1)
    return RateCheck(v1, v2, v1 / v2, nu_T, nu_2T)


# ---------------------------------------------------------------------------
# Fejer kernel
# ---------------------------------------------------------------------------

def fejer_kernel(u, T):
    """``F_T(u) = (2 pi T)^-1 (sin(T u / 2) / (u / 2))^2``."""
    u = np.asarray(u, dtype=float)
    return T / (2 * np.pi) * np.sinc(T * u / (2 * np.pi)) ** 2


def fejer_limit_check(G, T, cutoff=100.0, order=16):
    """``int F_T(u) G(u) du`` over the real line.

    With ``H(u) = G(u) + G(-u)`` the integral is ``(pi T)^-1 int_0^inf H(u)
    (1 - cos T u) / u^2 du``.  On ``[0, cutoff]`` Gauss-Legendre panels of
    length ``pi / T`` follow the oscillation; the tail splits into a plain
    part and a cosine-weighted Fourier integral.  ``G`` must accept arrays.
    """
    T = float(T)
    n_panels = int(math.ceil(cutoff * T / np.pi))
    x, wts = gauss_legendre(order)
    edges = np.linspace(0.0, cutoff, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    total = 0.0
    for start in range(0, n_panels, 4096):
        sl = slice(start, start + 4096)
        u = mid[sl, None] + half[sl, None] * x[None, :]
        vals = (np.asarray(G(u), dtype=float) + np.asarray(G(-u), dtype=float)) * fejer_kernel(u, T)
        total += float(np.sum(half[sl, None] * wts[None, :] * vals))

    def H(u):
        return float(G(np.float64(u)) + G(np.float64(-u)))

    # the non-oscillatory part still oscillates when G does: unit panels up to
    # `far`, then v = 1/u turns the remainder into int_0^{1/far} H(1/v) dv
    far = max(1e4, 10.0 * cutoff)

    def Hv(u):
        return np.asarray(G(u), dtype=float) + np.asarray(G(-u), dtype=float)

    plain = panel_gauss_legendre(lambda u: Hv(u) / u**2, cutoff, far,
                                 int(math.ceil(far - cutoff)), order)
    plain += panel_gauss_legendre(lambda v: Hv(1.0 / v), 0.0, 1.0 / far, 4096, order)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        osc, _ = integrate.quad(lambda u: H(u) / u**2, cutoff, np.inf, weight="cos", wvar=T,
                                limlst=200)
    return total + (plain - osc) / (np.pi * T)


# ---------------------------------------------------------------------------
# CLT for the quadratic functional
# ---------------------------------------------------------------------------

def cosine_transform(b, u):
    """``b_hat(u) = 2 int_0^inf cos(lam u) b(lam) dlam`` for even ``b``."""
    u = abs(float(u))
    if u == 0.0:
        return 2.0 * integrate.quad(b, 0.0, np.inf, epsabs=1e-14, limit=500)[0]
    with warnings.catch_warnings():
        # QAWF complains about cycles once they fall below epsabs
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return 2.0 * integrate.quad(b, 0.0, np.inf, weight="cos", wvar=u, epsabs=1e-14)[0]


def lag_table(b_hat, delta, tol=1e-13, max_lag=None):
    """``b_hat(m delta)`` for ``m = 0, 1, ...`` until 20 consecutive values fall below ``tol * |b_hat(0)|``."""
    vals = [b_hat(0.0)]
    scale = abs(vals[0])
    small = 0
    while small < 20 and (max_lag is None or len(vals) <= max_lag):
        v = b_hat(len(vals) * delta)
        vals.append(v)
        small = small + 1 if abs(v) < tol * scale else 0
    return np.array(vals)


def quadratic_functional(x, delta, lags):
    """``delta^2 sum_{k,l} x_k x_l b_hat((k - l) delta)`` with ``b_hat`` given on lags ``0..L``."""
    n = len(x)
    L = min(len(lags) - 1, n - 1)
    auto = signal.fftconvolve(x, x[::-1], mode="full")[n - 1: n + L]
    return delta**2 * (lags[0] * auto[0] + 2.0 * np.dot(lags[1:L + 1], auto[1:]))


def clt_sigma2(d: LevyDriverSpec, k: KernelSpec, b):
    """``16 pi^3 int b^2 f^2 + gamma2 (2 pi int b f)^2``."""
    _, _, g2 = driver_cumulants(d)
    bf2 = integrate_real_line_even(lambda lam: (b(lam) * float(spectral_density(k, d, lam))) ** 2)
    bf = integrate_real_line_even(lambda lam: b(lam) * float(spectral_density(k, d, lam)))
    return 16 * np.pi**3 * bf2 + g2 * (2 * np.pi * bf) ** 2


@dataclass
class CLTCheck:
    sample_var: float
    sigma2: float
    sample_mean: float
    samples: np.ndarray = field(repr=False)


def clt_functional_check(d: LevyDriverSpec, k: KernelSpec, b, T, M, seed, delta=0.05,
                         b_hat=None) -> CLTCheck:
    """Sample variance of ``T^-1/2 Q_T`` against its limiting variance.

    ``Q_T`` is the lattice quadratic form ``delta^2 sum x_k x_l b_hat((k-l) delta)``
    centred by its exact expectation under the covariance ``B``.

    Args:
        b: even weight function of frequency.
        b_hat: optional closed form of ``2 int_0^inf cos(lam u) b(lam) dlam``;
            computed by Fourier quadrature when omitted.
    """
    n = lattice_size(T, delta)
    lags = lag_table(b_hat or partial(cosine_transform, b), delta, max_lag=n - 1)
    L = len(lags) - 1
    cov = np.array([covariance(k, d, m * delta) for m in range(L + 1)])
    counts = n - np.arange(L + 1)
    mean_q = delta**2 * (lags[0] * cov[0] * counts[0] + 2 * np.sum(lags[1:] * cov[1:] * counts[1:]))
    q = np.empty(M)
    for i in range(M):
        x = simulate_linear_noise(d, k, T, delta, replicate_seed(seed, i)).values
        q[i] = (quadratic_functional(x, delta, lags) - mean_q) / math.sqrt(T)
    return CLTCheck(float(q.var(ddof=1)), float(clt_sigma2(d, k, b)), float(q.mean()), q)


# ---------------------------------------------------------------------------
# trigonometric LSE
# ---------------------------------------------------------------------------

def sigma_trig(amplitudes, f_values):
    """Block-diagonal limit covariance of the normalized trigonometric LSE.

    Args:
        amplitudes: sequence of ``(A_k, B_k)``.
        f_values: noise spectral density at each true frequency.
    """
    amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    f_values = np.atleast_1d(np.asarray(f_values, dtype=float))
    N = len(amplitudes)
    out = np.zeros((3 * N, 3 * N))
    for k, ((A, B), f) in enumerate(zip(amplitudes, f_values)):
        C2 = A * A + B * B
        if C2 <= 0:
            raise DegenerateHarmonicError(f"harmonic {k} has zero amplitude")
        if f <= 0:
            raise DegenerateHarmonicError(f"noise spectral density at harmonic {k} is not positive")
        block = np.array([[A * A + 4 * B * B, -3 * A * B, -6 * B],
                          [-3 * A * B, B * B + 4 * A * A, 6 * A],
                          [-6 * B, 6 * A, 12.0]])
        out[3 * k: 3 * k + 3, 3 * k: 3 * k + 3] = 4 * np.pi * f / C2 * block
    return out


def trig_error_scaling(m: RegressionModel, T):
    """``sqrt(T)`` for amplitudes and ``T^{3/2}`` for frequencies."""
    scale = np.full(m.q, math.sqrt(T))
    scale[m.frequency_index] = T**1.5
    return scale


def trig_gram_limit(m: RegressionModel, alpha0, T, n_panels=None):
    """Normalized Gram matrix ``D^-1 (int_0^T grad g grad' g) D^-1`` with ``D = diag(trig_error_scaling)``.

    For a sinusoid in stationary noise the LSE covariance is ``2 pi f(phi) J^-1``
    with ``J`` the large-``T`` limit of this matrix, which gives an independent
    route to the block-diagonal closed form.
    """
    alpha0 = m.check(alpha0)
    phi_max = max(alpha0[k] for k in m.frequency_index)
    if n_panels is None:
        n_panels = max(8, int(math.ceil(T * phi_max / np.pi)))
    gram = panel_gauss_legendre(
        lambda t: (lambda g: g[:, None] * g[None, :])(reg_grad(m, t, alpha0, check=False)),
        0.0, T, n_panels)
    scale = trig_error_scaling(m, T)
    return gram / np.outer(scale, scale)


def _lse_replicate(m, alpha0, d, k, T, delta, index, seed):
    noise = simulate_linear_noise(d, k, T, delta, seed)
    fit = lse_fit(m, observe(m, alpha0, noise), alpha0)
    return fit.alpha_hat, fit.converged


def lse_normality_check(m: RegressionModel, alpha0, d: LevyDriverSpec, k: KernelSpec, T, M,
                        seed, delta=0.05, threads=1) -> MCReport:
    """Normalized trigonometric LSE errors against the block-diagonal closed form."""
    alpha0 = m.check(alpha0)
    h = alpha0.reshape(-1, 3)
    target = sigma_trig(h[:, :2], spectral_density(k, d, h[:, 2]))
    job = partial(_lse_replicate, m, alpha0, d, k, T, delta)
    results = run_replicates(job, seed, M, threads)
    ok = [(i, r) for i, r in enumerate(results) if not isinstance(r, Exception)]
    est = np.array([r[0] for _, r in ok])
    scale = trig_error_scaling(m, T)
    names = tuple(f"{p}{j + 1}" for j in range(m.n_harmonics) for p in ("A", "B", "phi"))
    return MCReport(label=f"lse_T{T:g}", names=names, truth=alpha0, estimates=est,
                    errors=(est - alpha0) * scale, target=target,
                    seeds=[replicate_seed(seed, i) for i, _ in ok],
                    failures=M - len(ok), flags=["" if r[1] else "nonconverged" for _, r in ok],
                    meta={"T": T, "delta": delta})


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    alpha_hat: np.ndarray
    theta_hat: np.ndarray
    ci: np.ndarray
    gamma2: float
    converged: bool
    boundary: bool


def pipeline_replicate(cfg: ExperimentConfig, T, index, seed) -> PipelineResult:
    """Simulate, fit the regression, then fit the noise spectrum on the residuals."""
    noise = simulate_linear_noise(cfg.driver, cfg.kernel, T, cfg.delta, seed)
    data = observe(cfg.regression, np.array(cfg.alpha0), noise)
    lse = lse_fit(cfg.regression, data, np.array(cfg.alpha0))
    res = residuals(cfg.regression, data, lse.alpha_hat)
    pgram = residual_periodogram(res, lambda_max=cfg.weights.cutoff())
    init = np.array(cfg.theta0) if cfg.theta0 is not None else 0.5 * (cfg.spectral.lower + cfg.spectral.upper)
    fit = whittle_fit(pgram, cfg.spectral, cfg.weights, init, matrices=False)
    g2 = resolve_gamma2(cfg.gamma2_mode, driver_gamma2=cfg.gamma2_driver,
                        user_value=cfg.gamma2_value, residual_path=res, s=cfg.spectral,
                        theta=fit.theta_hat)
    W = mce_covariance(*asymptotic_matrices(cfg.spectral, cfg.weights, g2, fit.theta_hat))
    ci = confidence_intervals(fit.theta_hat, W, T, cfg.level)
    return PipelineResult(lse.alpha_hat, fit.theta_hat, ci, g2, fit.converged, fit.boundary)


def target_covariance(cfg: ExperimentConfig):
    """Sandwich covariance at the true parameter, with the configured gamma2 source."""
    if cfg.theta0 is None:
        raise LevyWhittleError("no true spectral parameter: simulated noise is outside the model")
    g2 = cfg.gamma2_value if cfg.gamma2_mode is Gamma2Mode.USER_VALUE else cfg.gamma2_driver
    return mce_covariance(*asymptotic_matrices(cfg.spectral, cfg.weights, g2, np.array(cfg.theta0)))


def mce_normality_study(cfg: ExperimentConfig, T_list=None, M=None, seed=None, threads=1):
    """Full-pipeline Monte Carlo for each horizon; returns ``{T: MCReport}``.

    Replicate ``i`` uses the same seed at every horizon.
    """
    T_list = cfg.T_ladder if T_list is None else T_list
    M = cfg.replicates if M is None else M
    seed = cfg.seed if seed is None else seed
    theta0 = np.array(cfg.theta0)
    target = target_covariance(cfg)
    reports = {}
    for T in T_list:
        results = run_replicates(partial(pipeline_replicate, cfg, T), seed, M, threads)
        ok = [(i, r) for i, r in enumerate(results) if not isinstance(r, Exception)]
        est = np.array([r.theta_hat for _, r in ok]).reshape(-1, len(theta0))
        cover = np.array([(r.ci[:, 0] <= theta0) & (theta0 <= r.ci[:, 1]) for _, r in ok])
        flags = ["boundary" if r.boundary else ("nonconverged" if not r.converged else "")
                 for _, r in ok]
        reports[T] = MCReport(
            label=f"mce_T{T:g}", names=cfg.spectral.names, truth=theta0, estimates=est,
            errors=math.sqrt(T) * (est - theta0), target=target,
            seeds=[replicate_seed(seed, i) for i, _ in ok],
            coverage=cover.mean(axis=0) if len(ok) else None, failures=M - len(ok),
            flags=flags, meta={"T": T, "delta": cfg.delta, "level": cfg.level})
    return reports


# ---------------------------------------------------------------------------
# Levitan polynomials
# ---------------------------------------------------------------------------

def fejer_window(u, s):
    """``(2 sin(s u / 2) / (s u))^2``."""
    return np.sinc(s * np.asarray(u, dtype=float) / (2 * np.pi)) ** 2


def _is_even(F):
    u = np.linspace(0.05, 60.0, 241)
    fu, fm = np.asarray(F(u), dtype=float), np.asarray(F(-u), dtype=float)
    return bool(np.max(np.abs(fu - fm)) <= 1e-14 * max(np.max(np.abs(fu)), 1e-300))


def levitan_transform(F, s, x, sigma=1.0, head_periods=200.0):
    """``E_s(x) = (2 pi)^-1 int e^{-i x u} (2 sin(s u/2)/(s u))^2 F(u) du`` at each ``x``.

    ``[0, head_periods / s]`` is covered by 16-point Gauss-Legendre panels
    short enough for frequencies up to ``2 sigma + s`` and shared by all
    ``x``; the remaining tail uses a Fourier-weighted quadrature per ``x``.
    ``F`` must accept arrays.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    even_F = _is_even(F)
    top = head_periods / s
    h = np.pi / (2.0 * (2.0 * sigma + s + np.max(np.abs(xs))))
    n_panels = int(math.ceil(top / h))
    nodes, wts = gauss_legendre(16)
    edges = np.linspace(0.0, top, n_panels + 1)
    u = (0.5 * (edges[1:] + edges[:-1]))[:, None] + 0.5 * np.diff(edges)[:, None] * nodes
    wu = (0.5 * np.diff(edges)[:, None] * wts).ravel()
    u = u.ravel()
    window = fejer_window(u, s)
    fp, fm = np.asarray(F(u), dtype=float), np.asarray(F(-u), dtype=float)
    ev, od = wu * (fp + fm) * window, wu * (fp - fm) * window
    re, im = np.zeros(len(xs)), np.zeros(len(xs))
    for start in range(0, len(u), 1 << 16):
        sl = slice(start, start + (1 << 16))
        phase = np.multiply.outer(np.abs(xs), u[sl])
        re += np.cos(phase) @ ev[sl]
        if not even_F:
            im += np.sin(phase) @ od[sl]

    # tail: window = 2 (1 - cos s v) / (s v)^2, so each term is a Fourier
    # integral of H(v) / v^2 at frequency x or x +- s
    scale = 2.0 / (s * s)
    cache = {}

    def tail(omega, kind):
        key = (round(omega, 12), kind)
        if key not in cache:
            sign = 1.0 if kind == "cos" else -1.0
            g = lambda v: float(F(v) + sign * F(-v)) / (v * v)
            if omega == 0.0:
                cache[key] = integrate.quad(g, top, np.inf, limit=500)[0] if kind == "cos" else 0.0
            else:
                cache[key] = integrate.quad(g, top, np.inf, weight=kind, wvar=omega)[0]
        return cache[key]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for i, xv in enumerate(np.abs(xs)):
            lo = abs(xv - s)
            re[i] += scale * (tail(xv, "cos") - 0.5 * tail(xv + s, "cos") - 0.5 * tail(lo, "cos"))
            if not even_F:
                im[i] += scale * (tail(xv, "sin") - 0.5 * tail(xv + s, "sin")
                                  - 0.5 * np.sign(xv - s) * tail(lo, "sin"))
    out = (re - 1j * np.sign(xs) * im) / (2 * np.pi)
    return out if np.ndim(x) else complex(out[0])


def levitan_coefficients(F, sigma, n):
    """``c_j = s E_s(j s)`` for ``j = -n..n`` with ``s = sigma / n``."""
    s = sigma / n
    pos = s * levitan_transform(F, s, s * np.arange(n + 1), sigma=sigma)
    return np.concatenate([np.conj(pos[:0:-1]), pos])


def levitan_polynomial(F, sigma, n, lam, coefficients=None):
    """``T_n(F; lam) = sum_{j=-n}^{n} c_j e^{i j s lam}`` for real ``F``; returns the real part.

    Args:
        coefficients: precomputed output of :func:`levitan_coefficients`.
    """
    c = levitan_coefficients(F, sigma, n) if coefficients is None else coefficients
    s = sigma / n
    lam = np.asarray(lam, dtype=float)
    j = np.arange(-n, n + 1)
    return np.real(np.exp(1j * s * np.multiply.outer(lam, j)) @ c)

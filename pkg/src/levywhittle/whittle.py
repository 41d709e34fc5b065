"""Whittle contrast, minimum-contrast fit and its asymptotic covariance."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from ._quad import integrate_real_line_even, quad_checked
from .errors import DomainError, IllConditionedError, ModelPositivityError
from .levy_noise import KernelSpec, NoisePath, kernel_eval
from .spectral import (TWO_PI, Periodogram, SpectralFamily, SpectralModel, WeightSpec,
                       log_spectral_grad, spectral_eval, spectral_hess)

COND_LIMIT = 1e12
BOUNDARY_RTOL = 1e-8


def _estimable(s: SpectralModel):
    if s.eval_only:
        raise DomainError(f"{s.family.value} is evaluation-only and cannot be estimated")


def _grid(p: Periodogram, w: WeightSpec):
    """Frequencies, periodogram values and trapezoid weights (times w) of the truncated grid."""
    keep = np.abs(p.freqs) <= w.cutoff() * (1 + 1e-12)
    lam, vals = p.freqs[keep], p.values[keep]
    quad_w = np.full(lam.shape, p.spacing)
    if len(lam) > 1:
        quad_w[0] *= 0.5
        quad_w[-1] *= 0.5
    return lam, vals, quad_w * w.w(lam)


def _model_values(s, lam, theta):
    f = spectral_eval(s, lam, theta, check=False)
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ModelPositivityError(f"spectral density not positive at theta={np.asarray(theta).tolist()}")
    return f


def contrast_field(p: Periodogram, s: SpectralModel, w: WeightSpec, theta, check=True):
    """``U_T(theta) = int (log f + I_T / f) w dlam`` by the trapezoid rule on the Fourier grid."""
    _estimable(s)
    theta = s.check(theta) if check else np.asarray(theta, dtype=float)
    lam, vals, qw = _grid(p, w)
    f = _model_values(s, lam, theta)
    return float(np.sum((np.log(f) + vals / f) * qw))


def _contrast_derivs(p, s, w, theta, order=1):
    lam, vals, qw = _grid(p, w)
    f = _model_values(s, lam, theta)
    ratio = vals / f
    value = float(np.sum((np.log(f) + ratio) * qw))
    lg = log_spectral_grad(s, lam, theta, check=False)
    grad = lg @ ((1.0 - ratio) * qw)
    if order < 2:
        return value, grad
    fij = spectral_hess(s, lam, theta, check=False) / f
    outer = lg[:, None] * lg[None, :]
    hess = ((fij - outer) * (1.0 - ratio) + outer * ratio) @ qw
    return value, grad, 0.5 * (hess + hess.T)


def contrast_gradient(p, s, w, theta):
    _estimable(s)
    return _contrast_derivs(p, s, w, s.check(theta))[1]


def contrast_hessian(p, s, w, theta):
    _estimable(s)
    return _contrast_derivs(p, s, w, s.check(theta), order=2)[2]


def contrast_function_K(s: SpectralModel, w: WeightSpec, theta0, theta):
    """``K(theta0, theta) = int (r - 1 - log r) w dlam`` with ``r = f(theta0) / f(theta)``."""
    theta0, theta = s.check(theta0), s.check(theta)

    def integrand(lam):
        x = spectral_eval(s, lam, theta0, check=False) / spectral_eval(s, lam, theta, check=False) - 1.0
        return (x - math.log1p(x)) * w.w(lam)

    return integrate_real_line_even(integrand)


def oracle_periodogram(s: SpectralModel, theta, T, lambda_max=None) -> Periodogram:
    """Periodogram whose values are exactly ``f(lambda_k, theta)`` on the Fourier grid of ``T``."""
    theta = s.check(theta)
    if lambda_max is None:
        lambda_max = WeightSpec().cutoff()
    k = int(math.floor(lambda_max * T / TWO_PI))
    freqs = TWO_PI * np.arange(-k, k + 1) / T
    return Periodogram(freqs=freqs, values=spectral_eval(s, freqs, theta), T=float(T),
                       step=float("nan"), source="raw")


# ---------------------------------------------------------------------------
# asymptotic matrices
# ---------------------------------------------------------------------------

def _score_moments(s, theta, weight, method="quad", grid_step=0.1):
    """``int grad log f grad' log f * weight`` and ``int grad log f * weight`` over the real line."""
    m = s.dim

    if method == "grid":
        top = 1.0
        while weight(top) > 1e-18 * weight(0.0):
            top *= 1.5
        n = int(math.ceil(top / grid_step))
        lam = np.linspace(0.0, n * grid_step, n + 1)
        tw = np.full(n + 1, grid_step)
        tw[0] = tw[-1] = grid_step / 2
        lg = log_spectral_grad(s, lam, theta, check=False)
        wt = 2.0 * tw * weight(lam)
        return (lg * wt) @ lg.T, lg @ wt

    def score(lam):
        return log_spectral_grad(s, lam, theta, check=False)

    outer = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            outer[i, j] = outer[j, i] = integrate_real_line_even(
                lambda lam, i=i, j=j: float(score(lam)[i] * score(lam)[j] * weight(lam)))
    first = np.array([integrate_real_line_even(lambda lam, i=i: float(score(lam)[i] * weight(lam)))
                      for i in range(m)])
    return outer, first


def asymptotic_matrices(s: SpectralModel, w: WeightSpec, gamma2, theta, method="quad", grid_step=0.1):
    """Return ``(W1, W2, V)``.

    ``W1 = int grad log f grad' log f w``, ``W2 = 4 pi int grad log f grad' log f w^2``
    and ``V = gamma2 (int grad log f w)(int grad log f w)'``.

    Args:
        method: ``"quad"`` for adaptive quadrature or ``"grid"`` for a
            trapezoid rule with spacing ``grid_step`` (used as a refinement
            cross-check).
    """
    _estimable(s)
    theta = s.check(theta)
    if gamma2 < 0:
        raise DomainError("gamma2 must be nonnegative")
    W1, first = _score_moments(s, theta, w.w, method, grid_step)
    W2, _ = _score_moments(s, theta, lambda lam: w.w(lam) ** 2, method, grid_step)
    W2 = 4.0 * np.pi * W2
    V = gamma2 * np.outer(first, first)
    return W1, W2, V


def mce_covariance(W1, W2, V):
    """Sandwich ``W = W1^{-1} (W2 + V) W1^{-1}``.

    Raises:
        IllConditionedError: if ``cond(W1) > 1e12``.
    """
    W1, W2, V = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (W1, W2, V))
    cond = np.linalg.cond(W1)
    if not cond <= COND_LIMIT:
        raise IllConditionedError(f"W1 condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    left = np.linalg.solve(W1, W2 + V)
    W = np.linalg.solve(W1, left.T).T
    return 0.5 * (W + W.T)


def confidence_intervals(theta_hat, W, T, level=0.95):
    """Normal intervals ``theta_i +- z sqrt(W_ii / T)``, shape ``(m, 2)``."""
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    z = stats.norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(np.clip(np.diag(np.atleast_2d(W)), 0.0, None) / T)
    return np.column_stack([theta_hat - half, theta_hat + half])


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------

def _newton_polish(fun_derivs, theta, lo, hi, max_iter=60):
    """Projected Newton iterations with backtracking; returns (theta, iterations, converged)."""
    span = hi - lo
    for it in range(max_iter):
        value, grad, hess = fun_derivs(theta, 2)
        at_lo = (theta <= lo + BOUNDARY_RTOL * span) & (grad > 0)
        at_hi = (theta >= hi - BOUNDARY_RTOL * span) & (grad < 0)
        free = ~(at_lo | at_hi)
        if not free.any():
            return theta, it, True
        Hf = hess[np.ix_(free, free)]
        gf = grad[free]
        evals, evecs = np.linalg.eigh(Hf)
        floor = 1e-12 * max(abs(evals).max(), 1e-300)
        step_f = -(evecs @ ((evecs.T @ gf) / np.maximum(np.abs(evals), floor)))
        step = np.zeros_like(theta)
        step[free] = step_f
        t = 1.0
        for _ in range(40):
            cand = np.clip(theta + t * step, lo, hi)
            if fun_derivs(cand, 0) <= value:
                break
            t *= 0.5
        else:
            return theta, it, True
        moved = np.max(np.abs(cand - theta) / (1.0 + np.abs(theta)))
        theta = cand
        if moved < 1e-14:
            return theta, it + 1, True
    return theta, max_iter, False


@dataclass
class WhittleFit:
    theta_hat: np.ndarray
    value: float
    converged: bool
    boundary: bool
    T: float
    W1: np.ndarray | None = None
    W2: np.ndarray | None = None
    V: np.ndarray | None = None
    W: np.ndarray | None = None
    ci: np.ndarray | None = None
    level: float = 0.95
    trace: dict = field(default_factory=dict)

    def to_dict(self):
        def arr(x):
            return None if x is None else np.asarray(x).tolist()
        return {"theta_hat": arr(self.theta_hat), "value": self.value, "converged": self.converged,
                "boundary": self.boundary, "T": self.T, "W1": arr(self.W1), "W2": arr(self.W2),
                "V": arr(self.V), "W": arr(self.W), "ci": arr(self.ci), "level": self.level,
                "trace": self.trace}


def _minimize(p, s, w, init):
    lo, hi = s.lower, s.upper

    def derivs(theta, order):
        if order == 0:
            try:
                return contrast_field(p, s, w, theta, check=False)
            except ModelPositivityError:
                return np.inf
        return _contrast_derivs(p, s, w, theta, order)

    trace = {}
    res = optimize.minimize(lambda th: _contrast_derivs(p, s, w, th), init, jac=True,
                            method="L-BFGS-B", bounds=list(zip(lo, hi)),
                            options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
    trace.update(lbfgs_nit=int(res.nit), lbfgs_status=int(res.status))
    theta, nit, ok = _newton_polish(derivs, np.clip(res.x, lo, hi), lo, hi)
    trace["newton_nit"] = nit
    if not ok:
        nm = optimize.minimize(lambda th: derivs(th, 0), theta, method="Nelder-Mead",
                               bounds=list(zip(lo, hi)),
                               options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        trace["nelder_mead_nit"] = int(nm.nit)
        if nm.fun < derivs(theta, 0):
            theta = np.clip(nm.x, lo, hi)
        ok = bool(nm.success)
    return theta, derivs(theta, 0), ok, trace


def whittle_fit(p: Periodogram, s: SpectralModel, w: WeightSpec, init, gamma2=0.0,
                level=0.95, matrices=True) -> WhittleFit:
    """Minimum-contrast estimate of ``theta`` over the closed box.

    L-BFGS-B with the analytic gradient, then projected Newton with the
    analytic Hessian, then Nelder-Mead if Newton fails to settle.  A
    minimizer on the box boundary is flagged (``boundary=True``,
    ``converged=False``); intervals are still reported.
    """
    _estimable(s)
    init = s.check(init)
    theta, value, ok, trace = _minimize(p, s, w, init)
    span = s.upper - s.lower
    boundary = bool(np.any(theta <= s.lower + BOUNDARY_RTOL * span)
                    or np.any(theta >= s.upper - BOUNDARY_RTOL * span))
    fit = WhittleFit(theta_hat=theta, value=float(value), converged=ok and not boundary,
                     boundary=boundary, T=p.T, level=level, trace=trace)
    if matrices:
        fit.W1, fit.W2, fit.V = asymptotic_matrices(s, w, gamma2, theta)
        fit.W = mce_covariance(fit.W1, fit.W2, fit.V)
        fit.ci = confidence_intervals(theta, fit.W, p.T, level)
    return fit


def grid_oracle(p: Periodogram, s: SpectralModel, w: WeightSpec, grid_spec, refine=False, chunk=256):
    """Exhaustive minimum of ``U_T`` over a rectangular grid.

    Args:
        grid_spec: one 1-d array of values per coordinate, or an int giving
            that many equispaced points per coordinate across the box.
        refine: polish the grid minimizer with the local optimizer.

    Returns:
        ``(theta, value)``; ties go to the lexicographically smallest point.
    """
    _estimable(s)
    if isinstance(grid_spec, (int, np.integer)):
        axes = [np.linspace(lo, hi, int(grid_spec)) for lo, hi in s.bounds]
    else:
        axes = [np.sort(np.atleast_1d(np.asarray(a, dtype=float))) for a in grid_spec]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, s.dim)
    for pt in (pts[0], pts[-1]):
        s.check(pt)
    lam, vals, qw = _grid(p, w)
    values = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk].T[:, :, None]
        f = spectral_eval(s, lam, block, check=False)
        if np.any(~np.isfinite(f)) or np.any(f <= 0):
            raise ModelPositivityError("spectral density not positive on the oracle grid")
        values[start:start + chunk] = ((np.log(f) + vals / f) * qw).sum(axis=1)
    best = int(np.argmin(values))
    theta, value = pts[best].copy(), float(values[best])
    if refine:
        cand, cval, _, _ = _minimize(p, s, w, theta)
        if cval <= value:
            theta, value = cand, float(cval)
    return theta, value


# ---------------------------------------------------------------------------
# gamma2 sources
# ---------------------------------------------------------------------------

class Gamma2Mode(str, enum.Enum):
    FROM_DRIVER = "from-driver"
    USER_VALUE = "user-value"
    ESTIMATE = "estimate-from-residuals"


def kernel_power_integral(k: KernelSpec, power):
    """``int |a_hat(t)|^power dt`` over the kernel support."""
    top = k.horizon()
    lo = 0.0 if k.causal else -top
    return quad_checked(lambda t: abs(float(kernel_eval(k, t))) ** power, lo, top,
                        epsabs=1e-14, limit=1000)


def gamma2_from_residuals(res: NoisePath, k: KernelSpec):
    """Moment estimate ``gamma2 = excess kurtosis * (int a^2)^2 / int a^4``, floored at 0."""
    x = np.asarray(res.values, dtype=float)
    x = x - x.mean()
    m2 = np.mean(x * x)
    if m2 <= 0:
        return 0.0
    excess = np.mean(x**4) / m2**2 - 3.0
    return max(0.0, float(excess * kernel_power_integral(k, 2) ** 2 / kernel_power_integral(k, 4)))


def car2_kernel(theta) -> KernelSpec:
    """Kernel whose density matches CAR2 ``theta = (alpha, beta, gamma)`` (``omega = gamma``)."""
    return KernelSpec.car2(float(theta[0]), float(theta[2]))


def resolve_gamma2(mode, *, driver_gamma2=None, user_value=0.0, residual_path=None,
                   s: SpectralModel | None = None, theta=None):
    mode = Gamma2Mode(mode)
    if mode is Gamma2Mode.FROM_DRIVER:
        if driver_gamma2 is None:
            raise DomainError("gamma2 mode 'from-driver' needs a driver")
        return float(driver_gamma2)
    if mode is Gamma2Mode.USER_VALUE:
        return float(user_value)
    if residual_path is None or s is None or s.family is not SpectralFamily.CAR2:
        raise DomainError("gamma2 estimation needs residuals and a CAR2 model fit")
    return gamma2_from_residuals(residual_path, car2_kernel(theta))

"""Regression families, their derivatives and norming, and the least-squares fit."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from ._quad import panel_gauss_legendre
from .errors import DomainError, ShapeError, SingularNormingError
from .levy_noise import NoisePath

EPS_FLOOR = 1e-12
TIE_RTOL = 1e-9


class RegressionFamily(str, enum.Enum):
    EXPONENTIAL = "exponential"
    TRIGONOMETRIC = "trigonometric"


@dataclass(frozen=True)
class Regressor:
    """Piecewise-constant vector regressor ``y(t)`` for the exponential family.

    ``values[j]`` holds on ``[knots[j], knots[j+1])``; the last row extends to
    infinity.  A single knot at 0 gives a constant regressor.
    """

    knots: tuple
    values: tuple

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if knots.ndim != 1 or len(knots) != len(values) or knots[0] != 0.0:
            raise ShapeError("regressor needs one value row per knot and a first knot at 0")
        if np.any(np.diff(knots) <= 0):
            raise ShapeError("regressor knots must increase strictly")
        if not np.all(np.isfinite(values)):
            raise DomainError("regressor values must be finite")
        object.__setattr__(self, "knots", tuple(knots.tolist()))
        object.__setattr__(self, "values", tuple(map(tuple, values.tolist())))

    @classmethod
    def constant(cls, y):
        return cls((0.0,), (tuple(np.atleast_1d(np.asarray(y, dtype=float)).tolist()),))

    @property
    def dim(self):
        return len(self.values[0])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.knots), t, side="right") - 1
        return np.moveaxis(np.asarray(self.values)[np.clip(idx, 0, None)], -1, 0)

    def to_dict(self):
        return {"knots": list(self.knots), "values": [list(v) for v in self.values]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["knots"]), tuple(tuple(v) for v in d["values"]))


@dataclass(frozen=True)
class RegressionModel:
    """Regression family with a closed parameter box.

    Trigonometric parameters are ordered ``(A_1, B_1, phi_1, ..., A_N, B_N, phi_N)``.
    """

    family: RegressionFamily
    bounds: tuple
    n_harmonics: int = 0
    regressor: Regressor | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", RegressionFamily(self.family))
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        for lo, hi in bounds:
            if not lo <= hi:
                raise DomainError(f"empty parameter interval [{lo}, {hi}]")
        if self.family is RegressionFamily.TRIGONOMETRIC:
            if self.n_harmonics < 1 or len(bounds) != 3 * self.n_harmonics:
                raise ShapeError("trigonometric model needs 3 bounds per harmonic")
            if min(bounds[3 * k + 2][0] for k in range(self.n_harmonics)) <= 0:
                raise DomainError("frequency bounds must be positive")
        else:
            if self.regressor is None or self.regressor.dim != len(bounds):
                raise ShapeError("exponential model needs a regressor matching the bound count")

    @classmethod
    def trigonometric(cls, n_harmonics=1, amplitude=(-10.0, 10.0), frequency=(0.1, 3.0)):
        return cls(RegressionFamily.TRIGONOMETRIC,
                   (amplitude, amplitude, frequency) * n_harmonics, n_harmonics)

    @classmethod
    def exponential(cls, regressor: Regressor, bounds):
        return cls(RegressionFamily.EXPONENTIAL, tuple(bounds), 0, regressor)

    @property
    def q(self):
        return len(self.bounds)

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])

    @property
    def frequency_index(self):
        return list(range(2, self.q, 3)) if self.family is RegressionFamily.TRIGONOMETRIC else []

    def check(self, alpha, tol=1e-12):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.q,):
            raise ShapeError(f"alpha must have shape ({self.q},), got {alpha.shape}")
        span = np.maximum(self.upper - self.lower, 1.0)
        if np.any(alpha < self.lower - tol * span) or np.any(alpha > self.upper + tol * span):
            raise DomainError(f"alpha={alpha.tolist()} outside box {list(self.bounds)}")
        return alpha

    def to_dict(self):
        d = {"family": self.family.value, "bounds": [list(b) for b in self.bounds]}
        if self.family is RegressionFamily.TRIGONOMETRIC:
            d["n_harmonics"] = self.n_harmonics
        else:
            d["regressor"] = self.regressor.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        reg = Regressor.from_dict(d["regressor"]) if "regressor" in d else None
        return cls(RegressionFamily(d["family"]), tuple(tuple(b) for b in d["bounds"]),
                   int(d.get("n_harmonics", 0)), reg)


def _harmonics(alpha):
    return np.asarray(alpha, dtype=float).reshape(-1, 3)


def reg_eval(m: RegressionModel, t, alpha, check=True):
    """``g(t, alpha)``, vectorized over ``t``."""
    alpha = m.check(alpha) if check else np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    if m.family is RegressionFamily.TRIGONOMETRIC:
        out = np.zeros_like(t)
        for A, B, phi in _harmonics(alpha):
            out = out + A * np.cos(phi * t) + B * np.sin(phi * t)
        return out
    y = m.regressor(t)
    return np.exp(np.tensordot(alpha, y, axes=1))


def reg_grad(m: RegressionModel, t, alpha, check=True):
    """Gradient in ``alpha``, shape ``(q,) + t.shape``."""
    alpha = m.check(alpha) if check else np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    if m.family is RegressionFamily.TRIGONOMETRIC:
        rows = []
        for A, B, phi in _harmonics(alpha):
            c, s = np.cos(phi * t), np.sin(phi * t)
            rows += [c, s, t * (B * c - A * s)]
        return np.stack(rows)
    y = m.regressor(t)
    return y * np.exp(np.tensordot(alpha, y, axes=1))


def reg_hess_entry(m: RegressionModel, t, alpha, i, l, check=True):
    """Second derivative ``g_il(t, alpha)``."""
    alpha = m.check(alpha) if check else np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    if not (0 <= i < m.q and 0 <= l < m.q):
        raise ShapeError(f"index ({i}, {l}) outside 0..{m.q - 1}")
    if m.family is RegressionFamily.EXPONENTIAL:
        y = m.regressor(t)
        return y[i] * y[l] * np.exp(np.tensordot(alpha, y, axes=1))
    if i // 3 != l // 3:
        return np.zeros_like(t)
    k = i // 3
    A, B, phi = alpha[3 * k: 3 * k + 3]
    i, l = sorted((i % 3, l % 3))
    c, s = np.cos(phi * t), np.sin(phi * t)
    if l < 2:
        return np.zeros_like(t)
    if i == 0:
        return -t * s
    if i == 1:
        return t * c
    return -t * t * (A * c + B * s)


def reg_norming(m: RegressionModel, alpha, T, check=True):
    """``d_T(alpha)`` with ``d_iT^2 = int_0^T g_i(t, alpha)^2 dt``.

    Raises:
        SingularNormingError: if some coordinate has a vanishing gradient.
    """
    alpha = m.check(alpha) if check else np.asarray(alpha, dtype=float)
    if T <= 0:
        raise DomainError("T must be positive")
    if m.family is RegressionFamily.EXPONENTIAL:
        knots = np.asarray(m.regressor.knots)
        vals = np.asarray(m.regressor.values)
        ends = np.append(knots[1:], np.inf)
        lengths = np.clip(np.minimum(ends, T) - knots, 0.0, None)
        g2 = np.exp(2.0 * vals @ alpha)
        d2 = (vals**2 * (g2 * lengths)[:, None]).sum(axis=0)
    else:
        phi_max = max(abs(alpha[k]) for k in m.frequency_index)
        n_panels = max(8, int(math.ceil(T * max(phi_max, 1.0) / np.pi)))
        d2 = panel_gauss_legendre(lambda t: reg_grad(m, t, alpha, check=False) ** 2,
                                  0.0, T, n_panels)
    if np.any(d2 <= 0):
        bad = [int(i) for i in np.flatnonzero(d2 <= 0)]
        raise SingularNormingError(f"zero-gradient coordinates {bad}: d_T is singular")
    return np.sqrt(d2)


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------

@dataclass
class LSEFit:
    alpha_hat: np.ndarray
    sse: float
    norming: np.ndarray
    converged: bool
    iterations: int
    n_starts: int = 1
    message: str = ""

    def to_dict(self):
        return {"alpha_hat": self.alpha_hat.tolist(), "sse": self.sse,
                "norming": self.norming.tolist(), "converged": self.converged,
                "iterations": self.iterations, "n_starts": self.n_starts}


def observe(m: RegressionModel, alpha0, noise: NoisePath) -> NoisePath:
    """Observations ``X(k step) = g(k step, alpha0) + noise``."""
    values = reg_eval(m, noise.times, alpha0) + noise.values
    return NoisePath(noise.step, values, noise.seed, dict(noise.meta))


def sse(m: RegressionModel, data: NoisePath, alpha):
    """Rectangle-rule ``S_T(alpha) = step * sum_k (X_k - g(t_k, alpha))^2``."""
    r = data.values - reg_eval(m, data.times, alpha, check=False)
    return float(data.step * np.dot(r, r))


def residuals(m: RegressionModel, data: NoisePath, alpha_hat) -> NoisePath:
    values = data.values - reg_eval(m, data.times, alpha_hat)
    return NoisePath(data.step, values, data.seed, {**data.meta, "source": "residual"})


def _local_fit(m, data, start, max_nfev):
    t, x, sq = data.times, data.values, math.sqrt(data.step)
    lo, hi = m.lower, m.upper
    fixed = lo == hi
    free = ~fixed
    base = np.clip(start, lo, hi)

    def full(u):
        a = base.copy()
        a[free] = u
        return a

    def fun(u):
        return sq * (reg_eval(m, t, full(u), check=False) - x)

    def jac(u):
        return sq * reg_grad(m, t, full(u), check=False)[free].T

    if not free.any():
        return base, 0, True, "all coordinates fixed"
    res = optimize.least_squares(fun, base[free], jac=jac, bounds=(lo[free], hi[free]),
                                 method="trf", x_scale="jac", xtol=1e-14, ftol=1e-14,
                                 gtol=1e-14, max_nfev=max_nfev)
    return np.clip(full(res.x), lo, hi), int(res.nfev), bool(res.status > 0), res.message


def _amplitudes_given_frequencies(m, data, phis):
    """Linear least squares for ``(A_k, B_k)`` at fixed frequencies."""
    t = data.times
    cols = []
    for phi in phis:
        cols += [np.cos(phi * t), np.sin(phi * t)]
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, data.values, rcond=None)
    alpha = np.empty(m.q)
    for k, phi in enumerate(phis):
        alpha[3 * k: 3 * k + 3] = coef[2 * k], coef[2 * k + 1], phi
    return np.clip(alpha, m.lower, m.upper)


def frequency_candidates(m: RegressionModel, data: NoisePath, n_peaks=None, pad=4):
    """Local maxima of a zero-padded periodogram of the data inside the frequency box.

    Returns peak frequencies sorted by decreasing height.
    """
    n = len(data.values)
    nfft = 1 << int(math.ceil(math.log2(pad * n)))
    spec = np.abs(np.fft.rfft(data.values - data.values.mean(), nfft)) ** 2
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, d=data.step)
    lo = min(m.bounds[k][0] for k in m.frequency_index)
    hi = max(m.bounds[k][1] for k in m.frequency_index)
    peaks, _ = signal.find_peaks(spec)
    peaks = peaks[(freqs[peaks] >= lo) & (freqs[peaks] <= hi)]
    peaks = peaks[np.argsort(spec[peaks])[::-1]]
    if n_peaks is None:
        n_peaks = m.n_harmonics + 2
    return freqs[peaks[:n_peaks]]


def _sort_harmonics(alpha):
    h = _harmonics(alpha)
    return h[np.argsort(h[:, 2], kind="stable")].ravel()


def lse_fit(m: RegressionModel, data: NoisePath, init, max_nfev=200, multistart=True) -> LSEFit:
    """Least-squares estimate of ``alpha`` over the closed box.

    For the trigonometric family the local solver is started from ``init``
    and from every ordered combination of periodogram peaks (amplitudes set
    by linear least squares).  Among minima whose ``S_T`` agree to 1e-9
    relative, the lexicographically smallest frequency vector wins.  The
    returned ``S_T`` never exceeds ``S_T(init)``.
    """
    init = m.check(init)
    x = np.asarray(data.values, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ShapeError("observations must be a 1-d array of length >= 2")
    T = len(x) * data.step

    starts = [init]
    if m.family is RegressionFamily.TRIGONOMETRIC and multistart:
        cands = frequency_candidates(m, data)
        for combo in itertools.combinations(sorted(cands), m.n_harmonics):
            starts.append(_amplitudes_given_frequencies(m, data, combo))

    results = []
    total = 0
    for start in starts:
        a, nfev, conv, msg = _local_fit(m, data, start, max_nfev)
        if m.family is RegressionFamily.TRIGONOMETRIC:
            a = _sort_harmonics(a)
        total += nfev
        results.append((sse(m, data, a), a, conv, msg))

    best_sse = min(r[0] for r in results)
    tied = [r for r in results if r[0] <= best_sse * (1 + TIE_RTOL) + 1e-300]
    key_idx = m.frequency_index or list(range(m.q))
    tied.sort(key=lambda r: tuple(r[1][key_idx]))
    s_best, a_best, conv, msg = tied[0]

    s_init = sse(m, data, init)
    if s_init < s_best:
        s_best, a_best, msg = s_init, init.copy(), "init retained (monotone acceptance)"
    return LSEFit(alpha_hat=a_best, sse=s_best, norming=reg_norming(m, a_best, T, check=False),
                  converged=conv, iterations=total, n_starts=len(starts), message=str(msg))


def exponential_constant_oracle(x, eps_floor=EPS_FLOOR):
    """Closed-form LSE for ``g = exp(alpha)`` with ``y = 1``: ``log max(mean X, eps)``."""
    return math.log(max(float(np.mean(x)), eps_floor))


# ---------------------------------------------------------------------------
# identifiability diagnostic
# ---------------------------------------------------------------------------

@dataclass
class C2Diagnostic:
    c0: float
    n_samples: int
    ratios: np.ndarray = field(repr=False)


def condition_c2_constant(m: RegressionModel, alpha0, T, step, n_samples=1000, seed=0):
    """Empirical smallest ``c0`` with ``Phi_T(alpha, alpha0) <= c0 |d_T(alpha0)(alpha - alpha0)|^2``.

    ``Phi_T`` is the rectangle-rule integral of ``(g(alpha) - g(alpha0))^2``
    over ``[0, T]``; ``alpha`` is drawn uniformly from the box.
    """
    alpha0 = m.check(alpha0)
    d = reg_norming(m, alpha0, T)
    t = np.arange(int(round(T / step))) * step
    g0 = reg_eval(m, t, alpha0)
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    for j in range(n_samples):
        a = rng.uniform(m.lower, m.upper)
        phi = step * np.sum((reg_eval(m, t, a, check=False) - g0) ** 2)
        ratios[j] = phi / np.sum((d * (a - alpha0)) ** 2)
    return C2Diagnostic(c0=float(ratios.max()), n_samples=n_samples, ratios=ratios)

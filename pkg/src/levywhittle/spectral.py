"""Residual periodogram, parametric spectral densities and weight functions."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi
WEIGHT_TAIL_TOL = 1e-8


# ---------------------------------------------------------------------------
# periodogram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Periodogram:
    """Periodogram on the symmetric Fourier grid ``lambda_k = 2 pi k / T``."""

    freqs: np.ndarray
    values: np.ndarray
    T: float
    step: float
    source: str = "residual"

    def __post_init__(self):
        self.freqs.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def spacing(self):
        return TWO_PI / self.T

    def to_rows(self):
        return list(zip(self.freqs.tolist(), self.values.tolist()))


def _dft(values, step):
    """``int_0^T x(t) exp(-i lambda_k t) dt`` by the lattice rectangle rule."""
    return step * np.fft.fft(np.asarray(values, dtype=float))


def residual_periodogram(res, lambda_max=None, source="residual") -> Periodogram:
    """Periodogram ``(2 pi T)^{-1} |int_0^T r(t) e^{-i t lambda} dt|^2``.

    Evaluated at the Fourier frequencies ``2 pi k / T`` with ``|lambda_k| <=
    lambda_max``.  Without ``lambda_max`` the largest symmetric sub-grid of
    the FFT grid is returned.

    Raises:
        DomainError: if ``lambda_max`` exceeds the Nyquist frequency ``pi / step``.
    """
    n, step = len(res.values), res.step
    T = n * step
    k_sym = (n - 1) // 2
    if lambda_max is None:
        k_max = k_sym
    else:
        if lambda_max > np.pi / step * (1 + 1e-12):
            raise DomainError(f"lambda_max={lambda_max} beyond Nyquist pi/step={np.pi / step}")
        k_max = min(int(math.floor(lambda_max * T / TWO_PI + 1e-9)), k_sym)
    spec = np.abs(_dft(res.values, step)) ** 2 / (TWO_PI * T)
    ks = np.arange(-k_max, k_max + 1)
    values = spec[ks % n]
    # exact evenness: |X(-k)| = |X(k)| for real input up to rounding
    values = 0.5 * (values + values[::-1])
    return Periodogram(freqs=TWO_PI * ks / T, values=values, T=T, step=step, source=source)


def plancherel_gap(res):
    """Return ``(spectral_side, time_side)`` of the discrete Plancherel identity.

    ``(2 pi / T) sum_k I_T(lambda_k)`` over the full FFT grid against
    ``T^{-1} sum_j r_j^2 step``.
    """
    n, step = len(res.values), res.step
    T = n * step
    spec = np.abs(_dft(res.values, step)) ** 2 / (TWO_PI * T)
    return TWO_PI / T * spec.sum(), float(np.sum(np.square(res.values)) * step / T)


# ---------------------------------------------------------------------------
# spectral models
# ---------------------------------------------------------------------------

class SpectralFamily(str, enum.Enum):
    CAR2 = "car2_pendulum"
    OU = "ou"
    RIESZ_BESSEL = "riesz_bessel"


PARAM_NAMES = {
    SpectralFamily.CAR2: ("alpha", "beta", "gamma"),
    SpectralFamily.OU: ("decay", "beta"),
    SpectralFamily.RIESZ_BESSEL: ("alpha", "beta", "gamma"),
}


@dataclass(frozen=True)
class SpectralModel:
    """Parametric spectral density family with a closed parameter box.

    The Riesz-Bessel family may only be built with ``eval_only=True``; the
    estimation code refuses it.
    """

    family: SpectralFamily
    bounds: tuple
    eval_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", SpectralFamily(self.family))
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(bounds) != self.dim:
            raise DomainError(f"{self.family.value} needs {self.dim} bounds, got {len(bounds)}")
        for lo, hi in bounds:
            if not lo < hi:
                raise DomainError(f"empty parameter interval [{lo}, {hi}]")
        if self.family is SpectralFamily.RIESZ_BESSEL and not self.eval_only:
            raise DomainError("Riesz-Bessel densities are evaluation-only; pass eval_only=True")
        if self.family in (SpectralFamily.CAR2, SpectralFamily.OU):
            if min(lo for lo, _ in bounds) <= 0:
                raise DomainError("parameter box must be strictly positive")

    @classmethod
    def car2(cls, alpha=(0.05, 5.0), beta=(0.05, 10.0), gamma=(0.2, 6.0)):
        return cls(SpectralFamily.CAR2, (alpha, beta, gamma))

    @property
    def dim(self):
        return len(PARAM_NAMES[self.family])

    @property
    def names(self):
        return PARAM_NAMES[self.family]

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])

    def check(self, theta, tol=1e-12):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DomainError(f"theta must have shape ({self.dim},), got {theta.shape}")
        span = self.upper - self.lower
        if np.any(theta < self.lower - tol * span) or np.any(theta > self.upper + tol * span):
            raise DomainError(f"theta={theta.tolist()} outside box {list(self.bounds)}")
        return theta

    def corners(self):
        return [np.array(c) for c in itertools.product(*self.bounds)]

    def to_dict(self):
        return {"family": self.family.value, "bounds": [list(b) for b in self.bounds],
                "eval_only": self.eval_only}

    @classmethod
    def from_dict(cls, d):
        return cls(SpectralFamily(d["family"]), tuple(tuple(b) for b in d["bounds"]),
                   bool(d.get("eval_only", False)))


def _car2_parts(lam, theta):
    a, b, g = theta
    l2 = lam * lam
    u = l2 - a * a - g * g
    s = u * u + 4 * a * a * l2
    return a, b, g, l2, u, s


def spectral_eval(s: SpectralModel, lam, theta, check=True):
    """Spectral density ``f(lam, theta)``."""
    theta = s.check(theta) if check else np.asarray(theta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if s.family is SpectralFamily.CAR2:
        _, b, _, _, _, den = _car2_parts(lam, theta)
        return b / (TWO_PI * den)
    if s.family is SpectralFamily.OU:
        c, b = theta
        return b / (TWO_PI * (c * c + lam * lam))
    a, b, g = theta
    with np.errstate(divide="ignore"):
        return b / (TWO_PI * np.abs(lam) ** (2 * a) * (1 + lam * lam) ** g)


def log_spectral_grad(s: SpectralModel, lam, theta, check=True):
    """``grad_theta log f``, shape ``(m,) + lam.shape``."""
    theta = s.check(theta) if check else np.asarray(theta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    ones = np.ones_like(lam)
    if s.family is SpectralFamily.CAR2:
        a, b, g, l2, u, den = _car2_parts(lam, theta)
        ds_a = 4 * a * (l2 + a * a + g * g)
        ds_g = -4 * g * u
        return np.stack([-ds_a / den, ones / b, -ds_g / den])
    if s.family is SpectralFamily.OU:
        c, b = theta
        return np.stack([-2 * c / (c * c + lam * lam), ones / b])
    a, b, g = theta
    with np.errstate(divide="ignore"):
        return np.stack([-2 * np.log(np.abs(lam)), ones / b, -np.log1p(lam * lam)])


def spectral_grad(s: SpectralModel, lam, theta, check=True):
    """``grad_theta f``, shape ``(m,) + lam.shape``.

    For CAR2, with ``s(lam) = (lam^2 - alpha^2 - gamma^2)^2 + 4 alpha^2 lam^2``:
    ``f_alpha = -(2 alpha beta / pi)(lam^2 + alpha^2 + gamma^2) s^-2``,
    ``f_beta = (2 pi s)^-1`` and
    ``f_gamma = (2 beta gamma / pi)(lam^2 - alpha^2 - gamma^2) s^-2``.
    """
    theta = s.check(theta) if check else np.asarray(theta, dtype=float)
    f = spectral_eval(s, lam, theta, check=False)
    return f * log_spectral_grad(s, lam, theta, check=False)


def spectral_hess(s: SpectralModel, lam, theta, check=True):
    """Second derivatives ``f_ij``, shape ``(m, m) + lam.shape``."""
    theta = s.check(theta) if check else np.asarray(theta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    m = s.dim
    out = np.zeros((m, m) + lam.shape)
    if s.family is SpectralFamily.CAR2:
        a, b, g, l2, u, den = _car2_parts(lam, theta)
        s_a = 4 * a * (l2 + a * a + g * g)
        s_g = -4 * g * u
        s_aa = 4 * (l2 + 3 * a * a + g * g)
        s_gg = -4 * (l2 - a * a - 3 * g * g)
        s_ag = 8 * a * g * np.ones_like(lam)
        c = b / TWO_PI
        d2, d3 = den**2, den**3
        out[0, 0] = -c * (s_aa / d2 - 2 * s_a * s_a / d3)
        out[2, 2] = -c * (s_gg / d2 - 2 * s_g * s_g / d3)
        out[0, 2] = out[2, 0] = -c * (s_ag / d2 - 2 * s_a * s_g / d3)
        out[0, 1] = out[1, 0] = -s_a / (TWO_PI * d2)
        out[1, 2] = out[2, 1] = -s_g / (TWO_PI * d2)
        return out
    f = spectral_eval(s, lam, theta, check=False)
    lg = log_spectral_grad(s, lam, theta, check=False)
    out = (lg[:, None] * lg[None, :]) * f
    if s.family is SpectralFamily.OU:
        c, b = theta
        q = c * c + lam * lam
        out[0, 0] += f * (-2 / q + 4 * c * c / q**2)
        out[1, 1] = 0.0  # f is linear in beta
        return out
    out[1, 1] -= f / theta[1] ** 2
    return out


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """Weights ``w = scale (1 + lam^2)^-a`` and ``v = (1 + lam^2)^-b``."""

    a: float = 3.0
    b: float = 3.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.scale > 0):
            raise DomainError("weight exponents and scale must be positive")

    def w(self, lam):
        return self.scale * (1.0 + np.square(lam)) ** (-self.a)

    def v(self, lam):
        return (1.0 + np.square(lam)) ** (-self.b)

    def cutoff(self, tol=WEIGHT_TAIL_TOL):
        """Frequency beyond which ``w / scale`` drops below ``tol``."""
        return math.sqrt(tol ** (-1.0 / self.a) - 1.0)

    def to_dict(self):
        return {"a": self.a, "b": self.b, "scale": self.scale}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["a"]), float(d["b"]), float(d.get("scale", 1.0)))


def weight_eval(wspec: WeightSpec, lam, which="w"):
    if which == "w":
        return wspec.w(lam)
    if which == "v":
        return wspec.v(lam)
    raise ValueError(f"which must be 'w' or 'v', got {which!r}")


@dataclass
class WeightReport:
    passed: bool
    violations: list = field(default_factory=list)
    sup_w_over_f: float = float("nan")


def validate_weight_conditions(wspec: WeightSpec, s: SpectralModel) -> WeightReport:
    """Check the admissibility of the weight exponents for ``s``.

    CAR2 needs ``a > 5/2`` and ``a >= b > 2``.  For every family the ratio
    ``w / f`` is spot-checked on a log-spaced grid up to 1e4 at the box
    corners and centre.  A ratio that still doubles over the last decade of
    the grid is reported as unbounded.
    """
    violations = []
    if s.family is SpectralFamily.CAR2:
        if not wspec.a > 2.5:
            violations.append(f"a > 5/2 violated (a = {wspec.a:g})")
        if not wspec.a >= wspec.b:
            violations.append(f"a >= b violated (a = {wspec.a:g}, b = {wspec.b:g})")
        if not wspec.b > 2:
            violations.append(f"b > 2 violated (b = {wspec.b:g})")
    lam = np.concatenate([[0.0], np.logspace(-3, 4, 400)])
    if s.family is SpectralFamily.RIESZ_BESSEL:
        lam = lam[1:]
    sup = 0.0
    growing = False
    centre = 0.5 * (s.lower + s.upper)
    for theta in s.corners() + [centre]:
        ratio = wspec.w(lam) / spectral_eval(s, lam, theta, check=False)
        sup = max(sup, float(np.max(ratio)))
        last_decade = ratio[lam >= lam[-1] / 10.0]
        growing |= bool(last_decade[-1] > 2.0 * last_decade[0])
    if growing or not math.isfinite(sup):
        violations.append("sup w/f < infinity violated (ratio grows at large frequency)")
    return WeightReport(passed=not violations, violations=violations, sup_w_over_f=sup)

"""Levy drivers, moving-average kernels and the linear noise process.

The noise is the stationary moving average

    eps(t) = int a_hat(t - s) dL(s)

of a two-sided, zero-mean Levy process ``L``.  Drivers are restricted to a
Brownian part plus compound-Poisson jumps with centred normal sizes, so that
every cumulant of ``L(1)`` is available in closed form.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, special

from ._quad import quad_checked
from .errors import DegenerateDriverError, DomainError, UnsupportedOrderError

KERNEL_TOL = 1e-10


class DriverFamily(str, enum.Enum):
    BROWNIAN = "brownian"
    COMPOUND_POISSON_NORMAL = "compound_poisson_normal"
    MIXED = "mixed"


class KernelFamily(str, enum.Enum):
    OU = "ou"
    WELL_BALANCED_OU = "well_balanced_ou"
    GAMMA = "gamma"
    CAR2 = "car2_pendulum"


@dataclass(frozen=True)
class LevyDriverSpec:
    """Zero-mean Levy driver: Brownian variance ``b`` plus normal jumps.

    Attributes:
        family: Which components are active.
        brownian_variance: Variance of the Brownian part per unit time.
        jump_rate: Poisson intensity of jumps per unit time.
        jump_std: Standard deviation of the (centred normal) jump sizes.
    """

    family: DriverFamily
    brownian_variance: float = 0.0
    jump_rate: float = 0.0
    jump_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", DriverFamily(self.family))
        for name in ("brownian_variance", "jump_rate", "jump_std"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {value}")
        if self.family is DriverFamily.BROWNIAN and self.jump_rate * self.jump_std != 0:
            raise DomainError("Brownian driver cannot carry jumps")
        if self.family is DriverFamily.COMPOUND_POISSON_NORMAL and self.brownian_variance != 0:
            raise DomainError("compound-Poisson driver cannot carry a Brownian part")

    @classmethod
    def brownian(cls, variance=1.0):
        return cls(DriverFamily.BROWNIAN, brownian_variance=variance)

    @classmethod
    def compound_poisson(cls, rate, jump_std):
        return cls(DriverFamily.COMPOUND_POISSON_NORMAL, jump_rate=rate, jump_std=jump_std)

    @classmethod
    def mixed(cls, variance, rate, jump_std):
        return cls(DriverFamily.MIXED, brownian_variance=variance, jump_rate=rate,
                   jump_std=jump_std)

    def cumulant(self, r: int) -> float:
        """r-th cumulant of L(1): ``lambda_p * E J^r`` plus ``b`` when r = 2."""
        if r < 1:
            raise UnsupportedOrderError(f"cumulant order must be >= 1, got {r}")
        if r % 2:
            return 0.0
        jumps = self.jump_rate * self.jump_std**r * float(special.factorial2(r - 1))
        return jumps + (self.brownian_variance if r == 2 else 0.0)

    def sample_increments(self, n, step, rng):
        """``n`` independent increments of L over cells of length ``step``."""
        out = np.zeros(n)
        if self.brownian_variance > 0:
            out += math.sqrt(self.brownian_variance * step) * rng.standard_normal(n)
        if self.jump_rate > 0 and self.jump_std > 0:
            counts = rng.poisson(self.jump_rate * step, size=n)
            out += self.jump_std * np.sqrt(counts) * rng.standard_normal(n)
        return out

    def to_dict(self):
        return {"family": self.family.value, "brownian_variance": self.brownian_variance,
                "jump_rate": self.jump_rate, "jump_std": self.jump_std}

    @classmethod
    def from_dict(cls, d):
        return cls(DriverFamily(d["family"]), float(d.get("brownian_variance", 0.0)),
                   float(d.get("jump_rate", 0.0)), float(d.get("jump_std", 0.0)))


def driver_cumulants(spec: LevyDriverSpec):
    """Return ``(d2, d4, gamma2)`` with ``gamma2 = d4 / d2**2`` the excess of L(1)."""
    d2 = spec.cumulant(2)
    if d2 <= 0:
        raise DegenerateDriverError("driver has zero variance (b = jump_rate = 0)")
    d4 = spec.cumulant(4)
    return d2, d4, d4 / d2**2


@dataclass(frozen=True)
class KernelSpec:
    """Moving-average kernel ``a_hat``.

    ``decay`` is the exponential rate (lambda for OU/Gamma, alpha for CAR2),
    ``shape`` the Gamma power exponent and ``frequency`` the CAR2 damped
    angular frequency omega.
    """

    family: KernelFamily
    decay: float
    shape: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.decay > 0:
            raise DomainError(f"kernel decay must be > 0, got {self.decay}")
        if self.family is KernelFamily.GAMMA and not self.shape > -0.5:
            raise DomainError(f"Gamma kernel shape must be > -1/2, got {self.shape}")
        if self.family is KernelFamily.CAR2 and not self.frequency > 0:
            raise DomainError(f"CAR2 frequency must be > 0, got {self.frequency}")

    @classmethod
    def ou(cls, decay):
        return cls(KernelFamily.OU, decay)

    @classmethod
    def well_balanced_ou(cls, decay):
        return cls(KernelFamily.WELL_BALANCED_OU, decay)

    @classmethod
    def gamma(cls, decay, shape):
        return cls(KernelFamily.GAMMA, decay, shape=shape)

    @classmethod
    def car2(cls, alpha, omega):
        return cls(KernelFamily.CAR2, alpha, frequency=omega)

    @property
    def causal(self):
        return self.family is not KernelFamily.WELL_BALANCED_OU

    @property
    def rate_scale(self):
        """Largest inverse time scale of the kernel."""
        return max(self.decay, self.frequency)

    def horizon(self, tol=KERNEL_TOL):
        """Truncation horizon t* beyond which the kernel envelope is below ``tol``."""
        t_star = max(-math.log(tol) / self.decay, 20.0 / self.decay)
        if self.family is KernelFamily.GAMMA and self.shape > 0:
            # polynomial prefactor: push out until t^shape e^{-decay t} < tol * peak
            peak = (self.shape / self.decay) ** self.shape * math.exp(-self.shape)
            while t_star**self.shape * math.exp(-self.decay * t_star) > tol * peak:
                t_star *= 1.25
        return t_star

    def to_dict(self):
        return {"family": self.family.value, "decay": self.decay, "shape": self.shape,
                "frequency": self.frequency}

    @classmethod
    def from_dict(cls, d):
        return cls(KernelFamily(d["family"]), float(d["decay"]), float(d.get("shape", 0.0)),
                   float(d.get("frequency", 0.0)))


def kernel_eval(k: KernelSpec, t):
    """Kernel value ``a_hat(t)``; vectorised, zero for t < 0 on causal kernels."""
    t = np.asarray(t, dtype=float)
    if k.family is KernelFamily.WELL_BALANCED_OU:
        return np.exp(-k.decay * np.abs(t))
    pos = t >= 0
    tp = np.where(pos, t, 0.0)
    if k.family is KernelFamily.OU:
        val = np.exp(-k.decay * tp)
    elif k.family is KernelFamily.CAR2:
        val = np.exp(-k.decay * tp) * np.sin(k.frequency * tp) / k.frequency
    else:
        with np.errstate(divide="ignore"):
            val = tp**k.shape * np.exp(-k.decay * tp)
    return np.where(pos, val, 0.0)


def _gamma_transform_numeric(k, lam):
    # int_0^inf t^s e^{-ct} e^{-i lam t} dt, split into cosine and sine parts
    fn = lambda t: t**k.shape * math.exp(-k.decay * t)
    t_star = k.horizon()
    kw = dict(epsabs=1e-13, epsrel=1e-11, limit=1000)
    if lam == 0:
        return complex(quad_checked(fn, 0.0, t_star, **kw), 0.0)
    re = quad_checked(fn, 0.0, t_star, weight="cos", wvar=lam, **kw)
    im = quad_checked(fn, 0.0, t_star, weight="sin", wvar=lam, **kw)
    return complex(re, -im)


def kernel_transform(k: KernelSpec, lam):
    """Fourier transform ``a(lam) = int a_hat(t) exp(-i lam t) dt``.

    Closed form for OU, well-balanced OU and CAR2; numerical quadrature for
    the Gamma family.
    """
    lam_arr = np.asarray(lam, dtype=float)
    if k.family is KernelFamily.OU:
        out = 1.0 / (k.decay + 1j * lam_arr)
    elif k.family is KernelFamily.WELL_BALANCED_OU:
        out = (2.0 * k.decay / (k.decay**2 + lam_arr**2)).astype(complex)
    elif k.family is KernelFamily.CAR2:
        a, w = k.decay, k.frequency
        out = 1.0 / (a * a + w * w - lam_arr**2 + 2j * a * lam_arr)
    else:
        flat = [_gamma_transform_numeric(k, float(x)) for x in lam_arr.ravel()]
        out = np.array(flat, dtype=complex).reshape(lam_arr.shape)
    return out[()] if out.ndim == 0 else out


def _scalar_kernel(k):
    """Pure-Python scalar version of :func:`kernel_eval` for quadrature loops."""
    c, w, p = k.decay, k.frequency, k.shape
    if k.family is KernelFamily.WELL_BALANCED_OU:
        return lambda t: math.exp(-c * abs(t))
    if k.family is KernelFamily.OU:
        return lambda t: math.exp(-c * t) if t >= 0 else 0.0
    if k.family is KernelFamily.CAR2:
        return lambda t: math.exp(-c * t) * math.sin(w * t) / w if t >= 0 else 0.0
    return lambda t: t**p * math.exp(-c * t) if t > 0 else (1.0 if t == 0 and p == 0 else 0.0)


def _integration_range(k, t):
    t_star = k.horizon()
    if k.causal:
        return 0.0, t_star
    return -t_star - t, t_star


@functools.lru_cache(maxsize=64)
def _kernel_energy(k):
    """``int a_hat^2`` over the truncated support."""
    fn = _scalar_kernel(k)
    lo, hi = _integration_range(k, 0.0)
    kinks = {} if k.causal else {"points": (0.0,)}
    return quad_checked(lambda s: fn(s) ** 2, lo, hi, epsabs=1e-14, epsrel=1e-12, **kinks)


def covariance(k: KernelSpec, d: LevyDriverSpec, t, epsrel=1e-10):
    """Covariance ``B(t) = d2 int a_hat(t + s) a_hat(s) ds`` by adaptive quadrature.

    Computed at ``|t|`` so the result is exactly even.
    """
    d2 = driver_cumulants(d)[0]
    t = abs(float(t))
    if t == 0:
        return d2 * _kernel_energy(k)
    fn = _scalar_kernel(k)
    lo, hi = _integration_range(k, t)
    # absolute floor tied to B(0) keeps relative accuracy in the envelope tail
    kinks = {} if k.causal else {"points": (-t, 0.0)}
    val = quad_checked(lambda s: fn(t + s) * fn(s), lo, hi,
                       epsabs=1e-15 * _kernel_energy(k), epsrel=epsrel, limit=1000, **kinks)
    return d2 * val


def covariance_car2_closed_form(alpha, omega, d2, t):
    """Closed-form CAR(2) covariance; vectorised in ``t``."""
    t = np.abs(np.asarray(t, dtype=float))
    out = d2 / (4.0 * (alpha**2 + omega**2)) * np.exp(-alpha * t) * (
        np.sin(omega * t) / omega + np.cos(omega * t) / alpha)
    return out[()] if out.ndim == 0 else out


def correlation_car2(alpha, omega, t):
    t = np.abs(np.asarray(t, dtype=float))
    out = np.exp(-alpha * t) * (np.cos(omega * t) + alpha / omega * np.sin(omega * t))
    return out[()] if out.ndim == 0 else out


def spectral_density_order_r(k: KernelSpec, d: LevyDriverSpec, lambdas):
    """Order-r spectral density with ``r = len(lambdas) + 1``.

    ``f_r = (2 pi)^{1-r} d_r a(-sum lambdas) prod a(lambda_j)``; only
    ``r`` in {2, 3, 4} is supported.
    """
    lambdas = [np.asarray(x, dtype=float) for x in lambdas]
    r = len(lambdas) + 1
    if r not in (2, 3, 4):
        raise UnsupportedOrderError(f"spectral densities of order {r} are not supported")
    d_r = d.cumulant(r)
    if r == 2 and d_r <= 0:
        raise DegenerateDriverError("driver has zero variance (b = jump_rate = 0)")
    total = sum(lambdas)
    out = (2 * np.pi) ** (1 - r) * d_r * kernel_transform(k, -total)
    for lam in lambdas:
        out = out * kernel_transform(k, lam)
    return out


def spectral_density(k: KernelSpec, d: LevyDriverSpec, lam):
    """Second-order density ``f(lam) = d2 |a(lam)|^2 / (2 pi)`` as a real array."""
    d2 = driver_cumulants(d)[0]
    return d2 * np.abs(kernel_transform(k, lam)) ** 2 / (2 * np.pi)


@dataclass(frozen=True)
class NoisePath:
    """Sampled path on the lattice ``t_k = k * step``, ``k = 0..n-1``."""

    step: float
    values: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.values)

    @property
    def horizon(self):
        return self.n * self.step

    @property
    def times(self):
        return self.step * np.arange(self.n)


def lattice_size(T, delta):
    """Number of lattice points, checking that ``T / delta`` is integral."""
    if not (delta > 0 and T > 0):
        raise DomainError(f"need T > 0 and delta > 0, got T={T}, delta={delta}")
    n = int(round(T / delta))
    if n < 1 or abs(n * delta - T) > 1e-9 * T:
        raise DomainError(f"T / delta must be an integer, got {T} / {delta}")
    return n


def simulate_linear_noise(d: LevyDriverSpec, k: KernelSpec, T, delta, seed) -> NoisePath:
    """Simulate ``eps(k delta)``, k = 0..n-1, on ``[0, T)``.

    Levy increments live on cells ``[j delta, (j+1) delta)`` of a two-sided
    lattice starting at ``-t*`` (and running past ``T`` for two-sided
    kernels); each cell is weighted by the kernel at its midpoint, which
    keeps the lag-zero variance error at O(delta^2).
    """
    driver_cumulants(d)
    n = lattice_size(T, delta)
    t_star = k.horizon()
    m_before = int(math.ceil(t_star / delta))
    m_after = 0 if k.causal else m_before
    lags = np.arange(-m_after, m_before + 1)
    taps = kernel_eval(k, (lags - 0.5) * delta)
    rng = np.random.default_rng(seed)
    increments = d.sample_increments(n + m_before + m_after, delta, rng)
    values = signal.fftconvolve(increments, taps, mode="valid")
    coarse = delta > 1.0 / (10.0 * k.rate_scale)
    meta = {"coarse_step": bool(coarse), "horizon": n * delta, "kernel_horizon": t_star}
    return NoisePath(step=delta, values=values, seed=seed, meta=meta)

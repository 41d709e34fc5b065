import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levywhittle.errors import DomainError
from levywhittle.levy_noise import KernelSpec, LevyDriverSpec, NoisePath, simulate_linear_noise, spectral_density
from levywhittle.spectral import (SpectralFamily, SpectralModel, WeightSpec, plancherel_gap,
                                  residual_periodogram, spectral_eval, spectral_grad, spectral_hess,
                                  validate_weight_conditions, weight_eval)

CAR2 = SpectralModel.car2(alpha=(0.1, 4.0), beta=(0.1, 5.0), gamma=(0.2, 5.0))
OU = SpectralModel(SpectralFamily.OU, ((0.1, 5.0), (0.1, 5.0)))


def random_points(model, n, seed, lam_range=10.0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.uniform(-lam_range, lam_range), rng.uniform(model.lower, model.upper)


# --- periodogram ---------------------------------------------------------------

def test_zero_residuals_give_zero_periodogram():
    p = residual_periodogram(NoisePath(0.1, np.zeros(500)))
    assert np.all(p.values == 0.0)


def test_pure_cosine_peak():
    T, step = 200.0, 0.05
    k0 = 30
    lam0 = 2 * math.pi * k0 / T
    t = np.arange(int(T / step)) * step
    p = residual_periodogram(NoisePath(step, np.cos(lam0 * t)), lambda_max=5.0)
    peak = np.argsort(p.values)[-2:]
    assert sorted(np.round(p.freqs[peak], 12)) == pytest.approx([-lam0, lam0])
    assert p.values[peak] == pytest.approx([T / (8 * math.pi)] * 2, rel=1e-3)
    others = np.delete(p.values, peak)
    assert others.max() < 1e-3 * p.values[peak].min()


def test_periodogram_grid_is_symmetric_and_even():
    path = simulate_linear_noise(LevyDriverSpec.brownian(), KernelSpec.car2(1.0, 2.0), 100.0, 0.05, 3)
    p = residual_periodogram(path, lambda_max=20.0)
    assert np.array_equal(p.freqs, -p.freqs[::-1])
    assert np.max(np.abs(p.values - p.values[::-1])) <= 1e-10 * p.values.max()
    assert np.all(p.values >= 0)
    assert p.freqs.max() <= 20.0


def test_grid_beyond_nyquist_rejected():
    with pytest.raises(DomainError):
        residual_periodogram(NoisePath(0.1, np.ones(100)), lambda_max=math.pi / 0.1 * 1.01)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(16, 600), step=st.sampled_from([0.01, 0.05, 0.1, 0.25]), seed=st.integers(0, 2**32 - 1))
def test_discrete_plancherel(n, step, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    spectral_side, time_side = plancherel_gap(NoisePath(step, x))
    assert spectral_side == pytest.approx(time_side, rel=1e-8)


def test_periodogram_rows_for_csv():
    p = residual_periodogram(NoisePath(0.5, np.arange(8.0)))
    rows = p.to_rows()
    assert len(rows) == len(p.freqs) and rows[0][0] == p.freqs[0]
    with pytest.raises(ValueError):
        p.values[0] = 1.0


# --- spectral models -----------------------------------------------------------

def test_car2_value_at_origin():
    assert spectral_eval(CAR2, 0.0, (1.0, 1.0, 2.0)) == pytest.approx(1 / (50 * math.pi), rel=1e-15)


def test_density_linear_in_beta():
    lam = np.linspace(-8, 8, 101)
    theta = np.array([0.8, 1.7, 2.2])
    assert spectral_grad(CAR2, lam, theta)[1] * theta[1] == pytest.approx(spectral_eval(CAR2, lam, theta), rel=1e-14)


def test_car2_density_matches_kernel_route():
    rng = np.random.default_rng(5)
    lam = rng.uniform(-30, 30, 1000)
    for alpha, beta, gamma in [(1.0, 1.0, 2.0), (0.3, 2.5, 4.0), (3.0, 0.2, 0.5)]:
        kernel = KernelSpec.car2(alpha, gamma)
        via_kernel = spectral_density(kernel, LevyDriverSpec.brownian(beta), lam)
        assert spectral_eval(CAR2, lam, (alpha, beta, gamma)) == pytest.approx(via_kernel, rel=1e-10)


@pytest.mark.parametrize("model", [CAR2, OU])
def test_gradient_matches_central_differences(model):
    for lam, theta in random_points(model, 200, 11):
        g = spectral_grad(model, lam, theta)
        for i in range(model.dim):
            h = 1e-6 * max(1.0, abs(theta[i]))
            e = np.zeros(model.dim)
            e[i] = h
            fd = (spectral_eval(model, lam, theta + e, check=False)
                  - spectral_eval(model, lam, theta - e, check=False)) / (2 * h)
            assert abs(fd - g[i]) <= 1e-5 * np.max(np.abs(g))


@pytest.mark.parametrize("model", [CAR2, OU])
def test_hessian_symmetric_and_matches_gradient_differences(model):
    for lam, theta in random_points(model, 100, 12):
        H = spectral_hess(model, lam, theta)
        assert np.array_equal(H, H.T)
        for i in range(model.dim):
            h = 1e-6 * max(1.0, abs(theta[i]))
            e = np.zeros(model.dim)
            e[i] = h
            fd = (spectral_grad(model, lam, theta + e, check=False)
                  - spectral_grad(model, lam, theta - e, check=False)) / (2 * h)
            assert np.max(np.abs(fd - H[:, i])) <= 1e-4 * np.max(np.abs(H))


def test_density_positive_and_even_on_box_sample():
    rng = np.random.default_rng(21)
    thetas = rng.uniform(CAR2.lower, CAR2.upper, size=(100, 3))
    lam = np.concatenate([rng.uniform(-50, 50, 50), rng.uniform(-1e3, 1e3, 50)])
    for theta in thetas:
        f = spectral_eval(CAR2, lam, theta)
        assert np.all(f > 0)
        assert np.array_equal(f, spectral_eval(CAR2, -lam, theta))


def test_theta_outside_box_rejected():
    with pytest.raises(DomainError):
        spectral_eval(CAR2, 0.0, (10.0, 1.0, 1.0))
    with pytest.raises(DomainError):
        spectral_grad(CAR2, 0.0, (1.0, 1.0))


def test_box_must_be_positive_for_car2():
    with pytest.raises(DomainError):
        SpectralModel.car2(alpha=(0.0, 1.0))


def test_riesz_bessel_requires_eval_only_flag():
    bounds = ((0.1, 0.4), (0.5, 2.0), (0.5, 2.0))
    with pytest.raises(DomainError):
        SpectralModel(SpectralFamily.RIESZ_BESSEL, bounds)
    rb = SpectralModel(SpectralFamily.RIESZ_BESSEL, bounds, eval_only=True)
    lam = 2.0
    expected = 1.0 / (2 * math.pi * lam ** 0.5 * (1 + lam * lam))
    assert spectral_eval(rb, lam, (0.25, 1.0, 1.0)) == pytest.approx(expected)


def test_model_serialization_round_trip():
    assert SpectralModel.from_dict(CAR2.to_dict()) == CAR2


# --- weights -------------------------------------------------------------------

def test_weight_values():
    w = WeightSpec(3.0, 2.5)
    assert weight_eval(w, 0.0, "w") == 1.0
    assert weight_eval(w, 1.0, "w") == pytest.approx(1 / 8)
    assert weight_eval(w, 3.0, "w") == pytest.approx(1e-3)
    assert weight_eval(w, 1.0, "v") == pytest.approx(2**-2.5)
    with pytest.raises(ValueError):
        weight_eval(w, 1.0, "u")


@given(lam=st.floats(-1e3, 1e3), a=st.floats(0.1, 6.0))
def test_weight_even_and_in_unit_interval(lam, a):
    w = WeightSpec(a, a)
    value = weight_eval(w, lam)
    assert value == weight_eval(w, -lam)
    assert 0 < value <= 1


def test_weight_cutoff():
    w = WeightSpec(3.0, 3.0)
    assert w.w(w.cutoff()) == pytest.approx(1e-8)


@pytest.mark.parametrize("a, b, passed, phrase", [
    (3.0, 2.5, True, None),
    (3.0, 3.0, True, None),
    (2.0, 2.0, False, "a > 5/2"),
    (3.0, 3.5, False, "a >= b"),
    (2.6, 2.0, False, "b > 2"),
])
def test_weight_conditions_for_car2(a, b, passed, phrase):
    report = validate_weight_conditions(WeightSpec(a, b), CAR2)
    assert report.passed is passed
    if phrase:
        assert any(phrase in v for v in report.violations)


def test_unbounded_weight_ratio_flagged():
    report = validate_weight_conditions(WeightSpec(1.5, 1.0), CAR2)
    assert any("sup w/f" in v for v in report.violations)
    assert validate_weight_conditions(WeightSpec(1.5, 1.0), OU).passed

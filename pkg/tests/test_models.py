import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdgenlab.checks import gradient_error, gradient_ok, make_check_model, random_point_in_region
from sgdgenlab.models import (
    DataPoint,
    GaussianNoise,
    LinearModel,
    LogisticModel,
    PointMassNoise,
    PowerLaw,
    SamplerNoise,
    TukeyModel,
    TwoLayerNN,
    VarianceCertificate,
    build_projected_model,
    build_redundant_model,
    nn_constants,
    nn_forward,
    stochastic_grad,
    tukey_c0,
    tukey_psi,
    tukey_rho,
)
from sgdgenlab.spectra import DiagonalCovariance


def test_linear_noiseless_labels():
    m = LinearModel(np.eye(2), [1.0, 0.0], 0.0)
    d = m.sample(np.random.default_rng(0), 1000)
    np.testing.assert_array_equal(d.y, d.x[:, 0])


def test_logistic_symmetric_labels():
    m = LogisticModel(np.eye(3), np.zeros(3), eval_size=1000)
    n = 100_000
    y = m.sample(np.random.default_rng(1), n).y
    assert set(np.unique(y)) == {-1.0, 1.0}
    frac = np.mean(y == 1)
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_linear_response_variance():
    m = LinearModel(DiagonalCovariance([1.0, 0.25]), [1.0, 1.0], 1.0)
    n = 100_000
    y = m.sample(np.random.default_rng(2), n).y
    # y is Gaussian with variance 2.25, so Var(sample variance) = 2 * 2.25^2 / (n - 1)
    assert abs(y.var(ddof=1) - 2.25) <= 3 * 2.25 * math.sqrt(2.0 / (n - 1))


def test_sample_shapes_and_block_invariance():
    m = LinearModel(DiagonalCovariance([1.0, 0.5, 0.2]), [1.0, 0.0, -1.0], 0.3)
    one = m.sample(np.random.default_rng(3), (4, 5))
    assert one.x.shape == (4, 5, 3) and one.y.shape == (4, 5)
    rng = np.random.default_rng(3)
    pieces = [m.sample(rng, 4) for _ in range(5)]
    np.testing.assert_array_equal(np.concatenate([p.x for p in pieces]), one.x.reshape(20, 3))


def test_gradient_examples():
    lg = LogisticModel(np.eye(2), [0.0, 0.0], eval_size=1000)
    np.testing.assert_allclose(stochastic_grad(lg, [0.0, 0.0], DataPoint(np.array([2.0, 0.0]), np.array(1.0))), [-1.0, 0.0])
    lin = LinearModel(np.eye(2), [0.0, 0.0], 1.0)
    np.testing.assert_allclose(stochastic_grad(lin, [0.0, 0.0], DataPoint(np.array([1.0, 2.0]), np.array(3.0))), [-3.0, -6.0])
    tk = TukeyModel(np.eye(2), [0.0, 0.0], 0.5, 1.0, eval_size=1000)
    g = stochastic_grad(tk, [1.0, 1.0], DataPoint(np.array([1.0, 1.0]), np.array(-1.0)))
    np.testing.assert_array_equal(g, [0.0, 0.0])
    with pytest.raises(ValueError):
        stochastic_grad(lin, [0.0, 0.0], DataPoint(np.array([1.0, 2.0, 3.0]), np.array(1.0)))


def test_tukey_rho_psi():
    c = 2.0
    assert tukey_rho(0.0, c) == 0.0
    assert tukey_rho(5.0, c) == pytest.approx(c * c / 6)
    assert tukey_psi(5.0, c) == 0.0
    u = np.linspace(-1.9, 1.9, 7)
    h = 1e-6
    np.testing.assert_allclose((tukey_rho(u + h, c) - tukey_rho(u - h, c)) / (2 * h), tukey_psi(u, c), atol=1e-8)


def test_nn_forward_examples():
    assert nn_forward(np.array([0.0, 3.0, -1.0, 2.0]), np.zeros(2), 1) == 0.0  # a=0, x=0
    assert nn_forward(np.array([0.0, 1.0, 0.0, 1.0]), np.array([1.0, 0.0]), 1) == pytest.approx(0.761594, abs=1e-6)
    w = np.random.default_rng(0).standard_normal(8)
    w[-2:] = 0.0
    assert nn_forward(w, np.array([0.3, -0.7]), 2) == 0.0


def test_linear_population_gap():
    m = LinearModel(DiagonalCovariance([2.0, 0.5]), [0.3, -0.4], 1.0)
    assert m.population_gap(m.true_param).value == 0.0
    assert m.population_gap(m.true_param + [1.0, 0.0]).value == pytest.approx(1.0)
    stack = np.stack([m.true_param, m.true_param + [1.0, 0.0]])
    np.testing.assert_allclose(m.population_gap(stack).value, [0.0, 1.0])


@pytest.mark.parametrize("name", ["logistic", "tukey", "nn"])
def test_mc_gap_zero_at_truth(name):
    m = make_check_model(name, p=4)
    est = m.population_gap(m.true_param)
    assert abs(est.value) <= 3 * est.stderr + 1e-15
    with pytest.raises(ValueError):
        m.population_gap(m.true_param, mc_budget=0)
    with pytest.raises(ValueError):
        m.population_gap(m.true_param, mc_budget=m.eval_size + 1)


def test_logistic_gap_matches_direct_mc():
    # the conditional-expectation gap agrees with averaging sampled labels
    m = LogisticModel(DiagonalCovariance([1.0, 0.5]), [1.0, -1.0], eval_size=20_000)
    w = np.array([0.2, 0.3])
    d = m.sample(np.random.default_rng(9), 400_000)
    direct = m.loss(w, d) - m.loss(m.true_param, d)
    est = m.population_gap(w)
    se = math.hypot(direct.std() / math.sqrt(direct.size), est.stderr)
    assert abs(direct.mean() - est.value) <= 4 * se


def test_population_grad_matches_finite_difference_of_gap():
    for name in ("logistic", "tukey", "nn"):
        m = make_check_model(name, p=3)
        w = random_point_in_region(m, np.random.default_rng(4))
        h = 1e-5
        fd = np.array(
            [
                (m.population_gap(w + h * e).value - m.population_gap(w - h * e).value) / (2 * h)
                for e in np.eye(m.dim)
            ]
        )
        np.testing.assert_allclose(m.population_grad(w), fd, rtol=1e-5, atol=1e-8)


def test_variance_certificate_examples():
    c = LinearModel(np.eye(2), [0.0, 0.0], 1.0).variance_certificate()
    assert (c.r_sq, c.c_r) == pytest.approx((4.0, 6.0))
    c = LogisticModel(np.eye(2), [1.0, 0.0], eval_size=100).variance_certificate()
    assert (c.r_sq, c.c_r) == (2.0, 0.0)
    # ||w*||_{Sigma*} = 1 with p = 1, k = 1: only c = 1
    nn = TwoLayerNN(DiagonalCovariance([1.0]), [0.0, 0.0, 1.0], 1, 0.0, eval_size=100)
    c = nn.variance_certificate()
    assert c.r_sq == pytest.approx(16 * math.sqrt(3)) and c.c_r == 0.0
    assert LinearModel(np.eye(2), [1.0, 0.0], 0.0).variance_certificate().c_r == math.inf
    with pytest.raises(ValueError):
        VarianceCertificate(-1.0, 0.0)


def test_nn_constants_examples():
    nn = TwoLayerNN(DiagonalCovariance([1.0]), [0.0, 0.0, 1.0], 1, 0.0, eval_size=100)
    k = nn_constants(nn)
    assert k.C0 == pytest.approx(7.0) and k.C2 == pytest.approx(1.0)
    assert k.C1 == pytest.approx(2 / (27 * math.sqrt(2)))
    zero = TwoLayerNN(DiagonalCovariance([1.0]), [0.0, 0.0, 0.0], 1, 0.0, eval_size=100)
    k0 = nn_constants(zero)
    assert k0.C0 == k0.C2 == k0.C3 == 0.0
    with pytest.raises(ValueError):
        TwoLayerNN(DiagonalCovariance([1.0]), [0.0, 0.0, 1.0], 1, 0.0, delta=0.5)


def test_tukey_c0_examples():
    assert tukey_c0(PointMassNoise(0.0), 1.0).value == 1.0
    assert tukey_c0(PointMassNoise(2.0), 2.0).value == 0.0
    q = tukey_c0(GaussianNoise(0.1), 1.0).value
    assert q == pytest.approx(1 - 6 * 0.01 + 15 * 1e-4, abs=1e-3)
    mc = tukey_c0(SamplerNoise(lambda r, n: 0.1 * r.standard_normal(n), 1_000_000, seed=1), 1.0)
    assert abs(q - mc.value) <= 3 * mc.stderr
    with pytest.raises(ValueError):
        tukey_c0(GaussianNoise(0.1), 0.0)


def test_tukey_c0_gaussian_positive_and_decreasing():
    # the flat-density limit integrates (1 - t^2)(1 - 5t^2) to exactly zero
    vals = [tukey_c0(GaussianNoise(s), 1.0).value for s in (0.0, 0.1, 0.3, 1.0, 3.0, 10.0)]
    assert vals[0] == 1.0
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # non-Gaussian noise concentrated where the integrand is negative gives c0 < 0
    assert tukey_c0(PointMassNoise(0.7), 1.0).value < 0


def test_projected_model_examples():
    m = build_projected_model(PowerLaw(2.0), PowerLaw(1.0), 2, 1.0)
    assert m.noise_variance == pytest.approx(1 + (math.pi**4 / 90 - 1 - 1 / 16), rel=1e-10)
    assert m.metadata["omitted_signal"] == pytest.approx(math.pi**4 / 90 - 1 - 1 / 16)
    m0 = build_projected_model(PowerLaw(2.0), PowerLaw(1.0, 0.0), 5, 0.7)
    assert m0.noise_variance == 0.7
    m1 = build_projected_model(PowerLaw(2.0), PowerLaw(0.0), 1, 0.0)
    assert m1.noise_variance == pytest.approx(math.pi**2 / 6 - 1, rel=1e-10)
    with pytest.raises(ValueError, match="diverges"):
        build_projected_model(PowerLaw(0.0), PowerLaw(0.0), 3, 1.0)


def test_redundant_model_examples():
    sx = DiagonalCovariance(np.ones(5))
    m = build_redundant_model(5, 12, np.ones(5), sx, DiagonalCovariance(np.ones(7)))
    assert m.covariance.trace() == pytest.approx(5 + 7)
    np.testing.assert_array_equal(m.true_param, np.r_[np.ones(5), np.zeros(7)])
    plain = build_redundant_model(5, 5, np.ones(5), sx, None)
    ref = LinearModel(sx, np.ones(5), 1.0)
    w = np.linspace(-1, 1, 5)
    assert plain.population_gap(w).value == ref.population_gap(w).value
    with pytest.warns(UserWarning):
        build_redundant_model(1, 2, [1.0], DiagonalCovariance([0.5]), DiagonalCovariance([1.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_redundant_model(1, 2, [1.0], DiagonalCovariance([1.0]), DiagonalCovariance([0.5]))


@settings(max_examples=25, deadline=None)
@given(name=st.sampled_from(["linear", "logistic", "tukey", "nn"]), seed=st.integers(0, 10_000))
def test_gradients_match_finite_differences(name, seed):
    m = make_check_model(name, p=3, eval_size=100)
    rng = np.random.default_rng(seed)
    w = random_point_in_region(m, rng)
    zeta = m.sample(rng)
    if name == "tukey" and abs(abs(float(zeta.x @ w - zeta.y)) - m.c) < 1e-3:
        return
    rel, absolute = gradient_error(m, w, zeta)
    assert gradient_ok(rel, absolute)

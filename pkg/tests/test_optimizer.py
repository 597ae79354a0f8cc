import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdgenlab.models import DataPoint, LinearModel, TukeyModel
from sgdgenlab.optimizer import (
    AllRegion,
    BallRegion,
    SgdConfig,
    SublevelRegion,
    batch_gradient_variance,
    region_contains,
    run_sgd,
    run_sgd_batch,
    step,
)
from sgdgenlab.spectra import DiagonalCovariance


class FixedStream(LinearModel):
    """Linear model whose every datum is ``(x, y)`` with fixed values."""

    def __init__(self, x, y):
        super().__init__(np.eye(1), [y / x], 0.0)
        self._x, self._y = float(x), float(y)

    def data_from_normals(self, z):
        shape = np.shape(z)[:-1]
        return DataPoint(np.full(shape + (1,), self._x), np.full(shape, self._y))


def test_step_examples():
    assert step(np.array([0.0]), np.array([-1.0]), 0.5, 0.0) == pytest.approx([0.5])
    assert step(np.array([1.0]), np.array([0.5]), 0.1, 0.2) == pytest.approx([0.93])
    w = np.array([0.3, -2.0])
    np.testing.assert_array_equal(step(w, np.zeros(2), 0.7, 0.0), w)
    with pytest.raises(ValueError):
        step(np.array([np.nan]), np.array([0.0]), 0.1, 0.0)
    with pytest.raises(ValueError):
        step(np.array([0.0]), np.array([np.inf]), 0.1, 0.0)


def test_hand_iteration():
    model = FixedStream(1.0, 1.0)
    cfg = SgdConfig(eta=0.5, lam=0.0, n_steps=2, record_every=1)
    res = run_sgd(model, cfg, 0)
    iterates = [float(pt.iterate[0]) for pt in res.trajectory]
    assert iterates == [0.0, 0.5, 0.75]
    assert res.tau is None and res.survived


def test_geometric_contraction():
    model = FixedStream(1.0, 0.0)
    cfg = SgdConfig(eta=0.5, lam=0.0, n_steps=10, w0=np.array([1.0]))
    res = run_sgd(model, cfg, 0)
    assert res.w_final[0] == 2.0**-10
    assert res.gap_final == pytest.approx(0.5 * 2.0**-20, rel=1e-15)


def test_immediate_exit():
    model = LinearModel(np.eye(2), [1.0, 1.0], 1.0)
    region = BallRegion(np.zeros(2), 1e-300)
    cfg = SgdConfig(eta=0.01, lam=0.0, n_steps=50, region=region, w0=np.array([1.0, 0.0]), averaging=True)
    res = run_sgd(model, cfg, 0)
    assert res.tau == 0
    np.testing.assert_array_equal(res.w_final, [1.0, 0.0])
    np.testing.assert_array_equal(res.w_avg, [1.0, 0.0])
    assert not res.tau_at_least(1)


def test_region_examples():
    assert region_contains(AllRegion(), np.array([1e9, -1e9])) is True
    ball = BallRegion(np.zeros(2), 1.0)
    assert region_contains(ball, np.array([0.6, 0.8])) is True
    a_ball = BallRegion(np.zeros(2), 1.0, DiagonalCovariance([4.0, 1.0]))
    assert region_contains(a_ball, np.array([0.6, 0.0])) is False
    sub = SublevelRegion(0.5, lambda w: np.sum(np.asarray(w) ** 2, axis=-1))
    np.testing.assert_array_equal(region_contains(sub, np.array([[0.1, 0.1], [1.0, 0.0]])), [True, False])
    with pytest.raises(ValueError):
        BallRegion(np.zeros(2), -1.0)


def test_config_validation():
    for kw in ({"eta": 0.0}, {"eta": math.inf}, {"lam": -0.1}, {"n_steps": 0}, {"batch_size": 0}, {"record_every": 0}):
        base = {"eta": 0.1, "lam": 0.0, "n_steps": 5}
        base.update(kw)
        with pytest.raises(ValueError):
            SgdConfig(**base)
    with pytest.raises(ValueError):
        SgdConfig(eta=0.1, lam=0.0, n_steps=5, w0=[np.nan])


def _model():
    return LinearModel(DiagonalCovariance([1.0, 0.5, 0.25]), [1.0, -1.0, 0.5], 1.0)


def test_determinism():
    cfg = SgdConfig(eta=0.05, lam=0.01, n_steps=200, averaging=True, record_every=50)
    a = run_sgd(_model(), cfg, np.random.default_rng(11))
    b = run_sgd(_model(), cfg, np.random.default_rng(11))
    np.testing.assert_array_equal(a.w_final, b.w_final)
    np.testing.assert_array_equal(a.w_avg, b.w_avg)
    assert a.recorded_gaps == b.recorded_gaps
    assert [pt.step for pt in a.trajectory] == [0, 50, 100, 150, 200]


def test_batching_invariance():
    cfg = SgdConfig(eta=0.05, lam=0.01, n_steps=120, batch_size=3, averaging=True)
    seeds = [np.random.SeedSequence([5, r]) for r in range(4)]
    together = run_sgd_batch(_model(), cfg, [np.random.default_rng(s) for s in seeds])
    alone = [run_sgd(_model(), cfg, np.random.default_rng(s)) for s in seeds]
    for t, a in zip(together, alone):
        np.testing.assert_array_equal(t.w_final, a.w_final)
        np.testing.assert_array_equal(t.w_avg, a.w_avg)


def test_averaging_identity():
    model = _model()
    cfg = SgdConfig(eta=0.05, lam=0.02, n_steps=60, averaging=True, record_every=1)
    res = run_sgd(model, cfg, 7)
    iterates = np.array([pt.iterate for pt in res.trajectory])
    np.testing.assert_allclose(res.w_avg, iterates[:-1].mean(axis=0), rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(res.w_final, iterates[-1])
    assert res.gap_avg == pytest.approx(model.population_gap(res.w_avg).value)


def test_averaging_on_exit_includes_exit_iterate():
    model = _model()
    region = BallRegion(model.true_param, 1.2)
    cfg = SgdConfig(eta=0.3, lam=0.0, n_steps=400, averaging=True, region=region, record_every=1)
    res = run_sgd(model, cfg, 3)
    assert res.tau is not None and res.tau < 400
    iterates = np.array([pt.iterate for pt in res.trajectory])
    assert len(iterates) == res.tau + 1
    np.testing.assert_allclose(res.w_avg, iterates.mean(axis=0), rtol=1e-12, atol=1e-14)
    assert not region.contains(res.w_final)


def test_divergence_is_an_exit():
    model = LinearModel(np.eye(2), [1.0, 1.0], 1.0)
    cfg = SgdConfig(eta=50.0, lam=0.0, n_steps=2000)
    res = run_sgd(model, cfg, 0)
    assert res.diverged and res.tau is not None and res.tau < 2000
    assert res.gap_final == math.inf


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), r1=st.floats(0.01, 1.0), r2=st.floats(0.01, 1.0))
def test_exit_time_monotone_in_radius(seed, r1, r2):
    small, large = sorted((r1, r2))
    model = _model()

    def tau(radius_sq):
        cfg = SgdConfig(eta=0.2, lam=0.0, n_steps=100, region=BallRegion(model.true_param, radius_sq), w0=model.true_param)
        t = run_sgd(model, cfg, seed).tau
        return math.inf if t is None else t

    assert tau(small) <= tau(large)


def test_tukey_runs_use_model_region():
    model = TukeyModel(np.eye(3), np.zeros(3), 0.3, 2.0, eval_size=500)
    cfg = SgdConfig(eta=5.0, lam=0.0, n_steps=200, w0=model.true_param)
    res = run_sgd(model, cfg, 1)
    assert res.tau is not None  # a huge stepsize leaves the small ball


def test_batch_gradient_variance_scaling():
    model = _model()
    w = np.zeros(3)
    v1, s1 = batch_gradient_variance(model, w, 1, 20_000, 1)
    v4, s4 = batch_gradient_variance(model, w, 4, 20_000, 2)
    ratio = v4 / v1
    se = ratio * math.hypot(s1 / v1, s4 / v4)
    assert abs(ratio - 0.25) <= 3 * se

import json
import math
import statistics

import numpy as np
import pytest

from sgdgenlab.harness import (
    ConfigError,
    ExperimentConfig,
    ReplicationOutcome,
    aggregate,
    apply_override,
    build_model,
    build_sgd_config,
    figure1_configs,
    figure2_configs,
    load_config,
    resolve_seed,
    resolve_workers,
    run_experiment,
    run_panels,
)
from sgdgenlab.models import LinearModel, TukeyModel
from sgdgenlab.optimizer import BallRegion, SublevelRegion


def small(**kw):
    doc = {"p_grid": [3, 6], "replications": 7, "sgd": {"n_steps": 40, "eta": 0.05}}
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


# -- config ------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = small(name="x", title="t")
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    again = load_config(str(path))
    assert again.to_dict() == cfg.to_dict()
    # every default is echoed
    assert set(again.sgd) == {"eta", "lam", "n_steps", "batch_size", "averaging", "region", "w0"}


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"p_grid": []}, "p_grid"),
        ({"p_grid": [5, 5]}, "p_grid"),
        ({"p_grid": [0]}, "p_grid"),
        ({"replications": 0}, "replications"),
        ({"sgd": {"eta": -1}}, "sgd.eta"),
        ({"sgd": {"n_steps": 1.5}}, "sgd.n_steps"),
        ({"sgd": {"bogus": 1}}, "sgd"),
        ({"sgd": {"w0": {"rule": "perturb"}}}, "sgd.w0"),
        ({"sgd": {"region": {"kind": "cube"}}}, "sgd.region"),
        ({"model": {"family": "svm"}}, "model.family"),
        ({"base_seed": -1}, "base_seed"),
        ({"colour": 1}, "unknown"),
    ],
)
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        ExperimentConfig.from_dict(doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_apply_override():
    doc = {"sgd": {"eta": 0.1}}
    apply_override(doc, "sgd.eta", 0.2)
    apply_override(doc, "model.spectrum.c", 3)
    assert doc == {"sgd": {"eta": 0.2}, "model": {"spectrum": {"c": 3}}}
    with pytest.raises(ConfigError):
        apply_override(doc, "sgd.eta.x", 1)
    with pytest.raises(ConfigError):
        apply_override(doc, "sgd..eta", 1)


def test_seed_and_worker_resolution(monkeypatch):
    monkeypatch.delenv("SGDGENLAB_SEED", raising=False)
    monkeypatch.delenv("SGDGENLAB_THREADS", raising=False)
    assert resolve_seed(None, 5) == 5
    monkeypatch.setenv("SGDGENLAB_SEED", "9")
    assert resolve_seed(None, 5) == 9
    assert resolve_seed(3, 5) == 3
    monkeypatch.setenv("SGDGENLAB_THREADS", "4")
    assert resolve_workers(None) == 4
    assert resolve_workers(2) == 2
    monkeypatch.setenv("SGDGENLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_workers(None)
    with pytest.raises(ConfigError):
        resolve_workers(0)


# -- builders ----------------------------------------------------------------


def test_build_model_families():
    lin = build_model({"family": "linear", "spectrum": {"kind": "constant"}, "w_star": {"kind": "constant"}}, 4)
    assert isinstance(lin, LinearModel) and lin.covariance.trace() == 4
    proj = build_model({"family": "projected", "spectrum": {"kind": "polynomial", "c": 2}, "w_star": {"kind": "power"}}, 2)
    assert proj.noise_variance == pytest.approx(1 + math.pi**4 / 90 - 1 - 1 / 16)
    red = build_model({"family": "redundant", "d": 2, "sigma_z": {"kind": "polynomial", "c": 2}}, 5)
    np.testing.assert_array_equal(red.true_param, [1, 1, 0, 0, 0])
    tk = build_model({"family": "tukey", "spectrum": {"kind": "constant"}, "w_star": [0.1, 0.2], "eval_size": 100}, 2)
    assert isinstance(tk, TukeyModel)
    nn = build_model({"family": "nn", "k": 2, "spectrum": {"kind": "constant"}, "w_star": {"kind": "constant", "value": 0.1}, "eval_size": 100}, 3)
    assert nn.dim == 10
    lg = build_model({"family": "logistic", "spectrum": {"kind": "exponential", "c": 1}, "eval_size": 100}, 3)
    assert lg.dim == 3


@pytest.mark.parametrize(
    "decl",
    [
        {"family": "linear", "spectrum": {"kind": "values", "values": [1, 2]}},
        {"family": "linear", "w_star": {"kind": "values", "values": [1]}},
        {"family": "redundant", "d": 9},
        {"family": "projected", "spectrum": {"kind": "constant"}, "w_star": {"kind": "constant"}},
        {"family": "nn", "k": 0},
        {"family": "linear", "spectrum": {"kind": "polynomial", "c": -1}},
    ],
)
def test_build_model_errors(decl):
    with pytest.raises(ConfigError):
        build_model(decl, 2)


def test_initial_points_and_regions():
    model = build_model({"family": "linear", "spectrum": {"kind": "constant"}}, 4)
    cfg = build_sgd_config(model, {"eta": 0.1, "lam": 0.0, "n_steps": 3, "w0": {"rule": "true"}}, 0, 4)
    np.testing.assert_array_equal(cfg.w0, model.true_param)
    sgd = {"eta": 0.1, "lam": 0.0, "n_steps": 3, "w0": {"rule": "perturb", "scale": 0.5}}
    a = build_sgd_config(model, sgd, 1, 4).w0
    b = build_sgd_config(model, sgd, 1, 4).w0
    np.testing.assert_array_equal(a, b)
    assert np.linalg.norm(a - model.true_param) == pytest.approx(0.5)
    ball = build_sgd_config(model, {**sgd, "region": {"kind": "ball", "radius_sq": 2.0, "metric": "A"}}, 1, 4).region
    assert isinstance(ball, BallRegion) and ball.metric is model.hessian_bound
    sub = build_sgd_config(model, {**sgd, "region": {"kind": "sublevel", "factor": 1.0}}, 1, 4).region
    assert isinstance(sub, SublevelRegion)
    assert sub.threshold == pytest.approx(2 * model.gap(a))
    with pytest.raises(ConfigError):
        build_sgd_config(model, {**sgd, "region": {"kind": "ball"}}, 1, 4)


# -- aggregation -------------------------------------------------------------


def _outcomes(gaps, taus):
    return [ReplicationOutcome(r, t, False, g, g) for r, (g, t) in enumerate(zip(gaps, taus))]


def test_aggregate_identity_and_std():
    rng = np.random.default_rng(0)
    gaps = list(rng.exponential(size=30))
    taus = [None if u > 0.3 else int(u * 100) for u in rng.uniform(size=30)]
    row = aggregate(4, _outcomes(gaps, taus), 100, False)
    vals = [g if t is None else 0.0 for g, t in zip(gaps, taus)]
    assert row.mean_gap == pytest.approx(statistics.fmean(vals), rel=1e-14)
    assert row.std_gap == pytest.approx(statistics.stdev(vals), rel=1e-12)
    n_esc = sum(t is not None for t in taus)
    assert row.n_escaped == n_esc
    assert abs(row.mean_gap - row.mean_gap_conditional * (30 - n_esc) / 30) <= 1e-12
    assert row.mean_tau_when_escaped == pytest.approx(statistics.fmean([t for t in taus if t is not None]))


def test_aggregate_averaging_indicator():
    # tau = N - 1 counts as surviving for the averaged iterate only
    outs = _outcomes([1.0, 2.0], [None, 9])
    assert aggregate(1, outs, 10, False).n_escaped == 1
    row = aggregate(1, outs, 10, True)
    assert row.n_escaped == 0 and row.indicator == "tau>=N-1"


def test_single_replication():
    row = aggregate(1, _outcomes([0.37], [None]), 10, False)
    assert row.mean_gap == 0.37 and row.std_gap == 0.0 and row.R == 1
    cfg = small(replications=1)
    rows = run_experiment(cfg)
    assert all(r.std_gap == 0.0 for r in rows)


# -- engine ------------------------------------------------------------------


def test_run_experiment_deterministic_and_worker_independent():
    cfg = small(replications=30)
    a = run_experiment(cfg, 1)
    b = run_experiment(cfg, 1)
    c = run_experiment(cfg, 2)
    assert a == b == c
    assert [r.p for r in a] == [3, 6]


def test_escapes_are_tracked():
    cfg = small(
        model={"family": "tukey", "spectrum": {"kind": "constant"}, "w_star": {"kind": "constant", "value": 0.2}, "eval_size": 200},
        sgd={"eta": 2.0, "lam": 0.0, "n_steps": 50, "w0": {"rule": "true"}},
        replications=10,
    )
    rows = run_experiment(cfg)
    assert all(r.n_escaped == 10 for r in rows)
    assert all(r.mean_gap == 0.0 and math.isnan(r.mean_gap_conditional) for r in rows)
    assert all(0 < r.mean_tau_when_escaped <= 50 for r in rows)


def test_figure_configs():
    f1 = figure1_configs(p_grid=(2, 4), replications=2, n_steps=5)
    assert list(f1) == ["a", "b", "c", "d"]
    assert all(c.model["family"] == "linear" for c in f1.values())
    inflated = figure1_configs(p_grid=(2,), inflate_noise=True)
    assert [c.model["family"] for c in inflated.values()] == ["projected", "projected", "projected", "linear"]
    f2 = figure2_configs(p_grid=(5, 8))
    assert list(f2) == ["left", "right"]
    # p = d: both panels are the same plain model
    left, right = (build_model(c.model, 5) for c in f2.values())
    w = np.linspace(0, 1, 5)
    assert left.population_gap(w).value == right.population_gap(w).value


def test_figure1_panel_a_grid_runs():
    results = run_panels(figure1_configs(p_grid=(10, 20, 30), replications=3, n_steps=20))
    assert sum(len(rows) for rows in results.values()) == 12
    assert all(r.n_escaped == 0 for rows in results.values() for r in rows)


def test_model_errors_surface_before_running():
    cfg = small(model={"family": "redundant", "d": 4})
    with pytest.raises(ConfigError, match="model.d"):
        run_experiment(cfg)

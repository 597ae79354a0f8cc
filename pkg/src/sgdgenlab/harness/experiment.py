"""Monte Carlo sweeps over the dimension ``p``.

Replication ``r`` at dimension ``p`` always draws from the stream seeded by
``SeedSequence([base_seed, p, r])``.  Replications are processed in fixed
chunks of :data:`CHUNK` whatever the worker count, and the per-replication
numbers are aggregated in replication order with exactly rounded sums.  The
output therefore does not depend on how the chunks were scheduled.
"""
from __future__ import annotations

import copy
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..optimizer import run_sgd_batch
from .builders import build_model, build_sgd_config
from .config import ExperimentConfig

__all__ = [
    "CHUNK",
    "ReplicationOutcome",
    "AggregateRow",
    "aggregate",
    "replication_seed",
    "run_replications",
    "run_experiment",
    "run_panels",
    "figure1_configs",
    "figure2_configs",
    "figure1",
    "figure2",
]

CHUNK = 25

FIG1_PANELS = {
    "a": ({"kind": "power", "exponent": 1.0}, {"kind": "polynomial", "c": 2.0}),
    "b": ({"kind": "power", "exponent": 1.0}, {"kind": "constant", "v": 1.0}),
    "c": ({"kind": "constant", "value": 1.0}, {"kind": "polynomial", "c": 2.0}),
    "d": ({"kind": "constant", "value": 1.0}, {"kind": "constant", "v": 1.0}),
}
FIG1_LABELS = {
    "a": "w*_j = 1/j, sigma_j^2 = 1/j^2",
    "b": "w*_j = 1/j, sigma_j^2 = 1",
    "c": "w*_j = 1, sigma_j^2 = 1/j^2",
    "d": "w*_j = 1, sigma_j^2 = 1",
}
FIG2_PANELS = {
    "left": {"kind": "polynomial", "c": 2.0},
    "right": {"kind": "constant", "v": 1.0},
}
FIG2_LABELS = {"left": "Sigma_z = diag(1/j^2)", "right": "Sigma_z = I"}


def replication_seed(base_seed: int, p: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(p), int(r)])


@dataclass(frozen=True)
class ReplicationOutcome:
    r: int
    tau: int | None
    diverged: bool
    gap_final: float
    gap_avg: float | None


@dataclass(frozen=True)
class AggregateRow:
    """Per-``p`` summary of the indicator-weighted gaps.

    ``mean_gap`` averages ``1{tau >= N} G(w_N)`` (or ``1{tau >= N-1} G(w_bar_N)``
    with averaging; ``indicator`` names which).  ``n_escaped`` counts the
    replications whose indicator is zero.
    """

    p: int
    mean_gap: float
    std_gap: float
    mean_gap_conditional: float
    n_escaped: int
    mean_tau_when_escaped: float
    R: int
    indicator: str = "tau>=N"
    n_diverged: int = 0
    extra: dict = field(default_factory=dict, compare=False)


def aggregate(p: int, outcomes: list[ReplicationOutcome], n_steps: int, averaging: bool) -> AggregateRow:
    outcomes = sorted(outcomes, key=lambda o: o.r)
    R = len(outcomes)
    threshold = n_steps - 1 if averaging else n_steps
    vals, survivors, taus = [], [], []
    for o in outcomes:
        ok = o.tau is None or o.tau >= threshold
        g = o.gap_avg if averaging else o.gap_final
        if ok:
            vals.append(float(g))
            survivors.append(float(g))
        else:
            vals.append(0.0)
            taus.append(o.tau)
    mean = math.fsum(vals) / R
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (R - 1)) if R > 1 else 0.0
    cond = math.fsum(survivors) / len(survivors) if survivors else math.nan
    return AggregateRow(
        p=p,
        mean_gap=mean,
        std_gap=std,
        mean_gap_conditional=cond,
        n_escaped=R - len(survivors),
        mean_tau_when_escaped=math.fsum(taus) / len(taus) if taus else math.nan,
        R=R,
        indicator="tau>=N-1" if averaging else "tau>=N",
        n_diverged=sum(o.diverged for o in outcomes),
    )


def _freeze(doc) -> str:
    return json.dumps(doc, sort_keys=True)


@lru_cache(maxsize=8)
def _cached_model(model_json: str, p: int):
    return build_model(json.loads(model_json), p)


def run_replications(model_decl: dict, sgd: dict, base_seed: int, p: int, r_start: int, r_stop: int) -> list[ReplicationOutcome]:
    """Replications ``r_start..r_stop-1`` at dimension ``p`` (one chunk)."""
    model = _cached_model(_freeze(model_decl), p)
    config = build_sgd_config(model, sgd, base_seed, p)
    rngs = [np.random.Generator(np.random.PCG64(replication_seed(base_seed, p, r))) for r in range(r_start, r_stop)]
    results = run_sgd_batch(model, config, rngs)
    return [
        ReplicationOutcome(r, res.tau, res.diverged, res.gap_final, res.gap_avg)
        for r, res in zip(range(r_start, r_stop), results)
    ]


def _task(args):
    return args[3], run_replications(*args)


def run_panels(configs: dict[str, ExperimentConfig], workers: int = 1, progress=None) -> dict[str, list[AggregateRow]]:
    """Run several experiments through one worker pool.

    Every ``(panel, p, chunk)`` task is independent; model construction
    errors surface before any simulation starts.
    """
    for cfg in configs.values():
        for p in cfg.p_grid:
            _cached_model(_freeze(cfg.model), p)
    tasks, keys = [], []
    for name, cfg in configs.items():
        for p in cfg.p_grid:
            for start in range(0, cfg.replications, CHUNK):
                stop = min(start + CHUNK, cfg.replications)
                tasks.append((cfg.model, cfg.sgd, cfg.base_seed, p, start, stop))
                keys.append((name, p))
    outcomes: dict[tuple, list[ReplicationOutcome]] = {k: [] for k in keys}
    if workers <= 1 or len(tasks) <= 1:
        results = map(_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn"))
        results = pool.map(_task, tasks)
    try:
        for key, (p, outs) in zip(keys, results):
            outcomes[key].extend(outs)
            if progress:
                progress(key[0], p, len(outs))
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return {
        name: [
            aggregate(p, outcomes[(name, p)], int(cfg.sgd["n_steps"]), bool(cfg.sgd["averaging"])) for p in cfg.p_grid
        ]
        for name, cfg in configs.items()
    }


def run_experiment(config: ExperimentConfig, workers: int = 1, progress=None) -> list[AggregateRow]:
    """Aggregate rows, one per ``p`` in ``config.p_grid``."""
    return run_panels({config.name: config}, workers, progress)[config.name]


def _figure_base(kind: str, panel: str, p_grid, replications, base_seed, sgd) -> dict:
    return {
        "name": f"{kind}{panel}",
        "p_grid": list(p_grid),
        "replications": replications,
        "base_seed": base_seed,
        "sgd": sgd,
    }


def figure1_configs(
    eta: float = 0.01,
    sigma_sq: float = 1.0,
    lam: float = 0.01,
    n_steps: int = 500,
    p_grid=tuple(range(100, 1001, 100)),
    replications: int = 1000,
    base_seed: int = 0,
    inflate_noise: bool = False,
    panels=("a", "b", "c", "d"),
) -> dict[str, ExperimentConfig]:
    """The four ``(w*, spectrum)`` panels of the dimension sweep.

    By default each panel is the ``p``-dimensional linear model with noise
    ``sigma_sq``.  ``inflate_noise`` adds the omitted signal of coordinates
    beyond ``p`` to the noise instead (projected family).  Panel ``d`` has a
    divergent omitted signal, so it stays uninflated and its config records
    that.
    """
    sgd = {"eta": eta, "lam": lam, "n_steps": n_steps, "averaging": False, "region": {"kind": "all"}, "w0": {"rule": "zero"}}
    out = {}
    for panel in panels:
        w_spec, s_spec = FIG1_PANELS[panel]
        family = "projected" if inflate_noise and panel != "d" else "linear"
        doc = _figure_base("figure1", panel, p_grid, replications, base_seed, copy.deepcopy(sgd))
        doc["model"] = {"family": family, "spectrum": dict(s_spec), "w_star": dict(w_spec), "sigma_sq": sigma_sq}
        doc["title"] = f"Figure 1 ({panel}): {FIG1_LABELS[panel]}"
        doc["outputs"] = {"csv": "figure1.csv", "svg": True}
        out[panel] = ExperimentConfig.from_dict(doc)
    return out


def figure2_configs(
    eta: float = 0.01,
    sigma_sq: float = 1.0,
    lam: float = 0.01,
    n_steps: int = 500,
    d: int = 5,
    p_grid=tuple(range(100, 1001, 100)),
    replications: int = 1000,
    base_seed: int = 0,
) -> dict[str, ExperimentConfig]:
    """Redundant-feature sweep: signal ``w* = (1,...,1)`` on ``d`` isotropic coordinates
    plus ``p - d`` zero-coefficient features with decaying (left) or identity (right) covariance."""
    sgd = {"eta": eta, "lam": lam, "n_steps": n_steps, "averaging": False, "region": {"kind": "all"}, "w0": {"rule": "zero"}}
    out = {}
    for panel, z_spec in FIG2_PANELS.items():
        doc = _figure_base("figure2", panel, p_grid, replications, base_seed, copy.deepcopy(sgd))
        doc["model"] = {
            "family": "redundant",
            "d": d,
            "w_star": {"kind": "constant", "value": 1.0},
            "sigma_x": {"kind": "constant", "v": 1.0},
            "sigma_z": dict(z_spec),
            "sigma_sq": sigma_sq,
        }
        doc["title"] = f"Figure 2 ({panel}): {FIG2_LABELS[panel]}"
        doc["outputs"] = {"csv": "figure2.csv", "svg": True}
        out[panel] = ExperimentConfig.from_dict(doc)
    return out


def figure1(workers: int = 1, **kwargs) -> dict[str, list[AggregateRow]]:
    return run_panels(figure1_configs(**kwargs), workers)


def figure2(workers: int = 1, **kwargs) -> dict[str, list[AggregateRow]]:
    return run_panels(figure2_configs(**kwargs), workers)

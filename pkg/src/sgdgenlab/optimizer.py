"""Constant-stepsize ridge-regularized SGD with iterate averaging and exit tracking.

The update is ``w_{n+1} = w_n - eta * (mean_j grad f(w_n, zeta_{n,j}) + lam * w_n)``.
A run stops at the first iterate outside the region ``D``; that step is the
exit time ``tau``.  Non-finite iterates also count as an exit and are flagged
as divergence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spectra import CovarianceModel

__all__ = [
    "Region",
    "AllRegion",
    "BallRegion",
    "SublevelRegion",
    "region_contains",
    "SgdConfig",
    "RunResult",
    "TrajectoryPoint",
    "step",
    "run_sgd",
    "run_sgd_batch",
    "batch_gradient_variance",
]

# floats of standard normals drawn per block in run_sgd_batch
BLOCK_FLOATS = 2**22


class Region:
    """Base class of the monitored regions ``D``."""

    def contains(self, w) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class AllRegion(Region):
    def contains(self, w):
        return np.ones(np.shape(w)[:-1], dtype=bool)

    def describe(self):
        return {"kind": "all"}


@dataclass(frozen=True, eq=False)
class BallRegion(Region):
    """``{w : ||w - center||^2_M <= radius_sq}`` with ``M`` = identity when ``metric`` is None."""

    center: np.ndarray
    radius_sq: float
    metric: CovarianceModel | None = None

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if not (self.radius_sq >= 0 and math.isfinite(self.radius_sq)):
            raise ValueError(f"radius_sq must be finite and >= 0, got {self.radius_sq!r}")
        if self.metric is not None and self.metric.dim != center.size:
            raise ValueError(f"metric dimension {self.metric.dim} differs from center dimension {center.size}")

    def distance_sq(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape[-1:] != self.center.shape:
            raise ValueError(f"iterate has shape {w.shape}, region dimension is {self.center.size}")
        d = w - self.center
        if self.metric is None:
            return np.einsum("...i,...i->...", d, d)
        return self.metric.quad(d)

    def contains(self, w):
        with np.errstate(invalid="ignore", over="ignore"):
            return self.distance_sq(w) <= self.radius_sq

    def describe(self):
        return {
            "kind": "ball",
            "radius_sq": self.radius_sq,
            "metric": "euclidean" if self.metric is None else "A-norm",
        }


@dataclass(frozen=True, eq=False)
class SublevelRegion(Region):
    """``{w : evaluator(w) <= threshold}``; ``evaluator`` maps ``(..., dim)`` to ``(...)``."""

    threshold: float
    evaluator: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("sublevel threshold must be finite")

    def contains(self, w):
        w = np.asarray(w, dtype=float)
        vals = np.asarray(self.evaluator(w), dtype=float)
        with np.errstate(invalid="ignore"):
            return vals <= self.threshold

    def describe(self):
        return {"kind": "sublevel", "threshold": self.threshold}


def region_contains(region: Region, w) -> np.ndarray | bool:
    """Membership of ``w`` (or of each row of a stack of iterates) in ``region``."""
    out = region.contains(w)
    return bool(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SgdConfig:
    """Hyperparameters of one SGD run.

    ``region=None`` monitors the model's own region; ``w0=None`` starts at zero.
    ``record_every=None`` disables trajectory recording.
    """

    eta: float
    lam: float
    n_steps: int
    batch_size: int = 1
    averaging: bool = False
    region: Region | None = None
    w0: np.ndarray | None = None
    record_every: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be finite and positive, got {self.eta!r}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if self.record_every is not None and (int(self.record_every) != self.record_every or self.record_every < 1):
            raise ValueError(f"record_every must be a positive integer, got {self.record_every!r}")
        if self.w0 is not None:
            w0 = np.array(self.w0, dtype=float).reshape(-1)
            if not np.all(np.isfinite(w0)):
                raise ValueError("w0 must be finite")
            w0.setflags(write=False)
            object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "batch_size", int(self.batch_size))


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    iterate: np.ndarray
    gap: float


@dataclass(frozen=True)
class RunResult:
    """Outcome of one run.

    ``tau`` is the exit step, or None if every iterate ``w_0..w_N`` stayed in
    the region.  On exit, ``w_final`` is the first iterate outside the region
    and ``w_avg`` averages the computed iterates among ``w_0..w_{N-1}``.
    """

    w_final: np.ndarray
    w_avg: np.ndarray | None
    tau: int | None
    n_steps: int
    diverged: bool
    gap_final: float
    gap_avg: float | None
    trajectory: tuple[TrajectoryPoint, ...] = field(default=())

    @property
    def survived(self) -> bool:
        return self.tau is None

    def tau_at_least(self, n: int) -> bool:
        """The event ``tau >= n`` (a survived run has ``tau = infinity``)."""
        return self.tau is None or self.tau >= n

    @property
    def recorded_gaps(self) -> tuple[tuple[int, float], ...]:
        return tuple((pt.step, pt.gap) for pt in self.trajectory)


def step(w, grad_f, eta: float, lam: float):
    """One ridge-regularized SGD update ``w - eta * (grad_f + lam * w)``."""
    w = np.asarray(w, dtype=float)
    grad_f = np.asarray(grad_f, dtype=float)
    if w.shape != grad_f.shape:
        raise ValueError(f"iterate shape {w.shape} differs from gradient shape {grad_f.shape}")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(grad_f)) and math.isfinite(eta) and math.isfinite(lam)):
        raise ValueError("step inputs must be finite")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    if not lam >= 0:
        raise ValueError(f"lam must be >= 0, got {lam!r}")
    return w - eta * (grad_f + lam * w)


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _gap_values(model, w):
    """Population gap per row; ``inf`` for non-finite rows."""
    out = np.full(w.shape[0], np.inf)
    ok = np.all(np.isfinite(w), axis=-1)
    if np.any(ok):
        out[ok] = np.asarray(model.population_gap(w[ok]).value, dtype=float)
    return out


def run_sgd(model, config: SgdConfig, rng) -> RunResult:
    """Run SGD on ``model`` with one random stream."""
    return run_sgd_batch(model, config, [rng])[0]


def run_sgd_batch(model, config: SgdConfig, rngs: Sequence) -> list[RunResult]:
    """Independent runs, one per random stream, advanced together.

    Each stream is consumed datum by datum exactly as in :func:`run_sgd`, so
    results do not depend on how runs are grouped.
    """
    rngs = [_as_rng(r) for r in rngs]
    R = len(rngs)
    if R == 0:
        return []
    dim, p = model.dim, model.predictor_dim
    N, J = config.n_steps, config.batch_size
    eta, lam = config.eta, config.lam
    region = model.region if config.region is None else config.region
    w0 = np.zeros(dim) if config.w0 is None else config.w0
    if w0.shape != (dim,):
        raise ValueError(f"w0 has length {w0.size}, model dimension is {dim}")

    w = np.tile(w0, (R, 1))
    alive = np.asarray(region.contains(w), dtype=bool).copy()
    tau = np.where(alive, -1, 0)
    diverged = np.zeros(R, dtype=bool)
    w_avg = np.zeros((R, dim)) if config.averaging else None
    n_avg = np.zeros(R, dtype=np.int64)
    every = config.record_every
    traj: list[list[TrajectoryPoint]] = [[] for _ in range(R)]

    def record(n, rows):
        if every is None or (n % every and n != 0):
            return
        gaps = _gap_values(model, w[rows])
        for i, g in zip(rows, gaps):
            traj[i].append(TrajectoryPoint(n, w[i].copy(), float(g)))

    def fold_average(rows):
        if w_avg is not None and rows.size:
            n_avg[rows] += 1
            w_avg[rows] += (w[rows] - w_avg[rows]) / n_avg[rows, None]

    record(0, np.arange(R))
    n = 0
    with np.errstate(over="ignore", invalid="ignore"):
        # exited runs still hold their exit iterate, which counts towards the average
        fold_average(np.flatnonzero(~alive))
        while n < N and alive.any():
            bsz = max(1, min(N - n, BLOCK_FLOATS // (R * J * (p + 1))))
            z = np.stack([g.standard_normal((bsz, J, p + 1)) for g in rngs], axis=1)
            for t in range(bsz):
                rows = np.flatnonzero(alive)
                if rows.size == 0:
                    break
                fold_average(rows)
                data = model.data_from_normals(z[t, rows])
                grad = model.grad(w[rows, None, :], data).mean(axis=1)
                w[rows] = w[rows] - eta * (grad + lam * w[rows])
                n += 1
                finite = np.all(np.isfinite(w[rows]), axis=1)
                inside = np.asarray(region.contains(w[rows]), dtype=bool) & finite
                out = rows[~inside]
                tau[out] = n
                diverged[rows[~finite]] = True
                alive[out] = False
                if out.size and n < N:
                    fold_average(out)
                record(n, rows)
    results = []
    final_gaps = _gap_values(model, w)
    avg_gaps = _gap_values(model, w_avg) if w_avg is not None else None
    for i in range(R):
        results.append(
            RunResult(
                w_final=w[i].copy(),
                w_avg=None if w_avg is None else w_avg[i].copy(),
                tau=None if tau[i] < 0 else int(tau[i]),
                n_steps=N,
                diverged=bool(diverged[i]),
                gap_final=float(final_gaps[i]),
                gap_avg=None if avg_gaps is None else float(avg_gaps[i]),
                trajectory=tuple(traj[i]),
            )
        )
    return results


def batch_gradient_variance(model, w, batch_size: int, n_batches: int, rng, lam: float = 0.0):
    """Total variance ``E||g_J - E g_J||^2`` of the batch-mean stochastic gradient at ``w``.

    Returns ``(variance, stderr)``, the standard error coming from the
    spread of the per-batch squared deviations.
    """
    rng = _as_rng(rng)
    w = np.asarray(w, dtype=float)
    chunk = max(1, min(n_batches, BLOCK_FLOATS // (batch_size * (model.predictor_dim + 1))))
    done, grads = 0, []
    while done < n_batches:
        m = min(chunk, n_batches - done)
        data = model.sample(rng, (m, batch_size))
        grads.append(model.grad(w, data).mean(axis=1) + lam * w)
        done += m
    g = np.concatenate(grads)
    dev = g - g.mean(axis=0)
    sq = np.einsum("ij,ij->i", dev, dev) * n_batches / (n_batches - 1)
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_batches))

"""Quick self-check suite: oracles against the library, at desk-check sizes.

Each check returns a :class:`CheckResult`.  ``run_checks`` runs them all; the
CLI ``check`` command prints the table and exits 0 only if every check passes.
Nothing here touches the file system or the network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import (
    DataPoint,
    GaussianNoise,
    LinearModel,
    LogisticModel,
    LossModel,
    PointMassNoise,
    SamplerNoise,
    TukeyModel,
    TwoLayerNN,
    stochastic_grad,
    tukey_c0,
)
from .optimizer import SgdConfig, run_sgd
from .oracles import (
    bound_rhs_thm23,
    finite_diff_grad,
    fourth_moment_check,
    simulate_var_recursion,
    var_decomposition,
)
from .schedules import check_constraints, model_stats, ridge_schedule, ridgeless_schedule, spectrum_schedule
from .spectra import DenseCovariance, DiagonalCovariance, norm_A, norm_A_lambda, norm_A_S

__all__ = ["CheckResult", "gradient_error", "gradient_ok", "make_check_model", "gradient_check", "run_checks", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def gradient_error(model: LossModel, w, zeta: DataPoint, h: float = 1e-6) -> tuple[float, float]:
    """``(relative, absolute)`` distance between the analytic gradient and central differences.

    The relative error is taken against the larger of the two gradient norms.
    """
    analytic = np.asarray(stochastic_grad(model, w, zeta), dtype=float)
    numeric = finite_diff_grad(lambda v, z: float(model.loss(v, z)), w, zeta, h)
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return (diff / scale if scale > 0 else 0.0), diff


def gradient_ok(rel: float, absolute: float, tol: float = 1e-5, abs_tol: float = 1e-8) -> bool:
    return rel <= tol or absolute <= abs_tol


def make_check_model(name: str, p: int = 5, seed: int = 0, eval_size: int = 20_000) -> LossModel:
    """Small random instances used by the self-checks and ``gradcheck``."""
    rng = np.random.default_rng([seed, 0x636B])
    vals = np.sort(rng.uniform(0.2, 1.0, p))[::-1]
    cov = DiagonalCovariance(vals)
    if name == "linear":
        return LinearModel(cov, rng.standard_normal(p) / math.sqrt(p), 1.0)
    if name == "logistic":
        return LogisticModel(cov, rng.standard_normal(p), eval_size=eval_size)
    if name == "tukey":
        return TukeyModel(cov, rng.standard_normal(p) / math.sqrt(p), 0.5, 3.0, 0.5, eval_size=eval_size)
    if name == "nn":
        k = 2
        return TwoLayerNN(cov, rng.standard_normal((p + 2) * k) * 0.5, k, 0.1, 0.25, eval_size=eval_size)
    raise ValueError(f"unknown model {name!r}; choose linear, logistic, tukey or nn")


def random_point_in_region(model: LossModel, rng) -> np.ndarray:
    """A random parameter inside the model's region (uniform radius in the ball)."""
    region = model.region
    if hasattr(region, "radius_sq"):
        g = rng.standard_normal(model.dim)
        metric = region.metric
        nrm = math.sqrt(float(metric.quad(g))) if metric is not None else float(np.linalg.norm(g))
        radius = math.sqrt(region.radius_sq) * rng.uniform() ** (1.0 / model.dim)
        return region.center + g / nrm * radius
    return model.true_param + rng.standard_normal(model.dim)


def gradient_check(name: str, p: int = 5, n_points: int = 100, seed: int = 0, tol: float = 1e-5) -> CheckResult:
    model = make_check_model(name, p, seed)
    rng = np.random.default_rng([seed, 0x6763])
    worst_rel = worst_abs = 0.0
    ok = True
    done = 0
    while done < n_points:
        w = random_point_in_region(model, rng)
        zeta = model.sample(rng)
        if isinstance(model, TukeyModel):
            u = float(zeta.x @ w - zeta.y)
            if abs(abs(u) - model.c) < 1e-3:
                continue  # kink of the biweight derivative
        rel, absolute = gradient_error(model, w, zeta)
        ok &= gradient_ok(rel, absolute, tol)
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, absolute)
        done += 1
    return CheckResult(
        f"gradient {name}",
        bool(ok),
        f"max relative error {worst_rel:.2e}, max absolute {worst_abs:.2e} over {n_points} points",
    )


def _check_norms() -> CheckResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    ok = True
    for _ in range(100):
        p = int(rng.integers(1, 20))
        M = rng.standard_normal((p, p))
        A = DenseCovariance(M @ M.T / p)
        v = rng.standard_normal(p)
        lam = float(rng.uniform(0.01, 2.0))
        vals, vecs = A.eigh()
        oracle = float(np.sum(np.minimum(lam, vals) * (vecs.T @ v) ** 2))
        got = float(norm_A_lambda(v, A, lam))
        worst = max(worst, abs(got - oracle) / max(abs(oracle), 1e-300))
        ok &= got <= norm_A(v, A) * (1 + 1e-12)
        ok &= norm_A(v, A) <= A.trace() * norm_A_S(v, A) ** 2 * (1 + 1e-12)
    return CheckResult("truncated norm oracle", ok and worst <= 1e-12, f"max relative error {worst:.1e}")


def _check_var() -> CheckResult:
    S = DiagonalCovariance([1.0, 0.5, 0.25])
    w = np.array([1.0, -1.0, 0.5])
    dec = var_decomposition(S, w, 0.1, 0.5, 1.0)
    mean, se = simulate_var_recursion(S, w, 0.1, 0.5, 1.0, None, 40_000, np.random.default_rng(3))
    noiseless, _ = simulate_var_recursion(S, w, 0.1, 0.5, 0.0, None, 2_000, np.random.default_rng(3))
    ok = abs(mean - dec.total) <= 3 * se and abs(noiseless - dec.bias) <= 1e-10
    ok &= dec.bias <= dec.bias_bound and dec.variance <= dec.variance_bound
    return CheckResult(
        "VAR stationary oracle",
        ok,
        f"simulated {mean:.5f} +- {se:.5f} vs closed form {dec.total:.5f}; noiseless error {abs(noiseless - dec.bias):.1e}",
    )


def _check_schedules() -> CheckResult:
    A = DiagonalCovariance(1.0 / np.arange(1, 21) ** 2)
    w = np.ones(20) / math.sqrt(20)
    cert = LinearModel(A, w, 1.0).variance_certificate()
    stats = model_stats(A, w, cert.r_sq, cert.c_r)
    ok = True
    for eps in (0.5, 0.1, 0.02):
        s1 = ridgeless_schedule(eps, 1.0, A.op_norm(), cert.r_sq, cert.c_r)
        ok &= check_constraints(s1, cert, A.op_norm(), s1.delta_max, "thm23").passed
        s2 = ridge_schedule(eps, stats)
        ok &= check_constraints(s2, cert, A.op_norm(), s2.delta_max, "thm24").passed
        s3 = spectrum_schedule(eps, "polynomial", 2.0, 1.0, p=20)
        ok &= check_constraints(s3, type(cert)(A.trace(), 0.0), A.op_norm(), s3.delta_max, "thm24").passed
    return CheckResult("schedule constraints", bool(ok), "three families at eps in {0.5, 0.1, 0.02}")


def _check_tukey() -> CheckResult:
    exact = tukey_c0(PointMassNoise(0.0), 1.0).value == 1.0 and tukey_c0(PointMassNoise(2.0), 2.0).value == 0.0
    q = tukey_c0(GaussianNoise(0.5), 1.0).value
    mc = tukey_c0(SamplerNoise(lambda r, n: 0.5 * r.standard_normal(n), 200_000, seed=4), 1.0)
    ok = exact and abs(q - mc.value) <= 3 * mc.stderr
    return CheckResult("Tukey c0 quadrature", ok, f"quadrature {q:.5f}, Monte Carlo {mc.value:.5f} +- {mc.stderr:.5f}")


def _check_fourth_moment() -> CheckResult:
    rng = np.random.default_rng(5)
    ok = True
    for _ in range(10):
        p = int(rng.integers(1, 6))
        M = rng.standard_normal((p, p))
        S = rng.standard_normal((p, p))
        ok &= fourth_moment_check(M @ M.T, float(rng.exponential()), S @ S.T + 0.1 * np.eye(p), 20_000, rng)[3]
    return CheckResult("fourth-moment inequality", bool(ok), "10 random instances")


def _check_sgd() -> CheckResult:
    model = LinearModel(DiagonalCovariance([1.0, 0.25]), [1.0, 1.0], 1.0)
    cert = model.variance_certificate()
    cfg = SgdConfig(eta=0.05, lam=0.0, n_steps=400, averaging=True)
    a = run_sgd(model, cfg, np.random.default_rng(9))
    b = run_sgd(model, cfg, np.random.default_rng(9))
    same = np.array_equal(a.w_final, b.w_final) and np.array_equal(a.w_avg, b.w_avg)
    bound = bound_rhs_thm23(2.0, 400, 0.05, cert.r_sq, 0.0, 2.0)
    return CheckResult("SGD determinism", bool(same), f"repeat runs identical; averaged gap {a.gap_avg:.4f} (bound {bound:.3f})")


CHECKS: list[Callable[[], CheckResult]] = [
    _check_norms,
    lambda: gradient_check("linear", n_points=20),
    lambda: gradient_check("logistic", n_points=20),
    lambda: gradient_check("tukey", n_points=20),
    lambda: gradient_check("nn", n_points=20),
    _check_var,
    _check_schedules,
    _check_tukey,
    _check_fourth_moment,
    _check_sgd,
]


def run_checks() -> list[CheckResult]:
    out = []
    for check in CHECKS:
        try:
            out.append(check())
        except Exception as exc:  # a crashing check is a failing check
            out.append(CheckResult(getattr(check, "__name__", "check"), False, f"error: {exc}"))
    return out

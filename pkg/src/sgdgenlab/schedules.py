"""Hyperparameter schedules that turn a target accuracy into (lambda, eta, N, delta).

Three families are provided:

* ``ridgeless_schedule`` -- the averaged-SGD guarantee, stated with a bound
  ``C0`` on ``||w*||^2`` and ``||w0 - w*||^2``.
* ``ridge_schedule`` -- the last-iterate guarantee for the ridge objective.
  It needs the truncated norm ``||w*||^2_{A,lam}`` as a function of ``lam``.
* ``spectrum_schedule`` -- closed-form ``lam`` choices for exponentially or
  polynomially decaying Hessian spectra.  The remaining constants come from
  the ridge machinery.

``check_constraints`` re-evaluates every stepsize inequality of a theorem and
reports the margin of each.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectra import _as_cov, make_spectrum, norm_A, norm_A_lambda, truncated_trace

__all__ = [
    "DEFAULT_SLACK",
    "ScheduleOutput",
    "ModelStats",
    "Infeasible",
    "ConstraintCheck",
    "ConstraintReport",
    "ridgeless_schedule",
    "ridgeless_convex_schedule",
    "ridge_schedule",
    "spectrum_schedule",
    "ridge_c1",
    "check_constraints",
    "model_stats",
]

DEFAULT_SLACK = 0.99


class Infeasible(ValueError):
    """No hyperparameters satisfy the named constraint."""

    def __init__(self, constraint: str, detail: str):
        super().__init__(f"infeasible: {constraint}: {detail}")
        self.constraint = constraint


@dataclass(frozen=True)
class ScheduleOutput:
    lam: float
    eta: float
    n_steps: int
    delta_max: float
    rationale: str
    slack: float
    ledger: dict = field(default_factory=dict, compare=False)

    @property
    def theorem(self) -> str:
        return "thm23" if self.rationale.startswith("ridgeless") else "thm24"

    def to_dict(self) -> dict:
        return {
            "rationale": self.rationale,
            "lambda": self.lam,
            "eta": self.eta,
            "n_steps": self.n_steps,
            "delta_max": self.delta_max,
            "slack": self.slack,
            **{k: v for k, v in self.ledger.items()},
        }


@dataclass(frozen=True)
class ModelStats:
    """Problem constants needed by the ridge schedule.

    ``w_a_lambda(lam)`` returns ``||w*||^2_{A,lam}``; ``g0`` and ``w0_sq`` are
    ``E G(w0)`` and ``E ||w0||^2``.
    """

    a_norm: float
    r_sq: float
    c_r: float
    w_a_sq: float
    w_a_lambda: Callable[[float], float]
    g0: float
    w0_sq: float

    def __post_init__(self):
        for name in ("a_norm", "r_sq", "w_a_sq", "g0", "w0_sq"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if not self.a_norm > 0:
            raise ValueError("a_norm must be positive")
        if not self.c_r >= 0:
            raise ValueError(f"c_r must be >= 0, got {self.c_r!r}")
        if not math.isfinite(self.c_r):
            raise ValueError("c_r is infinite (noiseless linear model); no stepsize satisfies the constraints")


def model_stats(A, w_star, r_sq: float, c_r: float, w0=None) -> ModelStats:
    """Stats of a deterministic start ``w0`` (default 0) for the Hessian bound ``A``."""
    A = _as_cov(A)
    w_star = np.asarray(w_star, dtype=float)
    w0 = np.zeros_like(w_star) if w0 is None else np.asarray(w0, dtype=float)
    return ModelStats(
        a_norm=A.op_norm(),
        r_sq=float(r_sq),
        c_r=float(c_r),
        w_a_sq=float(norm_A(w_star, A)),
        w_a_lambda=lambda lam: float(norm_A_lambda(w_star, A, lam)),
        # G is bounded by ||w0 - w*||_A^2 / 2 for models with F'' <= A; exact for linear
        g0=0.5 * float(norm_A(w0 - w_star, A)),
        w0_sq=float(w0 @ w0),
    )


def _check_eps(epsilon):
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be finite and positive, got {epsilon!r}")


def _check_slack(slack):
    if not 0 < slack <= 1:
        raise ValueError(f"slack must lie in (0, 1], got {slack!r}")


def _inv(x: float) -> float:
    return math.inf if x == 0 else 1.0 / x


def _smallest_int_above(x: float) -> int:
    """Smallest integer strictly greater than ``x``."""
    return int(math.floor(x)) + 1


def ridgeless_schedule(
    epsilon: float, C0: float, A_norm: float, r_sq: float, c_r: float, slack: float = DEFAULT_SLACK
) -> ScheduleOutput:
    """Averaged-SGD hyperparameters reaching ``E[G(w_bar_N) 1{tau >= N}] <= 3 eps``.

    The stepsize obeys both ``1/(2(1+c_r)(||A|| + lam))`` and the tighter
    ``1/(4(1+c_r)(||A|| + lam))`` of the underlying averaged-iterate theorem,
    so the output always passes ``check_constraints(..., "thm23")``.  Both
    caps are evaluated at ``lam = 1`` so that ``eta`` is monotone in ``eps``.
    """
    _check_eps(epsilon)
    _check_slack(slack)
    for name, v in (("C0", C0), ("A_norm", A_norm), ("r_sq", r_sq)):
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be finite and positive, got {v!r}")
    if not c_r >= 0:
        raise ValueError(f"c_r must be >= 0, got {c_r!r}")
    lam = slack * min(epsilon / (8.0 * C0), 1.0)
    delta = slack * min(epsilon / (16.0 * C0 * A_norm), 1.0 / (2.0 * A_norm))
    # The lam-dependent caps are taken at their minimum over lam' in [lam, 1]
    # (i.e. at lam' = 1), so that eta never grows as epsilon shrinks.
    caps = {
        "corollary": _inv(2.0 * (1.0 + c_r) * (A_norm + 1.0)),
        "theorem": _inv(4.0 * (1.0 + c_r) * (A_norm + 1.0)),
        "noise": epsilon / (2.0 * r_sq),
        "unit": 1.0,
    }
    eta = slack * min(caps.values())
    if eta == 0 or not math.isfinite(C0 / eta):
        raise Infeasible("eta", "stepsize vanishes (c_r is infinite)")
    n_steps = _smallest_int_above(2.0 * C0 / (epsilon * eta))
    ledger = {
        "epsilon": epsilon,
        "C0": C0,
        "A_norm": A_norm,
        "r_sq": r_sq,
        "c_r": c_r,
        **{f"eta_cap_{k}": v for k, v in caps.items()},
        "eta_binding": min(caps, key=caps.get),
        "guarantee": 3.0 * epsilon,
    }
    return ScheduleOutput(lam, eta, n_steps, delta, "ridgeless_cor25", slack, ledger)


def ridgeless_convex_schedule(
    epsilon: float, C0: float, A_norm: float, r_sq: float, c_r: float, alpha: float = 0.5, slack: float = DEFAULT_SLACK
) -> ScheduleOutput:
    """Unregularized averaged SGD for problems convex on ``D`` (``delta = 0``).

    ``lam = 0``, ``eta = O(eps^(1+alpha))`` and ``N = O(eps^-(2+alpha))``: the
    averaged-iterate bound ``2 C0/(N eta) + 2 eta r^2`` stays below ``2 eps``,
    while ``N eta^2 r^2 = O(eps^alpha)`` keeps the iterates' spread around
    ``w*`` from growing, which is what bounds the escape probability from a
    ball around ``w*``.
    """
    _check_eps(epsilon)
    _check_slack(slack)
    for name, v in (("C0", C0), ("A_norm", A_norm), ("r_sq", r_sq)):
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be finite and positive, got {v!r}")
    if not c_r >= 0:
        raise ValueError(f"c_r must be >= 0, got {c_r!r}")
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    caps = {
        "theorem": _inv(4.0 * (1.0 + c_r) * A_norm),
        "noise": min(epsilon, epsilon ** (1.0 + alpha)) / (2.0 * r_sq),
        "unit": 1.0,
    }
    eta = slack * min(caps.values())
    if eta == 0 or not math.isfinite(C0 / eta):
        raise Infeasible("eta", "stepsize vanishes (c_r is infinite)")
    n_steps = _smallest_int_above(2.0 * C0 / (epsilon * eta))
    ledger = {
        "epsilon": epsilon,
        "alpha": alpha,
        "C0": C0,
        "A_norm": A_norm,
        "r_sq": r_sq,
        "c_r": c_r,
        **{f"eta_cap_{k}": v for k, v in caps.items()},
        "eta_binding": min(caps, key=caps.get),
        "noise_growth": n_steps * eta**2 * r_sq,
        "guarantee": 3.0 * epsilon,
    }
    return ScheduleOutput(0.0, eta, n_steps, 0.0, "ridgeless_convex", slack, ledger)


def ridge_c1(A_norm: float, r_sq: float, w_a_sq: float) -> float:
    """``C1 = 60 ||A|| (r^2 + ||w*||_A^2) + 10 ||w*||_A^2``."""
    return 60.0 * A_norm * (r_sq + w_a_sq) + 10.0 * w_a_sq


def _ridge_eta_caps(lam, A_norm, r_sq, c_r):
    # lam / (12||A||^2 + 6 lam^2 + 6 c_r r^2) rises then falls in lam; its minimum
    # over [lam, 1] is non-decreasing in lam, which keeps eta monotone in epsilon
    def variance(l):
        return l / (12.0 * A_norm**2 + 6.0 * l**2 + 6.0 * c_r * r_sq)

    caps = {
        "variance": min(variance(lam), variance(1.0)),
        "curvature": 1.0 / (12.0 * A_norm),
        "unit": 1.0,
    }
    if c_r > 0 and r_sq > 0:
        caps["certificate"] = lam / (6.0 * c_r * A_norm * r_sq)
    return caps


def _ridge_tail(lam, epsilon, stats: ModelStats, slack, rationale, ledger):
    """Shared delta / eta / N computation once ``lam`` is fixed."""
    C1 = ridge_c1(stats.a_norm, stats.r_sq, stats.w_a_sq)
    delta = slack * min(lam * epsilon / C1, lam / (4.0 * stats.a_norm))
    caps = {"accuracy": lam * epsilon / C1, **_ridge_eta_caps(lam, stats.a_norm, stats.r_sq, stats.c_r)}
    eta = slack * min(caps.values())
    # N > max{-4 log(eps / (2 E G0)), -8 log(eps lam eta / (64 ||A|| E||w0||^2))} / (lam eta);
    # a term whose expectation vanishes imposes no condition
    le = lam * eta
    terms = {}
    if stats.g0 > 0:
        terms["log_g0"] = -4.0 * math.log(epsilon / (2.0 * stats.g0)) / le
    if stats.w0_sq > 0:
        terms["log_w0"] = -8.0 * math.log(epsilon * le / (64.0 * stats.a_norm * stats.w0_sq)) / le
    n_steps = max(1, _smallest_int_above(max(terms.values(), default=0.0)))
    ledger = {
        **ledger,
        "C1": C1,
        "A_norm": stats.a_norm,
        "r_sq": stats.r_sq,
        "c_r": stats.c_r,
        "w_a_sq": stats.w_a_sq,
        "g0": stats.g0,
        "w0_sq": stats.w0_sq,
        **{f"eta_cap_{k}": v for k, v in caps.items()},
        **{f"n_{k}": v for k, v in terms.items()},
        "guarantee": 4.0 * epsilon,
    }
    return ScheduleOutput(lam, eta, n_steps, delta, rationale, slack, ledger)


def ridge_schedule(
    epsilon: float, stats: ModelStats, slack: float = DEFAULT_SLACK, tol: float = 1e-10
) -> ScheduleOutput:
    """Last-iterate hyperparameters reaching ``E[G(w_N) 1{tau >= N}] <= 4 eps``.

    ``lam`` is the largest value in ``(0, 1]`` with ``4 ||w*||^2_{A,lam} < eps``
    (bisection on the non-decreasing map), multiplied by ``slack``.
    """
    _check_eps(epsilon)
    _check_slack(slack)
    f = stats.w_a_lambda
    if 4.0 * f(1.0) < epsilon:
        lam_hi = 1.0
    else:
        lo, hi = 0.0, 1.0
        if not 4.0 * f(tol) < epsilon:
            raise Infeasible(
                "4||w*||^2_{A,lam} < eps",
                f"even lam={tol:g} gives 4||w*||^2_(A,lam) = {4 * f(tol):.4g} >= eps = {epsilon:g}",
            )
        lo = tol
        while hi - lo > tol * max(1.0, lo):
            mid = 0.5 * (lo + hi)
            if 4.0 * f(mid) < epsilon:
                lo = mid
            else:
                hi = mid
        lam_hi = lo
    lam = slack * lam_hi
    ledger = {"epsilon": epsilon, "lam_feasible_max": lam_hi, "w_a_lambda": f(lam)}
    return _ridge_tail(lam, epsilon, stats, slack, "ridge_cor26", ledger)


def spectrum_schedule(
    epsilon: float,
    profile: str,
    c: float,
    w_AS: float,
    stats: ModelStats | None = None,
    p: int | None = None,
    slack: float = DEFAULT_SLACK,
) -> ScheduleOutput:
    """Closed-form ``lam`` for decaying spectra ``e^{-ci}`` or ``i^{-c}``.

    ``k`` counts the leading eigen-directions whose truncation cost is paid
    in full; ``lam = eps / (8 k w_AS^2)``.  When ``p`` is given, ``k`` is
    increased until ``4 w_AS^2 * truncated_trace(lam) <= eps`` holds on the
    actual ``p``-dimensional spectrum.  ``stats`` (default: the diagonal model
    with ``w*`` at the corner of its ``w_AS`` box, so ``r^2 = tr``, ``c_r = 0``,
    ``w0 = 0``) supplies the constants for ``eta``, ``delta`` and ``N``.
    """
    _check_eps(epsilon)
    _check_slack(slack)
    if not (math.isfinite(c) and c > 0):
        raise ValueError(f"decay constant c must be positive, got {c!r}")
    if not w_AS >= 0:
        raise ValueError(f"w_AS must be >= 0, got {w_AS!r}")
    w2 = float(w_AS) ** 2
    if profile == "exponential":
        rationale = "spectrum_exp"
        raw = math.log(8.0 * w2 / (epsilon * math.expm1(c))) / c if w2 > 0 else 0.0
    elif profile == "polynomial":
        rationale = "spectrum_poly"
        raw = (8.0 * w2 / (c * epsilon)) ** (1.0 / c) if w2 > 0 else 0.0
    else:
        raise ValueError(f"profile must be 'exponential' or 'polynomial', got {profile!r}")
    k_formula = max(1, math.ceil(raw - 1e-12))
    k = k_formula

    def lam_of(k):
        return min(1.0, epsilon / (8.0 * k * w2)) if w2 > 0 else 1.0

    spec = None
    if p is not None:
        spec = make_spectrum(profile, p, c=c)
        while w2 > 0 and 4.0 * w2 * truncated_trace(spec, lam_of(k)) > epsilon:
            k += 1
    lam = slack * lam_of(k)
    if stats is None:
        if spec is None:
            raise ValueError("spectrum_schedule needs model stats or the dimension p")
        tr = spec.trace()
        A = spec.covariance()
        w = np.full(spec.dim, w_AS)
        stats = ModelStats(
            a_norm=float(spec.values[0]),
            r_sq=tr,
            c_r=0.0,
            w_a_sq=float(norm_A(w, A)),
            w_a_lambda=lambda lam_: w2 * truncated_trace(spec, lam_),
            g0=0.5 * float(norm_A(w, A)),
            w0_sq=0.0,
        )
    ledger = {
        "epsilon": epsilon,
        "profile": profile,
        "c": c,
        "w_AS": w_AS,
        "k_formula": k_formula,
        "k": k,
        "truncation_bound": 4.0 * w2 * truncated_trace(spec, lam) if spec is not None else None,
    }
    return _ridge_tail(lam, epsilon, stats, slack, rationale, ledger)


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class ConstraintReport:
    theorem: str
    checks: tuple[ConstraintCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        lines = [f"constraints for {self.theorem}:"]
        for c in self.checks:
            lines.append(
                f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.lhs:.6g} <= {c.rhs:.6g} (margin {c.margin:.3g})"
            )
        return "\n".join(lines)


def check_constraints(config, cert, A_norm: float, delta: float, theorem: str) -> ConstraintReport:
    """Evaluate each stepsize / regularization inequality of a theorem.

    ``config`` needs ``eta`` and ``lam`` attributes (an ``SgdConfig`` or a
    ``ScheduleOutput``); ``cert`` needs ``r_sq`` and ``c_r``.
    """
    eta, lam = float(config.eta), float(config.lam)
    r_sq, c_r = float(cert.r_sq), float(cert.c_r)
    checks = []
    if theorem == "thm23":
        checks.append(ConstraintCheck("eta <= 1/(4(1+c_r)(||A||+lam))", eta, _inv(4.0 * (1.0 + c_r) * (A_norm + lam))))
        checks.append(ConstraintCheck("eta <= 1", eta, 1.0))
        checks.append(ConstraintCheck("2 delta ||A|| <= lam", 2.0 * delta * A_norm, lam))
        checks.append(ConstraintCheck("lam <= 1", lam, 1.0))
    elif theorem == "thm24":
        checks.append(ConstraintCheck("eta <= 1", eta, 1.0))
        checks.append(
            ConstraintCheck("eta <= lam/(12||A||^2+6lam^2+6c_r r^2)", eta, lam / (12.0 * A_norm**2 + 6.0 * lam**2 + 6.0 * c_r * r_sq))
        )
        checks.append(ConstraintCheck("eta <= 1/(12||A||)", eta, _inv(12.0 * A_norm)))
        if c_r > 0 and r_sq > 0:
            checks.append(ConstraintCheck("eta <= lam/(6c_r||A||r^2)", eta, lam / (6.0 * c_r * A_norm * r_sq)))
        checks.append(ConstraintCheck("4 delta ||A|| <= lam", 4.0 * delta * A_norm, lam))
        checks.append(ConstraintCheck("lam <= 1", lam, 1.0))
    else:
        raise ValueError(f"theorem must be 'thm23' or 'thm24', got {theorem!r}")
    return ConstraintReport(theorem, tuple(checks))

"""Independent validators: the idealized VAR bias/variance decomposition,
theorem right-hand sides, finite-difference gradients and the Gaussian
fourth-moment inequality.

Nothing here calls the SGD engine; these are the references it is checked
against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.signal import lfilter

from .spectra import _as_cov

__all__ = [
    "VarDecomposition",
    "ridge_target",
    "var_decomposition",
    "simulate_var_recursion",
    "bound_rhs_thm23",
    "bound_rhs_thm24",
    "finite_diff_grad",
    "fourth_moment_check",
]


def _eig(Sigma):
    cov = _as_cov(Sigma)
    vals, vecs = cov.eigh()
    return cov, np.asarray(vals, dtype=float), vecs


def ridge_target(Sigma, w_star, lam: float) -> np.ndarray:
    """``w*_lam = (Sigma + lam I)^{-1} Sigma w*``, solved in the eigenbasis."""
    cov, vals, vecs = _eig(Sigma)
    w_star = cov._check_dim(w_star)
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam!r}")
    if lam == 0 and np.any(vals <= 0):
        raise ValueError("lambda = 0 requires a nonsingular covariance")
    a = w_star @ vecs
    return vecs @ (a * vals / (vals + lam))


@dataclass(frozen=True)
class VarDecomposition:
    """Stationary bias/variance split of the idealized recursion.

    ``stationary_cov`` is ``V`` in the eigenbasis of ``Sigma`` (diagonal there),
    rotated back to the original coordinates.  ``variance_bound`` uses
    ``lambda_1`` of ``Sigma``; ``a_norm`` repeats that value under the name
    the generalization bound uses.
    """

    ridge_target: np.ndarray
    stationary_cov: np.ndarray
    bias: float
    bias_bound: float
    variance: float
    variance_bound: float
    lambda_1: float
    a_norm: float

    @property
    def total(self) -> float:
        return self.bias + self.variance


def var_decomposition(Sigma, w_star, lam: float, eta: float, r_sq: float, p: int | None = None) -> VarDecomposition:
    """Bias ``G(w*_lam)``, variance ``tr(V Sigma)/2`` and their upper bounds.

    ``V = (r^2 eta / p) (2 (Sigma + lam I) - eta (Sigma + lam I)^2)^{-1}`` is the
    stationary covariance when the injected noise is ``N(0, (r^2/p) I)``.
    """
    cov, vals, vecs = _eig(Sigma)
    w_star = cov._check_dim(w_star)
    p = cov.dim if p is None else int(p)
    lam1 = float(vals[0])
    if not (eta > 0 and lam >= 0 and r_sq >= 0):
        raise ValueError("need eta > 0, lam >= 0, r_sq >= 0")
    if eta > 1.0 / (lam1 + lam) * (1 + 1e-12):
        raise ValueError(f"stepsize {eta:g} exceeds 1/(lambda_1 + lam) = {1.0 / (lam1 + lam):g}")
    if lam == 0 and np.any(vals <= 0):
        raise ValueError("lambda = 0 requires a nonsingular covariance")
    a = w_star @ vecs
    m = vals + lam
    v_diag = (r_sq * eta / p) / (2.0 * m - eta * m**2)
    V = (vecs * v_diag) @ vecs.T
    bias = 0.5 * math.fsum(lam**2 * vals * a**2 / m**2)
    bias_bound = 0.5 * math.fsum(np.minimum(lam, vals) * a**2) if lam > 0 else 0.0
    variance = 0.5 * math.fsum(v_diag * vals)
    variance_bound = eta * r_sq * lam1 / (2.0 * lam) if lam > 0 else math.inf
    return VarDecomposition(
        ridge_target=vecs @ (a * vals / m),
        stationary_cov=V,
        bias=bias,
        bias_bound=bias_bound,
        variance=variance,
        variance_bound=variance_bound,
        lambda_1=lam1,
        a_norm=lam1,
    )


def simulate_var_recursion(
    Sigma,
    w_star,
    lam: float,
    eta: float,
    r_sq: float,
    p: int | None,
    n_steps: int,
    rng,
    n_chains: int = 10,
    w0=None,
    n_batches: int = 20,
):
    """Long-run average of ``G(w_n) = ||w_n - w*||^2_Sigma / 2`` along
    ``w_{n+1} = (I - eta (Sigma + lam I)) (w_n - w*_lam) + w*_lam + eta xi_n``,
    ``xi_n ~ N(0, (r^2/p) I)``.

    The chains are run in the eigenbasis of ``Sigma``, where the recursion
    decouples.  The first half of each chain is discarded.  The standard error
    comes from batch means over the retained steps of all chains.  Returns
    ``(mean, stderr)``.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cov, vals, vecs = _eig(Sigma)
    w_star = cov._check_dim(w_star)
    p = cov.dim if p is None else int(p)
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    a = w_star @ vecs
    m = vals + lam
    target = a * vals / m  # ridge target in eigen-coordinates
    contraction = 1.0 - eta * m
    noise_sd = eta * math.sqrt(r_sq / p)
    if w0 is None:
        u = np.zeros((n_chains, cov.dim))
    else:
        u = np.tile(np.asarray(w0, dtype=float) @ vecs, (n_chains, 1))
    burn = n_steps // 2
    kept = n_steps - burn
    n_batches = max(2, min(n_batches, kept))
    per_batch = kept // n_batches
    batch_sums = np.zeros((n_batches, n_chains))
    batch_counts = np.zeros(n_batches)
    gap_offset = target - a
    # each eigen-coordinate is an AR(1) y_n = c y_{n-1} + e_n, driven by the
    # input sequence e = (dev_0, eta xi_0, eta xi_1, ...) so that y_n = w_n - w*_lam
    last = None
    block = max(1, 2**21 // (n_chains * cov.dim))
    n = 0
    while n < n_steps:
        b = min(block, n_steps - n)
        if last is None:
            x = np.concatenate([(u - target)[None], rng.standard_normal((b - 1, n_chains, cov.dim)) * noise_sd])
            zi = np.zeros((n_chains, cov.dim))
        else:
            x = rng.standard_normal((b, n_chains, cov.dim)) * noise_sd
            zi = contraction * last
        dev = np.empty_like(x)
        for i in range(cov.dim):
            dev[:, :, i], _ = lfilter([1.0], [1.0, -contraction[i]], x[:, :, i], axis=0, zi=zi[None, :, i])
        last = dev[-1]
        gaps = 0.5 * ((dev + gap_offset) ** 2) @ vals
        steps = np.arange(n, n + b)
        keep = steps >= burn
        if np.any(keep):
            idx = np.minimum((steps[keep] - burn) // per_batch, n_batches - 1)
            np.add.at(batch_sums, idx, gaps[keep])
            np.add.at(batch_counts, idx, 1)
        n += b
    means = batch_sums / batch_counts[:, None]
    flat = means.reshape(-1)
    return float(flat.mean()), float(flat.std(ddof=1) / math.sqrt(flat.size))


def bound_rhs_thm23(w0_dist_sq: float, n_steps: int, eta: float, r_sq: float, lam: float, w_star_sq: float) -> float:
    """``2 E||w0 - w*||^2 / (N eta) + 2 eta r^2 + 8 lam ||w*||^2``."""
    if not (n_steps >= 1 and eta > 0):
        raise ValueError("need N >= 1 and eta > 0")
    return 2.0 * w0_dist_sq / (n_steps * eta) + 2.0 * eta * r_sq + 8.0 * lam * w_star_sq


def bound_rhs_thm24(
    w_a_lambda: float,
    C1: float,
    lam: float,
    eta: float,
    delta: float,
    n_steps: int,
    g0: float,
    A_norm: float,
    w0_sq: float,
) -> float:
    """``4||w*||^2_{A,lam} + (C1/lam)(eta + delta) + exp(-lam N eta/4) E[G(w0) + 4 N ||A|| ||w0||^2]``."""
    if not lam > 0:
        raise ValueError("the last-iterate bound needs lam > 0")
    decay = math.exp(-lam * n_steps * eta / 4.0)
    return 4.0 * w_a_lambda + C1 / lam * (eta + delta) + decay * (g0 + 4.0 * n_steps * A_norm * w0_sq)


def finite_diff_grad(f: Callable, w, zeta=None, h: float = 1e-6) -> np.ndarray:
    """Central differences ``(f(w + h e_i, zeta) - f(w - h e_i, zeta)) / (2h)``.

    ``f`` is called as ``f(w, zeta)``, or as ``f(w)`` when ``zeta`` is None.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    w = np.asarray(w, dtype=float)
    call = (lambda v: f(v)) if zeta is None else (lambda v: f(v, zeta))
    out = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e.flat[i] = h
        out.flat[i] = (float(call(w + e)) - float(call(w - e))) / (2.0 * h)
    return out


def fourth_moment_check(A, a: float, Sigma, n_samples: int, rng):
    """Compare ``E (x^T A x + a)^2`` with ``3 (E(x^T A x + a))^2 = 3 (tr(A Sigma) + a)^2``.

    Returns ``(lhs, lhs_stderr, rhs, passed)``; ``passed`` means
    ``lhs <= rhs + 3 stderr``.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    cov = _as_cov(Sigma)
    if A.shape != (cov.dim, cov.dim):
        raise ValueError(f"A has shape {A.shape}, covariance dim is {cov.dim}")
    if a < 0:
        raise ValueError("a must be >= 0")
    # (Sigma^{1/2} A Sigma^{1/2}) is the quadratic form in standard normal coordinates
    S_half = cov.sqrt_apply(np.eye(cov.dim))
    M = S_half.T @ A @ S_half
    M = 0.5 * (M + M.T)
    rhs = 3.0 * (float(np.trace(M)) + a) ** 2
    vals = np.empty(n_samples)
    chunk = max(1, 2**20 // cov.dim)
    for s in range(0, n_samples, chunk):
        z = rng.standard_normal((min(chunk, n_samples - s), cov.dim))
        q = np.einsum("ni,ij,nj->n", z, M, z) + a
        vals[s : s + z.shape[0]] = q * q
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return lhs, se, rhs, lhs <= rhs + 3.0 * se

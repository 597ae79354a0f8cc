"""Statistical loss models trained by the SGD engine.

Every model draws its data from standard normal blocks of width ``p + 1`` per
datum: the first ``p`` entries become the predictor ``x = Sigma^{1/2} z`` and
the last one drives the response noise (or the label, for logistic
regression).  Consuming the random stream datum by datum this way means a run
is unaffected by how many data points are drawn per call.

Losses and gradients broadcast over leading axes, so ``w`` of shape
``(R, 1, dim)`` against a batch ``x`` of shape ``(R, J, p)`` gives per-datum
gradients of shape ``(R, J, dim)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit, ndtr, zeta

from .optimizer import AllRegion, BallRegion, Region
from .spectra import BlockCovariance, CovarianceModel, DiagonalCovariance, _as_cov

__all__ = [
    "DataPoint",
    "GapEstimate",
    "VarianceCertificate",
    "LossModel",
    "LinearModel",
    "LogisticModel",
    "TukeyModel",
    "TwoLayerNN",
    "Activation",
    "TANH",
    "GaussianNoise",
    "PointMassNoise",
    "SamplerNoise",
    "PowerLaw",
    "stochastic_grad",
    "nn_forward",
    "nn_constants",
    "tukey_c0",
    "build_projected_model",
    "build_redundant_model",
]

DEFAULT_EVAL_SIZE = 100_000
# frozen evaluation sets are capped at this many floats
EVAL_FLOAT_BUDGET = 20_000_000


@dataclass(frozen=True)
class DataPoint:
    """One datum ``(x, y)``, or a batch of them stacked along leading axes."""

    x: np.ndarray
    y: np.ndarray


class GapEstimate(NamedTuple):
    value: np.ndarray | float
    stderr: np.ndarray | float


@dataclass(frozen=True)
class VarianceCertificate:
    """Constants bounding the stochastic gradient variance.

    ``rhs`` is ``r^2 + c_r r^2 min{G(w), ||w||^2}``; ``rhs_inner`` is the
    alternative ``r^2 + c_r |(w - w*)^T grad F(w)|``, which only the linear
    certificate claims (``"theorem23" in forms``).
    """

    r_sq: float
    c_r: float
    forms: tuple[str, ...] = ("theorem24",)

    def __post_init__(self):
        if not (self.r_sq >= 0 and self.c_r >= 0) or math.isnan(self.r_sq + self.c_r):
            raise ValueError(f"certificate constants must be non-negative, got r^2={self.r_sq}, c_r={self.c_r}")

    def rhs(self, gap, w_sq):
        if self.c_r == 0:
            return self.r_sq + 0.0 * np.asarray(gap)
        return self.r_sq + self.c_r * self.r_sq * np.minimum(gap, w_sq)

    def rhs_inner(self, inner):
        return self.r_sq + self.c_r * np.abs(inner)


def _shape(size) -> tuple:
    if size is None:
        return ()
    return (int(size),) if np.isscalar(size) else tuple(int(s) for s in size)


class LossModel:
    """Base class.  Subclasses set the attributes below and implement
    ``_response``, ``loss``, ``grad``, ``population_gap``, ``population_grad``
    and ``variance_certificate``."""

    name: str = "model"
    dim: int
    predictor_dim: int
    true_param: np.ndarray
    covariance: CovarianceModel
    hessian_bound: CovarianceModel
    region: Region
    noise_variance: float

    def data_from_normals(self, z: np.ndarray) -> DataPoint:
        z = np.asarray(z, dtype=float)
        p = self.predictor_dim
        if z.shape[-1] != p + 1:
            raise ValueError(f"expected normal blocks of width {p + 1}, got {z.shape[-1]}")
        x = self.covariance.sqrt_apply(z[..., :p])
        return DataPoint(x, self._response(x, z[..., p]))

    def sample(self, rng: np.random.Generator, size=None) -> DataPoint:
        shape = _shape(size)
        return self.data_from_normals(rng.standard_normal(shape + (self.predictor_dim + 1,)))

    def _response(self, x, e):
        raise NotImplementedError

    def loss(self, w, data: DataPoint):
        raise NotImplementedError

    def grad(self, w, data: DataPoint):
        raise NotImplementedError

    def population_gap(self, w, mc_budget: int | None = None) -> GapEstimate:
        raise NotImplementedError

    def population_grad(self, w, mc_budget: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def variance_certificate(self) -> VarianceCertificate:
        raise NotImplementedError

    def gap(self, w):
        return self.population_gap(w).value

    def _check_w(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape[-1:] != (self.dim,):
            raise ValueError(f"parameter has shape {w.shape}, {self.name} model expects last dimension {self.dim}")
        return w


class _FrozenEvalMixin:
    """Common-random-numbers evaluation set frozen at construction."""

    eval_size: int
    eval_seed: int

    def _init_eval(self, eval_size, eval_seed):
        if eval_size is None:
            eval_size = min(DEFAULT_EVAL_SIZE, max(1000, EVAL_FLOAT_BUDGET // (self.predictor_dim + 1)))
        if eval_size < 1:
            raise ValueError("eval_size must be >= 1")
        self.eval_size = int(eval_size)
        self.eval_seed = int(eval_seed)

    @cached_property
    def eval_set(self) -> DataPoint:
        rng = np.random.default_rng([self.eval_seed, 0x6576616C])
        data = self.sample(rng, self.eval_size)
        data.x.setflags(write=False)
        data.y.setflags(write=False)
        return data

    def _eval_data(self, mc_budget):
        if mc_budget is None:
            mc_budget = self.eval_size
        if mc_budget < 1:
            raise ValueError(f"{self.name}: mc_budget must be >= 1 for a Monte Carlo gap")
        if mc_budget > self.eval_size:
            raise ValueError(f"{self.name}: mc_budget {mc_budget} exceeds the frozen evaluation set ({self.eval_size})")
        d = self.eval_set
        return DataPoint(d.x[:mc_budget], d.y[:mc_budget])

    def _mc_mean(self, w, per_point: Callable, mc_budget):
        """Mean and standard error of ``per_point(w_row, data)`` over the eval set."""
        w = self._check_w(w)
        data = self._eval_data(mc_budget)
        flat = w.reshape(-1, self.dim)
        vals = np.empty(flat.shape[0])
        errs = np.empty(flat.shape[0])
        n = data.y.shape[0]
        for i, row in enumerate(flat):
            d = per_point(row, data)
            vals[i] = d.mean()
            errs[i] = d.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
        shape = w.shape[:-1]
        if shape == ():
            return GapEstimate(float(vals[0]), float(errs[0]))
        return GapEstimate(vals.reshape(shape), errs.reshape(shape))

    def _mc_grad(self, w, per_point: Callable, mc_budget):
        w = self._check_w(w)
        data = self._eval_data(mc_budget)
        flat = w.reshape(-1, self.dim)
        out = np.stack([per_point(row, data).mean(axis=0) for row in flat])
        return out.reshape(w.shape)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


class LinearModel(LossModel):
    """``y = x^T w* + xi`` with squared loss ``f = (x^T w - y)^2 / 2``."""

    name = "linear"

    def __init__(self, covariance, w_star, sigma_sq: float, metadata: dict | None = None):
        self.covariance = _as_cov(covariance)
        self.true_param = np.array(w_star, dtype=float).reshape(-1)
        if self.true_param.size != self.covariance.dim:
            raise ValueError(f"w* has length {self.true_param.size}, covariance dim is {self.covariance.dim}")
        if not sigma_sq >= 0:
            raise ValueError(f"noise variance must be >= 0, got {sigma_sq!r}")
        self.true_param.setflags(write=False)
        self.noise_variance = float(sigma_sq)
        self.dim = self.predictor_dim = self.covariance.dim
        self.hessian_bound = self.covariance
        self.region = AllRegion()
        self.metadata = dict(metadata or {})
        self._noise_sd = math.sqrt(self.noise_variance)

    def __repr__(self):
        return f"LinearModel(dim={self.dim}, sigma_sq={self.noise_variance:g})"

    def _response(self, x, e):
        return _dot(x, self.true_param) + self._noise_sd * e

    def loss(self, w, data):
        return 0.5 * (_dot(data.x, self._check_w(w)) - data.y) ** 2

    def grad(self, w, data):
        resid = _dot(data.x, self._check_w(w)) - data.y
        return resid[..., None] * data.x

    def population_gap(self, w, mc_budget=None):
        val = 0.5 * self.covariance.quad(self._check_w(w) - self.true_param)
        return GapEstimate(val if np.ndim(val) else float(val), 0.0 * val if np.ndim(val) else 0.0)

    def population_grad(self, w, mc_budget=None):
        return self.covariance.matvec(self._check_w(w) - self.true_param)

    def variance_certificate(self):
        tr = self.covariance.trace()
        w_sig = float(self.covariance.quad(self.true_param))
        r_sq = 2.0 * self.noise_variance * tr + 12.0 * tr * w_sig
        if self.noise_variance > 0:
            c_r = 6.0 / self.noise_variance * max(self.covariance.op_norm(), 1.0)
        else:
            c_r = math.inf
        return VarianceCertificate(r_sq, c_r, ("theorem23", "theorem24"))


class LogisticModel(_FrozenEvalMixin, LossModel):
    """Binary labels ``y = +-1`` with ``P(y | x) = 1 / (1 + exp(-y x^T w*))``."""

    name = "logistic"

    def __init__(self, covariance, w_star, eval_size: int | None = None, eval_seed: int = 0):
        self.covariance = _as_cov(covariance)
        self.true_param = np.array(w_star, dtype=float).reshape(-1)
        if self.true_param.size != self.covariance.dim:
            raise ValueError(f"w* has length {self.true_param.size}, covariance dim is {self.covariance.dim}")
        self.true_param.setflags(write=False)
        self.dim = self.predictor_dim = self.covariance.dim
        self.hessian_bound = self.covariance
        self.region = AllRegion()
        self.noise_variance = 0.0
        self._init_eval(eval_size, eval_seed)

    def __repr__(self):
        return f"LogisticModel(dim={self.dim})"

    def _response(self, x, e):
        prob = expit(_dot(x, self.true_param))
        return np.where(ndtr(e) < prob, 1.0, -1.0)

    def loss(self, w, data):
        return np.logaddexp(0.0, -data.y * _dot(data.x, self._check_w(w)))

    def grad(self, w, data):
        margin = data.y * _dot(data.x, self._check_w(w))
        return (-data.y * expit(-margin))[..., None] * data.x

    def _expected_loss(self, w, x):
        # label averaged out given x
        s = expit(_dot(x, self.true_param))
        m = _dot(x, w)
        return s * np.logaddexp(0.0, -m) + (1.0 - s) * np.logaddexp(0.0, m)

    def population_gap(self, w, mc_budget=None):
        return self._mc_mean(
            w, lambda row, d: self._expected_loss(row, d.x) - self._expected_loss(self.true_param, d.x), mc_budget
        )

    def population_grad(self, w, mc_budget=None):
        def per_point(row, d):
            s = expit(_dot(d.x, self.true_param))
            m = _dot(d.x, row)
            return (-(s * expit(-m)) + (1.0 - s) * expit(m))[:, None] * d.x

        return self._mc_grad(w, per_point, mc_budget)

    def hessian_estimate(self, w, mc_budget=None):
        """Monte Carlo ``E[s(1-s) x x^T]`` at ``w`` with its entrywise standard error."""
        w = self._check_w(w)
        d = self._eval_data(mc_budget)
        m = _dot(d.x, w)
        wt = expit(m) * expit(-m)
        terms = wt[:, None, None] * d.x[:, :, None] * d.x[:, None, :]
        n = terms.shape[0]
        return terms.mean(axis=0), terms.std(axis=0, ddof=1) / math.sqrt(n)

    def variance_certificate(self):
        return VarianceCertificate(self.covariance.trace(), 0.0)


# -- Tukey biweight -----------------------------------------------------------


def tukey_rho(u, c):
    t2 = np.minimum((np.asarray(u) / c) ** 2, 1.0)
    return c * c / 6.0 * (1.0 - (1.0 - t2) ** 3)


def tukey_psi(u, c):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= c, (1.0 - (u / c) ** 2) ** 2 * u, 0.0)


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float


@dataclass(frozen=True)
class PointMassNoise:
    value: float


@dataclass(frozen=True)
class SamplerNoise:
    """Arbitrary noise given as ``sampler(rng, n) -> array``; integrated by Monte Carlo."""

    sampler: Callable[[np.random.Generator, int], np.ndarray]
    n_draws: int = 1_000_000
    seed: int = 0


def _c0_integrand(xi, c):
    t2 = (np.asarray(xi, dtype=float) / c) ** 2
    return np.where(t2 <= 1.0, (1.0 - t2) * (1.0 - 5.0 * t2), 0.0)


def tukey_c0(noise, c: float, nodes: int = 64) -> GapEstimate:
    """``E[(1 - (xi/c)^2)(1 - 5 (xi/c)^2) 1{|xi| <= c}]`` and its standard error.

    Gaussian noise is integrated with Gauss-Legendre nodes on ``[-c, c]``,
    where the integrand is a polynomial times the normal density.  Quadrature
    over the whole line with the clipped integrand converges slowly because of
    the kink at ``|xi| = c``.  A positive value means ``w*`` is a local minimum
    of the population loss.
    """
    if not c > 0:
        raise ValueError(f"Tukey constant c must be positive, got {c!r}")
    if isinstance(noise, PointMassNoise):
        return GapEstimate(float(_c0_integrand(noise.value, c)), 0.0)
    if isinstance(noise, GaussianNoise):
        s = float(noise.sigma)
        if s < 0:
            raise ValueError("noise sigma must be >= 0")
        if s == 0:
            return GapEstimate(1.0, 0.0)
        t, wts = np.polynomial.legendre.leggauss(max(int(nodes), 64))
        xi = c * t
        dens = np.exp(-0.5 * (xi / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        return GapEstimate(float(c * np.sum(wts * _c0_integrand(xi, c) * dens)), 0.0)
    if isinstance(noise, SamplerNoise):
        draws = np.asarray(noise.sampler(np.random.default_rng(noise.seed), noise.n_draws), dtype=float)
        vals = _c0_integrand(draws, c)
        return GapEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)))
    raise TypeError(f"unsupported noise description {noise!r}")


class TukeyModel(_FrozenEvalMixin, LossModel):
    """Linear data fitted with Tukey's biweight loss ``rho(x^T w - y)``.

    The region is the ``Sigma``-ball around ``w*`` of radius ``(c0 + delta)/16``.
    """

    name = "tukey"

    def __init__(
        self,
        covariance,
        w_star,
        noise_sigma: float,
        c: float,
        delta: float = 0.0,
        eval_size: int | None = None,
        eval_seed: int = 0,
    ):
        self.covariance = _as_cov(covariance)
        self.true_param = np.array(w_star, dtype=float).reshape(-1)
        if self.true_param.size != self.covariance.dim:
            raise ValueError(f"w* has length {self.true_param.size}, covariance dim is {self.covariance.dim}")
        if not c > 0:
            raise ValueError(f"Tukey constant c must be positive, got {c!r}")
        if not delta >= 0:
            raise ValueError(f"delta must be >= 0, got {delta!r}")
        self.true_param.setflags(write=False)
        self.c = float(c)
        self.delta = float(delta)
        self.noise_sigma = float(noise_sigma)
        self.noise_variance = self.noise_sigma**2
        self.dim = self.predictor_dim = self.covariance.dim
        self.hessian_bound = self.covariance
        self.c0 = tukey_c0(GaussianNoise(self.noise_sigma), self.c).value
        if self.c0 <= 0:
            raise ValueError(f"c0 = {self.c0:.4g} <= 0: w* is not a local minimum for c={self.c}, sigma={self.noise_sigma}")
        self.radius = (self.c0 + self.delta) / 16.0
        self.region = BallRegion(self.true_param, self.radius**2, self.covariance)
        self._init_eval(eval_size, eval_seed)

    def __repr__(self):
        return f"TukeyModel(dim={self.dim}, c={self.c:g}, sigma={self.noise_sigma:g})"

    def _response(self, x, e):
        return _dot(x, self.true_param) + self.noise_sigma * e

    def loss(self, w, data):
        return tukey_rho(_dot(data.x, self._check_w(w)) - data.y, self.c)

    def grad(self, w, data):
        u = _dot(data.x, self._check_w(w)) - data.y
        return tukey_psi(u, self.c)[..., None] * data.x

    def population_gap(self, w, mc_budget=None):
        def per_point(row, d):
            return tukey_rho(_dot(d.x, row) - d.y, self.c) - tukey_rho(_dot(d.x, self.true_param) - d.y, self.c)

        return self._mc_mean(w, per_point, mc_budget)

    def population_grad(self, w, mc_budget=None):
        return self._mc_grad(w, lambda row, d: self.grad(row, d), mc_budget)

    def variance_certificate(self):
        return VarianceCertificate(self.covariance.trace(), 0.0)


# -- two-layer network --------------------------------------------------------


@dataclass(frozen=True)
class Activation:
    """Activation with derivative and the common bound ``C`` on ``|psi'|, |psi''|``."""

    psi: Callable[[np.ndarray], np.ndarray]
    dpsi: Callable[[np.ndarray], np.ndarray]
    bound: float
    name: str = "custom"


TANH = Activation(np.tanh, lambda z: 1.0 / np.cosh(z) ** 2, 1.0, "tanh")


def _unpack(w, k, p):
    a = w[..., :k]
    b = w[..., k : k + k * p].reshape(w.shape[:-1] + (k, p))
    c = w[..., k + k * p :]
    return a, b, c


def nn_forward(w, x, k: int, activation: Activation = TANH):
    """``g(w, x) = sum_i c_i psi(b_i^T x + a_i)`` with ``w = [a; b_1..b_k; c]``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    p = x.shape[-1]
    if w.shape[-1] != (p + 2) * k:
        raise ValueError(f"parameter length {w.shape[-1]} does not match (p+2)k = {(p + 2) * k}")
    a, b, c = _unpack(w, k, p)
    z = np.einsum("...kp,...p->...k", b, x) + a
    return np.sum(c * activation.psi(z), axis=-1)


def nn_grad_g(w, x, k: int, activation: Activation = TANH):
    """Gradient of ``g`` in the packing ``[c * psi'(z); c_i psi'(z_i) x; psi(z)]``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    p = x.shape[-1]
    a, b, c = _unpack(w, k, p)
    z = np.einsum("...kp,...p->...k", b, x) + a
    cd = c * activation.dpsi(z)
    gb = cd[..., :, None] * x[..., None, :]
    gc = activation.psi(z)
    shape = np.broadcast_shapes(cd.shape[:-1], x.shape[:-1])
    return np.concatenate(
        [np.broadcast_to(cd, shape + (k,)), gb.reshape(shape + (k * p,)), np.broadcast_to(gc, shape + (k,))],
        axis=-1,
    )


def star_covariance(covariance: CovarianceModel, k: int) -> CovarianceModel:
    """``diag{I_k, Sigma, ..., Sigma, I_k}`` for the packed network parameters."""
    eye = DiagonalCovariance(np.ones(k))
    tail: CovarianceModel = eye
    for _ in range(k):
        tail = BlockCovariance(covariance, tail)
    return BlockCovariance(eye, tail)


class NNConstants(NamedTuple):
    C0: float
    C1: float
    C2: float
    C3: float
    radius: float


class TwoLayerNN(_FrozenEvalMixin, LossModel):
    """``y = g(w*, x) + xi`` fitted with ``f = (y - g(w, x))^2``."""

    name = "nn"

    def __init__(
        self,
        covariance,
        w_star,
        k: int,
        sigma0_sq: float,
        delta: float = 0.25,
        activation: Activation = TANH,
        eval_size: int | None = None,
        eval_seed: int = 0,
    ):
        self.covariance = _as_cov(covariance)
        self.k = int(k)
        p = self.covariance.dim
        self.true_param = np.array(w_star, dtype=float).reshape(-1)
        if self.true_param.size != (p + 2) * self.k:
            raise ValueError(f"w* has length {self.true_param.size}, expected (p+2)k = {(p + 2) * self.k}")
        if not 0 < delta <= 0.25:
            raise ValueError(f"delta must lie in (0, 1/4], got {delta!r}")
        if not sigma0_sq >= 0:
            raise ValueError("noise variance must be >= 0")
        self.true_param.setflags(write=False)
        self.activation = activation
        self.delta = float(delta)
        self.noise_variance = float(sigma0_sq)
        self.predictor_dim = p
        self.dim = (p + 2) * self.k
        self.star = star_covariance(self.covariance, self.k)
        self.constants = nn_constants(self)
        self.hessian_bound = self.star.scale(self.constants.C0)
        self.region = BallRegion(self.true_param, self.constants.radius**2, self.star)
        self._init_eval(eval_size, eval_seed)

    def __repr__(self):
        return f"TwoLayerNN(p={self.predictor_dim}, k={self.k}, activation={self.activation.name})"

    def g(self, w, x):
        return nn_forward(self._check_w(w), x, self.k, self.activation)

    def grad_g(self, w, x):
        return nn_grad_g(self._check_w(w), x, self.k, self.activation)

    def _response(self, x, e):
        return self.g(self.true_param, x) + math.sqrt(self.noise_variance) * e

    def loss(self, w, data):
        return (data.y - self.g(w, data.x)) ** 2

    def grad(self, w, data):
        resid = self.g(w, data.x) - data.y
        return 2.0 * resid[..., None] * self.grad_g(w, data.x)

    def population_gap(self, w, mc_budget=None):
        # noise cancels in expectation: G(w) = E (g(w,x) - g(w*,x))^2
        g_star = None

        def per_point(row, d):
            nonlocal g_star
            if g_star is None:
                g_star = self.g(self.true_param, d.x)
            return (self.g(row, d.x) - g_star) ** 2

        return self._mc_mean(w, per_point, mc_budget)

    def population_grad(self, w, mc_budget=None):
        def per_point(row, d):
            diff = self.g(row, d.x) - self.g(self.true_param, d.x)
            return 2.0 * diff[:, None] * self.grad_g(row, d.x)

        return self._mc_grad(w, per_point, mc_budget)

    def variance_certificate(self):
        return VarianceCertificate(self.constants.C3, 0.0)


def nn_constants(model: TwoLayerNN) -> NNConstants:
    """Problem constants of the two-layer network at its true parameter."""
    C = model.activation.bound
    nrm_sq = float(model.star.quad(model.true_param))
    nrm = math.sqrt(nrm_sq)
    tr = model.covariance.trace()
    C0 = 7.0 * C**2 * nrm_sq
    C1 = 2.0 / (9.0 * math.sqrt(2.0) * (2.0 * nrm + 1.0))
    C2 = C**2 * nrm_sq**2
    C3 = 8.0 * math.sqrt(3.0) * (1.0 + tr) * C**2 * nrm_sq * (C**2 * nrm_sq**2 + model.noise_variance)
    return NNConstants(C0, C1, C2, C3, model.delta * C1 * nrm)


def stochastic_grad(model: LossModel, w, zeta: DataPoint):
    """Per-datum gradient of the unregularized loss ``f(w, zeta)``."""
    x = np.asarray(zeta.x)
    if x.shape[-1] != model.predictor_dim:
        raise ValueError(f"predictor has dimension {x.shape[-1]}, model expects {model.predictor_dim}")
    return model.grad(w, zeta)


# -- projected and redundant-feature linear models ----------------------------


@dataclass(frozen=True)
class PowerLaw:
    """The sequence ``scale * j**(-exponent)``, ``j = 1, 2, ...``."""

    exponent: float
    scale: float = 1.0

    def __call__(self, j):
        return self.scale * np.asarray(j, dtype=float) ** (-self.exponent)


def _power_tail(var_seq: PowerLaw, w_seq: PowerLaw, p: int) -> float:
    coef = var_seq.scale * w_seq.scale**2
    if coef == 0:
        return 0.0
    s = var_seq.exponent + 2.0 * w_seq.exponent
    if s <= 1.0:
        raise ValueError(f"omitted-signal tail diverges (terms decay like j^-{s:g})")
    return float(coef * zeta(s, p + 1))


def build_projected_model(
    full_spectrum: Callable,
    full_w: Callable,
    p: int,
    sigma_sq: float,
    tail: float | Callable[[int], float] | None = None,
) -> LinearModel:
    """Truncate an infinite-dimensional regression to its first ``p`` coordinates.

    The omitted signal ``sum_{j>p} sigma_j^2 (w^j)^2`` is folded into the noise
    variance.  For :class:`PowerLaw` sequences it is a Hurwitz zeta value;
    arbitrary callables need ``tail`` (a number or ``p -> value``).
    """
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    j = np.arange(1, int(p) + 1)
    var = np.asarray(full_spectrum(j), dtype=float)
    w = np.asarray(full_w(j), dtype=float)
    if tail is None:
        if not (isinstance(full_spectrum, PowerLaw) and isinstance(full_w, PowerLaw)):
            raise ValueError("tail sum needed for sequences that are not PowerLaw")
        omitted = _power_tail(full_spectrum, full_w, int(p))
    else:
        omitted = float(tail(int(p)) if callable(tail) else tail)
    if not math.isfinite(omitted) or omitted < 0:
        raise ValueError(f"omitted-signal tail must be finite and >= 0, got {omitted!r}")
    meta = {"kind": "projected", "omitted_signal": omitted, "base_sigma_sq": float(sigma_sq)}
    return LinearModel(DiagonalCovariance(var), w, float(sigma_sq) + omitted, meta)


def build_redundant_model(
    d: int,
    p: int,
    w_star,
    sigma_x: CovarianceModel,
    sigma_z: CovarianceModel | None,
    B=None,
    sigma_sq: float = 1.0,
) -> LinearModel:
    """Signal in the first ``d`` coordinates plus ``p - d`` zero-coefficient features."""
    w_star = np.asarray(w_star, dtype=float).reshape(-1)
    sigma_x = _as_cov(sigma_x)
    if w_star.size != d or sigma_x.dim != d:
        raise ValueError(f"w* and Sigma_x must have dimension d={d}")
    if p < d:
        raise ValueError(f"total dimension p={p} is smaller than d={d}")
    meta = {"kind": "redundant", "d": int(d)}
    if p == d:
        return LinearModel(sigma_x, w_star, sigma_sq, meta)
    sigma_z = _as_cov(sigma_z)
    if sigma_z.dim != p - d:
        raise ValueError(f"Sigma_z has dimension {sigma_z.dim}, expected p - d = {p - d}")
    if sigma_z.op_norm() > sigma_x.op_norm():
        warnings.warn("||Sigma_z|| exceeds ||Sigma_x||; bounds derived under the opposite ordering", stacklevel=2)
    cov = BlockCovariance(sigma_x, sigma_z, B)
    return LinearModel(cov, np.concatenate([w_star, np.zeros(p - d)]), sigma_sq, meta)

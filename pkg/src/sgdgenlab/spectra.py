"""Eigenvalue spectra, covariance representations and spectrum-aware norms.

A covariance is held in one of three forms:

* :class:`DiagonalCovariance` -- independent coordinates, ``Sigma = diag(s)``.
* :class:`DenseCovariance` -- an arbitrary symmetric PSD matrix with a cached
  eigendecomposition.
* :class:`BlockCovariance` -- ``[[Sx, B], [B^T, Sz]]`` used for models with
  appended features.

All of them share the small interface defined on :class:`CovarianceModel`
(quadratic forms, eigen-coordinates, Gaussian square root), which is what the
norms below are written against.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Spectrum",
    "CovarianceModel",
    "DiagonalCovariance",
    "DenseCovariance",
    "BlockCovariance",
    "make_spectrum",
    "norm_A",
    "norm_A_lambda",
    "norm_A_S",
    "truncated_trace",
    "sample_gaussian",
]

PROFILES = ("exponential", "polynomial", "constant", "custom")

SYM_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Non-increasing eigenvalue profile ``lambda_1 >= ... >= lambda_p >= 0``."""

    values: np.ndarray
    profile: str = "custom"
    param: float | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size < 1:
            raise ValueError("spectrum needs p >= 1 values")
        if not np.all(np.isfinite(vals)):
            raise ValueError("spectrum values must be finite")
        if np.any(vals < 0):
            raise ValueError("spectrum values must be non-negative")
        if np.any(np.diff(vals) > 0):
            raise ValueError("spectrum values must be non-increasing")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.size

    def trace(self) -> float:
        return float(np.sum(self.values))

    def covariance(self) -> "DiagonalCovariance":
        return DiagonalCovariance(self.values)


def make_spectrum(profile: str, p: int, c: float | None = None, v: float | None = None) -> Spectrum:
    """Build ``e^{-ci}``, ``i^{-c}`` or constant ``v`` eigenvalues for ``i = 1..p``."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    i = np.arange(1, int(p) + 1, dtype=float)
    if profile in ("exponential", "polynomial"):
        if c is None or not c > 0:
            raise ValueError(f"{profile} profile needs a decay constant c > 0, got {c!r}")
        vals = np.exp(-c * i) if profile == "exponential" else i ** (-float(c))
        return Spectrum(vals, profile, float(c))
    if profile == "constant":
        if v is None or not v >= 0:
            raise ValueError(f"constant profile needs v >= 0, got {v!r}")
        return Spectrum(np.full(int(p), float(v)), profile, float(v))
    raise ValueError(f"unknown spectrum profile {profile!r}")


class CovarianceModel:
    """Common interface of the covariance representations.

    Subclasses provide ``dim``, ``eigh``, ``matrix``, ``quad``, ``matvec``,
    ``sqrt_apply`` and ``scale``.  Eigenpairs are always reported with
    eigenvalues in non-increasing order.
    """

    dim: int

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def matrix(self) -> np.ndarray:
        raise NotImplementedError

    def quad(self, v: np.ndarray) -> np.ndarray:
        """``v^T A v`` over the last axis of ``v``."""
        raise NotImplementedError

    def matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sqrt_apply(self, z: np.ndarray) -> np.ndarray:
        """Map standard normal draws ``z`` (last axis = dim) to ``A^{1/2} z``."""
        raise NotImplementedError

    def scale(self, alpha: float) -> "CovarianceModel":
        raise NotImplementedError

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh()[0]

    def eig_coords(self, v: np.ndarray) -> np.ndarray:
        """Coordinates ``<v_i, v>`` in the eigenbasis, ordered like ``eigenvalues``."""
        return np.asarray(v, dtype=float) @ self.eigh()[1]

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def op_norm(self) -> float:
        return float(self.eigenvalues[0])

    def _check_dim(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.dim,):
            raise ValueError(f"dimension mismatch: vector has shape {v.shape}, covariance dim is {self.dim}")
        return v


class DiagonalCovariance(CovarianceModel):
    def __init__(self, values):
        vals = np.array(values, dtype=float).reshape(-1)
        if vals.size < 1 or not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("diagonal covariance needs finite non-negative entries")
        vals.setflags(write=False)
        self.values = vals
        self.dim = vals.size
        self._sd = np.sqrt(vals)

    def __repr__(self):
        return f"DiagonalCovariance(dim={self.dim})"

    @cached_property
    def _order(self):
        return np.argsort(-self.values, kind="stable")

    @cached_property
    def _eigh(self):
        order = self._order
        vecs = np.eye(self.dim)[:, order]
        vecs.setflags(write=False)
        return self.values[order], vecs

    def eigh(self):
        return self._eigh

    @property
    def eigenvalues(self):
        return self.values[self._order]

    def eig_coords(self, v):
        return np.asarray(v, dtype=float)[..., self._order]

    def matrix(self):
        return np.diag(self.values)

    def quad(self, v):
        v = self._check_dim(v)
        return np.einsum("...i,i,...i->...", v, self.values, v)

    def matvec(self, v):
        return self._check_dim(v) * self.values

    def sqrt_apply(self, z):
        return np.asarray(z) * self._sd

    def scale(self, alpha):
        return DiagonalCovariance(self.values * alpha)

    def trace(self):
        return float(np.sum(self.values))

    def op_norm(self):
        return float(np.max(self.values))


class DenseCovariance(CovarianceModel):
    """Symmetric PSD matrix.  Eigenvalues in ``[-1e-10, 0)`` are clamped to zero."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"covariance must be a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("covariance matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > SYM_TOL * scale:
            raise ValueError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        vals, vecs = np.linalg.eigh(m)
        if vals[0] < -PSD_TOL:
            raise ValueError(f"covariance matrix is not PSD (min eigenvalue {vals[0]:.3e})")
        vals = np.clip(vals, 0.0, None)[::-1]
        vecs = vecs[:, ::-1]
        for a in (m, vals, vecs):
            a.setflags(write=False)
        self._m = m
        self._vals = vals
        self._vecs = vecs
        self.dim = m.shape[0]

    def __repr__(self):
        return f"DenseCovariance(dim={self.dim})"

    @cached_property
    def _sqrt(self):
        return (self._vecs * np.sqrt(self._vals)) @ self._vecs.T

    def eigh(self):
        return self._vals, self._vecs

    def matrix(self):
        return self._m

    def quad(self, v):
        v = self._check_dim(v)
        return np.einsum("...i,...i->...", v @ self._m, v)

    def matvec(self, v):
        return self._check_dim(v) @ self._m

    def sqrt_apply(self, z):
        return np.asarray(z) @ self._sqrt

    def scale(self, alpha):
        return DenseCovariance(self._m * alpha)


class BlockCovariance(CovarianceModel):
    """``[[sx, B], [B^T, sz]]``; PSD-checked by eigendecomposition on construction.

    With ``B = 0`` the blocks are sampled independently and the eigenpairs are
    merged from the blocks, so a block built from diagonal parts stays cheap at
    large dimension.
    """

    def __init__(self, sx: CovarianceModel, sz: CovarianceModel, B=None):
        self.sx = sx
        self.sz = sz
        d, q = sx.dim, sz.dim
        B = np.zeros((d, q)) if B is None else np.array(B, dtype=float)
        if B.shape != (d, q):
            raise ValueError(f"cross-covariance must have shape {(d, q)}, got {B.shape}")
        B.setflags(write=False)
        self.B = B
        self.dim = d + q
        self.decoupled = not np.any(B)
        if self.decoupled:
            vx, Vx = sx.eigh()
            vz, Vz = sz.eigh()
            vals = np.concatenate([vx, vz])
            order = np.argsort(-vals, kind="stable")
            vecs = np.zeros((self.dim, self.dim))
            vecs[:d, :d] = Vx
            vecs[d:, d:] = Vz
            self._vals, self._vecs = vals[order], vecs[:, order]
            self._dense = None
        else:
            self._dense = DenseCovariance(self.matrix())
            self._vals, self._vecs = self._dense.eigh()

    def __repr__(self):
        return f"BlockCovariance(dx={self.sx.dim}, dz={self.sz.dim}, decoupled={self.decoupled})"

    def eigh(self):
        return self._vals, self._vecs

    def matrix(self):
        d = self.sx.dim
        m = np.zeros((self.dim, self.dim))
        m[:d, :d] = self.sx.matrix()
        m[d:, d:] = self.sz.matrix()
        m[:d, d:] = self.B
        m[d:, :d] = self.B.T
        return m

    def eig_coords(self, v):
        v = np.asarray(v, dtype=float)
        if self.decoupled:
            d = self.sx.dim
            cx = self.sx.eig_coords(v[..., :d])
            cz = self.sz.eig_coords(v[..., d:])
            vals = np.concatenate([self.sx.eigenvalues, self.sz.eigenvalues])
            order = np.argsort(-vals, kind="stable")
            return np.concatenate([cx, cz], axis=-1)[..., order]
        return v @ self._vecs

    def quad(self, v):
        v = self._check_dim(v)
        d = self.sx.dim
        x, z = v[..., :d], v[..., d:]
        out = self.sx.quad(x) + self.sz.quad(z)
        if not self.decoupled:
            out = out + 2.0 * np.einsum("...i,ij,...j->...", x, self.B, z)
        return out

    def matvec(self, v):
        v = self._check_dim(v)
        d = self.sx.dim
        x, z = v[..., :d], v[..., d:]
        top = self.sx.matvec(x) + z @ self.B.T
        bottom = self.sz.matvec(z) + x @ self.B
        return np.concatenate([top, bottom], axis=-1)

    def sqrt_apply(self, z):
        z = np.asarray(z)
        if self.decoupled:
            d = self.sx.dim
            return np.concatenate([self.sx.sqrt_apply(z[..., :d]), self.sz.sqrt_apply(z[..., d:])], axis=-1)
        return self._dense.sqrt_apply(z)

    def scale(self, alpha):
        return BlockCovariance(self.sx.scale(alpha), self.sz.scale(alpha), self.B * alpha)

    def trace(self):
        return self.sx.trace() + self.sz.trace()


def _as_cov(A) -> CovarianceModel:
    if isinstance(A, CovarianceModel):
        return A
    if isinstance(A, Spectrum):
        return A.covariance()
    return DenseCovariance(A)


def norm_A(v, A, squared: bool = True) -> float:
    """``||v||_A^2 = v^T A v`` (or its square root with ``squared=False``)."""
    A = _as_cov(A)
    val = np.maximum(A.quad(A._check_dim(v)), 0.0)
    return val if squared else np.sqrt(val)


def norm_A_lambda(v, A, lam: float, squared: bool = True):
    """Truncated norm ``lam ||v_lam||^2 + v_perp^T A v_perp``.

    ``v_lam`` is the projection onto eigenvectors of ``A`` with eigenvalue
    strictly above ``lam``; ties go to the complement.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    A = _as_cov(A)
    v = A._check_dim(v)
    vals, vecs = A.eigh()
    top = vecs[:, vals > lam]
    v_lam = (v @ top) @ top.T
    v_perp = v - v_lam
    val = lam * np.einsum("...i,...i->...", v_lam, v_lam) + np.maximum(A.quad(v_perp), 0.0)
    return val if squared else np.sqrt(val)


def norm_A_S(w, A) -> float:
    """Largest absolute coordinate of ``w`` along the eigenvectors of ``A``."""
    A = _as_cov(A)
    coords = A.eig_coords(A._check_dim(w))
    return np.max(np.abs(coords), axis=-1)


def truncated_trace(spec, lam: float) -> float:
    """``sum_i min(lam, lambda_i)``."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    vals = spec.values if isinstance(spec, Spectrum) else _as_cov(spec).eigenvalues
    return float(np.sum(np.minimum(lam, vals)))


def sample_gaussian(cov, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``x = Sigma^{1/2} z`` with ``z`` standard normal.

    ``size`` is the batch shape; the result has shape ``(*size, p)``.
    """
    cov = _as_cov(cov)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    z = rng.standard_normal(shape + (cov.dim,))
    return cov.sqrt_apply(z)

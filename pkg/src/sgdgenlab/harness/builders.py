"""Turn declarative model / SGD sections of a config into library objects."""
from __future__ import annotations

import numpy as np

from ..models import (
    LinearModel,
    LogisticModel,
    LossModel,
    PowerLaw,
    TukeyModel,
    TwoLayerNN,
    build_projected_model,
    build_redundant_model,
)
from ..optimizer import AllRegion, BallRegion, SgdConfig, SublevelRegion
from ..spectra import Spectrum, make_spectrum
from .config import ConfigError, with_model_defaults

__all__ = ["build_spectrum", "build_weights", "build_model", "build_sgd_config", "initial_point"]


def build_spectrum(spec: dict, p: int, where: str = "spectrum") -> Spectrum:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: must be an object")
    kind = spec.get("kind")
    try:
        if kind in ("polynomial", "exponential"):
            return make_spectrum(kind, p, c=spec.get("c"))
        if kind == "constant":
            return make_spectrum("constant", p, v=spec.get("v", 1.0))
        if kind == "values":
            vals = spec.get("values")
            if not isinstance(vals, list) or len(vals) != p:
                raise ConfigError(f"{where}.values: need a list of length {p}")
            return Spectrum(np.asarray(vals, dtype=float))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}.kind: must be polynomial, exponential, constant or values, got {kind!r}")


def build_weights(spec, n: int, where: str = "w_star") -> np.ndarray:
    """Weight vector of length ``n`` from ``{kind: power|constant|values, ...}`` or a plain list."""
    if isinstance(spec, list):
        spec = {"kind": "values", "values": spec}
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: must be an object or a list")
    kind = spec.get("kind")
    j = np.arange(1, n + 1, dtype=float)
    if kind == "power":
        w = float(spec.get("scale", 1.0)) * j ** (-float(spec.get("exponent", 1.0)))
    elif kind == "constant":
        w = np.full(n, float(spec.get("value", 1.0)))
    elif kind == "values":
        vals = spec.get("values")
        if not isinstance(vals, list) or len(vals) != n:
            raise ConfigError(f"{where}.values: need a list of length {n}")
        w = np.asarray(vals, dtype=float)
    else:
        raise ConfigError(f"{where}.kind: must be power, constant or values, got {kind!r}")
    if spec.get("normalize"):
        nrm = float(np.linalg.norm(w))
        if nrm == 0:
            raise ConfigError(f"{where}.normalize: cannot normalize the zero vector")
        w = w / nrm
    return w


def _power_law(spec: dict, what: str, where: str) -> PowerLaw:
    kind = spec.get("kind")
    if what == "spectrum":
        if kind == "polynomial":
            return PowerLaw(float(spec["c"]))
        if kind == "constant":
            return PowerLaw(0.0, float(spec.get("v", 1.0)))
    else:
        if spec.get("normalize"):
            raise ConfigError(f"{where}.normalize: not available for the projected family")
        if kind == "power":
            return PowerLaw(float(spec.get("exponent", 1.0)), float(spec.get("scale", 1.0)))
        if kind == "constant":
            return PowerLaw(0.0, float(spec.get("value", 1.0)))
    raise ConfigError(f"{where}.kind: projected family needs power-law sequences, got {kind!r}")


def build_model(decl: dict, p: int) -> LossModel:
    """Instantiate the declared model at predictor dimension ``p``.

    Missing keys take the family defaults of the config layer.
    """
    if not isinstance(decl, dict):
        raise ConfigError("model: must be an object")
    decl = with_model_defaults(decl)
    fam = decl.get("family")
    try:
        if fam == "linear":
            cov = build_spectrum(decl.get("spectrum", {}), p, "model.spectrum").covariance()
            return LinearModel(cov, build_weights(decl.get("w_star", {}), p, "model.w_star"), float(decl.get("sigma_sq", 1.0)))
        if fam == "projected":
            return build_projected_model(
                _power_law(decl.get("spectrum", {}), "spectrum", "model.spectrum"),
                _power_law(decl.get("w_star", {}), "w_star", "model.w_star"),
                p,
                float(decl.get("sigma_sq", 1.0)),
            )
        if fam == "redundant":
            d = decl.get("d")
            if not isinstance(d, int) or not 1 <= d <= p:
                raise ConfigError(f"model.d: need an integer in [1, p={p}], got {d!r}")
            sx = build_spectrum(decl.get("sigma_x", {"kind": "constant", "v": 1.0}), d, "model.sigma_x").covariance()
            sz = None
            if p > d:
                sz = build_spectrum(decl.get("sigma_z", {"kind": "constant", "v": 1.0}), p - d, "model.sigma_z").covariance()
            w = build_weights(decl.get("w_star", {"kind": "constant", "value": 1.0}), d, "model.w_star")
            return build_redundant_model(d, p, w, sx, sz, None, float(decl.get("sigma_sq", 1.0)))
        if fam == "logistic":
            cov = build_spectrum(decl.get("spectrum", {}), p, "model.spectrum").covariance()
            return LogisticModel(cov, build_weights(decl.get("w_star", {}), p, "model.w_star"), eval_size=decl.get("eval_size"))
        if fam == "tukey":
            cov = build_spectrum(decl.get("spectrum", {}), p, "model.spectrum").covariance()
            return TukeyModel(
                cov,
                build_weights(decl.get("w_star", {}), p, "model.w_star"),
                float(decl.get("noise_sigma", 0.5)),
                float(decl.get("c", 3.0)),
                float(decl.get("delta", 0.0)),
                eval_size=decl.get("eval_size"),
            )
        if fam == "nn":
            k = decl.get("k", 2)
            if not isinstance(k, int) or k < 1:
                raise ConfigError(f"model.k: need a positive integer, got {k!r}")
            cov = build_spectrum(decl.get("spectrum", {}), p, "model.spectrum").covariance()
            return TwoLayerNN(
                cov,
                build_weights(decl.get("w_star", {}), (p + 2) * k, "model.w_star"),
                k,
                float(decl.get("sigma0_sq", 0.1)),
                float(decl.get("delta", 0.25)),
                eval_size=decl.get("eval_size"),
            )
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"model ({fam}, p={p}): {exc}") from exc
    raise ConfigError(f"model.family: unknown family {fam!r}")


def initial_point(model: LossModel, rule: dict, base_seed: int, p: int) -> np.ndarray:
    """``zero``, ``true`` (w0 = w*) or ``perturb`` (w* plus a fixed direction of length ``scale``)."""
    kind = rule.get("rule", "zero")
    if kind == "zero":
        return np.zeros(model.dim)
    if kind == "true":
        return np.array(model.true_param)
    if kind == "perturb":
        rng = np.random.default_rng(np.random.SeedSequence([base_seed, p, 0x7730]))
        g = rng.standard_normal(model.dim)
        return model.true_param + float(rule.get("scale", 0.0)) * g / np.linalg.norm(g)
    raise ConfigError(f"sgd.w0.rule: unknown rule {kind!r}")


def _region(model: LossModel, spec, w0: np.ndarray):
    if spec is None:
        return None
    kind = spec.get("kind")
    if kind == "all":
        return AllRegion()
    if kind == "ball":
        center = spec.get("center", "true")
        if center == "true":
            c = model.true_param
        elif center == "w0":
            c = w0
        else:
            c = np.asarray(center, dtype=float)
        metric = spec.get("metric", "euclidean")
        if metric not in ("euclidean", "A"):
            raise ConfigError(f"sgd.region.metric: must be euclidean or A, got {metric!r}")
        if not isinstance(spec.get("radius_sq"), (int, float)):
            raise ConfigError("sgd.region.radius_sq: required number")
        return BallRegion(c, float(spec["radius_sq"]), model.hessian_bound if metric == "A" else None)
    if kind == "sublevel":
        if "threshold" in spec:
            thr = float(spec["threshold"])
        elif "factor" in spec:
            # (1 + a) G(w0)
            thr = (1.0 + float(spec["factor"])) * float(model.gap(w0))
        else:
            raise ConfigError("sgd.region: sublevel needs threshold or factor")
        return SublevelRegion(thr, model.gap)
    raise ConfigError(f"sgd.region.kind: unknown kind {kind!r}")


def build_sgd_config(model: LossModel, sgd: dict, base_seed: int, p: int) -> SgdConfig:
    w0 = initial_point(model, sgd.get("w0", {"rule": "zero"}), base_seed, p)
    try:
        return SgdConfig(
            eta=float(sgd["eta"]),
            lam=float(sgd["lam"]),
            n_steps=int(sgd["n_steps"]),
            batch_size=int(sgd.get("batch_size", 1)),
            averaging=bool(sgd.get("averaging", False)),
            region=_region(model, sgd.get("region"), w0),
            w0=w0,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"sgd: {exc}") from exc

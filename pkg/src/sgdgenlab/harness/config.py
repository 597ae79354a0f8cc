"""Declarative experiment configuration.

Configs are JSON documents; see the README for the full grammar.  Every key
has a default, and :meth:`ExperimentConfig.to_dict` returns the fully
resolved document, which is what gets written into output provenance.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "DEFAULT_MODEL",
    "DEFAULT_SGD",
    "FAMILY_DEFAULTS",
    "with_model_defaults",
    "load_config",
    "apply_override",
    "resolve_seed",
    "resolve_workers",
]

DEFAULT_MODEL: dict = {
    "family": "linear",
    "spectrum": {"kind": "polynomial", "c": 2.0},
    "w_star": {"kind": "power", "exponent": 1.0},
    "sigma_sq": 1.0,
}

DEFAULT_SGD: dict = {
    "eta": 0.01,
    "lam": 0.01,
    "n_steps": 500,
    "batch_size": 1,
    "averaging": False,
    "region": None,
    "w0": {"rule": "zero"},
}

FAMILIES = ("linear", "projected", "redundant", "logistic", "tukey", "nn")

_SPECTRUM = {"kind": "polynomial", "c": 2.0}
_W_STAR = {"kind": "power", "exponent": 1.0}
FAMILY_DEFAULTS: dict = {
    "linear": {"spectrum": _SPECTRUM, "w_star": _W_STAR, "sigma_sq": 1.0},
    "projected": {"spectrum": _SPECTRUM, "w_star": _W_STAR, "sigma_sq": 1.0},
    "redundant": {
        "d": 5,
        "w_star": {"kind": "constant", "value": 1.0},
        "sigma_x": {"kind": "constant", "v": 1.0},
        "sigma_z": _SPECTRUM,
        "sigma_sq": 1.0,
    },
    "logistic": {"spectrum": _SPECTRUM, "w_star": _W_STAR, "eval_size": None},
    "tukey": {"spectrum": _SPECTRUM, "w_star": _W_STAR, "noise_sigma": 0.5, "c": 3.0, "delta": 0.0, "eval_size": None},
    "nn": {"spectrum": _SPECTRUM, "w_star": _W_STAR, "k": 2, "sigma0_sq": 0.1, "delta": 0.25, "eval_size": None},
}
W0_RULES = ("zero", "true", "perturb")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def with_model_defaults(model):
    """Fill the family's defaults into a model declaration.

    A nested object whose ``kind`` differs from the default's replaces the
    default instead of being merged with it.
    """
    if not isinstance(model, dict) or model.get("family") not in FAMILY_DEFAULTS:
        return model
    out = copy.deepcopy(FAMILY_DEFAULTS[model["family"]])
    for k, v in model.items():
        base = out.get(k)
        if isinstance(v, dict) and isinstance(base, dict) and v.get("kind", base.get("kind")) == base.get("kind"):
            out[k] = _merge(base, v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """A sweep over ``p_grid`` with ``replications`` independent runs per ``p``."""

    model: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_MODEL))
    p_grid: list = field(default_factory=lambda: list(range(100, 1001, 100)))
    sgd: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_SGD))
    replications: int = 1000
    base_seed: int = 0
    name: str = "experiment"
    title: str = ""
    outputs: dict = field(default_factory=lambda: {"csv": "results.csv", "svg": True})

    def __post_init__(self):
        self.model = with_model_defaults(self.model)
        self.sgd = _merge(DEFAULT_SGD, self.sgd or {})
        self.validate()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be an object")
        known = {"model", "p_grid", "sgd", "replications", "base_seed", "name", "title", "outputs"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"config: unknown key(s) {sorted(extra)}")
        return cls(**copy.deepcopy(doc))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "title": self.title,
            "model": copy.deepcopy(self.model),
            "p_grid": list(self.p_grid),
            "sgd": copy.deepcopy(self.sgd),
            "replications": self.replications,
            "base_seed": self.base_seed,
            "outputs": copy.deepcopy(self.outputs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def validate(self) -> None:
        if not isinstance(self.model, dict) or self.model.get("family") not in FAMILIES:
            raise ConfigError(f"model.family: must be one of {FAMILIES}, got {self.model.get('family')!r}")
        grid = self.p_grid
        if not isinstance(grid, list) or not grid:
            raise ConfigError("p_grid: must be a non-empty list")
        if any(not isinstance(p, int) or isinstance(p, bool) or p < 1 for p in grid):
            raise ConfigError(f"p_grid: entries must be positive integers, got {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"p_grid: must be strictly increasing, got {grid}")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError(f"replications: must be an integer >= 1, got {self.replications!r}")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 2**64:
            raise ConfigError(f"base_seed: must be an integer in [0, 2^64), got {self.base_seed!r}")
        s = self.sgd
        extra = set(s) - set(DEFAULT_SGD)
        if extra:
            raise ConfigError(f"sgd: unknown key(s) {sorted(extra)}")
        for key, ok in (
            ("eta", lambda v: isinstance(v, (int, float)) and v > 0),
            ("lam", lambda v: isinstance(v, (int, float)) and v >= 0),
            ("n_steps", lambda v: isinstance(v, int) and v >= 1),
            ("batch_size", lambda v: isinstance(v, int) and v >= 1),
            ("averaging", lambda v: isinstance(v, bool)),
        ):
            if not ok(s[key]):
                raise ConfigError(f"sgd.{key}: invalid value {s[key]!r}")
        w0 = s["w0"]
        if not isinstance(w0, dict) or w0.get("rule") not in W0_RULES:
            raise ConfigError(f"sgd.w0.rule: must be one of {W0_RULES}, got {w0!r}")
        if w0["rule"] == "perturb" and not (isinstance(w0.get("scale"), (int, float)) and w0["scale"] >= 0):
            raise ConfigError("sgd.w0.scale: perturb rule needs a scale >= 0")
        region = s["region"]
        if region is not None and (not isinstance(region, dict) or region.get("kind") not in ("all", "ball", "sublevel")):
            raise ConfigError(f"sgd.region.kind: must be all, ball or sublevel, got {region!r}")
        if not isinstance(self.outputs, dict):
            raise ConfigError("outputs: must be an object")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(doc)


def apply_override(doc: dict, dotted: str, value: Any) -> dict:
    """Set ``doc[a][b][c] = value`` for ``dotted = "a.b.c"``, creating objects as needed."""
    keys = dotted.split(".")
    if not all(keys):
        raise ConfigError(f"{dotted}: malformed key")
    node = doc
    for k in keys[:-1]:
        if node.get(k) is None:
            node[k] = {}
        if not isinstance(node[k], dict):
            raise ConfigError(f"{dotted}: {k} is not an object")
        node = node[k]
    node[keys[-1]] = value
    return doc


def resolve_seed(explicit: int | None, config_seed: int) -> int:
    """Flag beats environment (``SGDGENLAB_SEED``) beats config."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get("SGDGENLAB_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SGDGENLAB_SEED: not an integer: {env!r}") from exc
    return int(config_seed)


def resolve_workers(explicit: int | None) -> int:
    """Flag beats environment (``SGDGENLAB_THREADS``) beats the CPU count."""
    if explicit is not None:
        val = explicit
    else:
        env = os.environ.get("SGDGENLAB_THREADS")
        if env:
            try:
                val = int(env)
            except ValueError as exc:
                raise ConfigError(f"SGDGENLAB_THREADS: not an integer: {env!r}") from exc
        else:
            val = os.cpu_count() or 1
    if val < 1:
        raise ConfigError(f"threads: must be >= 1, got {val}")
    return int(val)

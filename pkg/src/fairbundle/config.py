"""Experiment configuration read from YAML documents."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from fairbundle.errors import ConfigError

METHODS = ("exact", "exact-nofair", "f3r", "fairwg", "adafairwg", "random")
FALLBACKS = ("report", "relax")


@dataclass
class DataConfig:
    """Where users, candidates and the catalog come from.

    ``source: synthetic`` generates a catalog and skewed relevance scores;
    ``source: files`` loads a catalog archive and a trained MF model.
    """

    source: str = "synthetic"
    # synthetic source
    n_items: int = 200
    n_groups: int = 2
    n_types: int = 0
    group_shares: list[float] | None = None
    type_prob: float = 0.7
    skew: Any = 0.2
    n_users: int = 500
    seed: int = 0
    # file source
    catalog: str | None = None
    model: str | None = None
    users: list[str] | None = None


@dataclass
class ExperimentConfig:
    method: str = "fairwg"
    data: DataConfig = field(default_factory=DataConfig)
    gamma: float = 1.0 / 3.0
    M: int = 50
    L: int = 6
    type_caps: list[int] = field(default_factory=list)
    rho: list[float] | None = None
    epsilon: float = 0.1
    alpha: Any = "fixed"
    fairness_weight: float = 1.0
    lambda_init: float = 1.0
    lambda_min: float = 1.0 / 1024
    lambda_max: float = 1024.0
    explore: float | None = None
    T: int = 100
    n_users: int | None = None
    arrival: Any = "shuffle"
    seed: int = 0
    repeats: int = 5
    fallback: str = "report"
    node_budget: int | None = 5_000_000
    relative_quality: bool = False
    output_dir: str = "runs"
    sweep: dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.data, DataConfig):
            self.data = _build(DataConfig, self.data, "data")
        try:
            self.validate()
        except TypeError as exc:
            raise ConfigError(f"config value has the wrong type: {exc}") from exc

    @property
    def stream_length(self) -> int:
        return self.T if self.n_users is None else self.n_users

    @property
    def alpha_value(self) -> float | None:
        if self.alpha is None or str(self.alpha).lower() in ("fixed", "inf", "infinity"):
            return None
        return float(self.alpha)

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.method in METHODS, f"method must be one of {METHODS}, got {self.method!r}")
        need(self.fallback in FALLBACKS, f"fallback must be one of {FALLBACKS}")
        need(0.0 <= self.gamma <= 1.0, "gamma must lie in [0, 1]")
        need(self.L >= 2, "L must be at least 2")
        need(self.M >= self.L, "M must be at least L")
        need(0.0 <= self.epsilon <= 1.0, "epsilon must lie in [0, 1]")
        need(self.explore is None or 0.0 <= self.explore <= 1.0, "explore must lie in [0, 1]")
        need(self.fairness_weight >= 0, "fairness_weight must be non-negative")
        need(0 <= self.lambda_min <= self.lambda_init <= self.lambda_max,
             "need lambda_min <= lambda_init <= lambda_max")
        need(self.T >= 1 and self.stream_length >= 1, "T and n_users must be positive")
        need(self.repeats >= 1, "repeats must be positive")
        need(all(c >= 0 for c in self.type_caps), "type caps must be non-negative")
        need(self.data.source in ("synthetic", "files"), "data.source must be 'synthetic' or 'files'")
        try:
            alpha = self.alpha_value
        except (TypeError, ValueError):
            raise ConfigError(f"alpha must be a positive number or 'fixed', got {self.alpha!r}") from None
        need(alpha is None or (alpha > 0 and math.isfinite(alpha)), "alpha must be positive")
        if self.rho is not None:
            need(all(0 <= p <= 1 for p in self.rho) and abs(sum(self.rho) - 1) <= 1e-9,
                 "rho must be a probability vector")
        need(self.arrival == "shuffle" or isinstance(self.arrival, list),
             "arrival must be 'shuffle' or a list of user ids")
        unknown = set(self.sweep) - {"epsilon", "fairness_weight", "M", "gamma", "alpha", "explore"}
        need(not unknown, f"cannot sweep over {sorted(unknown)}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> ExperimentConfig:
        d = self.to_dict()
        d.update(changes)
        return from_dict(d)

    def digest(self, exclude_seed: bool = False) -> str:
        d = self.to_dict()
        if exclude_seed:
            d.pop("seed")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(raw: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, dict(raw), "config")


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return from_dict(raw)

"""Pipeline configuration: one YAML document, with dotted-key overrides."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .classifier import CnnSpec, SplitSpec, TrainHyper
from .clustering import ClusterParams
from .errors import ConfigError, InvalidSpec
from .llm_disputes import DEFAULT_PROFILES, LlmProfile

DEFAULTS = {
    "corpus": None,
    "labeled_pairs": None,
    "output": "out",
    "seed": 0,
    "repeats": 30,
    "workers": 1,
    "image_side": 32,
    "barely_as": None,
    "filter": {},
    "llm": {
        "llm_a": {"model_id": "gpt-3.5-turbo", "temperature": 0.7, "token_budget": 11500, "max_retries": 3,
                  "provider": {"kind": "openai"}},
        "llm_b": {"model_id": "gpt-4-0613", "temperature": 0.3, "token_budget": 6000, "max_retries": 3,
                  "provider": {"kind": "openai"}},
    },
    "backends": {
        "lf": {"kind": "hash", "dims": 64},
        "rob": {"kind": "hash", "dims": 64},
    },
    "clustering": {"min_cluster_size": 10, "epsilon_fraction": 0.8},
    "finetune": {"min_cluster_size": 10, "per_category": 50000},
    "cnn": {},
    "train": {},
    "split": {"train_frac": 0.64, "val_frac": 0.16, "test_frac": 0.20},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


@dataclass
class PipelineConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "PipelineConfig":
        data: dict = {}
        base = Path.cwd()
        if path:
            path = Path(path)
            try:
                data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config must be a mapping")
            base = path.parent
        raw = _merge(DEFAULTS, data)
        for k, v in (overrides or {}).items():
            _set_dotted(raw, k, v)
        cfg = cls(raw, base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if int(self.raw["repeats"]) < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.raw["backends"]:
            raise ConfigError("no embedding backends configured")
        for name in ("llm_a", "llm_b"):
            self.llm_profile(name)
        try:
            self.cnn_spec().validate()
            self.split_spec()
        except InvalidSpec as exc:
            raise ConfigError(str(exc)) from exc

    def path(self, key: str) -> Path | None:
        value = self.raw.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def output(self) -> Path:
        return self.path("output")

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def repeats(self) -> int:
        return int(self.raw["repeats"])

    def llm_profile(self, source: str) -> LlmProfile:
        conf = self.raw["llm"].get(source)
        if conf is None:
            return DEFAULT_PROFILES[source]
        try:
            return LlmProfile(conf["model_id"], float(conf["temperature"]), int(conf["token_budget"]),
                              int(conf.get("max_retries", 3)))
        except KeyError as exc:
            raise ConfigError(f"llm.{source} lacks {exc}") from exc

    def llm_provider_conf(self, source: str) -> dict:
        return dict(self.raw["llm"].get(source, {}).get("provider") or {"kind": "openai"})

    def cluster_params(self) -> ClusterParams:
        c = self.raw["clustering"]
        return ClusterParams(int(c.get("min_cluster_size", 10)), float(c.get("epsilon_fraction", 0.8)))

    def cnn_spec(self) -> CnnSpec:
        try:
            return CnnSpec(input_side=int(self.raw["image_side"]), **self.raw["cnn"])
        except TypeError as exc:
            raise ConfigError(f"bad cnn section: {exc}") from exc

    def train_hyper(self, seed: int) -> TrainHyper:
        try:
            return TrainHyper(seed=seed, **self.raw["train"])
        except TypeError as exc:
            raise ConfigError(f"bad train section: {exc}") from exc

    def split_spec(self, seed: int = 0) -> SplitSpec:
        s = self.raw["split"]
        return SplitSpec(float(s["train_frac"]), float(s["val_frac"]), float(s["test_frac"]), seed)

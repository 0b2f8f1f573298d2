"""Run configuration: one record that pins every determinism-bearing knob.

The canonical JSON serialization of a RunConfig (sorted keys, compact
separators) is hashed into every artifact header; downstream stages refuse
upstream artifacts whose hash does not match their own config. Invocation
knobs that cannot change output bytes (worker count, output directory) stay
outside the config on purpose.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import SumetaError
from .corpus import TokenizerConfig
from .generator import GenConfig

DEFAULT_METRICS = ["R1", "R2", "RL", "JS2"]


class ConfigError(SumetaError):
    pass


@dataclass
class RunConfig:
    corpus: str | None = None
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    generator: GenConfig = field(default_factory=GenConfig)
    metrics: list = field(default_factory=lambda: list(DEFAULT_METRICS))
    external_scores: dict = field(default_factory=dict)  # metric name -> file path
    alpha: float = 0.05
    nbins: int = 15
    pairs: int = 100_000
    mode: str = "both"  # cumulative | noncumulative | both
    random_baseline: bool = False
    baseline_docs: int = 200
    baseline_candidates: int = 100
    baseline_metrics: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("cumulative", "noncumulative", "both"):
            raise ConfigError(f"mode must be cumulative, noncumulative or both, not {self.mode!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must be in (0, 1)")
        if self.nbins < 1 or self.pairs < 1:
            raise ConfigError("nbins and pairs must be >= 1")
        # one root seed drives everything, including the generator
        if self.generator.seed != self.seed:
            object.__setattr__(self, "generator", GenConfig(**{**self.generator.to_dict(), "seed": self.seed}))

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus,
            "tokenizer": self.tokenizer.to_dict(),
            "generator": self.generator.to_dict(),
            "metrics": list(self.metrics),
            "external_scores": dict(self.external_scores),
            "alpha": self.alpha,
            "nbins": self.nbins,
            "pairs": self.pairs,
            "mode": self.mode,
            "random_baseline": self.random_baseline,
            "baseline_docs": self.baseline_docs,
            "baseline_candidates": self.baseline_candidates,
            "baseline_metrics": self.baseline_metrics,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if "tokenizer" in d:
            d["tokenizer"] = TokenizerConfig.from_dict(d["tokenizer"])
        if "generator" in d:
            d["generator"] = GenConfig.from_dict(d["generator"])
        return cls(**d)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:12]


def load_config_file(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(data)

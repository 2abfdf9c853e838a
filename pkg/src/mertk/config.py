"""Experiment configuration: INI-style file, overridden by command-line flags."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

FEATURE_KINDS = ("l3net512", "l3net6144", "vggish128", "mfcc80")


@dataclass
class ExperimentConfig:
    dataset: str = "q4audio"
    manifest: str = ""
    features: str = "l3net512"
    model: str = "svm"
    reps: int = 20
    seed: int = 0
    cache_dir: str = "cache"
    out: str = "out"
    weights: str = "random:0"
    hop_s: float = 0.1
    validate_durations: bool = True
    mode: str = "static_quadrant"
    perplexity: float = 30.0
    tsne_iters: int = 1000
    schedule: dict = field(default_factory=dict)

    def validate(self):
        if self.features not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.features!r}; expected one of {FEATURE_KINDS}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        return self


_SCHEDULE_KEYS = {"max_epochs": int, "batch_size": int, "patience": int, "lr": float, "monitor": str}


def _coerce(name, raw):
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    if kind in ("bool", bool):
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    return str(raw)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read ``[experiment]`` / ``[schedule]`` / ``[tsne]`` sections, then apply non-None overrides."""
    cfg = ExperimentConfig()
    names = {f.name for f in fields(ExperimentConfig)} - {"schedule"}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(f"config file {path} not found")
        for section in parser.sections():
            for key, raw in parser[section].items():
                key = key.replace("-", "_")
                if section == "schedule":
                    if key not in _SCHEDULE_KEYS:
                        raise ValueError(f"unknown schedule key {key!r}")
                    cfg.schedule[key] = None if raw.strip().lower() == "none" else _SCHEDULE_KEYS[key](raw)
                elif section == "tsne" and key in ("perplexity", "iters"):
                    setattr(cfg, "perplexity" if key == "perplexity" else "tsne_iters",
                            _coerce("perplexity" if key == "perplexity" else "tsne_iters", raw))
                elif key in names:
                    setattr(cfg, key, _coerce(key, raw))
                else:
                    raise ValueError(f"unknown config key [{section}] {key}")
        base = Path(path).parent
        if cfg.manifest and not Path(cfg.manifest).is_absolute():
            cfg.manifest = str(base / cfg.manifest)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _SCHEDULE_KEYS:
            cfg.schedule[key] = value
        elif key in names:
            setattr(cfg, key, _coerce(key, value))
        else:
            raise ValueError(f"unknown override {key!r}")
    return cfg.validate()

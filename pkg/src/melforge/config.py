"""Run configuration: plan grammar, config files and defaults.

Plans are written either as a preset name (raw, speed, noise, loudness,
shift, masking, combined) or as a semicolon-separated step list, e.g.

    speed(factor_lo=0.7,factor_hi=1.7,ratio=0.3);shift(ratio=0.3,fill=zero)

Config files are flat `key = value` lines with `#` comments; list
values are comma-separated.  Every field has a default matching the
reference training recipe (51 epochs, batch size 200, Adam at 1e-4,
weight decay 0) and every field can be overridden by a CLI flag.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .augment import (
    AugmentationPlan,
    LoudnessStep,
    MaskStep,
    NoiseStep,
    ShiftStep,
    SpeedStep,
)

DEFAULT_EPOCHS = 51
DEFAULT_BATCH_SIZE = 200
DEFAULT_LR = 1e-4
DEFAULT_WEIGHT_DECAY = 0.0
CACHE_ENV_VAR = "MELFORGE_CACHE"

_STEP_TYPES = {
    "speed": SpeedStep,
    "loudness": LoudnessStep,
    "shift": ShiftStep,
    "noise": NoiseStep,
    "mask": MaskStep,
}

PLAN_PRESETS = {
    "raw": "",
    "speed": "speed",
    "noise": "noise",
    "loudness": "loudness",
    "shift": "shift",
    "masking": "mask",
    "combined": "speed;loudness;shift;noise;mask",
}

_STEP_RE = re.compile(r"^(\w+)(?:\((.*)\))?$")


class ConfigError(ValueError):
    pass


def parse_plan(text: str) -> AugmentationPlan:
    """Parse a preset name or step list into a plan."""
    text = text.strip()
    if text in PLAN_PRESETS:
        text = PLAN_PRESETS[text]
    if not text:
        return AugmentationPlan([])
    steps = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        match = _STEP_RE.match(chunk)
        if not match:
            raise ConfigError(f"cannot parse plan step {chunk!r}")
        kind, arg_text = match.group(1), match.group(2)
        if kind not in _STEP_TYPES:
            raise ConfigError(f"unknown augmentation kind {kind!r}")
        kwargs = {}
        if arg_text:
            for pair in arg_text.split(","):
                if "=" not in pair:
                    raise ConfigError(f"plan step argument {pair!r} is not key=value")
                key, value = (s.strip() for s in pair.split("=", 1))
                kwargs[key] = value if key == "fill" else float(value)
        try:
            steps.append(_STEP_TYPES[kind](**kwargs))
        except TypeError as exc:
            raise ConfigError(f"bad arguments for {kind}: {exc}") from exc
    return AugmentationPlan(steps)


def format_plan(plan: AugmentationPlan) -> str:
    """Canonical step-list form; parse_plan(format_plan(p)) == p."""
    parts = []
    for step in plan.steps:
        args = []
        for f in fields(step):
            if f.name == "kind":
                continue
            value = getattr(step, f.name)
            args.append(f"{f.name}={value}")
        parts.append(f"{step.kind}({','.join(args)})")
    return ";".join(parts)


@dataclass
class RunConfig:
    manifest: str = ""
    cache_dir: str = ""
    report: str = "reports/runs.jsonl"
    checkpoint_dir: str = "checkpoints"
    arch: str = "cc"
    plan: str = "raw"
    seeds: list = field(default_factory=lambda: [0])
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    lr: float = DEFAULT_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY

    def resolved_plan(self) -> AugmentationPlan:
        return parse_plan(self.plan)

    def resolved_cache_dir(self) -> str:
        if self.cache_dir:
            return self.cache_dir
        return os.environ.get(CACHE_ENV_VAR, "cache")

    def to_text(self) -> str:
        lines = ["# melforge run config"]
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "seeds":
                value = ",".join(str(s) for s in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_INT_FIELDS = {"epochs", "batch_size"}
_FLOAT_FIELDS = {"lr", "weight_decay"}


def config_from_text(text: str) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected `key = value`, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        if key == "seeds":
            setattr(cfg, key, [int(s) for s in value.split(",") if s.strip()])
        elif key in _INT_FIELDS:
            setattr(cfg, key, int(value))
        elif key in _FLOAT_FIELDS:
            setattr(cfg, key, float(value))
        else:
            setattr(cfg, key, value)
    return cfg


def load_config(path) -> RunConfig:
    return config_from_text(Path(path).read_text(encoding="utf-8"))


def save_config(path, cfg: RunConfig) -> None:
    Path(path).write_text(cfg.to_text(), encoding="utf-8")

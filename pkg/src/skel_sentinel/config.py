"""Run configuration: one flat key-value file shared by every pipeline stage.

A resolved copy of the config is written next to the outputs of each run so
results can always be traced back to the exact hyperparameters that produced
them. The file format is `key = value`, one per line, `#` comments allowed.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError

THREADS_ENV_VAR = "SKEL_SENTINEL_THREADS"


@dataclass
class RunConfig:
    joints: int = 17
    window_length: int = 16
    stride: int = 1
    feature_dim: int = 64
    flow_layers: int = 4
    hidden_width: int = 128
    k_neighbors: int = 16
    alpha: float = 4.0
    beta_normal: float = 0.9
    beta_abnormal: float = 0.1
    learning_rate: float = 0.0005
    batch_size: int = 1024
    epochs: int = 40
    epsilon: float = 1e-8
    smoothing_window: int = 0
    features: str = "kinematic"  # "kinematic" or "file"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise SchemaError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise SchemaError("batch_size must be >= 1")
        if self.window_length < 2:
            raise SchemaError("window_length must be >= 2")
        if self.stride < 1:
            raise SchemaError("stride must be >= 1")
        if self.features not in ("kinematic", "file"):
            raise SchemaError(f"unknown feature source {self.features!r}")

    def replace(self, **overrides) -> "RunConfig":
        return dataclasses.replace(self, **overrides)

    def to_file(self, path: str | Path) -> None:
        lines = []
        for field in dataclasses.fields(self):
            lines.append(f"{field.name} = {getattr(self, field.name)!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}, line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise SchemaError(f"{path}, line {lineno}: unknown config key {key!r}")
            values[key] = _parse_value(value.strip(), known[key].type)
        return cls(**values)


def _parse_value(text: str, field_type: str):
    if text and text[0] in "'\"" and text[-1] == text[0]:
        return text[1:-1]
    if field_type == "int":
        return int(text)
    if field_type == "float":
        return float(text)
    return text


def resolve_threads(cli_value: int | None) -> int:
    """CLI flag wins; SKEL_SENTINEL_THREADS is the fallback; default 1."""
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SchemaError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")
    return 1

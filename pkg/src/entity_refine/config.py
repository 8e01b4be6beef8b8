"""Pipeline configuration: defaults, flat key=value files, validation."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


_RATIO_KEYS = {
    "theta_o", "gamma_o", "n_t", "delta", "tau", "merge_threshold",
    "containment_gamma", "rho", "coverage_fraction", "containment_frac",
}


@dataclass(frozen=True)
class PipelineConfig:
    # object-level filtering
    theta_o: float = 0.8
    gamma_o: float = 0.6
    n_t: float = 0.5
    grid_coarse: int = 32
    grid_fine: int = 64
    # split-then-merge refinement
    delta: float = 0.05
    tau: float = 0.1
    top_k: int = 3
    merge_threshold: float = 0.5
    containment_gamma: float = 0.7
    # under-segmentation repair
    rho: float = 0.1
    coverage_fraction: float = 0.5
    containment_frac: float = 0.9
    min_region_px: int = 64
    min_gain_px: int = 64
    # superpixel clustering
    felz_scale: float = 200.0
    felz_sigma: float = 0.8
    felz_min_size: int = 100
    # orchestration
    provider: str = "oracle"
    seed: int = 0

    def __post_init__(self):
        for key in _RATIO_KEYS:
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{key} must be in [0,1], got {v}")
        if self.grid_coarse < 1 or self.grid_fine < 1:
            raise ConfigError("grids must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.felz_scale <= 0 or self.felz_sigma < 0 or self.felz_min_size < 1:
            raise ConfigError("invalid superpixel parameters")
        if self.min_region_px < 1 or self.min_gain_px < 0:
            raise ConfigError("invalid region size thresholds")

    # -- flat key = value file -------------------------------------------

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        return cls.from_mapping(parse_flat_file(Path(path).read_text()))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        valid = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in valid:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(cls, key, raw)
        return cls(**kwargs)

    def override(self, **kwargs) -> "PipelineConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def to_text(self) -> str:
        lines = ["# pipeline configuration"]
        for key, value in asdict(self).items():
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(cls, key: str, raw):
    default = cls.__dataclass_fields__[key].default
    if isinstance(raw, str):
        raw = raw.strip()
    if isinstance(default, bool):
        return raw in ("1", "true", "True", True)
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} expects a number, got {raw!r}") from exc
    return str(raw)


def parse_flat_file(text: str) -> dict:
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def worker_count(default: int = 1) -> int:
    """Worker cap from ENTITY_REFINE_THREADS; results must not depend on it."""
    raw = os.environ.get("ENTITY_REFINE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)

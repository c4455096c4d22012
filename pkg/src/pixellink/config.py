"""Pipeline configuration: defaults, benchmark presets, key=value files.

A single PipelineConfig feeds every subcommand. Values are layered, each
layer overriding the one before: built-in defaults, then a named preset,
then a config file, then command-line flags.

Config files are flat text, one `key=value` per line, keys named exactly
like the PipelineConfig fields; blank lines and `#` comments are
allowed. The scale set is written as comma-separated HxW pairs, e.g.
`scales=384x384,512x512,768x768`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import ConfigError
from .fusion import DEFAULT_MAX_LONGER_SIDE, DEFAULT_SCALES

RESOLUTIONS = {"2s": 2, "4s": 4}

# benchmark presets: detection thresholds and post-filter minimums
PRESETS = {
    "ic15": {
        "pixel_threshold": 0.8,
        "link_threshold": 0.8,
        "min_short_side": 10.0,
        "min_area": 300.0,
    },
    "td500": {
        "pixel_threshold": 0.8,
        "link_threshold": 0.7,
        "min_short_side": 15.0,
        "min_area": 600.0,
    },
    "ic13": {
        "pixel_threshold": 0.7,
        "link_threshold": 0.5,
        "min_short_side": 10.0,
        "min_area": 300.0,
    },
    "ic13-ms": {
        "pixel_threshold": 0.6,
        "link_threshold": 0.5,
        "min_short_side": 10.0,
        "min_area": 300.0,
    },
}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the subcommands need, in one immutable bundle."""

    resolution: str = "2s"
    pixel_threshold: float = 0.8
    link_threshold: float = 0.8
    min_short_side: float = 10.0
    min_area: float = 300.0
    scales: tuple = DEFAULT_SCALES
    max_longer_side: int = DEFAULT_MAX_LONGER_SIDE
    pixel_scale: float = 2.0
    negative_ratio: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.resolution not in RESOLUTIONS:
            raise ConfigError(
                f"resolution must be one of {sorted(RESOLUTIONS)}, got {self.resolution!r}"
            )
        for name in ("pixel_threshold", "link_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.min_short_side < 0 or self.min_area < 0:
            raise ConfigError("post-filter minimums must be >= 0")
        if not self.pixel_scale > 0:
            raise ConfigError(f"pixel_scale must be > 0, got {self.pixel_scale}")
        if self.negative_ratio < 0:
            raise ConfigError(f"negative_ratio must be >= 0, got {self.negative_ratio}")
        if self.max_longer_side < 1:
            raise ConfigError(f"max_longer_side must be >= 1, got {self.max_longer_side}")
        scales = tuple(tuple(int(v) for v in pair) for pair in self.scales)
        if not scales or any(len(p) != 2 or min(p) < 1 for p in scales):
            raise ConfigError(f"scales must be non-empty (h, w) pairs, got {self.scales!r}")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def downscale(self) -> int:
        """Image-to-map size ratio: 2 for half resolution, 4 for quarter."""
        return RESOLUTIONS[self.resolution]


def _parse_scales(text: str) -> tuple:
    pairs = []
    for chunk in text.split(","):
        h, sep, w = chunk.strip().partition("x")
        if not sep:
            raise ConfigError(f"scale {chunk.strip()!r} is not HxW")
        try:
            pairs.append((int(h), int(w)))
        except ValueError:
            raise ConfigError(f"scale {chunk.strip()!r} is not HxW") from None
    return tuple(pairs)


def _parse_value(key: str, text: str):
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return kind(text)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


_FIELD_TYPES = {
    "resolution": str,
    "pixel_threshold": float,
    "link_threshold": float,
    "min_short_side": float,
    "min_area": float,
    "scales": _parse_scales,
    "max_longer_side": int,
    "pixel_scale": float,
    "negative_ratio": float,
    "seed": int,
}

assert set(_FIELD_TYPES) == {f.name for f in fields(PipelineConfig)}


def parse_config_file(path) -> dict:
    """Read a key=value file into a {field: parsed value} dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    values = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path} line {lineno}: expected key=value, got {raw.strip()!r}")
        values[key.strip()] = _parse_value(key.strip(), value.strip())
    return values


def build_config(preset=None, config_path=None, overrides=None) -> PipelineConfig:
    """Layer defaults, preset, file and explicit overrides, in that order."""
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}, choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if config_path is not None:
        values.update(parse_config_file(config_path))
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    return PipelineConfig(**values)


def default_jobs() -> int:
    """Worker count from PIXELLINK_JOBS, defaulting to 1."""
    raw = os.environ.get("PIXELLINK_JOBS")
    if raw is None or not raw.strip():
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"PIXELLINK_JOBS must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigError(f"PIXELLINK_JOBS must be >= 1, got {jobs}")
    return jobs

"""Pipeline configuration: a plain key-value file with strict validation.

Lines are `key = value`; `#` starts a comment. Unknown keys are rejected.
Relative paths resolve against the config file's directory. Defaults for
the sampling sizes (M=10 real, N=500 synthetic), the grasp thresholds
(5 degrees / 10 mm), and the 256x256 condition resolution are the
paper-reported operating points; the geometric and edge-case thresholds
are this artifact's own documented choices.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

DEFAULT_REAL_SAMPLES = 10  # M
DEFAULT_SYNTHETIC_SAMPLES = 500  # N


@dataclass
class PipelineConfig:
    asset_registry: Path
    rig: Path
    output_dir: Path
    real_manifest: Path | None = None
    synthetic_manifest: Path | None = None
    predictions: Path | None = None
    seed: int = 0
    rre_threshold_deg: float = 5.0
    rte_threshold_mm: float = 10.0
    grasp_rule: str = "or"
    real_samples: int = DEFAULT_REAL_SAMPLES
    synthetic_samples: int = DEFAULT_SYNTHETIC_SAMPLES
    draws_per_object: int = 5
    retry_cap: int = 10
    max_perturbation_deg: float = 30.0
    views_per_pose: int = 1
    contact_threshold_mm: float = 2.0
    volume_threshold_cm3: float = 4.0
    voxel_pitch_mm: float = 2.0
    joint_error_threshold_mm: float = 20.0
    vertex_error_threshold_mm: float = 20.0
    resolution: int = 256
    camera_distance_mm: float = 400.0
    workers: int = 1
    emit_variant_maps: bool = False

    def validate(self) -> None:
        if self.real_manifest is None and self.synthetic_manifest is None:
            raise ConfigError("config needs real_manifest and/or synthetic_manifest")
        if self.grasp_rule not in ("or", "and"):
            raise ConfigError(f"grasp_rule must be 'or' or 'and', got {self.grasp_rule!r}")
        positive = (
            "rre_threshold_deg", "rte_threshold_mm", "contact_threshold_mm",
            "volume_threshold_cm3", "voxel_pitch_mm", "joint_error_threshold_mm",
            "vertex_error_threshold_mm", "camera_distance_mm",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        at_least_one = (
            "real_samples", "synthetic_samples", "draws_per_object",
            "retry_cap", "views_per_pose", "workers",
        )
        for name in at_least_one:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0.0 < self.max_perturbation_deg <= 180.0):
            raise ConfigError("max_perturbation_deg must be in (0, 180]")
        if self.resolution < 8:
            raise ConfigError("resolution must be at least 8")


_PATH_KEYS = {
    "asset_registry", "rig", "output_dir", "real_manifest",
    "synthetic_manifest", "predictions",
}
_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _coerce(key: str, raw: str):
    if key in _PATH_KEYS:
        return raw
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    values = parse_config_text(p.read_text())
    if overrides:
        values.update({k: str(v) for k, v in overrides.items() if v is not None})
    unknown = sorted(set(values) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    required = ("asset_registry", "rig", "output_dir")
    missing = sorted(set(required) - set(values))
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    base = p.parent
    for key in _PATH_KEYS:
        if key in kwargs:
            kwargs[key] = (base / kwargs[key]).resolve()
    cfg = PipelineConfig(**kwargs)
    cfg.validate()
    return cfg


# execution details: they must never influence output bytes, so they are
# left out of the digest
_UNHASHED_FIELDS = {"output_dir", "workers"}


def config_hash(cfg: PipelineConfig) -> str:
    """Stable digest over the effective settings; paths hash by basename so
    relocating a fixture does not change the hash."""
    items = []
    for f in dataclasses.fields(PipelineConfig):
        if f.name in _UNHASHED_FIELDS:
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, Path):
            v = v.name
        items.append(f"{f.name}={v}")
    return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]

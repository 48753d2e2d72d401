"""Pipeline configuration (flat ``key = value`` TOML)."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..errors import IoFailure, TypeMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    cell_size_m: float = 0.5
    h_min: float = 0.15
    core_alpha: float = 0.5
    min_peak_distance_m: float = 2.0
    sigma_conifer_threshold: float = 0.2
    # None means "unknown": the temperate (unit) latitude factor is used
    latitude_deg: float | None = None
    lai_broadleaf: float = 5.5
    lai_conifer: float = 3.0
    rho_broadleaf: float = 3.8
    rho_conifer: float = 2.5
    ground_percentile: float = 2.0
    top_percentile: float = 98.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if val is None and f.name == "latitude_deg":
                continue
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
                raise TypeMismatch(f"{f.name}: expected a finite number, got {val!r}")
            object.__setattr__(self, f.name, float(val))
        _check(self.cell_size_m > 0, "cell_size_m", "must be positive")
        _check(0 < self.h_min < 1, "h_min", "must lie in (0, 1)")
        _check(self.min_peak_distance_m > 0, "min_peak_distance_m", "must be positive")
        _check(self.sigma_conifer_threshold >= 0, "sigma_conifer_threshold", "must be >= 0")
        if self.latitude_deg is not None:
            _check(-90 <= self.latitude_deg <= 90, "latitude_deg", "must lie in [-90, 90]")
        for name in ("lai_broadleaf", "lai_conifer", "rho_broadleaf", "rho_conifer"):
            _check(getattr(self, name) > 0, name, "must be positive")
        _check(0 < self.ground_percentile < 50, "ground_percentile", "must lie in (0, 50)")
        _check(50 < self.top_percentile < 100, "top_percentile", "must lie in (50, 100)")

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _check(ok, key, msg):
    if not ok:
        raise TypeMismatch(f"{key}: out of range ({msg})")


def config_from_mapping(values, base=None):
    """Build a config from ``values``, falling back to ``base`` (or defaults).

    Unknown keys are logged and ignored.
    """
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    updates = {}
    for key, val in values.items():
        if key not in known:
            log.warning("ignoring unknown config key %r", key)
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise TypeMismatch(f"{key}: expected a number, got {type(val).__name__}")
        updates[key] = val
    return dataclasses.replace(base or PipelineConfig(), **updates)


def read_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise TypeMismatch(f"{path}: config is not UTF-8 text") from None
    try:
        values = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise TypeMismatch(f"{path}: {exc}") from None
    for key, val in values.items():
        if isinstance(val, dict):
            raise TypeMismatch(f"{key}: nested tables are not supported")
    return config_from_mapping(values)

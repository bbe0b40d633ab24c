# thalassa/config.py - Experiment configuration: pydantic models, YAML loading, overrides, seeding

"""
Configuration
=============
One YAML file (``config.yaml``) validated into ``ExperimentConfig``. CLI
``--set section.field=value`` pairs override single fields; values are
parsed as YAML scalars, so ``--set eof.n_eof=7`` gives an int and
``--set inversion.alphas=[1e-14,1e-12,1e-10]`` a list.

Every random consumer draws from its own stream ``derive_rng(seed, *path)``,
so results do not depend on call order or on the number of workers.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from thalassa.alphasel.training import AlphaTrainingConfig
from thalassa.errors import ConfigError
from thalassa.invert import InversionConfig
from thalassa.profiles import DEFAULT_SPEED_BAND, BoundingBox, DepthGrid
from thalassa.synth import DEFAULT_C_REF, SynthOceanSpec, make_geometry, sigma_t_from_spatial
from thalassa.forward import Geometry

DEFAULT_CONFIG_PATH = "config.yaml"

# Random stream identifiers (first spawn-key entry)
STREAM_OCEAN = 0
STREAM_SIMULATE = 1
STREAM_ALPHA_TRAINING = 2


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    spacing_m: float = 2.0
    max_depth_m: float = 300.0

    def to_grid(self) -> DepthGrid:
        return DepthGrid.from_max_depth(self.max_depth_m, self.spacing_m)


class DatasetSection(_Section):
    """Where profiles come from and how they are split"""

    profiles_csv: Optional[str] = None              # None: generate the synthetic ocean
    lat_range: Tuple[float, float] = (59.849, 62.092)
    lon_range: Tuple[float, float] = (2.924, 4.990)
    months: List[int] = Field(default_factory=lambda: [4])
    train_years: Tuple[int, int] = (1990, 2000)
    test_years: Tuple[int, int] = (2001, 2010)
    crop_depth_m: float = 300.0
    speed_band: Tuple[float, float] = DEFAULT_SPEED_BAND

    @model_validator(mode="after")
    def _ranges(self) -> "DatasetSection":
        for name in ("lat_range", "lon_range", "train_years", "test_years", "speed_band"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be (low, high)")
        if self.crop_depth_m <= 0:
            raise ValueError("crop_depth_m must be positive")
        return self

    def bounding_box(self) -> BoundingBox:
        return BoundingBox(self.lat_range[0], self.lat_range[1], self.lon_range[0], self.lon_range[1])


class EofSection(_Section):
    n_eof: int = 5
    basis_path: Optional[str] = None                # default <output_dir>/eof/basis.npz

    @field_validator("n_eof")
    @classmethod
    def _n_eof(cls, v: int) -> int:
        if v < 1:
            raise ValueError("n_eof must be positive")
        return v


class GeometrySection(_Section):
    swath_width_deg: float = 120.0
    n_beam: int = 500
    bottom_depth_m: float = 300.0
    source_depth_m: float = 0.0

    def to_geometry(self) -> Geometry:
        return make_geometry(self.swath_width_deg, self.n_beam, self.bottom_depth_m, self.source_depth_m)


class MeasurementSection(_Section):
    """Exactly one of sigma_x_cm (range error) and sigma_t_s (time error)"""

    n_ping: int = 1
    sigma_x_cm: Optional[float] = 1.0
    sigma_t_s: Optional[float] = None
    c_ref: float = DEFAULT_C_REF

    @model_validator(mode="after")
    def _one_noise(self) -> "MeasurementSection":
        if (self.sigma_x_cm is None) == (self.sigma_t_s is None):
            raise ValueError("set exactly one of sigma_x_cm and sigma_t_s")
        if self.n_ping < 1:
            raise ValueError("n_ping must be positive")
        if self.c_ref <= 0:
            raise ValueError("c_ref must be positive")
        noise = self.sigma_x_cm if self.sigma_x_cm is not None else self.sigma_t_s
        if noise < 0:
            raise ValueError("noise level must be nonnegative")
        return self

    @property
    def sigma_t(self) -> float:
        if self.sigma_t_s is not None:
            return float(self.sigma_t_s)
        return sigma_t_from_spatial(self.sigma_x_cm / 100.0, self.c_ref)


class AlphaSelectionSection(_Section):
    mode: Literal["net", "baseline", "fixed", "oracle"] = "baseline"
    net_path: Optional[str] = None                  # default <output_dir>/alpha_net/alpha_net.json
    fixed_alpha: Optional[float] = None

    @model_validator(mode="after")
    def _mode(self) -> "AlphaSelectionSection":
        if self.mode == "fixed" and (self.fixed_alpha is None or self.fixed_alpha < 0):
            raise ValueError("mode 'fixed' needs a nonnegative fixed_alpha")
        return self


class PerformanceSection(_Section):
    n_jobs: int = 1


class LoggingSection(_Section):
    level: str = "INFO"
    format: str = (
        "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
        "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
    )
    log_dir: str = "logs"
    run_log: bool = True


class ObservabilitySection(_Section):
    logging: LoggingSection = Field(default_factory=LoggingSection)


class ExperimentConfig(_Section):
    seed: int
    output_dir: str = "outputs"
    grid: GridSection = Field(default_factory=GridSection)
    ocean: SynthOceanSpec = Field(default_factory=SynthOceanSpec)
    dataset: DatasetSection = Field(default_factory=DatasetSection)
    eof: EofSection = Field(default_factory=EofSection)
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    measurement: MeasurementSection = Field(default_factory=MeasurementSection)
    inversion: InversionConfig = Field(default_factory=InversionConfig)
    alpha_selection: AlphaSelectionSection = Field(default_factory=AlphaSelectionSection)
    alpha_training: AlphaTrainingConfig = Field(default_factory=AlphaTrainingConfig)
    performance: PerformanceSection = Field(default_factory=PerformanceSection)
    observability: ObservabilitySection = Field(default_factory=ObservabilitySection)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def basis_path(self) -> Path:
        return Path(self.eof.basis_path) if self.eof.basis_path else self.out / "eof" / "basis.npz"

    def net_path(self) -> Path:
        if self.alpha_selection.net_path:
            return Path(self.alpha_selection.net_path)
        return self.out / "alpha_net" / "alpha_net.json"


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set '{dotted}': '{key}' is not a section")
        node = child
    node[keys[-1]] = value


def parse_override(item: str) -> Tuple[str, Any]:
    """'section.field=value' -> (dotted key, YAML-parsed value)"""
    if "=" not in item:
        raise ConfigError(f"override '{item}' must look like section.field=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override '{item}' has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"override '{item}': cannot parse value ({e})") from e
    return key, value


def _format_validation_error(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def config_from_dict(data: Dict[str, Any], overrides: Sequence[str] = ()) -> ExperimentConfig:
    data = json.loads(json.dumps(data or {}))
    for item in overrides:
        key, value = parse_override(item)
        _set_dotted(data, key, value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_format_validation_error(e)}") from e


def load_config(
    path: Optional[Union[str, Path]] = DEFAULT_CONFIG_PATH,
    overrides: Sequence[str] = (),
) -> ExperimentConfig:
    """
    Load and validate the experiment configuration.

    Args:
        path: YAML file; None starts from built-in defaults (seed must then
            come from an override)
        overrides: 'section.field=value' strings applied in order

    Returns:
        Validated ExperimentConfig
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a mapping at the top level")
    return config_from_dict(data, overrides)


# Fields that change where or how fast things run, never what is computed
_HASH_EXCLUDE = {"output_dir", "performance", "observability"}


def config_hash(config: ExperimentConfig) -> str:
    """First 16 hex digits of SHA-256 over the canonical JSON of the result-relevant fields"""
    payload = config.model_dump(mode="json", exclude=_HASH_EXCLUDE)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent stream for the consumer identified by path"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path)))

from pathlib import Path
from typing import Literal, Optional

from dotenv import dotenv_values
from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from cnnmap.errors import ConfigError
from cnnmap.models import CnnfScale, InitScheme, InputKind, Intrinsics

SYNTH_FOCAL_RATIO = 70.0 / 64.0


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="CNNMAP_", extra="forbid")

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    log_json_path: Optional[str] = None

    epochs: int = Field(default=100, ge=1)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta: float = Field(default=250.0, gt=0.0)
    seed: int = 0
    deterministic: bool = False
    shuffle: bool = True
    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    workers: int = Field(default=1, ge=1)

    input_kind: InputKind = InputKind.RGB
    scale: CnnfScale = CnnfScale.REDUCED
    init_scheme: InitScheme = InitScheme.HE
    init_sigma: float = Field(default=0.01, gt=0.0)
    keep_prob: float = Field(default=1.0, gt=0.0, le=1.0)

    assoc_tolerance: float = Field(default=0.02, gt=0.0)
    tum_fx: float = 525.0
    tum_fy: float = 525.0
    tum_cx: float = 319.5
    tum_cy: float = 239.5
    sevenscenes_fx: float = 585.0
    sevenscenes_fy: float = 585.0
    sevenscenes_cx: float = 320.0
    sevenscenes_cy: float = 240.0

    synth_points: int = Field(default=4000, ge=1)
    synth_extent: float = Field(default=3.0, gt=0.0)
    synth_trajectories: int = Field(default=6, ge=1)
    synth_frames: int = Field(default=60, ge=1)
    synth_radius: float = Field(default=2.0, gt=0.0)
    synth_size: int = Field(default=64, ge=1)
    # unset synthetic intrinsics follow the image size (fx = 70 at 64 px, principal point centered)
    synth_fx: Optional[float] = Field(default=None, gt=0.0)
    synth_fy: Optional[float] = Field(default=None, gt=0.0)
    synth_cx: Optional[float] = None
    synth_cy: Optional[float] = None

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, v):
        return v.upper() if isinstance(v, str) else v

    @property
    def tum_intrinsics(self) -> Intrinsics:
        return Intrinsics(fx=self.tum_fx, fy=self.tum_fy, cx=self.tum_cx, cy=self.tum_cy)

    @property
    def sevenscenes_intrinsics(self) -> Intrinsics:
        return Intrinsics(
            fx=self.sevenscenes_fx, fy=self.sevenscenes_fy,
            cx=self.sevenscenes_cx, cy=self.sevenscenes_cy,
        )

    @property
    def manifest_intrinsics(self) -> Intrinsics:
        # manifest sequences carry no depth, intrinsics are informational only
        return self.tum_intrinsics

    @property
    def synth_intrinsics(self) -> Intrinsics:
        focal = self.synth_size * SYNTH_FOCAL_RATIO
        center = self.synth_size / 2.0
        return Intrinsics(
            fx=self.synth_fx or focal, fy=self.synth_fy or focal,
            cx=center if self.synth_cx is None else self.synth_cx,
            cy=center if self.synth_cy is None else self.synth_cy,
        )


def load_settings(config_path: Optional[str | Path] = None, **overrides) -> Settings:
    """Build settings from defaults, CNNMAP_* env, a key=value file and explicit overrides.

    Overrides whose value is None are ignored so unset CLI flags fall through.
    """
    values: dict[str, object] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        for key, value in dotenv_values(path).items():
            if value is None:
                raise ConfigError(f"Config line without value: {key}", hint=f"Use key=value lines in {path}")
            values[key.strip().lower()] = value
    values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        return Settings(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ConfigError(
            f"Invalid configuration for '{field}': {first['msg']}",
            hint="Check --config keys against the documented setting names",
        ) from e


settings = Settings()

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator


class InputKind(str, Enum):
    GRAY = "gray"
    RGB = "rgb"
    DEPTH = "depth"
    POINTCLOUD = "pointcloud"
    RGBD = "rgbd"
    RGBPC = "rgbpc"


INPUT_CHANNELS: dict[InputKind, int] = {
    InputKind.GRAY: 1,
    InputKind.RGB: 3,
    InputKind.DEPTH: 1,
    InputKind.POINTCLOUD: 3,
    InputKind.RGBD: 4,
    InputKind.RGBPC: 6,
}


class InputSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: InputKind = InputKind.RGB

    @computed_field
    @property
    def n(self) -> int:
        return INPUT_CHANNELS[self.kind]

    @property
    def needs_depth(self) -> bool:
        return self.kind in (InputKind.DEPTH, InputKind.POINTCLOUD, InputKind.RGBD, InputKind.RGBPC)

    @property
    def needs_color(self) -> bool:
        return self.kind in (InputKind.GRAY, InputKind.RGB, InputKind.RGBD, InputKind.RGBPC)


class CnnfScale(str, Enum):
    FULL = "full"
    REDUCED = "reduced"


class LayerKind(str, Enum):
    CONV = "conv"
    MAXPOOL = "maxpool"
    RELU = "relu"
    DENSE = "dense"
    DROPOUT = "dropout"
    FLATTEN = "flatten"


class RunMode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class LayerSpec(BaseModel):
    """One network layer.

    conv weights are stored filters-major as (k, in_depth, k_h, k_w); the
    conventional k_h x k_w x in_depth x k notation is `filter_shape`.
    dense weights are (out_dim, in_dim).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: LayerKind
    name: str = ""
    kernel: tuple[int, int] = (1, 1)
    in_depth: int = Field(default=0, ge=0)
    filters: int = Field(default=0, ge=0)
    stride: int = Field(default=1, ge=1)
    pad: int = Field(default=0, ge=0)
    in_dim: int = Field(default=0, ge=0)
    out_dim: int = Field(default=0, ge=0)
    keep_prob: float = Field(default=1.0, gt=0.0, le=1.0)
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    @property
    def has_params(self) -> bool:
        return self.kind in (LayerKind.CONV, LayerKind.DENSE)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == LayerKind.CONV:
            return (self.filters, self.in_depth, self.kernel[0], self.kernel[1])
        if self.kind == LayerKind.DENSE:
            return (self.out_dim, self.in_dim)
        return ()

    @property
    def bias_shape(self) -> tuple[int, ...]:
        if self.kind == LayerKind.CONV:
            return (self.filters,)
        if self.kind == LayerKind.DENSE:
            return (self.out_dim,)
        return ()

    @property
    def filter_shape(self) -> tuple[int, int, int, int]:
        return (self.kernel[0], self.kernel[1], self.in_depth, self.filters)


class ModelMeta(BaseModel):
    architecture: str = "cnn-f"
    epochs_trained: int = 0
    dataset_tag: str = ""


class MapInfo(BaseModel):
    """Sidecar record saved next to a map file; the binary carries only n and the layers."""

    input_kind: InputKind
    scale: CnnfScale
    input_size: int = Field(gt=0)
    epochs_trained: int = Field(default=0, ge=0)
    dataset_tag: str = ""


class MapModel(BaseModel):
    """The map: a fixed-size regressor from an n-channel image to a 7-vector pose."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    input_spec: InputSpec
    scale: CnnfScale
    input_size: int
    layers: list[LayerSpec]
    meta: ModelMeta = Field(default_factory=ModelMeta)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.input_spec.n, self.input_size, self.input_size)

    @property
    def dtype(self) -> np.dtype:
        for layer in self.layers:
            if layer.weight is not None:
                return layer.weight.dtype
        return np.dtype(np.float32)

    def parameter_layers(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.has_params]


class InitScheme(str, Enum):
    HE = "he"
    GAUSSIAN = "gaussian"
    FROM_BLOB = "from_blob"


class Pose(BaseModel):
    """Camera-to-world pose: position in meters, scalar-first quaternion."""

    model_config = ConfigDict(frozen=True)

    x: tuple[float, float, float] = (0.0, 0.0, 0.0)
    q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def vector(self) -> np.ndarray:
        return np.array([*self.x, *self.q], dtype=np.float64)


class LossConfig(BaseModel):
    beta: float = Field(default=250.0, gt=0.0)


class Intrinsics(BaseModel):
    model_config = ConfigDict(frozen=True)

    fx: float = Field(gt=0.0)
    fy: float = Field(gt=0.0)
    cx: float
    cy: float


class Frame(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rgb: Optional[np.ndarray] = None
    depth: Optional[np.ndarray] = None
    pose: Pose
    timestamp: Optional[float] = None

    @model_validator(mode="after")
    def _has_image(self):
        if self.rgb is None and self.depth is None:
            raise ValueError("frame needs rgb or depth data")
        return self

    @property
    def image_size(self) -> tuple[int, int]:
        image = self.rgb if self.rgb is not None else self.depth
        return (image.shape[0], image.shape[1])


class Sequence(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frames: list[Frame]
    intrinsics: Intrinsics
    tag: str = ""

    @model_validator(mode="after")
    def _consistent(self):
        if not self.frames:
            raise ValueError(f"sequence '{self.tag}' has no frames")
        size = self.frames[0].image_size
        for i, frame in enumerate(self.frames):
            if frame.image_size != size:
                raise ValueError(f"sequence '{self.tag}' frame {i} is {frame.image_size}, expected {size}")
        return self

    def __len__(self) -> int:
        return len(self.frames)


class Scene(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    colors: np.ndarray
    seed: int
    extent: float

    @model_validator(mode="after")
    def _shapes(self):
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 1:
            raise ValueError("scene points must be a non-empty (N, 3) array")
        if self.colors.shape != self.points.shape:
            raise ValueError("scene needs one rgb color per point")
        return self


class TrajectoryKind(str, Enum):
    CIRCLE = "circle"
    ARC = "arc"
    RANDOM_WALK = "random-walk"


class TrajectorySpec(BaseModel):
    kind: TrajectoryKind = TrajectoryKind.CIRCLE
    radius: float = Field(default=2.0, gt=0.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame_count: int = Field(default=60, ge=1)
    seed: int = 0
    height: float = 0.0
    phase: float = 0.0
    arc_span: float = Field(default=np.pi / 2, gt=0.0)
    step: float = Field(default=0.05, gt=0.0)


class TrainConfig(BaseModel):
    epochs: int = Field(default=100, ge=1)
    batch_size: int = Field(default=16, ge=1)
    # 0 freezes the weights (dry run); the CLI still requires a positive rate
    learning_rate: float = Field(default=1e-4, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta: float = Field(default=250.0, gt=0.0)
    seed: int = 0
    deterministic: bool = False
    shuffle: bool = True
    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    workers: int = Field(default=1, ge=1)

    @property
    def loss(self) -> LossConfig:
        return LossConfig(beta=self.beta)


class LearningLogEntry(BaseModel):
    epoch: int
    train_loss: float
    val_pos_err_m: float


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _std(values: list[float]) -> float:
    return float(np.std(values)) if values else 0.0


def _median(values: list[float]) -> float:
    return float(np.median(values)) if values else 0.0


class EvalReport(BaseModel):
    """Per-frame errors plus aggregates; std is the population (1/N) deviation."""

    position_errors: list[float] = Field(default_factory=list)
    angular_errors: list[float] = Field(default_factory=list)
    true_positions: list[tuple[float, float, float]] = Field(default_factory=list)
    predicted_positions: list[tuple[float, float, float]] = Field(default_factory=list)

    @computed_field
    @property
    def frame_count(self) -> int:
        return len(self.position_errors)

    @computed_field
    @property
    def mean_pos_err_m(self) -> float:
        return _mean(self.position_errors)

    @computed_field
    @property
    def std_pos_err_m(self) -> float:
        return _std(self.position_errors)

    @computed_field
    @property
    def median_pos_err_m(self) -> float:
        return _median(self.position_errors)

    @computed_field
    @property
    def mean_ang_err_deg(self) -> float:
        return _mean(self.angular_errors)

    @computed_field
    @property
    def std_ang_err_deg(self) -> float:
        return _std(self.angular_errors)

    @computed_field
    @property
    def median_ang_err_deg(self) -> float:
        return _median(self.angular_errors)


class ExperimentEntry(BaseModel):
    k: int
    report: EvalReport
    param_count: int
    map_bytes: int


class ExperimentSeries(BaseModel):
    seed: int = 0
    entries: list[ExperimentEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _constant_size(self):
        if self.entries:
            first = self.entries[0]
            for entry in self.entries[1:]:
                if (entry.param_count, entry.map_bytes) != (first.param_count, first.map_bytes):
                    raise ValueError(f"map size changed at k={entry.k}")
        return self


class DatasetKind(str, Enum):
    AUTO = "auto"
    TUM = "tum"
    SEVENSCENES = "7scenes"
    MANIFEST = "manifest"
    DIR = "dir"

"""CNN-F pose regressor: the fixed-size map representation."""

import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from pydantic import BaseModel

from cnnmap.errors import DimensionError, UnsupportedModelError, WeightShapeError
from cnnmap.models import (
    CnnfScale,
    InitScheme,
    InputSpec,
    LayerKind,
    LayerSpec,
    MapModel,
    ModelMeta,
    RunMode,
)
from cnnmap.services.tensor_ops import Cache, WeightGrads, layer_backward, layer_forward, output_shape

logger = logging.getLogger(__name__)

POSE_DIM = 7


class CnnfArchitecture(BaseModel):
    input_size: int
    conv_channels: tuple[int, int, int, int, int]
    dense_widths: tuple[int, int]


ARCHITECTURES: dict[CnnfScale, CnnfArchitecture] = {
    CnnfScale.FULL: CnnfArchitecture(
        input_size=224, conv_channels=(64, 256, 256, 256, 256), dense_widths=(4096, 4096)
    ),
    CnnfScale.REDUCED: CnnfArchitecture(
        input_size=64, conv_channels=(16, 64, 64, 64, 64), dense_widths=(256, 256)
    ),
}


def cnnf_architecture(scale: CnnfScale) -> CnnfArchitecture:
    return ARCHITECTURES[CnnfScale(scale)]


def build_cnnf(
    input_spec: InputSpec,
    scale: CnnfScale = CnnfScale.REDUCED,
    keep_prob: float = 1.0,
    dtype=np.float32,
) -> MapModel:
    """Lay out conv1..conv5 and full6..full8 with zero weights.

    Dropout layers after full6/full7 are only inserted when keep_prob < 1.
    """
    arch = cnnf_architecture(scale)
    c1, c2, c3, c4, c5 = arch.conv_channels
    d6, d7 = arch.dense_widths
    n = input_spec.n

    def pool(name: str) -> LayerSpec:
        return LayerSpec(kind=LayerKind.MAXPOOL, name=name, kernel=(2, 2), stride=2)

    def relu(name: str) -> LayerSpec:
        return LayerSpec(kind=LayerKind.RELU, name=name)

    layers = [
        LayerSpec(kind=LayerKind.CONV, name="conv1", kernel=(11, 11), in_depth=n, filters=c1, stride=4, pad=0),
        relu("relu1"), pool("pool1"),
        LayerSpec(kind=LayerKind.CONV, name="conv2", kernel=(5, 5), in_depth=c1, filters=c2, stride=1, pad=2),
        relu("relu2"), pool("pool2"),
        LayerSpec(kind=LayerKind.CONV, name="conv3", kernel=(3, 3), in_depth=c2, filters=c3, stride=1, pad=1),
        relu("relu3"),
        LayerSpec(kind=LayerKind.CONV, name="conv4", kernel=(3, 3), in_depth=c3, filters=c4, stride=1, pad=1),
        relu("relu4"),
        LayerSpec(kind=LayerKind.CONV, name="conv5", kernel=(3, 3), in_depth=c4, filters=c5, stride=1, pad=1),
        relu("relu5"), pool("pool5"),
        LayerSpec(kind=LayerKind.FLATTEN, name="flatten"),
    ]

    # flatten width depends on the spatial chain
    shape: tuple[int, ...] = (n, arch.input_size, arch.input_size)
    for layer in layers:
        shape = output_shape(layer, shape)
    flat = shape[0]

    layers.append(LayerSpec(kind=LayerKind.DENSE, name="full6", in_dim=flat, out_dim=d6))
    layers.append(relu("relu6"))
    if keep_prob < 1.0:
        layers.append(LayerSpec(kind=LayerKind.DROPOUT, name="drop6", keep_prob=keep_prob))
    layers.append(LayerSpec(kind=LayerKind.DENSE, name="full7", in_dim=d6, out_dim=d7))
    layers.append(relu("relu7"))
    if keep_prob < 1.0:
        layers.append(LayerSpec(kind=LayerKind.DROPOUT, name="drop7", keep_prob=keep_prob))
    layers.append(LayerSpec(kind=LayerKind.DENSE, name="full8", in_dim=d7, out_dim=POSE_DIM))

    for layer in layers:
        if layer.has_params:
            layer.weight = np.zeros(layer.weight_shape, dtype=dtype)
            layer.bias = np.zeros(layer.bias_shape, dtype=dtype)

    model = MapModel(
        input_spec=input_spec,
        scale=CnnfScale(scale),
        input_size=arch.input_size,
        layers=layers,
        meta=ModelMeta(architecture=f"cnn-f/{CnnfScale(scale).value}"),
    )
    validate_model(model)
    return model


def layer_shapes(model: MapModel) -> list[tuple[str, tuple[int, ...], tuple[int, ...]]]:
    """(layer label, input shape, output shape) for every layer, batch axis excluded."""
    shapes = []
    shape: tuple[int, ...] = model.input_shape
    for layer in model.layers:
        out = output_shape(layer, shape)
        shapes.append((layer.label, shape, out))
        shape = out
    return shapes


def validate_model(model: MapModel) -> None:
    convs = [layer for layer in model.layers if layer.kind == LayerKind.CONV]
    if not convs or convs[0].in_depth != model.input_spec.n:
        raise DimensionError(
            f"First conv filter depth must equal input channels n={model.input_spec.n}"
        )
    shapes = layer_shapes(model)
    if shapes[-1][2] != (POSE_DIM,):
        raise DimensionError(f"Model output shape {shapes[-1][2]} is not the pose vector ({POSE_DIM},)")


def param_count(model: MapModel) -> int:
    return sum(
        int(np.prod(layer.weight_shape)) + int(np.prod(layer.bias_shape))
        for layer in model.parameter_layers()
    )


def copy_model(model: MapModel) -> MapModel:
    return model.model_copy(deep=True)


def forward_batch(
    model: MapModel,
    x: np.ndarray,
    mode: RunMode = RunMode.EVAL,
    rng_seed: int = 0,
    keep_caches: bool = False,
) -> tuple[np.ndarray, list[Cache]]:
    """Run (N, n, S, S) inputs through every layer; caches are kept only for training."""
    if x.ndim != 4 or x.shape[1:] != model.input_shape:
        raise DimensionError(
            f"Input shape {x.shape[1:]} does not match model input {model.input_shape} "
            f"(expected n={model.input_spec.n} channels)"
        )
    caches: list[Cache] = []
    out = x
    for i, layer in enumerate(model.layers):
        # one independent dropout stream per layer
        seed = int(np.random.SeedSequence([rng_seed, i]).generate_state(1)[0])
        out, cache = layer_forward(layer, out, mode, seed)
        if keep_caches:
            caches.append(cache)
    return out, caches


def backward_batch(model: MapModel, caches: list[Cache], upstream: np.ndarray) -> list[WeightGrads]:
    """Backpropagate d(loss)/d(output); returns per-layer weight grads (None for weightless layers)."""
    grads: list[WeightGrads] = [None] * len(model.layers)
    d = upstream
    for i in range(len(model.layers) - 1, -1, -1):
        d, grads[i] = layer_backward(model.layers[i], caches[i], d)
    return grads


def forward(model: MapModel, x: np.ndarray) -> np.ndarray:
    """Eval-mode prediction for one (n, S, S) input: [x1, x2, x3, qw, qx, qy, qz]."""
    if x.shape != model.input_shape:
        raise DimensionError(
            f"Input shape {x.shape} does not match model input {model.input_shape} "
            f"(expected n={model.input_spec.n} channels)"
        )
    out, _ = forward_batch(model, x[None].astype(model.dtype, copy=False))
    return out[0]


def predict(model: MapModel, inputs: np.ndarray, batch_size: int = 64) -> np.ndarray:
    outputs = [
        forward_batch(model, inputs[i:i + batch_size].astype(model.dtype, copy=False))[0]
        for i in range(0, len(inputs), batch_size)
    ]
    if not outputs:
        return np.zeros((0, POSE_DIM), dtype=model.dtype)
    return np.concatenate(outputs)


def init_weights(
    model: MapModel,
    scheme: InitScheme = InitScheme.HE,
    seed: int = 0,
    sigma: float = 0.01,
    blob: Optional[MapModel] = None,
) -> MapModel:
    """Return a copy of `model` with freshly initialized (or imported) weights."""
    scheme = InitScheme(scheme)
    result = copy_model(model)
    dtype = model.dtype

    if scheme == InitScheme.FROM_BLOB:
        if blob is None:
            raise WeightShapeError("from_blob initialisation needs a weight container", layer="")
        src = blob.parameter_layers()
        dst = result.parameter_layers()
        if len(src) != len(dst):
            raise WeightShapeError(
                f"Weight container has {len(src)} parameter layers, model has {len(dst)}",
                layer=dst[min(len(src), len(dst) - 1)].label,
            )
        for s, d in zip(src, dst):
            if s.weight_shape != d.weight_shape or s.bias_shape != d.bias_shape:
                raise WeightShapeError(
                    f"Layer '{d.label}' expects weights {d.weight_shape}, container has {s.weight_shape}",
                    layer=d.label,
                )
            d.weight = s.weight.astype(dtype, copy=True)
            d.bias = s.bias.astype(dtype, copy=True)
        logger.debug("Imported %d parameter layers from weight container", len(dst))
        return result

    rng = np.random.default_rng(seed)
    for layer in result.parameter_layers():
        fan_in = int(np.prod(layer.weight_shape[1:]))
        std = math.sqrt(2.0 / fan_in) if scheme == InitScheme.HE else sigma
        layer.weight = (rng.standard_normal(layer.weight_shape) * std).astype(dtype)
        layer.bias = np.zeros(layer.bias_shape, dtype=dtype)
    result.meta.epochs_trained = 0
    return result


def _normalize_tile(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    return np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def filter_grid(model: MapModel) -> np.ndarray:
    """First-layer filters as an image array: (H, W, 3) for 3-deep filters, (H, W) otherwise."""
    first = model.layers[0]
    if first.kind != LayerKind.CONV or first.weight is None:
        raise UnsupportedModelError(
            f"Filter export needs a conv first layer, found '{first.kind.value}'"
        )
    k, depth, kh, kw = first.weight.shape
    cols = math.ceil(math.sqrt(k))
    rows = math.ceil(k / cols)
    color = depth == 3
    # non-color filters show their channels side by side inside one cell
    cell_w = kw if color else depth * (kw + 1) - 1
    height = rows * (kh + 1) - 1
    width = cols * (cell_w + 1) - 1
    grid = np.zeros((height, width, 3) if color else (height, width), dtype=np.uint8)

    for i in range(k):
        r, c = divmod(i, cols)
        top, left = r * (kh + 1), c * (cell_w + 1)
        tile = _normalize_tile(first.weight[i].astype(np.float64))
        if color:
            grid[top:top + kh, left:left + kw] = tile.transpose(1, 2, 0)
        else:
            for ch in range(depth):
                x0 = left + ch * (kw + 1)
                grid[top:top + kh, x0:x0 + kw] = tile[ch]
    return grid


def export_filters(model: MapModel, path: str | Path) -> Path:
    path = Path(path)
    grid = filter_grid(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(grid).save(path, format="PNG")
    logger.info("Wrote %s first-layer filter grid %dx%d to %s",
                "color" if grid.ndim == 3 else "grayscale", grid.shape[1], grid.shape[0], path)
    return path

"""CNNMAP01: fixed-layout little-endian container for a trained map.

Layout (see docs/formats.md):
    8s  magic "CNNMAP01"
    u32 version, u32 n, u32 layer count
    per layer: u8 kind tag, kind-specific u32 extents, then f32 weights and biases
The byte length depends only on the architecture and n. Input kind, epochs
trained and the dataset tag live in a JSON sidecar (`<map>.json`).
"""

import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from cnnmap.errors import CnnMapError, MapFormatError, MapIntegrityError
from cnnmap.models import (
    INPUT_CHANNELS,
    CnnfScale,
    InputKind,
    InputSpec,
    LayerKind,
    LayerSpec,
    MapInfo,
    MapModel,
    ModelMeta,
)
from cnnmap.services.cnnf import cnnf_architecture, validate_model

logger = logging.getLogger(__name__)

MAGIC = b"CNNMAP01"
VERSION = 1

KIND_TAGS: dict[LayerKind, int] = {
    LayerKind.CONV: 1,
    LayerKind.MAXPOOL: 2,
    LayerKind.RELU: 3,
    LayerKind.DENSE: 4,
    LayerKind.DROPOUT: 5,
    LayerKind.FLATTEN: 6,
}
TAG_KINDS = {tag: kind for kind, tag in KIND_TAGS.items()}

# kind assumed for n when a map has no sidecar
DEFAULT_KINDS: dict[int, InputKind] = {
    1: InputKind.GRAY,
    3: InputKind.RGB,
    4: InputKind.RGBD,
    6: InputKind.RGBPC,
}

_HEADER = struct.Struct("<8sIII")


def _f32(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def info_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def map_info(model: MapModel) -> MapInfo:
    return MapInfo(
        input_kind=model.input_spec.kind,
        scale=model.scale,
        input_size=model.input_size,
        epochs_trained=model.meta.epochs_trained,
        dataset_tag=model.meta.dataset_tag,
    )


def serialize_map(model: MapModel) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, model.input_spec.n, len(model.layers))]
    for layer in model.layers:
        parts.append(struct.pack("<B", KIND_TAGS[layer.kind]))
        if layer.kind == LayerKind.CONV:
            parts.append(struct.pack("<6I", layer.kernel[0], layer.kernel[1], layer.in_depth,
                                     layer.filters, layer.stride, layer.pad))
            parts.append(_f32(layer.weight))
            parts.append(_f32(layer.bias))
        elif layer.kind == LayerKind.MAXPOOL:
            parts.append(struct.pack("<4I", layer.kernel[0], layer.kernel[1], layer.stride, layer.pad))
        elif layer.kind == LayerKind.DENSE:
            parts.append(struct.pack("<2I", layer.out_dim, layer.in_dim))
            parts.append(_f32(layer.weight))
            parts.append(_f32(layer.bias))
        elif layer.kind == LayerKind.DROPOUT:
            parts.append(struct.pack("<f", layer.keep_prob))
    return b"".join(parts)


def save_map(model: MapModel, path: str | Path) -> int:
    """Write the map and its sidecar; returns the map's byte length."""
    path = Path(path)
    data = serialize_map(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    info_path(path).write_text(map_info(model).model_dump_json(indent=2) + "\n")
    logger.debug("Saved map %s (%d bytes)", path, len(data))
    return len(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def unpack(self, fmt: struct.Struct | str, what: str) -> tuple:
        st = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        if self.offset + st.size > len(self.data):
            raise MapFormatError(f"Truncated map file while reading {what}", offset=self.offset)
        values = st.unpack_from(self.data, self.offset)
        self.offset += st.size
        return values

    def floats(self, shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape))
        size = 4 * count
        if self.offset + size > len(self.data):
            raise MapFormatError(f"Truncated map file while reading {what}", offset=self.offset)
        array = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.offset)
        self.offset += size
        return array.astype(np.float32).reshape(shape)


def _positive_stride(stride: int, what: str, offset: int) -> int:
    if stride < 1:
        raise MapFormatError(f"{what} stride must be positive, got {stride}", offset=offset)
    return stride


def _infer_scale(layers: list[LayerSpec]) -> CnnfScale:
    channels = tuple(layer.filters for layer in layers if layer.kind == LayerKind.CONV)
    widths = tuple(layer.out_dim for layer in layers if layer.kind == LayerKind.DENSE)[:-1]
    for scale in CnnfScale:
        arch = cnnf_architecture(scale)
        if arch.conv_channels == channels and arch.dense_widths == widths:
            return scale
    raise MapIntegrityError(f"Layer widths conv {channels} dense {widths} match no CNN-F scale")


def _input_kind(n: int, info: Optional[MapInfo]) -> InputKind:
    if info is not None:
        if INPUT_CHANNELS[info.input_kind] != n:
            raise MapIntegrityError(f"Header n={n} does not match input kind '{info.input_kind.value}'")
        return info.input_kind
    if n not in DEFAULT_KINDS:
        raise MapIntegrityError(f"Header n={n} matches no input kind")
    return DEFAULT_KINDS[n]


def deserialize_map(data: bytes, info: Optional[MapInfo] = None) -> MapModel:
    """Parse a CNNMAP01 blob; without `info` the input kind is assumed from n."""
    reader = _Reader(data)
    magic, version, n, layer_count = reader.unpack(_HEADER, "header")
    if magic != MAGIC:
        raise MapFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise MapFormatError(f"Unsupported map version {version}", offset=8)
    input_kind = _input_kind(n, info)

    layers: list[LayerSpec] = []
    counts: dict[LayerKind, int] = {}
    for _ in range(layer_count):
        at = reader.offset
        (tag_value,) = reader.unpack("<B", "layer kind")
        kind = TAG_KINDS.get(tag_value)
        if kind is None:
            raise MapFormatError(f"Unknown layer kind tag {tag_value}", offset=at)
        counts[kind] = counts.get(kind, 0) + 1
        name = f"{kind.value}{counts[kind]}"
        if kind == LayerKind.CONV:
            kh, kw, depth, filters, stride, pad = reader.unpack("<6I", f"{name} extents")
            layer = LayerSpec(kind=kind, name=f"conv{counts[kind]}", kernel=(kh, kw), in_depth=depth,
                              filters=filters, stride=_positive_stride(stride, name, at + 17), pad=pad)
            layer.weight = reader.floats(layer.weight_shape, f"{layer.name} weights")
            layer.bias = reader.floats(layer.bias_shape, f"{layer.name} biases")
        elif kind == LayerKind.MAXPOOL:
            kh, kw, stride, pad = reader.unpack("<4I", f"{name} extents")
            # pools take the number of the conv they follow
            layer = LayerSpec(kind=kind, name=f"pool{counts.get(LayerKind.CONV, 0)}", kernel=(kh, kw),
                              stride=_positive_stride(stride, name, at + 9), pad=pad)
        elif kind == LayerKind.DENSE:
            out_dim, in_dim = reader.unpack("<2I", f"{name} extents")
            # dense layers follow the five convolutions in CNN-F numbering
            layer = LayerSpec(kind=kind, name=f"full{counts[kind] + 5}", in_dim=in_dim, out_dim=out_dim)
            layer.weight = reader.floats(layer.weight_shape, f"{layer.name} weights")
            layer.bias = reader.floats(layer.bias_shape, f"{layer.name} biases")
        elif kind == LayerKind.DROPOUT:
            (keep,) = reader.unpack("<f", f"{name} keep probability")
            if not 0.0 < keep <= 1.0:
                raise MapFormatError(f"Dropout keep probability {keep} outside (0, 1]", offset=at + 1)
            layer = LayerSpec(kind=kind, name=f"drop{counts.get(LayerKind.DENSE, 0) + 5}", keep_prob=keep)
        elif kind == LayerKind.FLATTEN:
            layer = LayerSpec(kind=kind, name="flatten")
        else:
            layer = LayerSpec(kind=kind, name=name)
        layers.append(layer)

    if reader.offset != len(data):
        raise MapFormatError(f"{len(data) - reader.offset} trailing bytes after last layer", offset=reader.offset)

    scale = _infer_scale(layers)
    input_size = cnnf_architecture(scale).input_size
    if info is not None and (info.scale != scale or info.input_size != input_size):
        raise MapIntegrityError(
            f"Map info says {info.scale.value} at {info.input_size} px, layers are {scale.value} at {input_size} px"
        )

    model = MapModel(
        input_spec=InputSpec(kind=input_kind),
        scale=scale,
        input_size=input_size,
        layers=layers,
        meta=ModelMeta(
            architecture=f"cnn-f/{scale.value}",
            epochs_trained=info.epochs_trained if info else 0,
            dataset_tag=info.dataset_tag if info else "",
        ),
    )

    try:
        validate_model(model)
    except CnnMapError as e:
        raise MapIntegrityError(f"Map layers are inconsistent with header: {e.message}") from e
    return model


def load_map(path: str | Path) -> MapModel:
    path = Path(path)
    data = path.read_bytes()
    info = None
    sidecar = info_path(path)
    if sidecar.is_file():
        try:
            info = MapInfo.model_validate_json(sidecar.read_text())
        except ValidationError as e:
            raise MapIntegrityError(f"Unreadable map info {sidecar}: {e.errors()[0]['msg']}") from e
    else:
        logger.warning("No %s next to %s; input kind assumed from n", sidecar.name, path.name)
    model = deserialize_map(data, info)
    logger.debug("Loaded map %s (%s, n=%d)", path, model.meta.architecture, model.input_spec.n)
    return model


def map_byte_length(model: MapModel) -> int:
    """Serialized size computed from the layer shapes alone."""
    size = _HEADER.size
    for layer in model.layers:
        size += 1
        if layer.kind == LayerKind.CONV:
            size += 6 * 4
        elif layer.kind == LayerKind.MAXPOOL:
            size += 4 * 4
        elif layer.kind == LayerKind.DENSE:
            size += 2 * 4
        elif layer.kind == LayerKind.DROPOUT:
            size += 4
        if layer.has_params:
            size += 4 * (int(np.prod(layer.weight_shape)) + int(np.prod(layer.bias_shape)))
    return size

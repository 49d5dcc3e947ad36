"""Forward and backward kernels for the closed layer set of the regressor.

Tensors are numpy arrays with a leading batch axis: images are (N, C, H, W),
flattened activations (N, D). Every kernel keeps the dtype of its input, so
float32 runs train and float64 runs gradient checks through the same code.
"""

import logging
from typing import Any, Optional

import numpy as np

from cnnmap.errors import DimensionError
from cnnmap.models import LayerKind, LayerSpec, RunMode

logger = logging.getLogger(__name__)

Cache = dict[str, Any]
WeightGrads = Optional[dict[str, np.ndarray]]


def conv_output_extent(extent: int, window: int, stride: int, pad: int) -> int:
    return (extent + 2 * pad - window) // stride + 1


def output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape of one sample after `layer`, without the batch axis."""
    kind = layer.kind
    if kind in (LayerKind.RELU, LayerKind.DROPOUT):
        return tuple(in_shape)
    if kind == LayerKind.FLATTEN:
        return (int(np.prod(in_shape)),)
    if kind == LayerKind.DENSE:
        if len(in_shape) != 1 or in_shape[0] != layer.in_dim:
            raise DimensionError(
                f"Layer '{layer.label}' expects input ({layer.in_dim},), got {tuple(in_shape)}"
            )
        return (layer.out_dim,)

    if len(in_shape) != 3:
        raise DimensionError(f"Layer '{layer.label}' expects a (C, H, W) input, got {tuple(in_shape)}")
    c, h, w = in_shape
    kh, kw = layer.kernel
    if kind == LayerKind.CONV and c != layer.in_depth:
        raise DimensionError(
            f"Layer '{layer.label}' filter depth {layer.in_depth} does not match input {tuple(in_shape)}",
            hint="conv filter depth must equal the number of input channels",
        )
    if h + 2 * layer.pad < kh or w + 2 * layer.pad < kw:
        raise DimensionError(
            f"Layer '{layer.label}' window {kh}x{kw} (pad {layer.pad}) exceeds input {tuple(in_shape)}"
        )
    out_c = layer.filters if kind == LayerKind.CONV else c
    return (
        out_c,
        conv_output_extent(h, kh, layer.stride, layer.pad),
        conv_output_extent(w, kw, layer.stride, layer.pad),
    )


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N*OH*OW, C*kh*kw) patch matrix, rows ordered n, oh, ow."""
    n, c, h, w = x.shape
    oh = conv_output_extent(h, kh, stride, pad)
    ow = conv_output_extent(w, kw, stride, pad)
    img = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="constant")
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for y in range(kh):
        y_max = y + stride * oh
        for xx in range(kw):
            x_max = xx + stride * ow
            col[:, :, y, xx, :, :] = img[:, :, y:y_max:stride, xx:x_max:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, -1)


def col2im(col: np.ndarray, x_shape: tuple[int, ...], kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of `im2col`: scatter-add patch rows back onto the padded image."""
    n, c, h, w = x_shape
    oh = conv_output_extent(h, kh, stride, pad)
    ow = conv_output_extent(w, kw, stride, pad)
    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=col.dtype)
    for y in range(kh):
        y_max = y + stride * oh
        for xx in range(kw):
            x_max = xx + stride * ow
            img[:, :, y:y_max:stride, xx:x_max:stride] += col[:, :, y, xx, :, :]
    return img[:, :, pad:pad + h, pad:pad + w]


def _check_batch(layer: LayerSpec, x: np.ndarray) -> None:
    if x.ndim < 2:
        raise DimensionError(f"Layer '{layer.label}' expects a batched input, got shape {x.shape}")
    if layer.kind in (LayerKind.CONV, LayerKind.MAXPOOL, LayerKind.DENSE):
        output_shape(layer, x.shape[1:])


def _check_params(layer: LayerSpec) -> None:
    if layer.weight is None or layer.bias is None:
        raise DimensionError(f"Layer '{layer.label}' has no weights")
    if layer.weight.shape != layer.weight_shape or layer.bias.shape != layer.bias_shape:
        raise DimensionError(
            f"Layer '{layer.label}' weights {layer.weight.shape}/{layer.bias.shape} "
            f"do not match declared {layer.weight_shape}/{layer.bias_shape}"
        )


def dropout_mask(shape: tuple[int, ...], keep_prob: float, rng_seed: int, dtype) -> np.ndarray:
    """Inverted-dropout mask: kept units scaled by 1/keep_prob."""
    rng = np.random.default_rng(rng_seed)
    keep = rng.random(shape) < keep_prob
    return keep.astype(dtype) / np.asarray(keep_prob, dtype=dtype)


def layer_forward(
    layer: LayerSpec,
    x: np.ndarray,
    mode: RunMode = RunMode.EVAL,
    rng_seed: int = 0,
) -> tuple[np.ndarray, Cache]:
    _check_batch(layer, x)
    kind = layer.kind

    if kind == LayerKind.CONV:
        _check_params(layer)
        kh, kw = layer.kernel
        n, _, h, w = x.shape
        oh = conv_output_extent(h, kh, layer.stride, layer.pad)
        ow = conv_output_extent(w, kw, layer.stride, layer.pad)
        col = im2col(x, kh, kw, layer.stride, layer.pad)
        w_col = layer.weight.reshape(layer.filters, -1)
        out = col @ w_col.T + layer.bias
        out = out.reshape(n, oh, ow, layer.filters).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out), {"x_shape": x.shape, "col": col}

    if kind == LayerKind.MAXPOOL:
        kh, kw = layer.kernel
        n, c, h, w = x.shape
        oh = conv_output_extent(h, kh, layer.stride, layer.pad)
        ow = conv_output_extent(w, kw, layer.stride, layer.pad)
        planes = x.reshape(n * c, 1, h, w)
        if layer.pad:
            # padded cells must never win the max
            fill = np.finfo(x.dtype).min
            planes = np.pad(planes, ((0, 0), (0, 0), (layer.pad, layer.pad), (layer.pad, layer.pad)),
                            constant_values=fill)
        col = im2col(planes, kh, kw, layer.stride, 0)
        argmax = np.argmax(col, axis=1)
        out = col[np.arange(col.shape[0]), argmax].reshape(n, c, oh, ow)
        return out, {"x_shape": x.shape, "argmax": argmax, "col_shape": col.shape}

    if kind == LayerKind.RELU:
        return np.maximum(x, 0), {"mask": x > 0}

    if kind == LayerKind.FLATTEN:
        return x.reshape(x.shape[0], -1), {"x_shape": x.shape}

    if kind == LayerKind.DENSE:
        _check_params(layer)
        return x @ layer.weight.T + layer.bias, {"x": x}

    if kind == LayerKind.DROPOUT:
        if mode != RunMode.TRAIN or layer.keep_prob >= 1.0:
            return x, {"mask": None}
        mask = dropout_mask(x.shape, layer.keep_prob, rng_seed, x.dtype)
        return x * mask, {"mask": mask}

    raise DimensionError(f"Unknown layer kind: {kind}")


def layer_backward(layer: LayerSpec, cache: Cache, upstream: np.ndarray) -> tuple[np.ndarray, WeightGrads]:
    kind = layer.kind

    if kind == LayerKind.CONV:
        n, _, h, w = cache["x_shape"]
        kh, kw = layer.kernel
        expected = (n, layer.filters,
                    conv_output_extent(h, kh, layer.stride, layer.pad),
                    conv_output_extent(w, kw, layer.stride, layer.pad))
        _check_upstream(layer, upstream, expected)
        d_out = upstream.transpose(0, 2, 3, 1).reshape(-1, layer.filters)
        col = cache["col"]
        d_weight = (d_out.T @ col).reshape(layer.weight_shape)
        d_bias = d_out.sum(axis=0)
        d_col = d_out @ layer.weight.reshape(layer.filters, -1)
        d_x = col2im(d_col, cache["x_shape"], kh, kw, layer.stride, layer.pad)
        return d_x, {"weight": d_weight, "bias": d_bias}

    if kind == LayerKind.MAXPOOL:
        n, c, h, w = cache["x_shape"]
        kh, kw = layer.kernel
        expected = (n, c,
                    conv_output_extent(h, kh, layer.stride, layer.pad),
                    conv_output_extent(w, kw, layer.stride, layer.pad))
        _check_upstream(layer, upstream, expected)
        argmax = cache["argmax"]
        d_col = np.zeros(cache["col_shape"], dtype=upstream.dtype)
        d_col[np.arange(d_col.shape[0]), argmax] = upstream.reshape(-1)
        p = layer.pad
        d_planes = col2im(d_col, (n * c, 1, h + 2 * p, w + 2 * p), kh, kw, layer.stride, 0)
        d_planes = d_planes[:, :, p:p + h, p:p + w]
        return d_planes.reshape(n, c, h, w), None

    if kind == LayerKind.RELU:
        _check_upstream(layer, upstream, cache["mask"].shape)
        return upstream * cache["mask"], None

    if kind == LayerKind.FLATTEN:
        x_shape = cache["x_shape"]
        _check_upstream(layer, upstream, (x_shape[0], int(np.prod(x_shape[1:]))))
        return upstream.reshape(x_shape), None

    if kind == LayerKind.DENSE:
        x = cache["x"]
        _check_upstream(layer, upstream, (x.shape[0], layer.out_dim))
        return upstream @ layer.weight, {"weight": upstream.T @ x, "bias": upstream.sum(axis=0)}

    if kind == LayerKind.DROPOUT:
        mask = cache["mask"]
        if mask is None:
            return upstream, None
        _check_upstream(layer, upstream, mask.shape)
        return upstream * mask, None

    raise DimensionError(f"Unknown layer kind: {kind}")


def _check_upstream(layer: LayerSpec, upstream: np.ndarray, expected: tuple[int, ...]) -> None:
    if tuple(upstream.shape) != tuple(expected):
        raise DimensionError(
            f"Layer '{layer.label}' upstream gradient {tuple(upstream.shape)} does not match "
            f"forward output {tuple(expected)}"
        )

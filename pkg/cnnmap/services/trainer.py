"""Minibatch SGD training and evaluation of a map."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Optional

import numpy as np

from cnnmap.errors import DatasetLayoutError, DimensionError
from cnnmap.models import EvalReport, MapModel, RunMode, Sequence, TrainConfig
from cnnmap.services.cnnf import backward_batch, copy_model, forward_batch, predict
from cnnmap.services.datasets import assemble_batch, check_modalities
from cnnmap.services.history import TrainingHistory
from cnnmap.services.pose_geometry import angular_error, batch_loss_and_grad

logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, MapModel], None]


def sgd_step(
    weight: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
) -> tuple[np.ndarray, np.ndarray]:
    """v <- momentum * v - lr * g; w <- w + v. Returns (new weight, new velocity)."""
    if weight.shape != grad.shape or weight.shape != velocity.shape:
        raise DimensionError(
            f"SGD shapes disagree: weight {weight.shape}, grad {grad.shape}, velocity {velocity.shape}"
        )
    velocity = momentum * velocity - lr * grad
    return weight + velocity, velocity


def _stack(sequences: list[Sequence], model: MapModel) -> tuple[np.ndarray, np.ndarray]:
    batches = [assemble_batch(seq, model.input_spec, model.input_size) for seq in sequences]
    X = np.concatenate([b[0] for b in batches]).astype(model.dtype, copy=False)
    Y = np.concatenate([b[1] for b in batches])
    return X, Y


def _batch_grads(model: MapModel, X: np.ndarray, Y: np.ndarray, beta: float, scale: float, seed: int):
    """Summed loss and gradients of one slice, upstream scaled by 1/batch size."""
    preds, caches = forward_batch(model, X, RunMode.TRAIN, rng_seed=seed, keep_caches=True)
    losses, g = batch_loss_and_grad(preds, Y, beta)
    grads = backward_batch(model, caches, (g * scale).astype(model.dtype))
    return float(losses.sum()), grads


def _accumulate(total, grads):
    if total is None:
        return [None if g is None else {k: v.copy() for k, v in g.items()} for g in grads]
    for acc, g in zip(total, grads):
        if g is not None:
            acc["weight"] += g["weight"]
            acc["bias"] += g["bias"]
    return total


def _mean_position_error(model: MapModel, X: np.ndarray, Y: np.ndarray) -> float:
    if len(X) == 0:
        return math.nan
    preds = predict(model, X).astype(np.float64)
    return float(np.mean(np.linalg.norm(preds[:, :3] - Y[:, :3], axis=1)))


def train(
    model: MapModel,
    train_seqs: list[Sequence],
    val_seq: Optional[Sequence],
    cfg: TrainConfig,
    on_epoch_end: Optional[EpochCallback] = None,
) -> tuple[MapModel, TrainingHistory]:
    """Train a copy of `model`; the input model is left untouched.

    Without a validation sequence the last `val_fraction` of the training
    frames is held out (not shuffled into training).
    """
    if not train_seqs:
        raise DatasetLayoutError("No training sequences given")
    check_modalities(train_seqs + ([val_seq] if val_seq is not None else []), model.input_spec)

    model = copy_model(model)
    X, Y = _stack(train_seqs, model)
    if val_seq is not None:
        Xv, Yv = _stack([val_seq], model)
    else:
        n_val = min(int(len(X) * cfg.val_fraction), len(X) - 1)
        split = len(X) - n_val
        X, Xv, Y, Yv = X[:split], X[split:], Y[:split], Y[split:]
    logger.info("Training on %d frames, validating on %d", len(X), len(Xv))

    rng = np.random.default_rng(cfg.seed)
    layers = model.parameter_layers()
    velocity = {id(l): (np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in layers}
    parallel = not cfg.deterministic and cfg.workers > 1
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if parallel else None
    history = TrainingHistory(tag=model.meta.dataset_tag)

    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(X)) if cfg.shuffle else np.arange(len(X))
            epoch_loss = 0.0
            for start in range(0, len(X), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                seed = int(rng.integers(0, 2**31 - 1))
                scale = 1.0 / len(idx)
                if pool is None:
                    batch_loss, grads = _batch_grads(model, X[idx], Y[idx], cfg.beta, scale, seed)
                else:
                    chunks = [c for c in np.array_split(idx, cfg.workers) if len(c)]
                    futures = [pool.submit(_batch_grads, model, X[c], Y[c], cfg.beta, scale, seed + j)
                               for j, c in enumerate(chunks)]
                    batch_loss, grads = 0.0, None
                    for fut in as_completed(futures):
                        part_loss, part_grads = fut.result()
                        batch_loss += part_loss
                        grads = _accumulate(grads, part_grads)
                epoch_loss += batch_loss

                for layer, g in zip(model.layers, grads):
                    if g is None:
                        continue
                    vw, vb = velocity[id(layer)]
                    layer.weight, vw = sgd_step(layer.weight, g["weight"], vw, cfg.learning_rate, cfg.momentum)
                    layer.bias, vb = sgd_step(layer.bias, g["bias"], vb, cfg.learning_rate, cfg.momentum)
                    velocity[id(layer)] = (vw, vb)

            entry = history.add(epoch, epoch_loss / len(X), _mean_position_error(model, Xv, Yv))
            logger.info("epoch %d/%d train_loss=%.6g val_pos_err_m=%.6g",
                        epoch, cfg.epochs, entry.train_loss, entry.val_pos_err_m)
            if on_epoch_end is not None:
                on_epoch_end(epoch, model)
    finally:
        if pool is not None:
            pool.shutdown()

    model.meta.epochs_trained += cfg.epochs
    return model, history


def evaluate(model: MapModel, sequence: Sequence) -> EvalReport:
    """Per-frame position and angular errors; predicted quaternions are normalized first."""
    check_modalities([sequence], model.input_spec)
    X, Y = assemble_batch(sequence, model.input_spec, model.input_size)
    preds = predict(model, X).astype(np.float64)

    pos_errs, ang_errs = [], []
    for i, (pred, gt) in enumerate(zip(preds, Y)):
        pos_errs.append(float(np.linalg.norm(pred[:3] - gt[:3])))
        q = pred[3:7]
        if not np.isfinite(q).all() or np.linalg.norm(q) == 0.0:
            logger.warning("Frame %d of '%s': degenerate predicted quaternion, angular error set to 180",
                           i, sequence.tag)
            ang_errs.append(180.0)
        else:
            ang_errs.append(angular_error(q, gt[3:7]))

    report = EvalReport(
        position_errors=pos_errs,
        angular_errors=ang_errs,
        true_positions=[tuple(float(v) for v in gt[:3]) for gt in Y],
        predicted_positions=[tuple(float(v) for v in p[:3]) for p in preds],
    )
    logger.info("Evaluated '%s': %d frames, position %.4g +/- %.4g m, angle %.4g deg",
                sequence.tag, report.frame_count, report.mean_pos_err_m, report.std_pos_err_m,
                report.mean_ang_err_deg)
    return report

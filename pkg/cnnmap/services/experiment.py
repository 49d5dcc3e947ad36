"""Incremental-trajectory and input-modality experiments."""

import logging
from typing import Optional

from cnnmap.errors import DatasetLayoutError
from cnnmap.models import (
    CnnfScale,
    EvalReport,
    ExperimentEntry,
    ExperimentSeries,
    InitScheme,
    InputKind,
    InputSpec,
    MapModel,
    Sequence,
    TrainConfig,
)
from cnnmap.services.cnnf import build_cnnf, init_weights, param_count
from cnnmap.services.map_store import map_byte_length
from cnnmap.services.trainer import evaluate, train

logger = logging.getLogger(__name__)


def initial_model(
    input_spec: InputSpec,
    cfg: TrainConfig,
    scale: CnnfScale = CnnfScale.REDUCED,
    init_scheme: InitScheme = InitScheme.HE,
    sigma: float = 0.01,
    keep_prob: float = 1.0,
) -> MapModel:
    model = build_cnnf(input_spec, scale, keep_prob=keep_prob)
    return init_weights(model, init_scheme, seed=cfg.seed, sigma=sigma)


def incremental_experiment(
    train_seqs: list[Sequence],
    test_seq: Sequence,
    cfg: TrainConfig,
    template: Optional[MapModel] = None,
) -> ExperimentSeries:
    """Train a fresh, identically initialized model on the first k sequences for k = 1..K."""
    if not train_seqs:
        raise DatasetLayoutError("Incremental experiment needs at least one training sequence")
    if template is None:
        template = initial_model(InputSpec(), cfg)

    entries = []
    for k in range(1, len(train_seqs) + 1):
        model, _ = train(template, train_seqs[:k], None, cfg)
        report = evaluate(model, test_seq)
        entries.append(ExperimentEntry(
            k=k, report=report, param_count=param_count(model), map_bytes=map_byte_length(model),
        ))
        logger.info("seed %d k=%d: mean position error %.4g m, median %.4g m",
                    cfg.seed, k, report.mean_pos_err_m, report.median_pos_err_m)
    return ExperimentSeries(seed=cfg.seed, entries=entries)


def run_seeds(
    train_seqs: list[Sequence],
    test_seq: Sequence,
    cfg: TrainConfig,
    seeds: int,
    input_spec: InputSpec = InputSpec(),
    scale: CnnfScale = CnnfScale.REDUCED,
) -> list[ExperimentSeries]:
    """Repeat the incremental experiment for seeds cfg.seed .. cfg.seed + seeds - 1."""
    results = []
    for seed in range(cfg.seed, cfg.seed + seeds):
        seeded = cfg.model_copy(update={"seed": seed})
        results.append(incremental_experiment(train_seqs, test_seq, seeded, initial_model(input_spec, seeded, scale)))
    improved = improved_seeds(results)
    logger.info("median error at k=%d below k=1 in %d of %d seeds", len(train_seqs), improved, len(results))
    return results


def improved_seeds(results: list[ExperimentSeries]) -> int:
    """Number of series whose last entry has a lower median position error than the first."""
    return sum(
        1 for s in results
        if s.entries and s.entries[-1].report.median_pos_err_m < s.entries[0].report.median_pos_err_m
    )


def compare_inputs(
    kinds: list[InputKind],
    train_seqs: list[Sequence],
    test_seq: Sequence,
    cfg: TrainConfig,
    scale: CnnfScale = CnnfScale.REDUCED,
) -> dict[InputKind, EvalReport]:
    """One fresh model per input kind, trained on the same sequences and tested on the same sequence."""
    reports: dict[InputKind, EvalReport] = {}
    for kind in kinds:
        model = initial_model(InputSpec(kind=kind), cfg, scale)
        trained, _ = train(model, train_seqs, None, cfg)
        reports[kind] = evaluate(trained, test_seq)
        logger.info("input %s: mean position error %.4g m, mean angle %.4g deg",
                    kind.value, reports[kind].mean_pos_err_m, reports[kind].mean_ang_err_deg)
    return reports

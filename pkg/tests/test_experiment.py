import csv

import pytest

from cnnmap.models import EvalReport, ExperimentEntry, ExperimentSeries, InputKind, InputSpec, TrainConfig
from cnnmap.services.datasets import load_scene_split
from cnnmap.services.experiment import compare_inputs, improved_seeds, incremental_experiment, initial_model, run_seeds
from cnnmap.services.reports import (
    seed_path,
    write_comparison,
    write_report,
    write_series,
    write_trajectory,
)
from tests.conftest import make_scene_dir

CFG = TrainConfig(epochs=2, batch_size=8, learning_rate=1e-4, beta=10.0, deterministic=True)


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.fixture(scope="module")
def split(scene_dir):
    train, test = load_scene_split(scene_dir)
    return train, test[0]


class TestIncrementalExperiment:
    def test_one_entry_per_prefix(self, split):
        train, test = split
        series = incremental_experiment(train[:3], test, CFG)
        assert [e.k for e in series.entries] == [1, 2, 3]
        assert len({e.param_count for e in series.entries}) == 1
        assert len({e.map_bytes for e in series.entries}) == 1
        assert all(e.report.frame_count == len(test) for e in series.entries)

    def test_identical_initialisation_per_k(self, split):
        train, test = split
        template = initial_model(InputSpec(), CFG)
        a = incremental_experiment(train[:1], test, CFG, template)
        b = incremental_experiment(train[:1], test, CFG, template)
        assert a.entries[0].report.position_errors == b.entries[0].report.position_errors

    def test_run_seeds(self, split):
        train, test = split
        results = run_seeds(train[:2], test, CFG.model_copy(update={"epochs": 1}), seeds=2)
        assert [s.seed for s in results] == [0, 1]
        assert 0 <= improved_seeds(results) <= 2

    def test_series_rejects_size_change(self):
        report = EvalReport()
        with pytest.raises(ValueError, match="k=2"):
            ExperimentSeries(entries=[
                ExperimentEntry(k=1, report=report, param_count=10, map_bytes=100),
                ExperimentEntry(k=2, report=report, param_count=10, map_bytes=104),
            ])

    @pytest.mark.slow
    def test_error_falls_with_more_trajectories(self, tmp_path):
        scene = make_scene_dir(tmp_path, trajectories=6, frames=60)
        train, test = load_scene_split(scene)
        cfg = TrainConfig(epochs=300, batch_size=16, learning_rate=1e-4, beta=250.0, deterministic=True)
        results = run_seeds(train, test[0], cfg, seeds=3)
        assert improved_seeds(results) >= 2

    @pytest.mark.slow
    def test_desk_scale_relocalisation(self, tmp_path):
        scene = make_scene_dir(tmp_path, trajectories=6, frames=60)
        train, test = load_scene_split(scene)
        cfg = TrainConfig(epochs=300, batch_size=16, learning_rate=1e-4, beta=250.0, deterministic=True)
        series = incremental_experiment(train, test[0], cfg)
        # trajectory diameter is 4 m
        assert series.entries[-1].report.mean_pos_err_m < 0.4


class TestCompareInputs:
    def test_one_report_per_kind(self, split, tmp_path):
        train, test = split
        reports = compare_inputs([InputKind.RGB, InputKind.DEPTH, InputKind.RGBPC], train[:1], test, CFG)
        assert list(reports) == [InputKind.RGB, InputKind.DEPTH, InputKind.RGBPC]
        rows = _rows(write_comparison(reports, tmp_path / "cmp.csv"))
        assert rows[0][0] == "input"
        assert [r[0] for r in rows[1:]] == ["rgb", "depth", "rgbpc"]


class TestReports:
    def test_series_csv(self, tmp_path):
        report = EvalReport(position_errors=[1.0, 2.0, 3.0], angular_errors=[4.0, 5.0, 6.0])
        series = ExperimentSeries(entries=[
            ExperimentEntry(k=k, report=report, param_count=42, map_bytes=1000) for k in (1, 2, 3)
        ])
        rows = _rows(write_series(series, tmp_path / "series.csv"))
        assert rows[0] == ["k", "mean_pos_err_m", "std_pos_err_m", "mean_ang_err_deg", "param_count", "map_bytes"]
        assert len(rows) == 4
        assert rows[1][0] == "1"
        assert float(rows[1][2]) == pytest.approx(report.std_pos_err_m, rel=1e-8)
        assert rows[1][4:] == ["42", "1000"]

    def test_empty_report_is_header_only(self, tmp_path):
        rows = _rows(write_trajectory(EvalReport(), tmp_path / "traj.csv"))
        assert rows == [["frame", "gt_x", "gt_y", "gt_z", "pred_x", "pred_y", "pred_z"]]

    def test_values_survive_reparse(self, tmp_path):
        report = EvalReport(
            position_errors=[0.123456789123, 2.5],
            angular_errors=[1.0 / 3.0, 90.0],
            true_positions=[(1.0, 2.0, 3.0), (0.1, 0.2, 0.3)],
            predicted_positions=[(1.1, 2.2, 3.3), (0.0, 0.0, 1e-7)],
        )
        rows = _rows(write_report(report, tmp_path / "frames.csv"))
        for row, p, a in zip(rows[1:], report.position_errors, report.angular_errors):
            assert float(row[1]) == pytest.approx(p, rel=1e-8)
            assert float(row[2]) == pytest.approx(a, rel=1e-8)
        rows = _rows(write_trajectory(report, tmp_path / "traj.csv"))
        assert [float(v) for v in rows[2][4:]] == pytest.approx([0.0, 0.0, 1e-7], rel=1e-8)

    def test_seed_path(self, tmp_path):
        assert seed_path(tmp_path / "series.csv", 3).name == "series-seed3.csv"

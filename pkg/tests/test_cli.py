import json
from pathlib import Path

import pytest

from rwmeans.cli import main
from rwmeans.io import read_points_csv, write_points_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture
def moons(tmp_path):
    """Labeled source and rotated labeled target CSVs."""
    source = tmp_path / "src.csv"
    target = tmp_path / "tgt.csv"
    assert main(["generate", "two-moons", "--n", "30", "--noise", "0.05", "--seed", "1", "-o", str(source)]) == 0
    assert main(
        ["generate", "two-moons", "--n", "300", "--noise", "0.05", "--seed", "2", "--rotate", "20", "-o", str(target)]
    ) == 0
    return source, target


class TestGenerate:
    def test_two_moons_format(self, tmp_path):
        out = tmp_path / "src.csv"
        assert main(["generate", "two-moons", "--n", "200", "--noise", "0.05", "--seed", "1", "-o", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "x0,x1,label,weight"
        assert len(lines) == 201

    def test_rerun_identical(self, tmp_path):
        args = ["generate", "two-moons", "--n", "50", "--seed", "4"]
        assert main(args + ["-o", str(tmp_path / "a.csv")]) == 0
        assert main(args + ["-o", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_round_trip(self, tmp_path):
        out = tmp_path / "mix.csv"
        assert main(["generate", "gaussian-mixture", "--n", "90", "--seed", "0", "-o", str(out)]) == 0
        measure = read_points_csv(out)
        assert measure.n == 90
        assert sorted(set(measure.labels.tolist())) == [0, 1, 2]

    def test_bent_tube(self, tmp_path):
        out = tmp_path / "tube.csv"
        assert main(["generate", "bent-tube", "--n", "40", "--bend", "0", "-o", str(out)]) == 0
        assert read_points_csv(out).dim == 3

    def test_zero_points(self, tmp_path, capsys):
        assert main(["generate", "two-moons", "--n", "0", "-o", str(tmp_path / "x.csv")]) == 2
        assert "Error:" in capsys.readouterr().err

    def test_unknown_kind(self, tmp_path):
        assert main(["generate", "spiral", "-o", str(tmp_path / "x.csv")]) == 2

    def test_tail_weight_only_for_moons(self, tmp_path):
        code = main(["generate", "bent-tube", "--tail-weight", "0.5", "-o", str(tmp_path / "x.csv")])
        assert code == 2


class TestVotCommand:
    def test_outputs(self, tmp_path, moons):
        source, target = moons
        out = tmp_path / "vot"
        assert main(["vot", str(target), str(source), "-o", str(out)]) == 0
        metrics = read_json(out / "metrics.json")
        assert set(metrics) == {"ot_cost", "mass_residual", "iterations", "converged"}
        assert len((out / "assignment.csv").read_text(encoding="utf-8").splitlines()) == 301
        assert len((out / "potentials.csv").read_text(encoding="utf-8").splitlines()) == 31


class TestRwmCommand:
    def test_affine_outputs(self, tmp_path, moons):
        source, target = moons
        out = tmp_path / "rwm"
        code = main(
            ["rwm", str(source), str(target), "-o", str(out), "--reg", "affine", "--lambda", "1.0", "--max-iter", "10"]
        )
        assert code == 0
        metrics = read_json(out / "metrics.json")
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert metrics["iterations"] <= 10
        assert isinstance(metrics["converged"], bool)
        assignment = (out / "assignment.csv").read_text(encoding="utf-8").splitlines()
        assert assignment[0] == "sample_index,centroid_index,predicted_label"
        assert len(assignment) == 301
        trace = (out / "trace.csv").read_text(encoding="utf-8").splitlines()
        assert trace[0].startswith("iteration,transport_cost,reg_loss,total_loss")
        assert trace[0].endswith(",accuracy")
        assert len(trace) == 1 + metrics["iterations"]
        final = read_points_csv(out / "centroids_final.csv")
        assert final.n == 30

    def test_rerun_byte_identical(self, tmp_path, moons):
        source, target = moons
        args = ["rwm", str(source), str(target), "--reg", "label", "--lambda", "0.1", "--max-iter", "5"]
        assert main(args + ["-o", str(tmp_path / "a")]) == 0
        assert main(args + ["-o", str(tmp_path / "b")]) == 0
        for name in ("assignment.csv", "centroids_final.csv", "trace.csv", "metrics.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unlabeled_target_omits_accuracy(self, tmp_path, moons):
        source, labeled = moons
        target = tmp_path / "unlabeled.csv"
        write_points_csv(target, read_points_csv(labeled).points)
        out = tmp_path / "rwm"
        assert main(["rwm", str(source), str(target), "-o", str(out), "--max-iter", "3"]) == 0
        assert "accuracy" not in read_json(out / "metrics.json")
        assert (out / "assignment.csv").exists()

    def test_label_regularizer_needs_labels(self, tmp_path):
        source = tmp_path / "src.csv"
        source.write_text("x0,x1\n0,0\n1,1\n", encoding="utf-8")
        code = main(["rwm", str(source), str(source), "-o", str(tmp_path / "out"), "--reg", "label"])
        assert code == 2

    def test_curve_needs_topology(self, tmp_path, moons):
        source, target = moons
        code = main(["rwm", str(source), str(target), "-o", str(tmp_path / "out"), "--reg", "curve"])
        assert code == 2

    def test_missing_input(self, tmp_path):
        code = main(["rwm", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "-o", str(tmp_path / "out")])
        assert code == 2


class TestWmCommand:
    def test_outputs(self, tmp_path, moons):
        source, target = moons
        out = tmp_path / "wm"
        assert main(["wm", str(source), str(target), "-o", str(out), "--max-iter", "5"]) == 0
        metrics = read_json(out / "metrics.json")
        assert "accuracy" in metrics
        trace = (out / "trace.csv").read_text(encoding="utf-8").splitlines()
        assert trace[0] == "iteration,transport_cost,reg_loss,total_loss"


class TestSkeletonCommand:
    def test_outputs(self, tmp_path):
        cloud = tmp_path / "tube.csv"
        assert main(["generate", "bent-tube", "--n", "300", "--noise", "0.05", "-o", str(cloud)]) == 0
        out = tmp_path / "skel"
        code = main(
            ["skeleton", str(cloud), str(CONFIGS / "bent_tube_topology.json"), "-o", str(out), "--max-iter", "10"]
        )
        assert code == 0
        lines = (out / "skeleton.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "node_index,x,y,z,branch_id"
        assert len(lines) == 11
        assert lines[1] == "0,0.0,0.0,0.0,0"
        metrics = read_json(out / "metrics.json")
        assert metrics["runtime_seconds"] > 0
        assert {"transport_cost", "reg_loss", "total_loss"} <= set(metrics)

    def test_malformed_topology(self, tmp_path):
        cloud = tmp_path / "tube.csv"
        assert main(["generate", "bent-tube", "--n", "50", "-o", str(cloud)]) == 0
        topology = tmp_path / "bad.json"
        topology.write_text('{"branches": [[0]]}', encoding="utf-8")
        assert main(["skeleton", str(cloud), str(topology), "-o", str(tmp_path / "out")]) == 2


class TestExperimentCommand:
    def test_grid_rows(self, tmp_path):
        config = tmp_path / "exp.json"
        config.write_text(
            json.dumps(
                {
                    "name": "tiny",
                    "dataset": {"kind": "two-moons", "source_n": 12, "target_n": 80, "noise": 0.05},
                    "angles": [10, 20, 30, 40, 50],
                    "methods": [
                        {"name": "none", "regularizer": "none"},
                        {"name": "affine", "regularizer": "affine", "lambda": 1.0},
                    ],
                    "solver": {"max_outer_iterations": 3},
                    "repetitions": 1,
                    "output_dir": "out",
                }
            ),
            encoding="utf-8",
        )
        assert main(["experiment", str(config), "--threads", "2"]) == 0
        rows = (tmp_path / "out" / "results.csv").read_text(encoding="utf-8").splitlines()
        assert len(rows) == 1 + 10

    def test_lists_all_problems(self, tmp_path, capsys):
        config = tmp_path / "exp.json"
        config.write_text(json.dumps({"angles": [], "repetitions": 0}), encoding="utf-8")
        assert main(["experiment", str(config)]) == 2
        err = capsys.readouterr().err
        assert "angles" in err
        assert "repetitions" in err
        assert "methods" in err

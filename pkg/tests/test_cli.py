import json

import numpy as np
import pytest

from crackprobe import cli, fixtures, imaging, skelgraph

FIX = fixtures.fixture_dir()


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest(out):
    doc = json.loads((out / "manifest.json").read_text())
    for p in doc["outputs"].values():
        assert (out / p).exists() or __import__("pathlib").Path(p).exists()
    return doc


class TestAnalyze:
    def test_y_fixture(self, tmp_path, capsys):
        assert run("analyze", FIX / "y_1.png", "--out-dir", tmp_path) == 0
        mids = skelgraph.MidpointGraph.from_dict(json.loads((tmp_path / "midpoints.json").read_text()))
        assert len(mids) == 3
        assert "junctions=1" in capsys.readouterr().out
        m = manifest(tmp_path)
        for key in ("gray", "binary", "edges", "filled", "mask", "skeleton", "pruned", "graph"):
            assert key in m["outputs"]

    def test_blank_image(self, tmp_path):
        img = np.full((80, 80, 3), 190, np.uint8)
        imaging.save_png(img, tmp_path / "blank.png")
        assert run("analyze", tmp_path / "blank.png", "--out-dir", tmp_path / "o") == 1
        assert "degenerate-histogram" in " ".join(manifest(tmp_path / "o")["warnings"])

    def test_corrupt_file(self, tmp_path, capsys):
        (tmp_path / "x.png").write_bytes(b"\x89PNG garbage")
        assert run("analyze", tmp_path / "x.png", "--out-dir", tmp_path / "o") == 2
        assert "load" in capsys.readouterr().err

    def test_bad_config_value(self, tmp_path):
        assert run("analyze", FIX / "y_1.png", "--rows", "0", "--out-dir", tmp_path) == 2


class TestPlanCompare:
    def test_plan_from_analysis(self, tmp_path):
        run("analyze", FIX / "y_1.png", "--out-dir", tmp_path / "a")
        assert run("plan", tmp_path / "a" / "midpoints.json", "--out-dir", tmp_path / "p") == 0
        doc = json.loads((tmp_path / "p" / "plan.json").read_text())
        assert sorted(doc["visit_order"]) == [0, 1, 2]
        assert doc["total_length_mm"] == pytest.approx(doc["travel_cost_mm"] + 3 * 2 * 20)
        # the raw graph gives the same plan
        assert run("plan", tmp_path / "a" / "graph.json", "--out-dir", tmp_path / "q") == 0
        assert json.loads((tmp_path / "q" / "plan.json").read_text()) == doc

    def test_plan_file_compare(self, tmp_path):
        run("analyze", FIX / "simple_1.png", "--out-dir", tmp_path / "a")
        run("plan", tmp_path / "a" / "midpoints.json", "--out-dir", tmp_path / "p")
        code = run("compare", tmp_path / "p" / "plan.json", "--mask", tmp_path / "a" / "mask.pgm",
                   "--rows", 1, "--out-dir", tmp_path / "c")
        assert code == 0
        row = json.loads((tmp_path / "c" / "compare.json").read_text())["rows"][0]
        assert row["full_scan_mm"] == pytest.approx(125.0)

    def test_bundled_compare(self, tmp_path, capsys):
        assert run("compare", "--out-dir", tmp_path) == 0
        rows = json.loads((tmp_path / "compare.json").read_text())["rows"]
        assert len(rows) == 9
        assert all(r["ratio"] < 1 for r in rows)
        assert "ratio" in capsys.readouterr().out

    def test_compare_needs_mask(self, tmp_path):
        assert run("compare", tmp_path / "plan.json", "--out-dir", tmp_path) == 2


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    assert run("dataset", "--n-per-class", 20, "--seed", 4, "--out-dir", out) == 0
    return out


class TestDatasetAndForest:
    def test_deterministic(self, small_dataset, tmp_path):
        assert run("dataset", "--n-per-class", 20, "--seed", 4, "--out-dir", tmp_path) == 0
        assert (tmp_path / "features.csv").read_bytes() == (small_dataset / "features.csv").read_bytes()
        names = sorted(p.name for p in (tmp_path / "traces").iterdir())
        assert names == sorted(p.name for p in (small_dataset / "traces").iterdir())
        for n in names:
            assert (tmp_path / "traces" / n).read_bytes() == (small_dataset / "traces" / n).read_bytes()

    def test_poses_in_manifest(self, small_dataset):
        m = manifest(small_dataset)
        assert len(m["poses"]) == 40
        crack = [p for p in m["poses"] if p["label"] == "crack"]
        assert len(crack) == 20 and len({p["pose_deg"] for p in crack}) > 1

    def test_default_size(self, tmp_path):
        assert run("dataset", "--out-dir", tmp_path) == 0
        files = list((tmp_path / "traces").iterdir())
        assert sum(f.suffix == ".csv" for f in files) == 300
        assert sum(f.suffix == ".json" for f in files) == 300

    def test_missing_fixtures(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert run("dataset", "--fixtures", tmp_path / "empty", "--out-dir", tmp_path / "o") == 2

    def test_train_eval_ablate(self, small_dataset, tmp_path, capsys):
        feats = small_dataset / "features.csv"
        assert run("train", feats, "--n-trees", 10, "--out-dir", tmp_path / "t") == 0
        model = json.loads((tmp_path / "t" / "model.json").read_text())
        assert model["n_trees"] == 10 and model["dim"] == 18
        assert run("eval", feats, "--runs", 2, "--n-trees", 10, "--out-dir", tmp_path / "e") == 0
        rows = json.loads((tmp_path / "e" / "metrics.json").read_text())["rows"]
        assert rows[0]["n_runs"] == 2 and rows[0]["label"] == "D2,3 + P"
        assert run("eval", feats, "--runs", 2, "--n-trees", 10, "--out-dir", tmp_path / "e2") == 0
        assert (tmp_path / "e2" / "metrics.json").read_bytes() == (tmp_path / "e" / "metrics.json").read_bytes()
        assert run("ablate", feats, "--runs", 2, "--n-trees", 10, "--out-dir", tmp_path / "a") == 0
        table = (tmp_path / "a" / "ablation.txt").read_text().splitlines()
        assert len(table) == 8
        assert table[2].startswith("P ")

    def test_painted_eval_reports_accuracy_only(self, small_dataset, tmp_path, capsys):
        feats = small_dataset / "features.csv"
        run("train", feats, "--channels", "D1,D2,D3", "--n-trees", 10, "--out-dir", tmp_path / "t")
        assert run("dataset", "--mode", "painted", "--n-per-class", 10, "--out-dir", tmp_path / "p") == 0
        code = run("eval", tmp_path / "p" / "features.csv", "--model", tmp_path / "t" / "model.json",
                   "--out-dir", tmp_path / "e")
        assert code == 0
        doc = json.loads((tmp_path / "e" / "metrics.json").read_text())["rows"][0]
        assert doc["single_class"] and list(doc["summary"]) == ["accuracy"]
        assert "single-class" in capsys.readouterr().out

    def test_corrupt_model(self, small_dataset, tmp_path):
        (tmp_path / "m.json").write_text("{")
        code = run("eval", small_dataset / "features.csv", "--model", tmp_path / "m.json",
                   "--out-dir", tmp_path / "e")
        assert code == 2


@pytest.fixture(scope="module")
def trained(tmp_path_factory, small_dataset):
    out = tmp_path_factory.mktemp("model")
    run("train", small_dataset / "features.csv", "--out-dir", out)
    return out / "model.json"


class TestCharacterize:
    def go(self, out, *extra):
        return run("characterize", FIX / "y_1.png", "--ground-truth", FIX / "y_1.json",
                   "--out-dir", out, *extra)

    def test_y_fixture(self, tmp_path, capsys):
        assert self.go(tmp_path) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["report"]["n_branches"] == 3
        assert report["mre"]["mre_branches"] == 0
        lines = (tmp_path / "nodes.jsonl").read_text().splitlines()
        assert len(lines) == 3
        assert "MRE %" in capsys.readouterr().out
        m = manifest(tmp_path)
        assert m["pose_deg"] == fixtures.load_fixture(FIX / "y_1.json").pose_deg

    def test_with_model_file(self, tmp_path, trained):
        assert self.go(tmp_path, "--model", trained) == 0
        assert json.loads((tmp_path / "report.json").read_text())["report"]["n_branches"] == 3

    def test_painted_is_all_no_crack(self, tmp_path):
        assert self.go(tmp_path, "--mode", "painted") == 0
        report = json.loads((tmp_path / "report.json").read_text())["report"]
        assert report["n_branches"] == 0
        assert all(b["width_mm"] == 0 for b in report["branches"])

    def test_occlusion_still_detects(self, tmp_path):
        assert self.go(tmp_path, "--mode", "occlusion") == 0
        assert json.loads((tmp_path / "report.json").read_text())["report"]["n_branches"] == 3

    def test_byte_identical_reruns(self, tmp_path, trained):
        self.go(tmp_path / "a", "--model", trained)
        self.go(tmp_path / "b", "--model", trained)
        for name in ("report.json", "nodes.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_bad_ground_truth(self, tmp_path):
        (tmp_path / "gt.json").write_text("[]")
        assert run("characterize", FIX / "y_1.png", "--ground-truth", tmp_path / "gt.json",
                   "--out-dir", tmp_path / "o") == 2

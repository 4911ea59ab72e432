"""CLI pipeline: exit codes, file outputs, manifest determinism."""

import json
from pathlib import Path

import pytest

from pmuevents.cli import main
from pmuevents.io import parse_stream
from pmuevents.simulate import truth_from_json

SCENARIO = {
    "scenario": {
        "duration_s": 40.0,
        "seed": 11,
        "irradiance": [[0.0, 0.2], [20.0, 0.6], [40.0, 0.6]],
        "events": [
            {"kind": "local_step", "onset_s": 6.0, "magnitude": 4.0},
            {"kind": "local_step", "onset_s": 14.0, "magnitude": -3.5},
            {"kind": "grid_voltage_step", "onset_s": 24.0, "magnitude": 144.0},
            {"kind": "local_step", "onset_s": 33.0, "magnitude": 5.0},
        ],
    }
}


def write_config(tmp_path, payload=None):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(payload or SCENARIO))
    return cfg


def run_simulate(tmp_path, out_name="sim"):
    cfg = write_config(tmp_path)
    out = tmp_path / out_name
    code = main(["simulate", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    return out


class TestSimulateCommand:
    def test_writes_four_files(self, tmp_path):
        out = run_simulate(tmp_path)
        names = sorted(p.name for p in out.iterdir())
        assert names == ["aux.csv", "manifest.json", "solar.csv", "truth.json"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["outputs"]) == {"aux.csv", "solar.csv", "truth.json"}
        stream, report = parse_stream(out / "solar.csv", "solar")
        assert report.n_dropped == 0
        assert len(stream) == 4800

    def test_missing_config_exit_2(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_bad_scenario_exit_2(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": {"duration_s": -1, "seed": 0}})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_rerun_identical_digests(self, tmp_path):
        out1 = run_simulate(tmp_path, "sim1")
        out2 = run_simulate(tmp_path, "sim2")
        m1 = json.loads((out1 / "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m1["outputs"] == m2["outputs"]
        assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()
        assert (out1 / "solar.csv").read_bytes() == (out2 / "solar.csv").read_bytes()


class TestDetectCommand:
    def test_baseline_detect_matches_truth(self, tmp_path):
        sim = run_simulate(tmp_path)
        out = tmp_path / "det"
        code = main([
            "detect", "--stream", str(sim / "solar.csv"), "--baseline",
            "--min-separation", "1.0", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "events.jsonl").read_text().splitlines()
        truth = truth_from_json(json.loads((sim / "truth.json").read_text()))
        assert len(lines) == len(truth)
        events = [json.loads(l) for l in lines]
        for t in truth:
            assert any(e["start_us"] <= t.end_us and e["end_us"] >= t.start_us for e in events)

    def test_constant_stream_empty_events(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {"scenario": {"duration_s": 30.0, "seed": 3, "irradiance": [[0.0, 0.5]], "events": []}},
        )
        sim = tmp_path / "sim0"
        assert main(["simulate", "--config", str(cfg), "--out", str(sim)]) == 0
        out = tmp_path / "det0"
        code = main(["detect", "--stream", str(sim / "solar.csv"), "--baseline", "--out", str(out)])
        assert code == 0
        assert (out / "events.jsonl").read_text() == ""

    def test_corrupt_csv_exit_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,v\n1,2\n")
        assert main(["detect", "--stream", str(bad), "--baseline", "--out", str(tmp_path / "o")]) == 2

    def test_model_flag_required(self, tmp_path):
        sim = run_simulate(tmp_path)
        code = main(["detect", "--stream", str(sim / "solar.csv"), "--out", str(tmp_path / "o")])
        assert code == 2


def run_pipeline(tmp_path):
    sim = run_simulate(tmp_path)
    det = tmp_path / "det"
    assert main([
        "detect", "--stream", str(sim / "solar.csv"), "--baseline",
        "--min-separation", "1.0", "--out", str(det),
    ]) == 0
    return sim, det


class TestAnalyzeCommand:
    def test_end_to_end_reports(self, tmp_path):
        sim, det = run_pipeline(tmp_path)
        out = tmp_path / "an"
        code = main([
            "analyze",
            "--solar", str(sim / "solar.csv"),
            "--aux", str(sim / "aux.csv"),
            "--events", str(det / "events.jsonl"),
            "--out", str(out),
        ])
        assert code == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == sorted([
            "origins.jsonl", "stages.jsonl", "features.json", "fits.json",
            "report.json", "realz_vs_production.csv", "dangle_vs_production.csv",
            "production_histogram.csv", "manifest.json",
        ])
        report = json.loads((out / "report.json").read_text())
        assert report["n_events"] == 4
        assert report["n_locally_induced"] == 3
        assert report["n_grid_induced"] == 1
        assert report["n_grid_confirmed_both"] == 1
        assert report["method"] == "both"
        origins = [json.loads(l) for l in (out / "origins.jsonl").read_text().splitlines()]
        assert len(origins) == 4
        # the grid event gets a stage segmentation
        stages = [json.loads(l) for l in (out / "stages.jsonl").read_text().splitlines()]
        assert len(stages) == 1
        assert stages[0]["labels"] is not None

    def test_empty_events_ok(self, tmp_path):
        sim, det = run_pipeline(tmp_path)
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        out = tmp_path / "an_empty"
        code = main([
            "analyze", "--solar", str(sim / "solar.csv"),
            "--events", str(empty), "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_events"] == 0
        assert report["production_histogram"]["empty"] is True
        assert report["fraction_at_or_below"]["fraction"] is None

    def test_aux_omitted_impedance_only(self, tmp_path):
        sim, det = run_pipeline(tmp_path)
        out = tmp_path / "an_noaux"
        code = main([
            "analyze", "--solar", str(sim / "solar.csv"),
            "--events", str(det / "events.jsonl"), "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["method"] == "impedance"
        origins = [json.loads(l) for l in (out / "origins.jsonl").read_text().splitlines()]
        assert all(o["method"] == "impedance" for o in origins)
        assert all(o["agreement"] is None for o in origins)

    def test_analyze_rerun_identical(self, tmp_path):
        sim, det = run_pipeline(tmp_path)
        outs = []
        for name in ("an1", "an2"):
            out = tmp_path / name
            assert main([
                "analyze", "--solar", str(sim / "solar.csv"),
                "--aux", str(sim / "aux.csv"),
                "--events", str(det / "events.jsonl"), "--out", str(out),
            ]) == 0
            outs.append(json.loads((out / "manifest.json").read_text()))
        assert outs[0]["outputs"] == outs[1]["outputs"]

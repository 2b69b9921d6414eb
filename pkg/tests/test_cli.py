import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mc3dtrack.cli import EXIT_INPUT, main
from mc3dtrack.experiments import load_default_schedule
from mc3dtrack.geometry import dump_calibration
from mc3dtrack.io import read_trajectories
from mc3dtrack.simulator import dump_scenario, standard_rig, standard_scenario

N_FRAMES = 60


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    """A short three-person scenario rendered through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    dump_scenario(standard_scenario(0, n_frames=N_FRAMES, n_actors=3), root / "scenario.json")
    assert main(["simulate", "--scenario", str(root / "scenario.json"), "--out", str(root / "sim")]) == 0
    return root


def records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines()]


def track(sim, out, *extra):
    return main([
        "track", "--config", "scenario",
        "--calibration", str(sim / "sim" / "calibration.json"),
        "--detections", str(sim / "sim" / "detections.csv"),
        "--output", str(out), *extra,
    ])


def test_simulate_outputs(sim):
    names = sorted(p.name for p in (sim / "sim").iterdir())
    assert names == ["calibration.json", "detections.csv", "groundtruth.csv", "scenario.json"]
    gt, P = read_trajectories(sim / "sim" / "groundtruth.csv")
    assert P == 15 and len(gt.ids) == 3 and gt.times[-1] == N_FRAMES - 1


def test_simulate_is_byte_identical(sim, tmp_path):
    assert main(["simulate", "--scenario", str(sim / "scenario.json"), "--out", str(tmp_path)]) == 0
    for name in ("detections.csv", "groundtruth.csv", "calibration.json"):
        assert (tmp_path / name).read_bytes() == (sim / "sim" / name).read_bytes()


def test_simulate_seed_override(sim, tmp_path):
    assert main(["simulate", "--scenario", str(sim / "scenario.json"), "--seed", "9", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "detections.csv").read_bytes() != (sim / "sim" / "detections.csv").read_bytes()


def test_track_reruns_are_byte_identical(sim, tmp_path):
    assert track(sim, tmp_path / "a.csv") == 0
    assert track(sim, tmp_path / "b.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    est, _ = read_trajectories(tmp_path / "a.csv")
    assert len(est.ids) >= 3


def test_track_empty_detections(sim, tmp_path):
    det = tmp_path / "empty.csv"
    det.write_text("# mc3dtrack detections v1 keypoints=15\n")
    out = tmp_path / "out.csv"
    code = main(["track", "--calibration", str(sim / "sim" / "calibration.json"), "--detections", str(det), "--output", str(out)])
    assert code == 0
    assert out.read_text() == "# mc3dtrack trajectories v1 keypoints=15\n"


def test_track_unknown_camera(sim, tmp_path, capsys):
    calib = tmp_path / "two.json"
    dump_calibration(standard_rig()[:2], calib)
    code = main(["track", "--calibration", str(calib), "--detections", str(sim / "sim" / "detections.csv"), "--output", str(tmp_path / "o.csv")])
    assert code == EXIT_INPUT
    assert "absent from the calibration" in capsys.readouterr().err


def test_track_keypoint_mismatch(sim, tmp_path):
    assert track(sim, tmp_path / "o.csv", "--keypoints", "25") == EXIT_INPUT


def test_track_missing_file(sim, tmp_path):
    code = main(["track", "--calibration", str(tmp_path / "nope.json"), "--detections", str(sim / "sim" / "detections.csv"), "--output", str(tmp_path / "o.csv")])
    assert code == EXIT_INPUT


def test_unknown_config(sim, tmp_path):
    assert track(sim, tmp_path / "o.csv", "--config", "nonexistent") == EXIT_INPUT


def test_evaluate_self(sim, capsys):
    gt = str(sim / "sim" / "groundtruth.csv")
    assert main(["evaluate", "--gt", gt, "--est", gt, "--report", "records"]) == 0
    (rec,) = records(capsys)
    assert rec["mota"] == 1.0 and rec["idf1"] == 1.0 and rec["ospa2"] == 0.0 and rec["mpjpe"] == 0.0


def test_evaluate_empty_estimate(sim, tmp_path, capsys):
    est = tmp_path / "est.csv"
    est.write_text("# mc3dtrack trajectories v1 keypoints=15\n")
    assert main(["evaluate", "--gt", str(sim / "sim" / "groundtruth.csv"), "--est", str(est), "--report", "records"]) == 0
    (rec,) = records(capsys)
    assert rec["mota"] == 0.0 and rec["ospa2"] == 1.0


def test_evaluate_writes_series(sim, tmp_path, capsys):
    gt = str(sim / "sim" / "groundtruth.csv")
    out = tmp_path / "series.csv"
    assert main(["evaluate", "--gt", gt, "--est", gt, "--ospa-series", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "frame,ospa2" and len(lines) == N_FRAMES + 1


def test_evaluate_empty_ground_truth(sim, tmp_path):
    empty = tmp_path / "gt.csv"
    empty.write_text("# mc3dtrack trajectories v1\n")
    assert main(["evaluate", "--gt", str(empty), "--est", str(sim / "sim" / "groundtruth.csv")]) == EXIT_INPUT


def test_sweep_single_value_matches_track_and_evaluate(sim, tmp_path, capsys):
    scenario = str(sim / "scenario.json")
    assert main(["sweep-tau", "--config", "scenario", "--scenario", scenario, "--grid", "10", "--report", "records"]) == 0
    (row,) = records(capsys)
    assert track(sim, tmp_path / "est.csv", "--tau-c", "10") == 0
    capsys.readouterr()
    gt = str(sim / "sim" / "groundtruth.csv")
    assert main(["evaluate", "--config", "scenario", "--gt", gt, "--est", str(tmp_path / "est.csv"), "--report", "records"]) == 0
    (rec,) = records(capsys)
    assert row["tau_c"] == 10.0
    for key in ("mota", "idf1", "ospa2"):
        assert row[key] == pytest.approx(rec[key], abs=1e-9)


def test_sweep_grid_order(sim, capsys):
    scenario = str(sim / "scenario.json")
    assert main(["sweep-tau", "--config", "scenario", "--scenario", scenario, "--grid", "4,12", "--report", "records"]) == 0
    assert [r["tau_c"] for r in records(capsys)] == [4.0, 12.0]


@pytest.mark.parametrize("grid", ["", " , ", "a,b"])
def test_sweep_bad_grid(sim, grid):
    assert main(["sweep-tau", "--scenario", str(sim / "scenario.json"), "--grid", grid]) == EXIT_INPUT


def write_schedule(path, segments):
    path.write_text(json.dumps({"version": 1, "segments": segments}))
    return str(path)


def test_reconfig_all_on_matches_baseline(sim, tmp_path, capsys):
    scenario = str(sim / "scenario.json")
    sched = write_schedule(tmp_path / "s.json", [{"start": 0, "end": 30, "cameras": [1, 2, 3, 4]}, {"start": 30, "end": N_FRAMES, "cameras": [1, 2, 3, 4]}])
    assert main(["reconfig", "--config", "scenario", "--scenario", scenario, "--schedule", sched, "--ospa-series", str(tmp_path / "r.csv")]) == 0
    assert track(sim, tmp_path / "est.csv") == 0
    gt = str(sim / "sim" / "groundtruth.csv")
    assert main(["evaluate", "--config", "scenario", "--gt", gt, "--est", str(tmp_path / "est.csv"), "--ospa-series", str(tmp_path / "e.csv")]) == 0
    a = np.loadtxt(tmp_path / "r.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_reconfig_default_schedule(sim, capsys):
    assert main(["reconfig", "--config", "scenario", "--scenario", str(sim / "scenario.json"), "--report", "records"]) == 0
    rows = records(capsys)
    assert [(r["start"], r["end"]) for r in rows] == [(s.start, s.end) for s in load_default_schedule(N_FRAMES)]
    assert all(0.0 <= r["ospa2"] <= 1.0 for r in rows)


def test_reconfig_unknown_camera(sim, tmp_path, capsys):
    sched = write_schedule(tmp_path / "s.json", [{"start": 0, "end": N_FRAMES, "cameras": [1, 9]}])
    assert main(["reconfig", "--scenario", str(sim / "scenario.json"), "--schedule", sched]) == EXIT_INPUT
    assert "unknown camera" in capsys.readouterr().err


def test_reconfig_schedule_must_cover_stream(sim, tmp_path):
    sched = write_schedule(tmp_path / "s.json", [{"start": 0, "end": 10, "cameras": [1]}])
    assert main(["reconfig", "--scenario", str(sim / "scenario.json"), "--schedule", sched]) == EXIT_INPUT


lines = st.lists(
    st.lists(st.one_of(st.integers(-3, 5).map(str), st.floats(-1e4, 1e4).map(repr), st.sampled_from(["", "x", "nan", "inf"])), max_size=12),
    max_size=8,
)


@settings(max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(lines, st.sampled_from(["# mc3dtrack detections v1 keypoints=1\n", "# mc3dtrack detections v1\n", "junk\n", ""]))
def test_fuzzed_ingestion_never_crashes(sim, tmp_path, rows, header):
    det = tmp_path / "fuzz.csv"
    det.write_text(header + "".join(",".join(r) + "\n" for r in rows))
    code = main(["track", "--calibration", str(sim / "sim" / "calibration.json"), "--detections", str(det), "--output", str(tmp_path / "o.csv")])
    assert code in (0, EXIT_INPUT)

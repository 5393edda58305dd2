import json
import subprocess
import sys

import numpy as np
import pytest

from autobias.cli import RUN_COLUMNS, format_report, main, percent_change
from autobias.evt_io import read_events

SMALL = {
    "preset": "flicker-100",
    "scene": {
        "width": 48,
        "height": 36,
        "duration_s": 6,
        "target": {"semi_axes": [6, 8], "sway_amp_px": 4, "nod_amp_px": 4},
    },
    "controller": {"warmup_s": 2},
}


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


@pytest.fixture
def small(tmp_path):
    return write_json(tmp_path / "small.json", SMALL)


def test_run_writes_csv_and_summary(tmp_path, small):
    out = tmp_path / "r"
    assert main(["run", "--scenario", str(small), "--seed", "7", "--out", str(out)]) == 0
    lines = (out / "run.csv").read_text().splitlines()
    assert lines[0] == ",".join(RUN_COLUMNS) == "t_s,phase,diff_on,diff_off,fo,hpf,refr,efficacy,conf_obj,conf_face,events"
    assert len(lines) == 7
    summary = json.loads((out / "summary.json").read_text())
    assert list(summary) == ["scenario", "seed", "final_biases", "triggers", "evaluations", "warmup_means", "final_means"]
    assert summary["seed"] == 7 and summary["scenario"] == "flicker-100"


def test_run_is_byte_identical(tmp_path, small):
    for d in ("a", "b"):
        assert main(["run", "--scenario", str(small), "--seed", "3", "--out", str(tmp_path / d)]) == 0
    for f in ("run.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_flags_before_verb(tmp_path, small):
    assert main(["--seed", "3", "--out", str(tmp_path / "a"), "run", "--scenario", str(small)]) == 0
    assert main(["run", "--scenario", str(small), "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "run.csv").read_bytes() == (tmp_path / "b" / "run.csv").read_bytes()


def test_batch_run_uses_named_subdirectories(tmp_path, small):
    other = write_json(tmp_path / "other.json", {**SMALL, "name": "other"})
    assert main(["run", "--scenario", str(small), "--scenario", str(other), "--out", str(tmp_path), "--jobs", "2"]) == 0
    assert (tmp_path / "flicker-100-s0" / "summary.json").exists()
    assert (tmp_path / "other-s0" / "run.csv").exists()


def test_bounds_error_names_field(tmp_path, capsys):
    bad = write_json(tmp_path / "bad.json", {"preset": "flicker-100", "bias_bounds": {"fo": [5, 55]}})
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert "bias_bounds.fo" in capsys.readouterr().err


@pytest.mark.parametrize(
    "obj, field",
    [
        ({"preset": "flicker-500", "scene": {"dt_us": 500}}, "scene.dt_us"),
        ({"preset": "flicker-100", "scene": {"colour": 1}}, "scene.colour"),
        ({"preset": "flicker-9"}, "preset"),
        ({"preset": "flicker-100", "detector": {"c_min": "two"}}, "detector.c_min"),
    ],
)
def test_config_errors_exit_1(tmp_path, capsys, obj, field):
    path = write_json(tmp_path / "s.json", obj)
    assert main(["sim", "--scenario", str(path), "--out", str(tmp_path)]) == 1
    assert field in capsys.readouterr().err


def test_json_syntax_error_reports_position(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text('{"preset": "flicker-100",\n  "scene": {,}}')
    assert main(["sim", "--scenario", str(path)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_usage_error_exits_1():
    assert subprocess.run([sys.executable, "-m", "autobias", "run", "--bogus"], capture_output=True).returncode == 1


def test_missing_source_is_config_error():
    assert main(["run"]) == 1


def test_broken_detector_is_runtime_error(tmp_path, small, capsys):
    cmd = f"{sys.executable} -m autobias.detector.echo_stub --bad-id"
    assert main(["run", "--scenario", str(small), "--out", str(tmp_path), "--detector-cmd", cmd]) == 2
    assert "frame_id" in capsys.readouterr().err


def test_sim_static_scene_is_header_only(tmp_path):
    static = write_json(tmp_path / "s.json", {"scene": {"width": 20, "height": 10, "duration_s": 1}})
    assert main(["sim", "--scenario", str(static), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "events.csv").read_text() == "t_us,x,y,p\n"


def test_sim_default_biases_flag_is_noop(tmp_path, small):
    main(["sim", "--scenario", str(small), "--duration", "0.5", "--out", str(tmp_path / "a")])
    main(["sim", "--scenario", str(small), "--duration", "0.5", "--out", str(tmp_path / "b"), "--biases", "0,0,0,0,0"])
    assert (tmp_path / "a" / "events.csv").read_bytes() == (tmp_path / "b" / "events.csv").read_bytes()


def test_sim_bin_round_trip_and_pgm(tmp_path, small):
    assert main(["sim", "--scenario", str(small), "--duration", "1", "--out", str(tmp_path / "c")]) == 0
    assert main(["sim", "--scenario", str(small), "--duration", "1", "--format", "bin", "--export-pgm",
                 "--out", str(tmp_path / "b")]) == 0
    assert main(["convert", str(tmp_path / "b" / "events.bin"), str(tmp_path / "back.csv")]) == 0
    assert (tmp_path / "back.csv").read_bytes() == (tmp_path / "c" / "events.csv").read_bytes()
    assert len(list((tmp_path / "b" / "frames").glob("frame_*.pgm"))) == 8
    assert read_events(tmp_path / "back.csv").size > 0


def test_sim_rejects_partial_step(tmp_path, small):
    assert main(["sim", "--scenario", str(small), "--duration", "0.00001", "--out", str(tmp_path)]) == 1


def summary(name="flicker-100", biases=(35, -2, -3, 0, -2), warm=0.2, final=0.4):
    keys = ("diff_on", "diff_off", "fo", "hpf", "refr")
    b = dict(zip(keys, (biases[1], biases[0], biases[2], biases[3], biases[4])))
    means = lambda v: {"efficacy": v, "conf_obj": v, "conf_face": v}  # noqa: E731
    return {"scenario": name, "seed": 0, "final_biases": b, "triggers": 1, "evaluations": 3,
            "warmup_means": means(warm), "final_means": means(final)}


def test_report_column_order_and_percentages(tmp_path, capsys):
    path = write_json(tmp_path / "summary.json", summary())
    assert main(["report", str(tmp_path)]) == 0
    head, row = capsys.readouterr().out.splitlines()
    assert head.split() == ["scenario", "seed", "diff_off", "diff_on", "fo", "hpf", "refr",
                            "d_conf_obj", "d_conf_face", "d_efficacy"]
    assert row.split() == ["flicker-100", "0", "35", "-2", "-3", "0", "-2", "+100%", "+100%", "+100%"]
    assert path.exists()


def test_report_multiple_rows():
    text = format_report([summary(), summary("flicker-200", warm=0.0, final=0.9)])
    assert len(text.splitlines()) == 3
    assert "+inf%" in text


def test_report_corrupt_summary(tmp_path):
    (tmp_path / "summary.json").write_text("{}")
    assert main(["report", str(tmp_path)]) == 1


def test_percent_change():
    assert percent_change(0.2, 0.4) == "+100%"
    assert percent_change(0.5, 0.25) == "-50%"
    assert percent_change(0.0, 0.0) == "+0%"
    assert percent_change(None, 0.3) == "n/a"


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "autobias", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert all(v in res.stdout for v in ("run", "sim", "report", "convert"))


def test_run_csv_numbers_are_fixed_precision(tmp_path, small):
    main(["run", "--scenario", str(small), "--out", str(tmp_path)])
    row = (tmp_path / "run.csv").read_text().splitlines()[1].split(",")
    assert row[1] == "Monitoring"
    assert all(len(v.split(".")[1]) == 6 for v in row[7:10])
    assert np.isfinite(float(row[7]))


def test_report_batch_directory(tmp_path, capsys):
    for name in ("flicker-100", "flicker-200"):
        (tmp_path / name).mkdir()
        write_json(tmp_path / name / "summary.json", summary(name))
    assert main(["report", str(tmp_path)]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert [r.split()[0] for r in rows] == ["flicker-100", "flicker-200"]

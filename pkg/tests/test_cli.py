import io
import json

import pytest

from disloc.cli import (EXIT_CONFIG, EXIT_FAILED, EXIT_OK, bundled_configs, main, run_config,
                        threshold_manifest, validate_config, verify_all)
from disloc.experiments import ConfigError


def forward_cfg(**extra):
    cfg = {
        "kind": "forward",
        "outer": [[0, 0], [1, 0], [1, 1], [0, 1]],
        "layers": [{"lambda": 1.0, "mu": 1.0}],
        "dirichlet_arcs": [0],
        "measurement_arc": {"edge": 2},
        "fault": {"vertices": [[0.3, 0.4], [0.5, 0.6], [0.7, 0.45]]},
        "options": {"h": 0.1, "n_samples": 11},
    }
    cfg.update(extra)
    return cfg


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_zero_jump_forward_run(tmp_path, capsys):
    cfg = forward_cfg(thresholds={"max_abs_u": 1e-14})
    code = main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "passed" and report["results"]["max_abs_u"] == 0.0
    assert (tmp_path / "out" / "measurement.csv").exists()
    assert "ok" in capsys.readouterr().out


def test_forward_output_is_byte_identical(tmp_path):
    cfg = forward_cfg(jumps={"f": [[1, 0], [1, 0]]})
    for d in ("a", "b"):
        assert main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / d)]) == EXIT_OK
    a = (tmp_path / "a" / "measurement.csv").read_bytes()
    assert a == (tmp_path / "b" / "measurement.csv").read_bytes()
    assert len(a.splitlines()) == 12


@pytest.mark.parametrize("cfg, pointer", [
    ({k: v for k, v in forward_cfg().items() if k != "layers"}, "/layers"),
    (forward_cfg(kind="nonsense"), "/kind"),
    (forward_cfg(layers=[{"lambda": 1.0}]), "/layers/0/mu"),
    (forward_cfg(measurement_arc={"edge": -1}), "/measurement_arc/edge"),
    ({"kind": "lemma_suite"}, "/seed"),
])
def test_invalid_config_pointer(cfg, pointer):
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert exc.value.pointer == pointer
    code, report, _ = run_config(cfg)
    assert code == EXIT_CONFIG and report["pointer"] == pointer


def test_geometry_error_reported_as_config_error(tmp_path, capsys):
    cfg = forward_cfg(jumps={"f": [[1, 0]]})
    assert main(["--config", write(tmp_path, cfg)]) == EXIT_CONFIG
    assert "/jumps/f" in capsys.readouterr().err


def test_missing_and_malformed_files(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad)]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG
    assert main(["--config", write(tmp_path, forward_cfg()), "--seed", "-1"]) == EXIT_CONFIG


def test_lemma_suite_run_and_seed_override():
    cfg = bundled_configs()["criterion_11"]
    code, report, _ = run_config(cfg)
    assert code == EXIT_OK
    code2, report2, _ = run_config({k: v for k, v in cfg.items() if k != "seed"}, seed=0)
    assert code2 == EXIT_OK and report2["seed"] == 0
    strip = lambda r: [c for c in r["checks"] if c["name"] != "runtime_s"]
    assert strip(report) == strip(report2)


def test_tampered_threshold_fails():
    # an impossible runtime bound must turn the criterion red
    res = verify_all(overrides={"criterion_11": {"thresholds": {"runtime_s": 1e-9}}}, only={"criterion_11"},
                     stream=io.StringIO())
    assert not res["passed"]
    assert res["criteria"]["criterion_11"]["exit_code"] == EXIT_FAILED
    assert res["criteria"]["criterion_11"]["failed_checks"] == ["runtime_s"]


def test_verify_all_line_format(capsys):
    import sys
    res = verify_all(only={"criterion_11"}, stream=sys.stdout)
    line = capsys.readouterr().out.strip()
    assert res["passed"] and line.startswith("criterion_11: PASS")


def test_threshold_manifest(tmp_path, capsys):
    rows = threshold_manifest(bundled_configs())
    assert ("criterion_03", "min_order", 1.8) in rows
    assert main(["--thresholds"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "config,threshold,value" and len(out) == len(rows) + 1
    p = write(tmp_path, forward_cfg(thresholds={"max_abs_u": 0.5}), "mine.json")
    assert main(["--thresholds", "--config", p]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[1] == "mine,max_abs_u,0.5"


def test_bundled_configs_cover_all_criteria():
    cfgs = bundled_configs()
    assert list(cfgs) == [f"criterion_{i:02d}" for i in range(1, 12)]
    for cfg in cfgs.values():
        validate_config(cfg)
        assert "runtime_s" in cfg["thresholds"]

"""The eleven acceptance criteria, each run from its bundled configuration.

Every criterion prints one PASS/FAIL line (collected in the terminal summary).
Thresholds live in the JSON files under disloc/configs and are not adjusted here.
"""
import pytest

from disloc.cli import EXIT_OK, bundled_configs, run_config

CONFIGS = bundled_configs()


def _line(name, cfg, code, report):
    checks = report.get("checks", [])
    parts = [f"{c['name']}={c['value']:.3g}{c['relation']}{c['threshold']:.3g}"
             + ("" if c["passed"] else " [X]") for c in checks]
    word = "PASS" if code == EXIT_OK else "FAIL"
    return f"{name}: {word} - {cfg.get('description', cfg['kind'])} | " + "; ".join(parts)


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_criterion(name, acceptance_lines):
    cfg = CONFIGS[name]
    code, report, _ = run_config(cfg)
    line = _line(name, cfg, code, report)
    acceptance_lines[name] = line
    print(line)
    failed = [c for c in report.get("checks", []) if not c["passed"]]
    assert code != EXIT_OK or report["checks"], "criterion ran no checks"
    assert code == EXIT_OK, f"{report['status']}: {report.get('error', '')} failed={failed}"


def test_criterion_05_identifiable_relation(acceptance_lines):
    """Companion line: the relation the probe identity actually determines, g1 = -Rot(theta) g2."""
    code, report, _ = run_config(CONFIGS["criterion_05"])
    checks = {c["name"]: c for c in report["checks"]}
    keep = [k for k in checks if k != "rotation_residual[g1=Theta g2]"]
    ok = all(checks[k]["passed"] for k in keep)
    parts = "; ".join(f"{k}={checks[k]['value']:.3g}" for k in keep)
    acceptance_lines["criterion_05b"] = (f"criterion_05b: {'PASS' if ok else 'FAIL'} - "
                                        f"companion, identifiable relation | {parts}")
    assert ok

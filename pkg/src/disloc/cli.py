"""Command-line batch runner.

    disloc --config run.json --out results/ [--threads N] [--seed S]
    disloc --verify-all [--out results/] [--threads N]
    disloc --thresholds [--config run.json]

Exit codes: 0 all checks passed, 1 some check failed, 2 invalid configuration
(the message carries a JSON pointer), 3 numerical failure.
"""
import argparse
import copy
import hashlib
from importlib import resources
import json
import logging
import math
import os
from pathlib import Path
import sys
import time

import jsonschema
import numpy as np

from .corner_probe import ProbeError
from .dimred import DimRedError
from .experiments import RUNNERS, ConfigError, Context
from .forward_solver import SolverError
from .geometry import GeometryError
from .inverse import InverseError

REPORT_SCHEMA = "report_v1"
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
RANDOMIZED = ("lemma_suite", "dimred_suite", "reconstruct")
GEOMETRY_KINDS = ("forward", "convergence")

log = logging.getLogger("disloc")

_POINTS = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
_LAYER = {"type": "object", "required": ["lambda", "mu"],
          "properties": {"lambda": {"type": "number"}, "mu": {"type": "number"}}}
GEOMETRY_SCHEMA = {
    "type": "object",
    "required": ["outer", "layers", "measurement_arc"],
    "properties": {
        "outer": {**_POINTS, "minItems": 3},
        "layers": {"type": "array", "items": _LAYER, "minItems": 1},
        "interfaces": {"type": "array", "items": _POINTS},
        "dirichlet_arcs": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "measurement_arc": {"type": "object", "required": ["edge"],
                            "properties": {"edge": {"type": "integer", "minimum": 0},
                                           "t0": {"type": "number"}, "t1": {"type": "number"}}},
        "omega": {"type": "number", "minimum": 0},
        "fault": {"type": "object", "required": ["vertices"],
                  "properties": {"vertices": {**_POINTS, "minItems": 2}, "closed": {"type": "boolean"},
                                 "flip": {"type": "boolean"}}},
        "jumps": {"type": "object"},
    },
}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(RUNNERS)},
        "seed": {"type": "integer", "minimum": 0},
        "description": {"type": "string"},
        "thresholds": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "options": {"type": "object"},
    },
}


def _pointer(path):
    return "".join(f"/{p}" for p in path)


def validate_config(cfg, seed=None):
    """Raise ConfigError (with a JSON pointer) unless cfg is a well-formed experiment configuration."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object", "")
    schema = CONFIG_SCHEMA
    if cfg.get("kind") in GEOMETRY_KINDS:
        schema = {**CONFIG_SCHEMA, "required": CONFIG_SCHEMA["required"] + GEOMETRY_SCHEMA["required"],
                  "properties": {**CONFIG_SCHEMA["properties"], **GEOMETRY_SCHEMA["properties"]}}
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(cfg),
                    key=lambda e: (len(e.absolute_path), _pointer(e.absolute_path)))
    if errors:
        err = errors[0]
        ptr = _pointer(err.absolute_path)
        if err.validator == "required":
            missing = [k for k in err.validator_value if k not in err.instance]
            ptr += f"/{missing[0]}"
        raise ConfigError(err.message, ptr)
    if cfg["kind"] in RANDOMIZED and cfg.get("seed") is None and seed is None:
        raise ConfigError("randomized experiment needs a seed", "/seed")


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}", "") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "") from None


def _jsonable(o):
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return _jsonable(o.item())
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(x) for x in o]
    return o


def run_config(cfg, seed=None, threads=1):
    """Validate and execute one configuration; returns (exit code, report dict, tables)."""
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
    report = {"schema": REPORT_SCHEMA, "kind": cfg.get("kind") if isinstance(cfg, dict) else None,
              "config_sha256": digest}
    t0 = time.perf_counter()
    tables = {}
    try:
        validate_config(cfg, seed)
        ctx = Context(cfg, seed, threads)
        report["seed"] = ctx.seed
        out = RUNNERS[cfg["kind"]](ctx)
        runtime = time.perf_counter() - t0
        if "runtime_s" in cfg.get("thresholds", {}):
            out.check("runtime_s", runtime, "<", ctx.thr("runtime_s"))
        tables = out.tables
        report.update(status="passed" if out.passed else "failed", runtime_s=runtime,
                      checks=[c.__dict__ for c in out.checks], results=out.results, tables=sorted(tables))
        code = EXIT_OK if out.passed else EXIT_FAILED
    except ConfigError as exc:
        report.update(status="invalid_config", error=str(exc), pointer=exc.pointer)
        code = EXIT_CONFIG
    except (SolverError, ProbeError, InverseError, DimRedError, GeometryError, FloatingPointError,
            np.linalg.LinAlgError, ZeroDivisionError) as exc:
        log.debug("numerical failure", exc_info=True)
        report.update(status="numerical_failure", error=f"{type(exc).__name__}: {exc}")
        code = EXIT_NUMERIC
    report["exit_code"] = code
    return code, _jsonable(report), tables


def write_outputs(out_dir, report, tables):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, text in tables.items():
        (out / name).write_text(text)


# ----------------------------------------------------------------------------
# bundled acceptance configurations

def bundled_configs():
    """Mapping criterion name -> configuration, in criterion order."""
    pkg = resources.files("disloc") / "configs"
    names = sorted(p.name for p in pkg.iterdir() if p.name.endswith(".json"))
    return {n[:-5]: json.loads((pkg / n).read_text()) for n in names}


def _merge(base, patch):
    out = copy.deepcopy(base)
    for k, v in patch.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def verify_all(overrides=None, out_dir=None, threads=1, stream=sys.stdout, only=None):
    """Run every bundled acceptance configuration and print one line per criterion.

    ``overrides`` maps a criterion name to a partial configuration merged over
    the bundled one.  Returns {"passed": bool, "criteria": {name: summary}}.
    """
    overrides = overrides or {}
    summary = {}
    for name, cfg in bundled_configs().items():
        if only is not None and name not in only:
            continue
        cfg = _merge(cfg, overrides.get(name, {}))
        code, report, tables = run_config(cfg, threads=threads)
        failed = [c["name"] for c in report.get("checks", []) if not c["passed"]]
        summary[name] = {"exit_code": code, "status": report["status"], "failed_checks": failed,
                         "runtime_s": report.get("runtime_s")}
        word = "PASS" if code == EXIT_OK else "FAIL"
        extra = f" failed: {', '.join(failed)}" if failed else ""
        if code in (EXIT_CONFIG, EXIT_NUMERIC):
            extra = f" {report['status']}: {report.get('error')}"
        rt = report.get("runtime_s")
        print(f"{name}: {word} ({cfg.get('description', cfg['kind'])})"
              + (f" [{rt:.1f}s]" if rt is not None else "") + extra, file=stream, flush=True)
        if out_dir is not None:
            write_outputs(Path(out_dir) / name, report, tables)
    return {"passed": all(s["exit_code"] == EXIT_OK for s in summary.values()), "criteria": summary}


def threshold_manifest(configs):
    """Rows (config, threshold, value) for every numeric threshold in the given configurations."""
    rows = []
    for name, cfg in configs.items():
        for key, val in sorted(cfg.get("thresholds", {}).items()):
            rows.append((name, key, val))
    return rows


# ----------------------------------------------------------------------------

def _setup_logging():
    level = os.environ.get("DISLOC_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def build_parser():
    p = argparse.ArgumentParser(prog="disloc", description="Run fault-identification experiments.")
    p.add_argument("--config", help="experiment configuration (JSON)")
    p.add_argument("--out", help="output directory for report.json and CSV tables")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent sub-experiments")
    p.add_argument("--seed", type=int, help="seed overriding the configuration's")
    p.add_argument("--verify-all", action="store_true", help="run the bundled acceptance configurations")
    p.add_argument("--thresholds", action="store_true", help="print the threshold manifest and exit")
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.thresholds:
        try:
            configs = {Path(args.config).stem: load_config(args.config)} if args.config else bundled_configs()
        except ConfigError as exc:
            print(f"error: {exc} (at '{exc.pointer}')", file=sys.stderr)
            return EXIT_CONFIG
        print("config,threshold,value")
        for row in threshold_manifest(configs):
            print(",".join(map(str, row)))
        return EXIT_OK
    if args.verify_all:
        res = verify_all(out_dir=args.out, threads=args.threads)
        n_ok = sum(s["exit_code"] == EXIT_OK for s in res["criteria"].values())
        print(f"{n_ok}/{len(res['criteria'])} criteria passed")
        return EXIT_OK if res["passed"] else EXIT_FAILED
    if not args.config:
        print("error: --config or --verify-all required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report, tables = run_config(cfg, args.seed, args.threads)
    if args.out:
        write_outputs(args.out, report, tables)
    if code == EXIT_CONFIG:
        print(f"error: {report['error']} (at '{report['pointer']}')", file=sys.stderr)
    elif code == EXIT_NUMERIC:
        print(f"error: {report['error']}", file=sys.stderr)
    else:
        for c in report["checks"]:
            print(f"{'ok  ' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} {c['relation']} "
                  f"{c['threshold']:.3e}")
    return code


if __name__ == "__main__":
    sys.exit(main())

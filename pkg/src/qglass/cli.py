"""``qglass <method> [--config FILE] [--seed N] [--out DIR] [--set key=value ...]``.

Exit status: 0 on success, 2 for an invalid config, 3 when a resource cap is
hit, 1 for any other failure. Failures also leave ``error.json`` in the
output directory (when one can be created) and print the same JSON on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from qglass import kernels
from qglass.config import METHODS, ConfigError, build, load_file, parse_override, schema_table
from qglass.landscape import CapExceededError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def versions() -> dict:
    return {"qglass": _version(), "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": kernels.BACKEND}


def load_values(path) -> dict:
    """Flat keys from a config file; a manifest written by a previous run is accepted too."""
    values = load_file(path)
    if any(k.startswith("config.") for k in values):
        values = {k[len("config."):]: v for k, v in values.items() if k.startswith("config.")}
    return values


def gather(args) -> dict:
    values = load_values(args.config) if args.config else {}
    for item in args.set or []:
        k, v = parse_override(item)
        values[k] = v
    if getattr(args, "method", None):
        values["method"] = args.method
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["out"] = args.out
    if getattr(args, "workers", None) is not None:
        values["workers"] = args.workers
    return values


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fail(out: Path | None, kind: str, errors, code: int) -> int:
    doc = {"status": "error", "kind": kind, "errors": list(errors)}
    text = json.dumps(doc, indent=2)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
    return code


def run(values: dict) -> int:
    """Validate, run and record one experiment; returns the exit status."""
    from qglass.experiments import RUNNERS

    cfg, errors = build(values)
    out = Path(cfg["out"]) if isinstance(cfg.get("out"), str) else None
    if errors:
        kind = "resource_cap" if all("cap" in e for e in errors) else "invalid_config"
        return _fail(out, kind, errors, EXIT_CAP if kind == "resource_cap" else EXIT_CONFIG)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    start = time.perf_counter()
    try:
        paths = RUNNERS[cfg["method"]](cfg, out)
    except (CapExceededError, MemoryError) as exc:
        return _fail(out, "resource_cap", [str(exc)], EXIT_CAP)
    except (ValueError, ConfigError) as exc:
        return _fail(out, "invalid_config", [str(exc)], EXIT_CONFIG)
    wall = time.perf_counter() - start
    manifest = {
        "config": cfg,
        "seed": cfg["seed"],
        "versions": versions(),
        "wall_time_s": wall,
        "artifacts": {Path(p).name: _sha256(Path(p)) for p in paths},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logging.getLogger("qglass").info("%s finished in %.1f s; %d artifacts in %s", cfg["method"], wall, len(paths), out)
    return EXIT_OK


def _common(p):
    p.add_argument("--config", help="YAML or JSON file with flat dotted keys (or a previous manifest.json)")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key; repeatable")


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qglass", description="Bang-bang state preparation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for m in METHODS:
        p = sub.add_parser(m, help=f"run the {m} experiment")
        _common(p)
        p.add_argument("--workers", type=int, help="worker processes for independent restarts")
    p = sub.add_parser("run", help="run the method named in the config")
    _common(p)
    p.add_argument("--workers", type=int)
    p = sub.add_parser("validate", help="check a config without computing anything")
    _common(p)
    p.add_argument("--method", choices=METHODS)
    sub.add_parser("schema", help="list every config key with its default")
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    if args.command == "schema":
        print(schema_table())
        return EXIT_OK
    if args.command in METHODS:
        args.method = args.command
    elif args.command == "run":
        args.method = None
    try:
        values = gather(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        return _fail(None, "invalid_config", errors, EXIT_CONFIG)
    if args.command == "validate":
        _, errors = build(values)
        print(json.dumps({"ok": not errors, "errors": errors}, indent=2))
        return EXIT_OK if not errors else EXIT_CONFIG
    return run(values)


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Validate captured API bodies against docs/schemas.

usage: validate_schemas.py SCHEMA_DIR SAMPLE_DIR...
Each <sample dir>/<name>.json is checked against SCHEMA_DIR/<name>.schema.json.
"""
import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource


def main():
    schema_dir = pathlib.Path(sys.argv[1])
    sample_dirs = [pathlib.Path(d) for d in sys.argv[2:]]
    schemas = {p.name: json.loads(p.read_text()) for p in schema_dir.glob("*.schema.json")}
    registry = Registry().with_resources(
        (name, Resource.from_contents(s)) for name, s in schemas.items())

    samples = []
    for d in sample_dirs:
        found = sorted(d.glob("*.json"))
        if not found:
            print(f"[FAIL] no samples in {d}")
            return 1
        samples += found
    failed = 0
    for sample in samples:
        name = sample.stem + ".schema.json"
        if name not in schemas:
            print(f"[FAIL] {sample}: no schema {name}")
            failed += 1
            continue
        v = jsonschema.Draft202012Validator(schemas[name], registry=registry)
        errors = list(v.iter_errors(json.loads(sample.read_text())))
        for e in errors:
            print(f"[FAIL] {sample}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        if not errors:
            print(f"[PASS] {sample}")
        failed += bool(errors)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Generates traces for the sample catalog with the `trace` binary and checks
every file (and its mutations' structural shape) against schema/trace.schema.json.

    schema_conformance.py TRACE_BIN MAKE_TINY_MODEL_BIN SOURCE_DIR
"""
import glob
import json
import os
import subprocess
import sys
import tempfile

try:
    import jsonschema
except ImportError:
    print("jsonschema not installed; skipping")
    sys.exit(77)


def main():
    trace_bin, make_model, src = sys.argv[1:4]
    schema = json.load(open(os.path.join(src, "schema", "trace.schema.json")))
    validator = jsonschema.Draft202012Validator(schema)
    with tempfile.TemporaryDirectory() as tmp:
        model = os.path.join(tmp, "demo")
        subprocess.run([make_model, "--out", model, "--n-layer", "2", "--n-head", "2", "--d-model", "8",
                        "--n-ctx", "96", "--vocab-size", "50257"], check=True, stdout=subprocess.DEVNULL)
        for capture in ("none", "simple", "detailed"):
            out = os.path.join(tmp, capture)
            subprocess.run([trace_bin, "generate", "--model", model, "--tokenizer", os.path.join(src, "assets", "gpt2"),
                            "--catalog", os.path.join(src, "catalog", "prompts.json"), "--out", out,
                            "--capture", capture, "--attention", "per_head", "--max-new-tokens", "5",
                            "--strategy", "top_k", "--seed", "3"], check=True, stdout=subprocess.DEVNULL)
        files = sorted(glob.glob(os.path.join(tmp, "*", "traces", "**", "*.json"), recursive=True))
        bad = 0
        for f in files:
            doc = json.load(open(f))
            errors = list(validator.iter_errors(doc))
            if errors:
                bad += 1
                print(f"{f}: {errors[0].message[:300]}")
            # Unknown fields must be rejected by the schema as well.
            doc["unexpected"] = 1
            if validator.is_valid(doc):
                bad += 1
                print(f"{f}: schema accepted an unknown top-level field")
        print(f"{len(files)} traces checked, {bad} problem(s)")
        return 1 if bad or not files else 0


if __name__ == "__main__":
    sys.exit(main())

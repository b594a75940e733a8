"""Ready-made callbacks for smoke tests and harness integration checks.

The generator stubs replay a directory or synthesize deterministic path
names; the MUT stubs emit fixed outputs, optionally switching to a wrong
output (or dying outright) on inputs whose name contains a marker
substring.  Real adapters replace these callbacks with model calls; see
the examples directory for the shape of a torch or diffusion wrapper.
"""
from __future__ import annotations

import random
import sys
from pathlib import Path


def class_output(label) -> dict:
    return {"kind": "class", "label": str(label)}


def regression_output(**fields) -> dict:
    return {"kind": "regression", "outputs": {k: float(v) for k, v in fields.items()}}


def directory_generator(directory):
    """Sample count paths from a directory, without replacement per request."""
    files = sorted(str(p) for p in Path(directory).iterdir() if p.is_file())

    def generate(prompt: str, count: int, seed: int):
        if count > len(files):
            raise ValueError(
                f"directory holds {len(files)} inputs, {count} requested"
            )
        return random.Random(seed).sample(files, count)

    return generate


def synthetic_generator(template: str = "gen-{seed}-{index:04d}.png"):
    """Emit deterministic synthetic path names; no files involved."""

    def generate(prompt: str, count: int, seed: int):
        return [template.format(seed=seed, index=i, prompt=prompt) for i in range(count)]

    return generate


def fixed_mut(output: dict):
    return lambda input_ref: output


def marker_mut(good: dict, bad: dict, marker: str):
    """Emit bad output when the input file name contains the marker."""

    def infer(input_ref: str):
        return bad if marker in Path(input_ref).name else good

    return infer


def crashing_mut(good: dict, marker: str, exit_code: int = 3):
    """Die on marked inputs; exercises the harness crash isolation."""

    def infer(input_ref: str):
        if marker in Path(input_ref).name:
            sys.stderr.write(f"adapter stub crashing on {input_ref}\n")
            sys.stderr.flush()
            sys.exit(exit_code)
        return good

    return infer

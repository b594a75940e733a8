"""Protocol session loop.

An adapter session emits one handshake line, then answers one request
per line until stdin closes.  Every outgoing line is flushed
immediately; malformed or failing requests produce an {"error": ...}
line and the session continues, never a silent exit.

Wire format (one JSON object per line):
  handshake   {"protocol": "rbt/1", "kind": "generator" | "mut"}
  generator   {"op": "generate", "prompt": str, "count": int, "seed": int}
              -> count x {"path": str}, then {"op": "done"}
  mut         {"op": "infer", "input": str}
              -> {"kind": "class", "label": str}
               | {"kind": "regression", "outputs": {field: number}}
"""
from __future__ import annotations

import json
import sys
from typing import Callable, TextIO

PROTOCOL_VERSION = "rbt/1"
ROLE_GENERATOR = "generator"
ROLE_MUT = "mut"


def _emit(stdout: TextIO, obj: dict) -> None:
    stdout.write(json.dumps(obj) + "\n")
    stdout.flush()


def _handle_generate(stdout: TextIO, req: dict, callback: Callable) -> None:
    prompt = req.get("prompt", "")
    count = req.get("count")
    seed = req.get("seed", 0)
    if not isinstance(count, int) or count < 0:
        _emit(stdout, {"error": f"generate needs a non-negative integer count, got {count!r}"})
        return
    paths = callback(prompt, count, seed)
    for p in paths:
        _emit(stdout, {"path": str(p)})
    _emit(stdout, {"op": "done"})


def _handle_infer(stdout: TextIO, req: dict, callback: Callable) -> None:
    if "input" not in req:
        _emit(stdout, {"error": "infer needs an 'input' field"})
        return
    out = callback(req["input"])
    if not isinstance(out, dict) or out.get("kind") not in ("class", "regression"):
        raise ValueError(f"callback returned a non-protocol output: {out!r}")
    _emit(stdout, out)


def serve(
    role: str,
    callback: Callable,
    stdin: TextIO = None,
    stdout: TextIO = None,
) -> None:
    """Run a protocol session until stdin closes.

    For role "generator" the callback maps (prompt, count, seed) to an
    iterable of paths; for role "mut" it maps an input reference to a
    protocol output dict (use class_output / regression_output from
    stubs for convenience).
    """
    if role not in (ROLE_GENERATOR, ROLE_MUT):
        raise ValueError(f"unknown role {role!r}")
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    _emit(stdout, {"protocol": PROTOCOL_VERSION, "kind": role})

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request must be a JSON object")
        except ValueError as e:
            _emit(stdout, {"error": f"malformed request: {e}"})
            continue
        op = req.get("op")
        try:
            if role == ROLE_GENERATOR and op == "generate":
                _handle_generate(stdout, req, callback)
            elif role == ROLE_MUT and op == "infer":
                _handle_infer(stdout, req, callback)
            else:
                _emit(stdout, {"error": f"unsupported op {op!r} for role {role!r}"})
        except Exception as e:  # surface, never die silently
            _emit(stdout, {"error": f"{type(e).__name__}: {e}"})

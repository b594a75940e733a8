"""Command-line stubs speaking the adapter protocol.

  rbt-adapter generator --dir PATH            replay files from a directory
  rbt-adapter generator --synthetic           deterministic synthetic names
  rbt-adapter mut --label L                   always answer class L
  rbt-adapter mut --label L --wrong-label W --fail-if-contains S
                                              answer W when the input name
                                              contains S
  rbt-adapter mut --regression accel=0,steer=0
  rbt-adapter mut --label L --crash-if-contains S
                                              exit on marked inputs
"""
from __future__ import annotations

import argparse
import sys

from .session import ROLE_GENERATOR, ROLE_MUT, serve
from .stubs import (
    class_output,
    crashing_mut,
    directory_generator,
    fixed_mut,
    marker_mut,
    regression_output,
    synthetic_generator,
)


def _parse_regression(text: str) -> dict:
    fields = {}
    for pair in text.split(","):
        name, _, value = pair.partition("=")
        if not name or not value:
            raise SystemExit(f"bad --regression field {pair!r}; use name=value,...")
        fields[name.strip()] = float(value)
    return regression_output(**fields)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbt-adapter")
    sub = parser.add_subparsers(dest="role", required=True)

    g = sub.add_parser(ROLE_GENERATOR, help="serve a generator stub")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--dir", help="replay files from this directory")
    src.add_argument("--synthetic", action="store_true", help="synthesize path names")

    m = sub.add_parser(ROLE_MUT, help="serve a model-under-test stub")
    m.add_argument("--label", help="class label to answer")
    m.add_argument("--regression", help="regression outputs, name=value,...")
    m.add_argument("--wrong-label", help="label for marked inputs")
    m.add_argument("--fail-if-contains", help="marker substring for wrong answers")
    m.add_argument("--crash-if-contains", help="marker substring that kills the stub")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.role == ROLE_GENERATOR:
        callback = (
            synthetic_generator() if args.synthetic else directory_generator(args.dir)
        )
        serve(ROLE_GENERATOR, callback)
        return 0

    if args.regression:
        good = _parse_regression(args.regression)
    elif args.label is not None:
        good = class_output(args.label)
    else:
        raise SystemExit("mut stub needs --label or --regression")

    if args.crash_if_contains:
        callback = crashing_mut(good, args.crash_if_contains)
    elif args.fail_if_contains:
        if args.wrong_label is None:
            raise SystemExit("--fail-if-contains needs --wrong-label")
        callback = marker_mut(good, class_output(args.wrong_label), args.fail_if_contains)
    else:
        callback = fixed_mut(good)
    serve(ROLE_MUT, callback)
    return 0


if __name__ == "__main__":
    sys.exit(main())

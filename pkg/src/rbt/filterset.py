"""Precondition evaluation over labeled inputs and dataset filtering.

eval_precondition gives the reference semantics: an exists-clause holds
iff some entity of the subject's class satisfies the body under plain
Boolean semantics (atom true iff the entity carries the term); a
none-clause is its negation; the clause tree combines by its connective.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import MalformedFile
from .glossary import Glossary
from .labeling import SOLE_ENTITY_CLASS, LabeledInput
from .snl import Clause, PreTree, Requirement, render_precondition

log = logging.getLogger("rbt.filterset")

DEFAULT_TRIGGER = "TRGR"


def _subject_entities(clause: Clause, li: LabeledInput):
    kind = clause.subject.kind
    if kind == "ego":
        return [e for e in li.entities if e.cls == "ego"]
    if kind == "sole":
        return [e for e in li.entities if e.cls == SOLE_ENTITY_CLASS]
    return [e for e in li.entities if e.cls == clause.subject.cls]


def eval_clause(clause: Clause, li: LabeledInput) -> bool:
    holds = any(
        clause.body.evaluate(lambda ref: ref in e.terms)
        for e in _subject_entities(clause, li)
    )
    return holds if clause.polarity == "exists" else not holds


def eval_precondition(pre: PreTree, li: LabeledInput) -> bool:
    results = (eval_clause(c, li) for c in pre.clauses)
    return all(results) if pre.op == "and" else any(results)


# -- fine-tune manifests ---------------------------------------------------


@dataclass
class FineTuneManifest:
    rows: list[tuple[str, str]]  # (input_ref, caption)
    warning: Optional[str] = None

    def write(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as f:
            for image, caption in self.rows:
                f.write(json.dumps({"image": image, "caption": caption}, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "FineTuneManifest":
        rows = []
        path = Path(path)
        try:
            with path.open(encoding="utf-8") as f:
                for lineno, line in enumerate(f, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        row = json.loads(line)
                        rows.append((row["image"], row["caption"]))
                    except (json.JSONDecodeError, KeyError, TypeError) as e:
                        raise MalformedFile(f"{path}:{lineno}: bad manifest row: {e}") from e
        except OSError as e:
            raise MalformedFile(f"cannot read manifest {path}: {e}") from e
        return cls(rows=rows)


def filter_dataset(
    g: Glossary,
    pre: PreTree,
    labels: list[LabeledInput],
    trigger: str = DEFAULT_TRIGGER,
) -> FineTuneManifest:
    """Manifest of exactly the inputs satisfying the precondition.

    Captions pair the trigger phrase with the rendered precondition;
    input order is preserved.  An empty result is a warning, not an
    error: rare preconditions are the point.
    """
    if not trigger:
        raise ValueError("trigger phrase must be non-empty")
    caption = f"{trigger} {render_precondition(g, pre)}"
    rows = [(li.input_ref, caption) for li in labels if eval_precondition(pre, li)]
    warning = None
    if not rows:
        warning = "precondition matched no inputs"
        log.warning(warning)
    return FineTuneManifest(rows=rows, warning=warning)


# -- held-out split construction --------------------------------------------


@dataclass
class SplitResult:
    train: list[LabeledInput]
    test: list[LabeledInput]


def build_heldout_split(
    labels: list[LabeledInput],
    requirements: list[Requirement],
    r: float,
) -> SplitResult:
    """Held-out split capped at r% of each requirement's satisfying set.

    Satisfying sets are visited smallest-first; an item moves into the
    test set only if it was not already placed, does not belong to a
    previously visited set, and would not push any requirement over its
    cap (caps use floor).  The complement sets are then visited the same
    way, restricted to items satisfying no requirement at all.
    """
    if not 0 < r < 100:
        raise ValueError("r must lie strictly between 0 and 100")

    sat: dict[str, list[str]] = {}
    comp: dict[str, list[str]] = {}
    for req in requirements:
        sat[req.id] = [
            li.input_ref for li in labels if eval_precondition(req.precondition, li)
        ]
        in_sat = set(sat[req.id])
        comp[req.id] = [li.input_ref for li in labels if li.input_ref not in in_sat]

    sat_sets = {rid: set(refs) for rid, refs in sat.items()}
    any_sat = set().union(*sat_sets.values()) if sat_sets else set()
    caps = {rid: math.floor(r / 100.0 * len(refs)) for rid, refs in sat.items()}
    caps_bar = {rid: math.floor(r / 100.0 * len(refs)) for rid, refs in comp.items()}

    test: set[str] = set()
    taken: dict[str, int] = {rid: 0 for rid in sat}

    considered: set[str] = set()
    for rid in sorted(sat, key=lambda k: (len(sat[k]), k)):
        for ref in sat[rid]:
            if ref in test or ref in considered:
                continue
            if all(
                taken[j] + (1 if ref in sat_sets[j] else 0) <= caps[j] for j in sat
            ):
                test.add(ref)
                for j in sat:
                    if ref in sat_sets[j]:
                        taken[j] += 1
        considered |= sat_sets[rid]

    comp_sets = {rid: set(refs) for rid, refs in comp.items()}
    taken_bar: dict[str, int] = {rid: sum(1 for x in test if x in comp_sets[rid]) for rid in comp}
    considered_bar: set[str] = set()
    for rid in sorted(comp, key=lambda k: (len(comp[k]), k)):
        for ref in comp[rid]:
            if ref in test or ref in considered_bar or ref in any_sat:
                continue
            if all(
                taken_bar[j] + (1 if ref in comp_sets[j] else 0) <= caps_bar[j]
                for j in comp
            ):
                test.add(ref)
                for j in comp:
                    if ref in comp_sets[j]:
                        taken_bar[j] += 1
        considered_bar |= comp_sets[rid]

    train = [li for li in labels if li.input_ref not in test]
    test_rows = [li for li in labels if li.input_ref in test]
    return SplitResult(train=train, test=test_rows)

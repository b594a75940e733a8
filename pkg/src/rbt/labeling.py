"""Dataset labeling: orchestrates labelers, manifests, and term verdicts.

A LabeledInput is one input's entity-scoped term sets.  Sole-entity
datasets (digits, headshots) are represented as a single entity of class
"subject" so one precondition evaluator serves every dataset.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import (
    ConflictingBandTerms,
    LabelingFailed,
    MalformedFile,
    UnknownTermId,
)
from .glossary import Glossary, GlossaryTerm

SOLE_ENTITY_ID = "subject"
SOLE_ENTITY_CLASS = "subject"

DEFAULT_PROMPT_TEMPLATE = "Does the object have {phrase}? Answer only yes or no."
DEFAULT_FAIL_FRACTION = 0.01


@dataclass(frozen=True)
class EntityLabels:
    id: str
    cls: str
    terms: frozenset[str]


@dataclass(frozen=True)
class LabeledInput:
    input_ref: str
    entities: tuple[EntityLabels, ...]

    def __post_init__(self):
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise MalformedFile(f"duplicate entity ids in {self.input_ref!r}")

    def all_terms(self) -> frozenset[str]:
        out: set[str] = set()
        for e in self.entities:
            out |= e.terms
        return frozenset(out)


def sole_entity_input(input_ref: str, term_ids) -> LabeledInput:
    return LabeledInput(
        input_ref=input_ref,
        entities=(
            EntityLabels(SOLE_ENTITY_ID, SOLE_ENTITY_CLASS, frozenset(term_ids)),
        ),
    )


def check_band_disjointness(g: Glossary, owner: str, term_ids) -> None:
    for grp in g.ordered_band_groups():
        hits = sorted(t for t in term_ids if t in grp.members)
        if len(hits) > 1:
            raise ConflictingBandTerms(
                f"{owner!r} carries {len(hits)} members of band group {grp.id!r}: {hits}"
            )


def validate_labels(g: Glossary, labeled: LabeledInput) -> LabeledInput:
    for e in labeled.entities:
        for t in e.terms:
            if t not in g.terms:
                raise UnknownTermId(f"{labeled.input_ref!r}: unknown term id {t!r}")
        check_band_disjointness(g, f"{labeled.input_ref}:{e.id}", e.terms)
    return labeled


# -- manifest i/o --------------------------------------------------------


def write_labels_manifest(labels: Iterable[LabeledInput], path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for li in labels:
            row = {
                "input": li.input_ref,
                "entities": [
                    {"id": e.id, "class": e.cls, "terms": sorted(e.terms)}
                    for e in li.entities
                ],
            }
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_labels_manifest(path) -> list[LabeledInput]:
    out = []
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    out.append(
                        LabeledInput(
                            input_ref=row["input"],
                            entities=tuple(
                                EntityLabels(e["id"], e["class"], frozenset(e["terms"]))
                                for e in row["entities"]
                            ),
                        )
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise MalformedFile(f"{path}:{lineno}: bad labels row: {e}") from e
    except OSError as e:
        raise MalformedFile(f"cannot read labels manifest {path}: {e}") from e
    return out


# -- prompts and VQA verdict ingestion ------------------------------------


def make_prompt(term: GlossaryTerm, template: Optional[str] = None) -> str:
    tpl = template or term.prompt_template or DEFAULT_PROMPT_TEMPLATE
    return " ".join(tpl.format(phrase=term.phrase).split())


def write_prompt_manifest(input_refs, g: Glossary, path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for ref in input_refs:
            for term in g.terms.values():
                row = {"input": ref, "term": term.id, "prompt": make_prompt(term)}
                f.write(json.dumps(row, sort_keys=True) + "\n")


def ingest_vqa_verdicts(path, g: Glossary) -> list[LabeledInput]:
    """Answer-manifest rows {"input","term","answer"} -> sole-entity labels."""
    per_input: dict[str, set[str]] = {}
    order: list[str] = []
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    ref, term_id, answer = row["input"], row["term"], row["answer"]
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise MalformedFile(f"{path}:{lineno}: bad answer row: {e}") from e
                if term_id not in g.terms:
                    raise UnknownTermId(f"{path}:{lineno}: unknown term id {term_id!r}")
                if answer not in ("yes", "no"):
                    raise MalformedFile(f"{path}:{lineno}: answer must be yes or no")
                if ref not in per_input:
                    per_input[ref] = set()
                    order.append(ref)
                if answer == "yes":
                    per_input[ref].add(term_id)
    except OSError as e:
        raise MalformedFile(f"cannot read answer manifest {path}: {e}") from e

    out = []
    for ref in order:
        terms = per_input[ref]
        check_band_disjointness(g, ref, terms)
        out.append(sole_entity_input(ref, terms))
    return out


# -- verdict providers -----------------------------------------------------


class TermVerdictProvider:
    """Capability: (input_ref, term_id) -> yes/no.  Deterministic per run."""

    concurrent_safe = True

    def verdict(self, input_ref: str, term_id: str) -> bool:
        raise NotImplementedError


class GroundTruthProvider(TermVerdictProvider):
    """Wraps a labels manifest; yes iff the term appears on a matching entity."""

    def __init__(self, labels: Iterable[LabeledInput], g: Glossary):
        self._g = g
        self._by_ref = {li.input_ref: li for li in labels}

    def verdict(self, input_ref: str, term_id: str) -> bool:
        li = self._by_ref.get(input_ref)
        if li is None:
            raise KeyError(f"no labels for input {input_ref!r}")
        term = self._g.terms[term_id]
        for e in li.entities:
            if term.entity_class is not None and e.cls != term.entity_class:
                continue
            if term_id in e.terms:
                return True
        return False


class CallableProvider(TermVerdictProvider):
    def __init__(self, fn: Callable[[str, str], bool]):
        self._fn = fn

    def verdict(self, input_ref: str, term_id: str) -> bool:
        return bool(self._fn(input_ref, term_id))


# -- dataset labeling -------------------------------------------------------


@dataclass
class LabelRun:
    labels: list[LabeledInput]
    skipped: list[tuple[str, str]]  # (input_ref, reason)


def label_dataset(
    input_refs,
    labeler,
    fail_fraction: float = DEFAULT_FAIL_FRACTION,
) -> LabelRun:
    """Run a labeler over a dataset, tolerating a bounded failure fraction.

    ``labeler`` exposes label(input_ref) -> LabeledInput.  Per-item errors
    are recorded and the item skipped; the run fails outright when more
    than ``fail_fraction`` of items fail.
    """
    input_refs = list(input_refs)
    labels: list[LabeledInput] = []
    skipped: list[tuple[str, str]] = []
    for ref in input_refs:
        try:
            labels.append(labeler.label(ref))
        except Exception as e:  # per-item fault isolation
            skipped.append((ref, f"{type(e).__name__}: {e}"))
    if input_refs and len(skipped) / len(input_refs) > fail_fraction:
        raise LabelingFailed(
            f"{len(skipped)}/{len(input_refs)} inputs failed to label "
            f"(tolerance {fail_fraction:.0%}); first: {skipped[0]}"
        )
    return LabelRun(labels=labels, skipped=skipped)


class MorphoLabeler:
    """Digit labeler: class term from a caller-supplied map, bands measured."""

    def __init__(
        self,
        g: Glossary,
        class_term_for: Callable[[str], str],
        threshold: float = 0.5,
    ):
        from .morpho import find_measure_groups

        self._g = g
        self._class_term_for = class_term_for
        self._threshold = threshold
        self._groups = find_measure_groups(g)

    def label(self, input_ref: str) -> LabeledInput:
        from .morpho import label as morpho_label
        from .morpho import load_image

        img = load_image(input_ref)
        class_term = self._g.terms[self._class_term_for(input_ref)]
        terms = morpho_label(
            img, self._g, class_term, threshold=self._threshold, groups=self._groups
        )
        return sole_entity_input(input_ref, {t.id for t in terms})


class SceneGraphLabeler:
    def __init__(self, g: Glossary, rules, max_len: int = 4):
        self._g = g
        self._rules = rules
        self._max_len = max_len

    def label(self, input_ref: str) -> LabeledInput:
        from .scenegraph import label_scene, load_scene_graph

        sg = load_scene_graph(input_ref)
        li = label_scene(sg, self._rules, self._g, max_len=self._max_len)
        return LabeledInput(input_ref=input_ref, entities=li.entities)

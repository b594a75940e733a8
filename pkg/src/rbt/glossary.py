"""Glossary registry: terms, term groups, band orderings, output predicates.

The glossary is the single source of truth for every surface phrase the
requirement parser may match.  It is immutable after load and safe for
concurrent reads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    BoundNotOnBandEdge,
    DuplicatePhrase,
    EmptyRange,
    MalformedFile,
    OverlappingBands,
    UnknownGroupMember,
)
from .formula import Atom, Formula, disj

KIND_UNORDERED = "disjoint-unordered"
KIND_ORDERED_BANDS = "disjoint-ordered-bands"

PRED_CLASS_EQUALS = "class-equals"
PRED_CLASS_IN_TAXONOMY = "class-in-taxonomy"
PRED_REGRESSION = "regression-compare"

COMPARATORS = (">", ">=", "<", "<=", "=")


def normalize_phrase(text: str) -> str:
    return " ".join(text.lower().split())


def tokenize_phrase(text: str) -> tuple[str, ...]:
    return tuple(normalize_phrase(text).split(" ")) if text.strip() else ()


@dataclass(frozen=True)
class GlossaryTerm:
    id: str
    phrase: str
    aliases: tuple[str, ...] = ()
    group: Optional[str] = None
    entity_class: Optional[str] = None
    prompt_template: Optional[str] = None

    def surfaces(self) -> tuple[str, ...]:
        return (self.phrase,) + self.aliases


@dataclass(frozen=True)
class Band:
    lower: Optional[float]  # None = unbounded below
    upper: Optional[float]  # None = unbounded above
    unit: str = ""

    def contains(self, value: float) -> bool:
        # lower-inclusive half-open convention
        if self.lower is not None and value < self.lower:
            return False
        if self.upper is not None and value >= self.upper:
            return False
        return True


@dataclass(frozen=True)
class TermGroup:
    id: str
    kind: str
    members: tuple[str, ...]
    bands: tuple[Band, ...] = ()

    @property
    def unit(self) -> str:
        return self.bands[0].unit if self.bands else ""


@dataclass(frozen=True)
class OutputPredicate:
    phrase: str
    kind: str
    payload: dict = field(hash=False, default_factory=dict)

    @property
    def key(self) -> str:
        return normalize_phrase(self.phrase)


class Glossary:
    """Validated, immutable registry of terms, groups and output predicates."""

    def __init__(self, terms, groups=(), output_predicates=()):
        self.terms: dict[str, GlossaryTerm] = {}
        self.groups: dict[str, TermGroup] = {}
        self.output_predicates: dict[str, OutputPredicate] = {}
        self._surface_to_term: dict[tuple[str, ...], GlossaryTerm] = {}
        self._surface_to_pred: dict[tuple[str, ...], OutputPredicate] = {}

        for t in terms:
            if t.id in self.terms:
                raise MalformedFile(f"duplicate term id {t.id!r}")
            self.terms[t.id] = t
        for g in groups:
            if g.id in self.groups:
                raise MalformedFile(f"duplicate group id {g.id!r}")
            self.groups[g.id] = g
        for p in output_predicates:
            if p.key in self.output_predicates:
                raise DuplicatePhrase(f"duplicate output predicate phrase {p.phrase!r}")
            self.output_predicates[p.key] = p

        self._validate_surfaces()
        self._validate_groups()
        self._validate_predicates()

        self.entity_classes = frozenset(
            t.entity_class for t in self.terms.values() if t.entity_class
        )
        self.max_surface_len = max(
            (len(k) for k in self._surface_to_term), default=0
        )
        self.max_pred_surface_len = max(
            (len(k) for k in self._surface_to_pred), default=0
        )

    def _validate_surfaces(self):
        for t in self.terms.values():
            for s in t.surfaces():
                key = tokenize_phrase(s)
                if not key:
                    raise MalformedFile(f"term {t.id!r} has an empty surface")
                if key in self._surface_to_term:
                    other = self._surface_to_term[key]
                    raise DuplicatePhrase(
                        f"surface {s!r} registered by both {other.id!r} and {t.id!r}"
                    )
                self._surface_to_term[key] = t
        for p in self.output_predicates.values():
            key = tokenize_phrase(p.phrase)
            if not key:
                raise MalformedFile("output predicate with empty phrase")
            if key in self._surface_to_pred:
                raise DuplicatePhrase(f"duplicate output predicate phrase {p.phrase!r}")
            self._surface_to_pred[key] = p

    def _validate_groups(self):
        seen_members: dict[str, str] = {}
        for g in self.groups.values():
            if g.kind not in (KIND_UNORDERED, KIND_ORDERED_BANDS):
                raise MalformedFile(f"group {g.id!r} has unknown kind {g.kind!r}")
            if len(set(g.members)) != len(g.members):
                raise MalformedFile(f"group {g.id!r} has repeated members")
            for m in g.members:
                if m not in self.terms:
                    raise UnknownGroupMember(f"group {g.id!r} member {m!r} not registered")
                if m in seen_members:
                    raise UnknownGroupMember(
                        f"term {m!r} appears in groups {seen_members[m]!r} and {g.id!r}"
                    )
                seen_members[m] = g.id
                declared = self.terms[m].group
                if declared is not None and declared != g.id:
                    raise UnknownGroupMember(
                        f"term {m!r} declares group {declared!r} but is a member of {g.id!r}"
                    )
            if g.kind == KIND_ORDERED_BANDS:
                if len(g.bands) != len(g.members):
                    raise MalformedFile(
                        f"group {g.id!r}: {len(g.members)} members but {len(g.bands)} bands"
                    )
                self._validate_bands(g)

    @staticmethod
    def _validate_bands(g: TermGroup):
        prev_upper = None
        for i, b in enumerate(g.bands):
            if b.lower is not None and b.upper is not None and b.lower >= b.upper:
                raise OverlappingBands(f"group {g.id!r} band {i} is empty or inverted")
            if b.lower is None and i > 0:
                raise OverlappingBands(f"group {g.id!r} band {i} unbounded below mid-sequence")
            if b.upper is None and i < len(g.bands) - 1:
                raise OverlappingBands(f"group {g.id!r} band {i} unbounded above mid-sequence")
            if i > 0:
                if prev_upper is None or b.lower is None or b.lower != prev_upper:
                    raise OverlappingBands(
                        f"group {g.id!r} bands {i-1} and {i} are not contiguous"
                    )
            prev_upper = b.upper

    def _validate_predicates(self):
        for p in self.output_predicates.values():
            if p.kind == PRED_CLASS_EQUALS:
                if "label" not in p.payload:
                    raise MalformedFile(f"predicate {p.phrase!r} missing 'label' payload")
            elif p.kind == PRED_CLASS_IN_TAXONOMY:
                if "root" not in p.payload:
                    raise MalformedFile(f"predicate {p.phrase!r} missing 'root' payload")
            elif p.kind == PRED_REGRESSION:
                for k in ("field", "cmp", "threshold"):
                    if k not in p.payload:
                        raise MalformedFile(f"predicate {p.phrase!r} missing {k!r} payload")
                if p.payload["cmp"] not in COMPARATORS:
                    raise MalformedFile(
                        f"predicate {p.phrase!r} has unknown comparator {p.payload['cmp']!r}"
                    )
            else:
                raise MalformedFile(f"predicate {p.phrase!r} has unknown kind {p.kind!r}")

    # -- lookups -------------------------------------------------------

    def lookup_phrase(self, text: str) -> Optional[GlossaryTerm]:
        return self._surface_to_term.get(tokenize_phrase(text))

    def lookup_output_phrase(self, text: str) -> Optional[OutputPredicate]:
        return self._surface_to_pred.get(tokenize_phrase(text))

    def match_surface(self, tokens, start: int):
        """Longest registered term surface starting at tokens[start].

        Returns (consumed, term) or None.
        """
        return self._match(self._surface_to_term, self.max_surface_len, tokens, start)

    def match_output_surface(self, tokens, start: int):
        return self._match(self._surface_to_pred, self.max_pred_surface_len, tokens, start)

    @staticmethod
    def _match(table, max_len, tokens, start):
        limit = min(max_len, len(tokens) - start)
        for n in range(limit, 0, -1):
            key = tuple(tokens[start : start + n])
            hit = table.get(key)
            if hit is not None:
                return n, hit
        return None

    def group_of(self, term_id: str) -> Optional[TermGroup]:
        t = self.terms[term_id]
        if t.group:
            return self.groups.get(t.group)
        for g in self.groups.values():
            if term_id in g.members:
                return g
        return None

    def ordered_band_groups(self) -> list[TermGroup]:
        return [g for g in self.groups.values() if g.kind == KIND_ORDERED_BANDS]


def lookup_phrase(g: Glossary, text: str) -> Optional[GlossaryTerm]:
    return g.lookup_phrase(text)


def expand_range(g: Glossary, group: TermGroup, mode: str, bounds) -> Formula:
    """Disjunction of the group's band terms falling inside a requested range.

    ``mode`` is one of within/beyond/between; ``bounds`` holds one value for
    within/beyond and two for between.  Bounds must land on declared band
    edges.
    """
    if group.kind != KIND_ORDERED_BANDS:
        raise BoundNotOnBandEdge(f"group {group.id!r} has no ordered bands")
    bounds = [float(b) for b in (bounds if isinstance(bounds, (list, tuple)) else [bounds])]
    lowers = [b.lower for b in group.bands]
    uppers = [b.upper for b in group.bands]

    def edge_index(edges, value, side):
        for i, e in enumerate(edges):
            if e is not None and e == value:
                return i
        raise BoundNotOnBandEdge(
            f"{value:g} is not a {side} band edge of group {group.id!r}"
        )

    if mode == "within":
        (upper,) = bounds
        if lowers[0] is not None and upper == lowers[0]:
            raise EmptyRange(f"within {upper:g} selects no band of {group.id!r}")
        hi = edge_index(uppers, upper, "upper")
        selected = group.members[: hi + 1]
    elif mode == "beyond":
        (lower,) = bounds
        if uppers[-1] is not None and lower == uppers[-1]:
            raise EmptyRange(f"beyond {lower:g} selects no band of {group.id!r}")
        lo = edge_index(lowers, lower, "lower")
        selected = group.members[lo:]
    elif mode == "between":
        lower, upper = bounds
        lo = edge_index(lowers, lower, "lower")
        hi = edge_index(uppers, upper, "upper")
        if hi < lo:
            raise EmptyRange(
                f"between {lower:g} and {upper:g} selects no band of {group.id!r}"
            )
        selected = group.members[lo : hi + 1]
    else:
        raise ValueError(f"unknown range mode {mode!r}")
    return disj([Atom(m) for m in selected])


def band_term_for_value(g: Glossary, group: TermGroup, value: float) -> GlossaryTerm:
    """Band member whose half-open interval contains the value."""
    from .errors import ValueOutsideAllBands

    for member, band in zip(group.members, group.bands):
        if band.contains(value):
            return g.terms[member]
    raise ValueOutsideAllBands(
        f"value {value:g} lies outside every band of group {group.id!r}"
    )


# -- file format -------------------------------------------------------


def _band_from_json(obj) -> Band:
    return Band(
        lower=None if obj.get("lower") is None else float(obj["lower"]),
        upper=None if obj.get("upper") is None else float(obj["upper"]),
        unit=obj.get("unit", ""),
    )


def glossary_from_dict(doc: dict) -> Glossary:
    if not isinstance(doc, dict):
        raise MalformedFile("glossary document must be a JSON object")
    terms = []
    for obj in doc.get("terms", []):
        try:
            terms.append(
                GlossaryTerm(
                    id=obj["id"],
                    phrase=obj["phrase"],
                    aliases=tuple(obj.get("aliases", ())),
                    group=obj.get("group"),
                    entity_class=obj.get("entity_class"),
                    prompt_template=obj.get("prompt_template"),
                )
            )
        except KeyError as e:
            raise MalformedFile(f"term record missing key {e}") from e
    groups = []
    for obj in doc.get("groups", []):
        try:
            groups.append(
                TermGroup(
                    id=obj["id"],
                    kind=obj["kind"],
                    members=tuple(obj.get("members", ())),
                    bands=tuple(_band_from_json(b) for b in obj.get("bands", ())),
                )
            )
        except KeyError as e:
            raise MalformedFile(f"group record missing key {e}") from e
    preds = []
    for obj in doc.get("output_predicates", []):
        try:
            preds.append(
                OutputPredicate(
                    phrase=obj["phrase"],
                    kind=obj["kind"],
                    payload=dict(obj.get("payload", {})),
                )
            )
        except KeyError as e:
            raise MalformedFile(f"output predicate record missing key {e}") from e
    return Glossary(terms, groups, preds)


def load_glossary(path) -> Glossary:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"cannot read glossary {path}: {e}") from e
    return glossary_from_dict(doc)

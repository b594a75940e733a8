"""Structured-natural-language requirement parser and renderer.

Requirement text follows the if-then-shall template.  Preconditions are
logical combinations of glossary term phrases; postconditions combine
output-predicate phrases.  Connectives follow the comma-list discipline:
conjunction as a comma-separated list ending with "and", disjunction
ending with "or" (the comma dropped for two-element lists), negation via
"no", "not", or "does not".  Range shorthands ("within 10 meters")
expand to band-term disjunctions.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import (
    AmbiguousConnectives,
    EmptyPostcondition,
    EmptyPrecondition,
    MalformedFile,
    UnknownPhrase,
)
from .formula import And, Atom, Formula, Not, Or, conj, disj, normalize
from .glossary import (
    KIND_ORDERED_BANDS,
    Glossary,
    GlossaryTerm,
    expand_range,
)

# words elided when they are not part of a registered phrase
SKIPPABLE = {"the", "is", "a", "an", "has", "have", "are", "does"}

_TEMPLATE = re.compile(
    r"^\s*if\s+(?P<pre>.+?)\s*,\s*then\s+the\s+lc\s+shall\s+(?P<post>.+?)\s*$",
    re.IGNORECASE | re.DOTALL,
)

_UNIT_FAMILIES = [{"m", "meter", "meters"}, {"px", "pixel", "pixels"}]


def _unit_words(unit: str) -> set[str]:
    u = unit.lower()
    for fam in _UNIT_FAMILIES:
        if u in fam:
            return fam
    return {u} if u else set()


@dataclass(frozen=True)
class Subject:
    kind: str  # ego | sole | class
    cls: Optional[str] = None

    EGO = None  # filled in below
    SOLE = None


Subject.EGO = Subject("ego")
Subject.SOLE = Subject("sole")


@dataclass(frozen=True)
class Clause:
    polarity: str  # exists | none
    subject: Subject
    body: Formula


@dataclass(frozen=True)
class PreTree:
    """Connective-uniform list of clauses forming a precondition."""

    op: str  # and | or
    clauses: tuple[Clause, ...]


@dataclass(frozen=True)
class Requirement:
    id: str
    source_text: str
    precondition: PreTree
    postcondition: Formula
    provenance: Optional[str] = None


class SubjectClassMismatch(AmbiguousConnectives):
    """A body atom's declared entity class conflicts with the clause subject."""


# -- tokenization ------------------------------------------------------


def _tokenize(text: str) -> list[str]:
    text = text.strip()
    text = text.rstrip(".")
    text = text.replace(",", " , ")
    return text.lower().split()


# lexical item kinds
_TERM, _RANGE, _SUBJ, _COMMA, _AND, _OR, _NOT = range(7)


@dataclass
class _Item:
    kind: int
    term: Optional[GlossaryTerm] = None
    formula: Optional[Formula] = None
    polarity: Optional[str] = None
    subject: Optional[Subject] = None


def _match_range(g: Glossary, tokens: list[str], i: int):
    """Range shorthand at tokens[i]; returns (consumed, Formula) or None."""
    word = tokens[i]
    if word not in ("within", "beyond", "between"):
        return None

    def number(tok):
        try:
            return float(tok)
        except (TypeError, ValueError):
            return None

    if word in ("within", "beyond"):
        if i + 2 >= len(tokens):
            return None
        value = number(tokens[i + 1])
        unit_tok = tokens[i + 2]
        if value is None:
            return None
        consumed, bounds, mode = 3, [value], word
    else:
        if i + 4 >= len(tokens) or tokens[i + 2] != "and":
            return None
        lo, hi = number(tokens[i + 1]), number(tokens[i + 3])
        unit_tok = tokens[i + 4]
        if lo is None or hi is None:
            return None
        consumed, bounds, mode = 5, [lo, hi], "between"

    candidates = [
        grp
        for grp in g.ordered_band_groups()
        if unit_tok in _unit_words(grp.unit)
    ]
    if not candidates:
        return None
    if len(candidates) > 1:
        raise AmbiguousConnectives(
            f"range unit {unit_tok!r} matches several band groups"
        )
    return consumed, expand_range(g, candidates[0], mode, bounds)


def _lex_precondition(g: Glossary, tokens: list[str]) -> list[_Item]:
    items: list[_Item] = []
    classes = g.entity_classes
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        hit = g.match_surface(tokens, i)
        if hit is not None:
            n, term = hit
            items.append(_Item(_TERM, term=term))
            i += n
            continue
        # subject markers; phrase matching has already had first refusal
        if tok in ("a", "an", "no") and i + 1 < len(tokens) and tokens[i + 1] in classes:
            pol = "none" if tok == "no" else "exists"
            items.append(_Item(_SUBJ, polarity=pol, subject=Subject("class", tokens[i + 1])))
            i += 2
            continue
        if tok == "the" and i + 1 < len(tokens) and tokens[i + 1] == "ego":
            items.append(_Item(_SUBJ, polarity="exists", subject=Subject.EGO))
            i += 2
            continue
        if tok == "ego":
            items.append(_Item(_SUBJ, polarity="exists", subject=Subject.EGO))
            i += 1
            continue
        if tok == ",":
            items.append(_Item(_COMMA))
            i += 1
            continue
        if tok == "and":
            items.append(_Item(_AND))
            i += 1
            continue
        if tok == "or":
            items.append(_Item(_OR))
            i += 1
            continue
        if tok in ("no", "not"):
            items.append(_Item(_NOT))
            i += 1
            continue
        rng = _match_range(g, tokens, i)
        if rng is not None:
            n, formula = rng
            items.append(_Item(_RANGE, formula=formula))
            i += n
            continue
        if tok in SKIPPABLE:
            i += 1
            continue
        raise UnknownPhrase(
            f"no glossary phrase matches at {tok!r} (token {i})", span=i
        )
    return items


# -- list discipline ---------------------------------------------------


def _collapse_separators(items: list[_Item]) -> list:
    """Merge ", and" / ", or" into single separators; reject stray runs."""
    out = []
    i = 0
    while i < len(items):
        it = items[i]
        if it.kind == _COMMA and i + 1 < len(items) and items[i + 1].kind in (_AND, _OR):
            out.append(items[i + 1])
            i += 2
            continue
        out.append(it)
        i += 1
    return out


def _fold_negation(items: list[_Item]) -> list:
    """Attach NOT markers to the following operand."""
    out = []
    i = 0
    while i < len(items):
        it = items[i]
        if it.kind == _NOT:
            if i + 1 >= len(items) or items[i + 1].kind not in (_TERM, _RANGE):
                raise AmbiguousConnectives("negation with no following phrase")
            nxt = items[i + 1]
            f = Atom(nxt.term.id) if nxt.kind == _TERM else nxt.formula
            out.append(("operand", Not(f)))
            i += 2
            continue
        if it.kind == _TERM:
            out.append(("operand", Atom(it.term.id)))
        elif it.kind == _RANGE:
            out.append(("operand", it.formula))
        elif it.kind == _AND:
            out.append(("sep", "and"))
        elif it.kind == _OR:
            out.append(("sep", "or"))
        elif it.kind == _COMMA:
            out.append(("sep", ","))
        else:
            raise AmbiguousConnectives("subject marker inside a clause body")
        i += 1
    return out


def _parse_body(items: list[_Item]) -> Formula:
    """Flat connective list -> formula.

    "and" (and implicit adjacency) separates conjunct groups; within a
    group commas and a final "or" follow the comma-list discipline.
    Ill-formed mixtures raise AmbiguousConnectives.
    """
    stream = _fold_negation(_collapse_separators(items))
    operands: list[Formula] = []
    seps: list[str] = []
    last_was_operand = False
    for kind, value in stream:
        if kind == "operand":
            if last_was_operand:
                seps.append("and")  # implicit conjunction between bare phrases
            operands.append(value)
            last_was_operand = True
        else:
            if not last_was_operand:
                raise AmbiguousConnectives("misplaced connective")
            seps.append(value)
            last_was_operand = False
    if not operands:
        raise EmptyPrecondition("clause contains no phrases")
    if not last_was_operand:
        raise AmbiguousConnectives("dangling connective at end of list")

    # split into groups at "and"
    groups: list[tuple[list[Formula], list[str]]] = [([operands[0]], [])]
    for sep, operand in zip(seps, operands[1:]):
        if sep == "and":
            groups.append(([operand], []))
        else:
            groups[-1][0].append(operand)
            groups[-1][1].append(sep)

    parts = []
    for ops, gseps in groups:
        if len(ops) == 1:
            parts.append(ops[0])
            continue
        if "or" in gseps:
            if gseps[-1] != "or" or any(s not in (",", "or") for s in gseps):
                raise AmbiguousConnectives("mixed connectives in one list")
            if "," in gseps and any(s == "or" for s in gseps[:-1]):
                raise AmbiguousConnectives("mixed connectives in one list")
            parts.append(disj(ops))
        else:
            parts.append(conj(ops))
    return normalize(conj(parts))


# -- clause assembly ---------------------------------------------------


def _split_clauses(items: list[_Item]):
    """Split the item stream at subject markers into clause segments."""
    segments = []
    connectives = []
    current: list[_Item] = []
    current_subj: Optional[_Item] = None

    def flush():
        if current_subj is None and not current:
            return
        segments.append((current_subj, list(current)))

    i = 0
    while i < len(items):
        it = items[i]
        if it.kind == _SUBJ:
            if current_subj is not None or current:
                # a new clause must be introduced by a connective
                conn = None
                if current and current[-1].kind in (_AND, _OR):
                    conn = "and" if current[-1].kind == _AND else "or"
                    trailing_comma = (
                        len(current) >= 2 and current[-2].kind == _COMMA
                    )
                    current.pop()
                    if trailing_comma:
                        current.pop()
                if conn is None:
                    raise AmbiguousConnectives(
                        "subject introduced without a connective"
                    )
                flush()
                connectives.append(conn)
                current.clear()
            current_subj = it
        else:
            current.append(it)
        i += 1
    flush()
    if not segments:
        raise EmptyPrecondition("no clauses found")
    return segments, connectives


def _first_atom_class(g: Glossary, body: Formula) -> Optional[str]:
    for ref in body.atoms():
        return g.terms[ref].entity_class
    return None


def _resolve_subject(g: Glossary, subj_item, body: Formula):
    if subj_item is not None:
        return subj_item.polarity, subj_item.subject
    cls = _first_atom_class(g, body)
    if cls == "ego":
        return "exists", Subject.EGO
    if cls is not None:
        return "exists", Subject("class", cls)
    return "exists", Subject.SOLE


def _check_body_classes(g: Glossary, subject: Subject, body: Formula):
    expected = "ego" if subject.kind == "ego" else subject.cls
    for ref in body.atoms():
        declared = g.terms[ref].entity_class
        if declared is None:
            continue
        if subject.kind == "sole" or declared != expected:
            raise SubjectClassMismatch(
                f"term {ref!r} describes entity class {declared!r} "
                f"but the clause subject is {subject.kind}"
                + (f"({subject.cls})" if subject.cls else "")
            )


def parse_precondition(g: Glossary, text: str) -> PreTree:
    if not text or not text.strip():
        raise EmptyPrecondition("empty precondition text")
    items = _lex_precondition(g, _tokenize(text))
    segments, connectives = _split_clauses(items)
    if connectives and len(set(connectives)) > 1:
        raise AmbiguousConnectives("mixed connectives between clauses")
    clauses = []
    for subj_item, body_items in segments:
        body = _parse_body(body_items)
        polarity, subject = _resolve_subject(g, subj_item, body)
        _check_body_classes(g, subject, body)
        clauses.append(Clause(polarity, subject, body))
    op = connectives[0] if connectives else "and"
    return PreTree(op, tuple(clauses))


def parse_postcondition(g: Glossary, text: str) -> Formula:
    if not text or not text.strip():
        raise EmptyPostcondition("empty postcondition text")
    tokens = _tokenize(text)
    items: list[_Item] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        hit = g.match_output_surface(tokens, i)
        if hit is not None:
            n, pred = hit
            items.append(_Item(_TERM, term=GlossaryTerm(id=pred.key, phrase=pred.phrase)))
            i += n
            continue
        if tok == ",":
            items.append(_Item(_COMMA))
        elif tok == "and":
            items.append(_Item(_AND))
        elif tok == "or":
            items.append(_Item(_OR))
        elif tok in ("no", "not"):
            items.append(_Item(_NOT))
        elif tok in SKIPPABLE:
            pass
        else:
            raise UnknownPhrase(
                f"no output predicate matches at {tok!r} (token {i})", span=i
            )
        i += 1
    try:
        return _parse_body(items)
    except EmptyPrecondition:
        raise EmptyPostcondition("postcondition contains no phrases") from None


def parse_requirement(
    g: Glossary,
    text,
    req_id: str = "R",
    provenance: Optional[str] = None,
) -> Requirement:
    """Parse a full if-then-shall string or a (precondition, postcondition) pair."""
    if isinstance(text, (tuple, list)):
        pre_text, post_text = text
        source = f"If {pre_text}, then the LC shall {post_text}."
    else:
        m = _TEMPLATE.match(text)
        if not m:
            raise MalformedFile(
                "requirement text does not follow the if-then-shall template"
            )
        pre_text, post_text = m.group("pre"), m.group("post")
        source = text
    pre = parse_precondition(g, pre_text)
    post = parse_postcondition(g, post_text)
    return Requirement(req_id, source, pre, post, provenance)


def load_requirements(g: Glossary, path) -> list[Requirement]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"cannot read requirements {path}: {e}") from e
    if not isinstance(doc, list):
        raise MalformedFile("requirements file must hold a JSON list")
    out = []
    for idx, row in enumerate(doc):
        if isinstance(row, str):
            out.append(parse_requirement(g, row, req_id=f"R{idx + 1}"))
        else:
            out.append(
                parse_requirement(
                    g,
                    (row["precondition"], row["postcondition"]),
                    req_id=row.get("id", f"R{idx + 1}"),
                    provenance=row.get("provenance"),
                )
            )
    return out


# -- rendering ---------------------------------------------------------


def _format_number(x: float) -> str:
    return f"{x:g}"


def _render_unit(unit: str) -> str:
    return "meters" if unit.lower() in ("m", "meter", "meters") else unit


def _collapse_band_run(g: Glossary, f: Or) -> Optional[str]:
    """Render a disjunction of one group's contiguous bands as a range phrase."""
    if not all(isinstance(c, Atom) for c in f.children):
        return None
    groups = {g.group_of(c.ref).id if g.group_of(c.ref) else None for c in f.children}
    if len(groups) != 1 or None in groups:
        return None
    grp = g.groups[groups.pop()]
    if grp.kind != KIND_ORDERED_BANDS:
        return None
    idxs = sorted(grp.members.index(c.ref) for c in f.children)
    if idxs != list(range(idxs[0], idxs[-1] + 1)):
        return None
    lo_band, hi_band = grp.bands[idxs[0]], grp.bands[idxs[-1]]
    unit = _render_unit(grp.unit)
    if idxs[0] == 0 and hi_band.upper is not None:
        return f"within {_format_number(hi_band.upper)} {unit}"
    if idxs[-1] == len(grp.members) - 1 and lo_band.lower is not None:
        return f"beyond {_format_number(lo_band.lower)} {unit}"
    if lo_band.lower is not None and hi_band.upper is not None:
        return (
            f"between {_format_number(lo_band.lower)} "
            f"and {_format_number(hi_band.upper)} {unit}"
        )
    return None


def _render_operand(g: Glossary, f: Formula, phrase_of) -> tuple[str, bool]:
    """Render one list element.  Returns (text, is_disjunction)."""
    if isinstance(f, Atom):
        return phrase_of(f.ref), False
    if isinstance(f, Not):
        if not isinstance(f.child, Atom):
            inner, _ = _render_operand(g, f.child, phrase_of)
            return f"not {inner}", False
        return f"not {phrase_of(f.child.ref)}", False
    if isinstance(f, Or):
        collapsed = _collapse_band_run(g, f)
        if collapsed is not None:
            return collapsed, False
        rendered = [_render_operand(g, c, phrase_of)[0] for c in f.children]
        return _join_list(rendered, "or"), True
    raise ValueError(f"nested conjunction cannot be rendered flatly: {f!r}")


def _join_list(parts: list[str], conn: str) -> str:
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return f"{parts[0]} {conn} {parts[1]}"
    return ", ".join(parts[:-1]) + f", {conn} " + parts[-1]


def render_formula(g: Glossary, f: Formula, phrase_of=None) -> str:
    if phrase_of is None:
        phrase_of = lambda ref: g.terms[ref].phrase
    if isinstance(f, And):
        rendered = [_render_operand(g, c, phrase_of) for c in f.children]
        if any(is_or for _, is_or in rendered):
            # explicit "and" keeps interior disjunctions unambiguous
            return " and ".join(text for text, _ in rendered)
        return _join_list([text for text, _ in rendered], "and")
    return _render_operand(g, f, phrase_of)[0]


def render_clause(g: Glossary, clause: Clause, first: bool = True) -> str:
    body = render_formula(g, clause.body)
    if clause.subject.kind == "class":
        article = "no" if clause.polarity == "none" else "a"
        return f"{article} {clause.subject.cls} is {body}"
    if clause.subject.kind == "ego":
        if first and _first_atom_class(g, clause.body) == "ego":
            return body
        return f"the ego is {body}"
    return body


def render_precondition(g: Glossary, pre: PreTree) -> str:
    parts = [
        render_clause(g, c, first=(i == 0)) for i, c in enumerate(pre.clauses)
    ]
    if len(parts) == 1:
        return parts[0]
    return f", {pre.op} ".join(parts)


def render_postcondition(g: Glossary, post: Formula) -> str:
    phrase_of = lambda key: g.output_predicates[key].phrase
    return render_formula(g, post, phrase_of)


def render(g: Glossary, r: Requirement) -> str:
    pre = render_precondition(g, r.precondition)
    post = render_postcondition(g, r.postcondition)
    pre = pre[0].upper() + pre[1:] if pre else pre
    return f"If {pre}, then the LC shall {post}."

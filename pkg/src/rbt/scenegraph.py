"""Scene-graph labeler: ego-rooted path enumeration and rule rewriting.

Scene graphs are triple stores rooted at the ego vehicle.  Terms come
from matching acyclic ego-rooted paths against data-driven rules; each
matching path emits a term for its terminal entity (or for the ego, for
self-describing rules like lane position).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Optional

from .errors import (
    MalformedSceneGraph,
    UnknownPhrase,
    UnresolvablePhraseSlot,
)
from .glossary import Glossary, GlossaryTerm

FORWARD = "forward"
REVERSE = "reverse"
WILDCARD = "_"

DEFAULT_MAX_LEN = 4


@dataclass(frozen=True)
class Step:
    src: str
    rel: str
    dst: str
    direction: str  # forward | reverse

    @property
    def start(self) -> str:
        return self.src if self.direction == FORWARD else self.dst

    @property
    def end(self) -> str:
        return self.dst if self.direction == FORWARD else self.src


Path = tuple  # tuple[Step, ...]


class SceneGraph:
    def __init__(self, ego: str, vertices, edges):
        """vertices: iterable of (id, class); edges: iterable of (src, rel, dst)."""
        self.classes: dict[str, str] = {}
        for vid, cls in vertices:
            if vid in self.classes:
                raise MalformedSceneGraph(f"duplicate vertex id {vid!r}")
            self.classes[vid] = cls
        if ego not in self.classes:
            raise MalformedSceneGraph(f"ego vertex {ego!r} not declared")
        self.ego = ego
        seen = set()
        self.edges: list[tuple[str, str, str]] = []
        for src, rel, dst in edges:
            if src not in self.classes or dst not in self.classes:
                raise MalformedSceneGraph(f"edge ({src},{rel},{dst}) references unknown vertex")
            triple = (src, rel, dst)
            if triple in seen:
                raise MalformedSceneGraph(f"duplicate triple {triple}")
            seen.add(triple)
            self.edges.append(triple)
        self._adjacency: dict[str, list[Step]] = {}
        for src, rel, dst in self.edges:
            self._adjacency.setdefault(src, []).append(Step(src, rel, dst, FORWARD))
            self._adjacency.setdefault(dst, []).append(Step(src, rel, dst, REVERSE))

    def steps_from(self, vertex: str) -> list[Step]:
        return self._adjacency.get(vertex, [])


@dataclass(frozen=True)
class PatternStep:
    rel: str = WILDCARD
    direction: str = WILDCARD
    end_class: Optional[str] = None  # None or "_" matches any class

    def matches(self, step: Step, sg: SceneGraph) -> bool:
        if self.rel != WILDCARD and self.rel != step.rel:
            return False
        if self.direction != WILDCARD and self.direction != step.direction:
            return False
        if self.end_class not in (None, WILDCARD) and sg.classes[step.end] != self.end_class:
            return False
        return True


@dataclass(frozen=True)
class PathRule:
    pattern: tuple[PatternStep, ...]
    emit: str
    target: str = "terminal"  # terminal | ego

    def __post_init__(self):
        if len(self.pattern) < 1:
            raise MalformedSceneGraph("rule pattern must have at least one step")
        if self.target not in ("terminal", "ego"):
            raise MalformedSceneGraph(f"unknown rule target {self.target!r}")


def walk(sg: SceneGraph, max_len: int = DEFAULT_MAX_LEN) -> set[Path]:
    """All simple ego-rooted paths of length 1..max_len.

    Edges are traversed in either orientation; each step records the
    stored triple plus the traversal direction.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    paths: set[Path] = set()

    def dfs(vertex: str, visited: frozenset[str], acc: tuple):
        if len(acc) >= max_len:
            return
        for step in sg.steps_from(vertex):
            nxt = step.end
            if nxt in visited:
                continue
            path = acc + (step,)
            paths.add(path)
            dfs(nxt, visited | {nxt}, path)

    dfs(sg.ego, frozenset({sg.ego}), ())
    return paths


def _bindings(sg: SceneGraph, path: Path) -> dict:
    b: dict = {}
    for i, step in enumerate(path):
        b[f"rel{i}"] = step.rel
        b[f"id{i}"] = step.end
        b[f"class{i}"] = sg.classes[step.end]
    last = path[-1]
    b["rel"] = last.rel
    b["terminal_id"] = b["id"] = last.end
    b["terminal_class"] = b["class"] = sg.classes[last.end]
    return b


def _rule_matches(rule: PathRule, path: Path, sg: SceneGraph) -> bool:
    if len(rule.pattern) != len(path):
        return False
    return all(ps.matches(st, sg) for ps, st in zip(rule.pattern, path))


def apply_rules(
    paths: set[Path], rules, g: Glossary, sg: SceneGraph
) -> set[tuple[str, GlossaryTerm]]:
    """Emit (entity id, term) for every path matching a rule."""
    out: set[tuple[str, GlossaryTerm]] = set()
    for path in paths:
        for rule in rules:
            if not _rule_matches(rule, path, sg):
                continue
            try:
                phrase = rule.emit.format_map(_bindings(sg, path))
            except (KeyError, IndexError, ValueError) as e:
                raise UnresolvablePhraseSlot(
                    f"rule emit {rule.emit!r}: unresolvable slot ({e})"
                ) from e
            term = g.lookup_phrase(phrase)
            if term is None:
                raise UnknownPhrase(f"rule emitted unregistered phrase {phrase!r}")
            entity = sg.ego if rule.target == "ego" else path[-1].end
            out.add((entity, term))
    return out


def label_scene(sg: SceneGraph, rules, g: Glossary, max_len: int = DEFAULT_MAX_LEN):
    """LabeledInput for one scene: rule emissions merged per entity."""
    from .labeling import EntityLabels, LabeledInput, check_band_disjointness

    emissions = apply_rules(walk(sg, max_len), rules, g, sg)
    per_entity: dict[str, set[str]] = {sg.ego: set()}
    for entity, term in emissions:
        per_entity.setdefault(entity, set()).add(term.id)

    for entity, term_ids in per_entity.items():
        check_band_disjointness(g, entity, term_ids)

    entities = [
        EntityLabels(id=eid, cls=sg.classes[eid], terms=frozenset(terms))
        for eid, terms in sorted(per_entity.items())
    ]
    return LabeledInput(input_ref="", entities=tuple(entities))


# -- file formats --------------------------------------------------------


def load_scene_graph(path) -> SceneGraph:
    path = FsPath(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return SceneGraph(
            ego=doc["ego"],
            vertices=[(v["id"], v["class"]) for v in doc["vertices"]],
            edges=[(e["src"], e["rel"], e["dst"]) for e in doc["edges"]],
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise MalformedSceneGraph(f"cannot read scene graph {path}: {e}") from e


def rules_from_json(doc) -> list[PathRule]:
    rules = []
    for obj in doc:
        pattern = tuple(
            PatternStep(
                rel=p.get("rel", WILDCARD),
                direction=p.get("dir", WILDCARD),
                end_class=p.get("end_class"),
            )
            for p in obj["pattern"]
        )
        rules.append(
            PathRule(pattern=pattern, emit=obj["emit"], target=obj.get("target", "terminal"))
        )
    return rules


def load_rules(path) -> list[PathRule]:
    path = FsPath(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return rules_from_json(doc)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise MalformedSceneGraph(f"cannot read rule file {path}: {e}") from e

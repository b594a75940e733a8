"""Postcondition oracles over model-under-test outputs.

Output predicates are evaluated against class labels or regression
fields.  Directional regression payloads are written in the
right-positive steering convention; a schema field declaring
right_positive=false flips the observed sign so datasets with the
opposite convention evaluate correctly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import MalformedFile, SchemaMismatch, UnknownLabel, UnknownTaxonomyRoot
from .formula import Formula
from .glossary import (
    PRED_CLASS_EQUALS,
    PRED_CLASS_IN_TAXONOMY,
    PRED_REGRESSION,
    Glossary,
    OutputPredicate,
)
from .taxonomy import Taxonomy

CLASS = "class"
REGRESSION = "regression"


@dataclass(frozen=True)
class ModelOutput:
    kind: str  # class | regression
    label: Optional[str] = None
    fields: dict = field(default_factory=dict, hash=False)

    @classmethod
    def classification(cls, label: str) -> "ModelOutput":
        return cls(kind=CLASS, label=str(label))

    @classmethod
    def regression(cls, **fields) -> "ModelOutput":
        return cls(kind=REGRESSION, fields={k: float(v) for k, v in fields.items()})

    @classmethod
    def from_json(cls, doc: dict) -> "ModelOutput":
        kind = doc.get("kind")
        if kind == CLASS:
            if "label" not in doc:
                raise MalformedFile("class output missing 'label'")
            return cls.classification(doc["label"])
        if kind == REGRESSION:
            outputs = doc.get("outputs")
            if not isinstance(outputs, dict):
                raise MalformedFile("regression output missing 'outputs' map")
            return cls.regression(**outputs)
        raise MalformedFile(f"unknown model output kind {kind!r}")

    def to_json(self) -> dict:
        if self.kind == CLASS:
            return {"kind": CLASS, "label": self.label}
        return {"kind": REGRESSION, "outputs": dict(self.fields)}


@dataclass(frozen=True)
class FieldSpec:
    name: str
    right_positive: bool = True


@dataclass(frozen=True)
class OutputSchema:
    kind: str
    fields: tuple[FieldSpec, ...] = ()
    labels: Optional[tuple[str, ...]] = None

    def field_spec(self, name: str) -> Optional[FieldSpec]:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def validate(self, out: ModelOutput) -> ModelOutput:
        if out.kind != self.kind:
            raise SchemaMismatch(
                f"model produced {out.kind!r} output but schema declares {self.kind!r}"
            )
        if self.kind == REGRESSION:
            declared = {f.name for f in self.fields}
            missing = declared - set(out.fields)
            if missing:
                raise SchemaMismatch(f"output missing declared fields {sorted(missing)}")
        elif self.labels is not None and out.label not in self.labels:
            raise SchemaMismatch(f"label {out.label!r} not in declared label set")
        return out


def load_output_schema(path) -> OutputSchema:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"cannot read output schema {path}: {e}") from e
    return schema_from_dict(doc)


def schema_from_dict(doc: dict) -> OutputSchema:
    kind = doc.get("kind")
    if kind == REGRESSION:
        fields = tuple(
            FieldSpec(name=f["name"], right_positive=bool(f.get("right_positive", True)))
            for f in doc.get("fields", ())
        )
        return OutputSchema(kind=REGRESSION, fields=fields)
    if kind == CLASS:
        labels = doc.get("labels")
        return OutputSchema(kind=CLASS, labels=None if labels is None else tuple(labels))
    raise MalformedFile(f"unknown schema kind {kind!r}")


_CMP = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
}


def _eval_predicate(
    pred: OutputPredicate,
    out: ModelOutput,
    taxonomy: Optional[Taxonomy],
    schema: Optional[OutputSchema],
) -> bool:
    if pred.kind == PRED_CLASS_EQUALS:
        if out.kind != CLASS:
            raise SchemaMismatch(f"predicate {pred.phrase!r} needs a class output")
        return out.label == str(pred.payload["label"])
    if pred.kind == PRED_CLASS_IN_TAXONOMY:
        if out.kind != CLASS:
            raise SchemaMismatch(f"predicate {pred.phrase!r} needs a class output")
        if taxonomy is None:
            raise UnknownTaxonomyRoot(
                f"predicate {pred.phrase!r} needs a taxonomy, none was loaded"
            )
        try:
            return taxonomy.is_hyponym(out.label, pred.payload["root"])
        except UnknownLabel as e:
            raise UnknownTaxonomyRoot(str(e)) from e
    # regression-compare
    if out.kind != REGRESSION:
        raise SchemaMismatch(f"predicate {pred.phrase!r} needs a regression output")
    name = pred.payload["field"]
    if name not in out.fields:
        raise SchemaMismatch(f"output lacks regression field {name!r}")
    value = float(out.fields[name])
    if schema is not None:
        spec = schema.field_spec(name)
        if spec is not None and not spec.right_positive:
            value = -value
    return _CMP[pred.payload["cmp"]](value, float(pred.payload["threshold"]))


def check_postcondition(
    g: Glossary,
    post: Formula,
    out: ModelOutput,
    taxonomy: Optional[Taxonomy] = None,
    schema: Optional[OutputSchema] = None,
) -> bool:
    """Evaluate a postcondition formula; atoms name output predicates."""

    def truth(key: str) -> bool:
        pred = g.output_predicates.get(key)
        if pred is None:
            raise SchemaMismatch(f"postcondition references unknown predicate {key!r}")
        return _eval_predicate(pred, out, taxonomy, schema)

    return post.evaluate(truth)


def bind_check(g, post, taxonomy=None, schema=None):
    """Pre-resolve predicates; returns out -> bool."""
    for key in set(post.atoms()):
        if key not in g.output_predicates:
            raise SchemaMismatch(f"postcondition references unknown predicate {key!r}")
        pred = g.output_predicates[key]
        if pred.kind == PRED_CLASS_IN_TAXONOMY:
            if taxonomy is None:
                raise UnknownTaxonomyRoot(
                    f"predicate {pred.phrase!r} needs a taxonomy, none was loaded"
                )
            if pred.payload["root"] not in taxonomy.nodes:
                raise UnknownTaxonomyRoot(
                    f"taxonomy root {pred.payload['root']!r} not in taxonomy"
                )
        if pred.kind == PRED_REGRESSION and schema is not None:
            if schema.kind != REGRESSION or schema.field_spec(pred.payload["field"]) is None:
                raise SchemaMismatch(
                    f"predicate {pred.phrase!r} references undeclared field "
                    f"{pred.payload['field']!r}"
                )

    def check(out: ModelOutput) -> bool:
        return check_postcondition(g, post, out, taxonomy=taxonomy, schema=schema)

    return check

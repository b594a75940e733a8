"""Propositional formulas over named atoms.

Preconditions use atoms naming glossary terms; postconditions use atoms
naming output predicates.  Nodes are immutable and hashable so parsed
requirements can be compared structurally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator


class Formula:
    def atoms(self) -> Iterator[str]:
        raise NotImplementedError

    def evaluate(self, truth: Callable[[str], bool]) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Atom(Formula):
    ref: str

    def atoms(self):
        yield self.ref

    def evaluate(self, truth):
        return truth(self.ref)


@dataclass(frozen=True)
class Not(Formula):
    child: Formula

    def atoms(self):
        yield from self.child.atoms()

    def evaluate(self, truth):
        return not self.child.evaluate(truth)


@dataclass(frozen=True)
class And(Formula):
    children: tuple[Formula, ...]

    def atoms(self):
        for c in self.children:
            yield from c.atoms()

    def evaluate(self, truth):
        return all(c.evaluate(truth) for c in self.children)


@dataclass(frozen=True)
class Or(Formula):
    children: tuple[Formula, ...]

    def atoms(self):
        for c in self.children:
            yield from c.atoms()

    def evaluate(self, truth):
        return any(c.evaluate(truth) for c in self.children)


def conj(children) -> Formula:
    return _nary(And, children)


def disj(children) -> Formula:
    return _nary(Or, children)


def _nary(node, children):
    flat = []
    for c in children:
        if isinstance(c, node):
            flat.extend(c.children)
        else:
            flat.append(c)
    if not flat:
        raise ValueError("connective requires at least one operand")
    if len(flat) == 1:
        return flat[0]
    return node(tuple(flat))


def normalize(f: Formula) -> Formula:
    """Flatten nested And/Or, collapse singletons, cancel double negation."""
    if isinstance(f, Atom):
        return f
    if isinstance(f, Not):
        inner = normalize(f.child)
        if isinstance(inner, Not):
            return inner.child
        return Not(inner)
    if isinstance(f, And):
        return conj([normalize(c) for c in f.children])
    if isinstance(f, Or):
        return disj([normalize(c) for c in f.children])
    raise TypeError(f"not a formula: {f!r}")

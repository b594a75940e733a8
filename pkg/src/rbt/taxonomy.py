"""Label taxonomy for hyponym-closure postconditions.

Labels are opaque strings matching model-under-test class labels.  The
structure is a DAG (multiple inheritance allowed); leaf sets are
memoized behind a lock so concurrent readers share the cache.
"""
from __future__ import annotations

import json
import threading
from pathlib import Path

from .errors import CyclicTaxonomy, MalformedFile, UnknownLabel


class Taxonomy:
    def __init__(self, edges):
        """edges: iterable of (child, parent) pairs."""
        self.nodes: set[str] = set()
        self._children: dict[str, set[str]] = {}
        for child, parent in edges:
            self.nodes.add(child)
            self.nodes.add(parent)
            self._children.setdefault(parent, set()).add(child)
        self._assert_acyclic()
        self._leaf_cache: dict[str, frozenset[str]] = {}
        self._lock = threading.Lock()

    def _assert_acyclic(self):
        # iterative DFS with colors; cycles must fail the load, never hang
        WHITE, GREY, BLACK = 0, 1, 2
        color = {n: 0 for n in self.nodes}
        for start in self.nodes:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(self._children.get(start, ())))]
            color[start] = GREY
            while stack:
                node, it = stack[-1]
                advanced = False
                for child in it:
                    if color[child] == GREY:
                        raise CyclicTaxonomy(f"cycle through {child!r}")
                    if color[child] == WHITE:
                        color[child] = GREY
                        stack.append((child, iter(self._children.get(child, ()))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()

    def children(self, label: str) -> frozenset[str]:
        return frozenset(self._children.get(label, ()))

    def is_leaf(self, label: str) -> bool:
        return label not in self._children

    def leaves_under(self, root: str) -> frozenset[str]:
        """All leaf descendants of root; {root} if root is itself a leaf."""
        if root not in self.nodes:
            raise UnknownLabel(f"label {root!r} not in taxonomy")
        with self._lock:
            cached = self._leaf_cache.get(root)
        if cached is not None:
            return cached
        out: set[str] = set()
        stack = [root]
        seen = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            kids = self._children.get(node)
            if not kids:
                out.add(node)
            else:
                stack.extend(kids)
        result = frozenset(out)
        with self._lock:
            self._leaf_cache[root] = result
        return result

    def is_hyponym(self, label: str, root: str) -> bool:
        """True iff label is a leaf under root; unknown labels are False."""
        return label in self.leaves_under(root)


def leaves_under(t: Taxonomy, root: str) -> frozenset[str]:
    return t.leaves_under(root)


def is_hyponym(t: Taxonomy, label: str, root: str) -> bool:
    return t.is_hyponym(label, root)


def load_taxonomy(path) -> Taxonomy:
    """Load a JSONL file of {"child": ..., "parent": ...} edge records."""
    path = Path(path)
    edges = []
    try:
        with path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    edges.append((row["child"], row["parent"]))
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise MalformedFile(f"{path}:{lineno}: bad edge record: {e}") from e
    except OSError as e:
        raise MalformedFile(f"cannot read taxonomy {path}: {e}") from e
    return Taxonomy(edges)

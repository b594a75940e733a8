"""Quantitative evaluation of generated test sets.

Three families: precondition-match against a term-verdict provider,
Jensen-Shannon divergence between glossary-term distributions (base-2
logs, so the range is [0, 1]), and KID, the unbiased squared-MMD
estimate with the conventional degree-3 polynomial kernel over feature
embeddings loaded from a manifest.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDistribution,
    EmptyInputs,
    MalformedFile,
    ProviderFailure,
    TooFewSamples,
)
from .labeling import LabeledInput, TermVerdictProvider
from .snl import PreTree


@dataclass
class TermDistribution:
    counts: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.counts.values())

    def probability(self, term: str) -> float:
        total = self.total
        return self.counts.get(term, 0.0) / total if total else 0.0


def term_distribution(
    labels: Iterable[LabeledInput], mode: str = "occurrence"
) -> TermDistribution:
    """Counts of each term over all entities of all inputs.

    "occurrence" counts once per (entity, term) pair; "presence" counts a
    term once per input regardless of how many entities carry it.
    """
    if mode not in ("occurrence", "presence"):
        raise ValueError(f"unknown counting mode {mode!r}")
    counts: dict[str, float] = {}
    for li in labels:
        if mode == "presence":
            for t in li.all_terms():
                counts[t] = counts.get(t, 0.0) + 1.0
        else:
            for e in li.entities:
                for t in e.terms:
                    counts[t] = counts.get(t, 0.0) + 1.0
    return TermDistribution(counts=counts)


def js_divergence(p: TermDistribution, q: TermDistribution) -> float:
    """Jensen-Shannon divergence, base 2: 1/2 KL(P||M) + 1/2 KL(Q||M)."""
    if p.total <= 0 or q.total <= 0:
        raise EmptyDistribution("js_divergence needs two non-empty distributions")
    vocab = set(p.counts) | set(q.counts)
    total = 0.0
    for term in vocab:
        pi, qi = p.probability(term), q.probability(term)
        mi = 0.5 * (pi + qi)
        if pi > 0:
            total += 0.5 * pi * math.log2(pi / mi)
        if qi > 0:
            total += 0.5 * qi * math.log2(qi / mi)
    # clamp tiny negative float noise
    return min(max(total, 0.0), 1.0)


def polynomial_kernel(a, b, degree=3, gamma=None, coef=1.0):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a.shape[1]
    if gamma is None:
        gamma = 1.0 / d
    return (gamma * (a @ b.T) + coef) ** degree


def _mmd2_unbiased(x, y, degree, gamma, coef):
    m, n = len(x), len(y)
    kxx = polynomial_kernel(x, x, degree, gamma, coef)
    kyy = polynomial_kernel(y, y, degree, gamma, coef)
    kxy = polynomial_kernel(x, y, degree, gamma, coef)
    sum_xx = kxx.sum() - np.trace(kxx)
    sum_yy = kyy.sum() - np.trace(kyy)
    return float(
        sum_xx / (m * (m - 1)) + sum_yy / (n * (n - 1)) - 2.0 * kxy.mean()
    )


def kid(
    x_feats,
    y_feats,
    block: Optional[int] = None,
    degree: int = 3,
    gamma: Optional[float] = None,
    coef: float = 1.0,
) -> tuple[float, float]:
    """Unbiased squared-MMD estimate with kernel (gamma x.y + coef)^degree.

    With ``block`` set, disjoint consecutive blocks of that size each get
    their own estimate; returns (mean, population std) over blocks.
    Without it, a single estimate with std 0.
    """
    x = np.asarray(x_feats, dtype=float)
    y = np.asarray(y_feats, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise DimensionMismatch(
            f"feature sets must share one dimension, got {x.shape} and {y.shape}"
        )
    if len(x) < 2 or len(y) < 2:
        raise TooFewSamples("kid needs at least 2 samples on each side")

    if block is None:
        return _mmd2_unbiased(x, y, degree, gamma, coef), 0.0

    if block < 2:
        raise TooFewSamples("block size must be at least 2")
    n_blocks = min(len(x), len(y)) // block
    if n_blocks < 1:
        raise TooFewSamples(
            f"block size {block} exceeds the smaller sample ({min(len(x), len(y))})"
        )
    estimates = [
        _mmd2_unbiased(
            x[i * block : (i + 1) * block],
            y[i * block : (i + 1) * block],
            degree,
            gamma,
            coef,
        )
        for i in range(n_blocks)
    ]
    mean = sum(estimates) / n_blocks
    std = math.sqrt(sum((e - mean) ** 2 for e in estimates) / n_blocks)
    return mean, std


# -- precondition match -------------------------------------------------------


def eval_degraded(pre: PreTree, truth) -> bool:
    """Clause-tree evaluation with entity semantics degraded to sole-entity."""
    def clause_value(clause):
        holds = clause.body.evaluate(truth)
        return holds if clause.polarity == "exists" else not holds

    values = (clause_value(c) for c in pre.clauses)
    return all(values) if pre.op == "and" else any(values)


def precondition_match(
    pre: PreTree,
    input_refs,
    provider: TermVerdictProvider,
) -> float:
    """Fraction of inputs whose verdict valuation satisfies the precondition."""
    input_refs = list(input_refs)
    if not input_refs:
        raise EmptyInputs("precondition_match needs at least one input")
    atoms = set()
    for clause in pre.clauses:
        atoms.update(clause.body.atoms())

    matched = 0
    for ref in input_refs:
        valuation = {}
        for term in atoms:
            try:
                valuation[term] = provider.verdict(ref, term)
            except Exception as e:
                raise ProviderFailure(
                    f"verdict failed for term {term!r} on {ref!r}: {e}",
                    term=term,
                    input_ref=ref,
                ) from e
        if eval_degraded(pre, lambda t: valuation[t]):
            matched += 1
    return matched / len(input_refs)


# -- feature manifests ---------------------------------------------------------


def load_feature_manifest(path) -> tuple[list[str], np.ndarray]:
    """JSONL rows {"input": ..., "vector": [...]} -> (refs, matrix)."""
    refs: list[str] = []
    vectors: list[list[float]] = []
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    refs.append(row["input"])
                    vectors.append([float(v) for v in row["vector"]])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise MalformedFile(f"{path}:{lineno}: bad feature row: {e}") from e
    except OSError as e:
        raise MalformedFile(f"cannot read feature manifest {path}: {e}") from e
    if vectors and len({len(v) for v in vectors}) != 1:
        raise DimensionMismatch(f"{path}: feature vectors vary in dimension")
    return refs, np.asarray(vectors, dtype=float)

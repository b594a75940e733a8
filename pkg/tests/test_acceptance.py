"""Acceptance suite: one test per acceptance criterion, hard tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail
line per criterion.
"""
import itertools
import math
import random
import time

import numpy as np
import pytest

import rbt
from rbt.filterset import build_heldout_split, eval_precondition, filter_dataset
from rbt.formula import Atom, Or
from rbt.glossary import expand_range
from rbt.harness import (
    REASON_CRASH,
    ReplaySource,
    RunReport,
    RepResult,
    StubMut,
    estimate_false_positives,
    run_campaign,
)
from rbt.labeling import sole_entity_input
from rbt.metrics import TermDistribution, js_divergence, kid
from rbt.morpho import label as morpho_label
from rbt.morpho import measure
from rbt.oracle import FieldSpec, ModelOutput, OutputSchema, check_postcondition
from rbt.scenegraph import FORWARD, REVERSE, SceneGraph, Step, apply_rules, load_rules, walk
from rbt.snl import parse_postcondition, parse_requirement, render
from rbt.taxonomy import Taxonomy, is_hyponym, leaves_under, load_taxonomy

from tests.test_filterset import oracle_eval, random_case
from tests.test_metrics import JS_HALF_VS_POINT, brute_force_kid
from tests.test_morpho import make_bar
from tests.test_snl import EXPECTED, load_corpus
from tests.test_taxonomy import brute_force_leaves


def passed(name):
    print(f"ACCEPTANCE PASS: {name}")


def test_criterion_snl_corpus(all_glossaries):
    start = time.perf_counter()
    corpus = load_corpus(all_glossaries)
    assert set(corpus) == set(EXPECTED) and len(corpus) == 25
    for rid, (g, r) in corpus.items():
        want_pre, want_post = EXPECTED[rid]
        assert r.precondition == want_pre, rid
        assert r.postcondition == want_post, rid
        again = parse_requirement(g, render(g, r), req_id=rid)
        assert again.precondition == r.precondition, rid
        assert again.postcondition == r.postcondition, rid
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"corpus parse+round-trip took {elapsed:.3f}s"
    passed(f"SNL corpus: 25/25 expected ASTs, render round-trip fixed point, {elapsed * 1000:.0f} ms")


def test_criterion_range_expansion(sgsm_glossary):
    grp = sgsm_glossary.groups["sgsm.dist"]
    f = expand_range(sgsm_glossary, grp, "within", [10])
    assert f == Or((Atom("sgsm.dist.d0_4"), Atom("sgsm.dist.d4_7"), Atom("sgsm.dist.d7_10")))
    members = list(grp.members)
    for k in range(1, len(members)):
        edge = grp.bands[k].lower

        def atoms(formula):
            return [formula.ref] if isinstance(formula, Atom) else [a.ref for a in formula.children]

        inside = atoms(expand_range(sgsm_glossary, grp, "within", [edge]))
        outside = atoms(expand_range(sgsm_glossary, grp, "beyond", [edge]))
        assert inside == members[:k] and outside == members[k:]
        assert set(inside) | set(outside) == set(members)
        assert not set(inside) & set(outside)
    passed("range expansion: within-10m 3-band disjunction, within/beyond partition on all prefixes")


def test_criterion_precondition_evaluator(mnist_glossary):
    rng = random.Random(20250808)
    agree = 0
    for _ in range(10_000):
        pre, li = random_case(rng)
        assert eval_precondition(pre, li) == oracle_eval(pre, li)
        agree += 1
    assert agree == 10_000

    from rbt.snl import parse_precondition

    pre = parse_precondition(mnist_glossary, "The digit is a 2 and has very low height")
    labels = []
    for i in range(500):
        terms = (
            {"mnist.digit.2", "mnist.height.vlow"}
            if rng.random() < 0.2
            else {"mnist.digit.3", "mnist.height.low"}
        )
        labels.append(sole_entity_input(f"img{i:04d}", terms))
    manifest = filter_dataset(mnist_glossary, pre, labels)
    got = {ref for ref, _ in manifest.rows}
    want = {li.input_ref for li in labels if oracle_eval(pre, li)}
    assert got == want
    passed("precondition evaluator: 10,000/10,000 oracle agreement, filter set-equality")


def test_criterion_morphometrics(mnist_glossary):
    m = measure(make_bar(bar_width=5, bar_height=20))
    assert 4.0 <= m.thickness <= 6.0, m.thickness

    measured = {s: measure(make_bar(shear=s)).slant for s in (-0.4, -0.2, 0.2, 0.4)}
    for s, slant in measured.items():
        assert math.copysign(1, slant) == math.copysign(1, s), (s, slant)
    assert abs(measured[0.4]) > abs(measured[0.2])
    assert abs(measured[-0.4]) > abs(measured[-0.2])

    img = make_bar(shear=0.3)
    from rbt.morpho import RasterImage

    mirrored = RasterImage.from_array(img.pixels[:, ::-1])
    assert abs(measure(img).slant + measure(mirrored).slant) < 1e-6

    g = mnist_glossary
    fixtures = [
        make_bar(bar_width=w, bar_height=h, shear=s)
        for w, h, s in [(2, 10, 0.0), (4, 16, -0.3), (5, 20, 0.2), (8, 24, 0.45), (9, 12, -0.5)]
    ]
    for img in fixtures:
        terms = {t.id for t in morpho_label(img, g, g.terms["mnist.digit.5"])}
        for group in ("mnist.thick", "mnist.slant", "mnist.height"):
            assert len(terms & set(g.groups[group].members)) == 1
    passed("morphometrics: bar thickness in [4,6], slant signs/monotone, mirror antisymmetry, one band per group")


def _connected(k, pairs):
    if k == 1:
        return True
    adj = {i: set() for i in range(k)}
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)
    seen = {0}
    stack = [0]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == k


def _oracle_paths(sg, max_len):
    """Recursive enumerator, independently structured from walk()."""
    adjacency = {}
    for (src, rel, dst) in sg.edges:
        adjacency.setdefault(src, []).append(Step(src, rel, dst, FORWARD))
        adjacency.setdefault(dst, []).append(Step(src, rel, dst, REVERSE))

    out = set()

    def rec(vertex, visited, acc):
        for step in adjacency.get(vertex, ()):
            if step.end in visited or len(acc) == max_len:
                continue
            out.add(acc + (step,))
            rec(step.end, visited | {step.end}, acc + (step,))

    rec(sg.ego, {sg.ego}, ())
    return out


def test_criterion_scene_graphs(sgsm_glossary):
    rules = load_rules(rbt.data_path("rules_sgsm.json"))
    sg = SceneGraph(
        ego="ego",
        vertices=[("ego", "ego"), ("lane1", "lane"), ("lane2", "lane"), ("car17", "vehicle")],
        edges=[("ego", "in", "lane1"), ("lane2", "leftof", "lane1"), ("car17", "in", "lane2")],
    )
    emissions = apply_rules(walk(sg, 4), rules, sgsm_glossary, sg)
    laneleft = sgsm_glossary.terms["sgsm.laneleft"]
    assert ("car17", laneleft) in emissions
    assert "is in the lane to the left" in laneleft.surfaces()

    start = time.perf_counter()
    graphs = 0
    for k in range(1, 7):
        vertices = [(f"v{i}", "thing") for i in range(k)]
        all_pairs = list(itertools.combinations(range(k), 2))
        for mask in range(1 << len(all_pairs)):
            pairs = [all_pairs[i] for i in range(len(all_pairs)) if mask >> i & 1]
            if not _connected(k, pairs):
                continue
            edges = [
                (f"v{a}", f"r{(a * 7 + b) % 3}", f"v{b}")
                if (a + b) % 2 == 0
                else (f"v{b}", f"r{(a * 7 + b) % 3}", f"v{a}")
                for a, b in pairs
            ]
            sg = SceneGraph("v0", vertices, edges)
            assert walk(sg, k) == _oracle_paths(sg, k)
            graphs += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 30, f"sweep took {elapsed:.1f}s"
    passed(
        f"scene graphs: 3-triple example emits (car17, lane-to-the-left); "
        f"{graphs} connected graphs vs brute-force DFS in {elapsed:.1f}s"
    )


def test_criterion_taxonomy():
    rng = random.Random(424242)
    for _ in range(1000):
        n = rng.randint(2, 50)
        edges = set()
        for child in range(1, n):
            for parent in rng.sample(range(child), k=min(child, rng.randint(1, 3))):
                edges.add((f"n{child}", f"n{parent}"))
        edges = sorted(edges)
        t = Taxonomy(edges)
        root = f"n{rng.randrange(n)}"
        if root in t.nodes:
            assert leaves_under(t, root) == brute_force_leaves(edges, root)

    t = load_taxonomy(rbt.data_path("taxonomy_imagenet.jsonl"))
    assert len(leaves_under(t, "bird")) == 59
    assert is_hyponym(t, "robin", "bird")
    assert not is_hyponym(t, "worm fence", "bird")
    passed("taxonomy: 1000 random DAGs vs oracle, 59 bird leaves, robin yes / worm fence no")


def test_criterion_oracles(sgsm_glossary):
    g = sgsm_glossary
    schema = OutputSchema(kind="regression", fields=(FieldSpec("accel"), FieldSpec("steer")))
    zero = ModelOutput.regression(accel=0.0, steer=0.0)

    def holds(text, out):
        return check_postcondition(g, parse_postcondition(g, text), out, schema=schema)

    assert holds("not accelerate", zero)
    assert not holds("accelerate", zero)
    assert not holds("decelerate", zero)
    assert holds("not steer to the right", zero)
    assert holds("not steer to the left", zero)

    rng = random.Random(7171)
    phrases = ["accelerate", "decelerate", "steer to the right", "steer to the left"]
    for _ in range(1000):
        value = rng.choice([-1.0, 0.0, 1.0, rng.uniform(-3, 3)])
        out = ModelOutput.regression(accel=value, steer=-value)
        phrase = rng.choice(phrases)
        assert holds(f"not {phrase}", out) == (not holds(phrase, out))
    passed("oracles: regression boundary table at 0, negation duality on 1000 random outputs")


def test_criterion_metrics():
    p = TermDistribution({"a": 2, "b": 2})
    assert js_divergence(p, p) == 0.0
    assert js_divergence(TermDistribution({"a": 1}), TermDistribution({"b": 1})) == 1.0
    got = js_divergence(TermDistribution({"a": 0.5, "b": 0.5}), TermDistribution({"a": 1.0}))
    assert abs(got - 0.3113) < 1e-4 and abs(got - JS_HALF_VS_POINT) < 1e-12

    rng = random.Random(31337)
    for _ in range(1000):
        vocab = [f"t{i}" for i in range(rng.randint(1, 6))]
        a = TermDistribution({t: rng.randint(1, 30) for t in vocab if rng.random() < 0.8})
        b = TermDistribution({t: rng.randint(1, 30) for t in vocab if rng.random() < 0.8})
        if a.total == 0 or b.total == 0:
            continue
        d = js_divergence(a, b)
        assert 0.0 <= d <= 1.0
        assert abs(d - js_divergence(b, a)) < 1e-12
        scaled = TermDistribution({t: c * 13 for t, c in a.counts.items()})
        assert abs(js_divergence(scaled, b) - d) < 1e-12

    assert kid([[0.0], [0.0]], [[0.0], [0.0]])[0] == pytest.approx(0.0, abs=1e-9)
    assert kid([[1.0], [1.0]], [[0.0], [0.0]])[0] == pytest.approx(7.0, abs=1e-9)
    nprng = np.random.default_rng(64)
    for m, n, d in [(2, 2, 1), (17, 33, 5), (64, 64, 3), (64, 48, 8)]:
        x = nprng.normal(size=(m, d))
        y = nprng.normal(size=(n, d))
        assert kid(x, y)[0] == pytest.approx(brute_force_kid(x.tolist(), y.tolist()), abs=1e-9)

    report = RunReport(requirement_id="X", n=10, seed=0,
                       reps=[RepResult(rep=0, n=10, passes=0)])
    for i in range(11):
        for j in range(11):
            report.reps[0].passes = j
            pmp = i / 10
            assert estimate_false_positives(report, pmp) == (1 - pmp) * (1 - j / 10)
    passed("metrics: JS exact cases + 1000 property pairs, KID hand cases + brute force <=64, fp 11x11 grid")


def test_criterion_harness(tmp_path, mnist_glossary):
    replay = tmp_path / "replay"
    replay.mkdir()
    for i in range(10):
        name = f"t_{i:02d}_bad.png" if i < 3 else f"t_{i:02d}_ok.png"
        (replay / name).write_text("x", encoding="utf-8")
    m1 = parse_requirement(
        mnist_glossary,
        ("The digit is a 2 and has very low height", "label as 2"),
        req_id="M1",
    )

    report = run_campaign(
        m1, ReplaySource(replay), StubMut("fail_if_contains:bad"),
        n=10, reps=5, seed=3, glossary=mnist_glossary,
    )
    assert report.pass_rate_mean == 0.7 and report.pass_rate_std == 0.0

    a = run_campaign(
        m1, ReplaySource(replay), StubMut("fail_if_contains:bad"),
        n=10, reps=5, seed=3, glossary=mnist_glossary,
    ).dumps()
    assert a == report.dumps()

    crash = run_campaign(
        m1, ReplaySource(replay), StubMut("crash_if_contains:bad"),
        n=10, reps=2, seed=3, glossary=mnist_glossary,
    )
    for rep in crash.reps:
        assert rep.passes + len(rep.failures) == 10
        assert {f.reason for f in rep.failures} == {REASON_CRASH}

    big = tmp_path / "big"
    big.mkdir()
    for i in range(1000):
        (big / f"b{i:04d}.png").write_text("x", encoding="utf-8")
    start = time.perf_counter()
    shape = run_campaign(
        m1, ReplaySource(big), StubMut("pass"), n=1000, reps=10, seed=1,
        glossary=mnist_glossary,
    )
    elapsed = time.perf_counter() - start
    assert shape.pass_rate_mean == 1.0 and len(shape.reps) == 10
    assert elapsed < 60, f"1000x10 stub campaign took {elapsed:.1f}s"
    passed(
        f"harness: counted fixture 0.700 +/- 0.000, byte-identical reports, "
        f"crash isolation, 1000x10 in {elapsed:.1f}s"
    )


def test_criterion_split_builder(mnist_glossary):
    labels = [
        sole_entity_input(f"s{i:03d}", {"mnist.thick.vthick"}) for i in range(100)
    ] + [
        sole_entity_input(f"n{i:03d}", {"mnist.thick.thin"}) for i in range(40)
    ]
    req = parse_requirement(mnist_glossary, ("is very thick", "label as 2"), req_id="R1")
    split = build_heldout_split(labels, [req], r=10)
    sat_in_test = [li for li in split.test if eval_precondition(req.precondition, li)]
    assert len(sat_in_test) == 10

    reqs = [
        parse_requirement(mnist_glossary, ("is very thick", "label as 2"), req_id="R1"),
        parse_requirement(mnist_glossary, ("has very low height", "label as 2"), req_id="R2"),
        parse_requirement(
            mnist_glossary,
            ("is very thick and has very low height", "label as 2"),
            req_id="R3",
        ),
    ]
    rng = random.Random(555)
    for trial in range(20):
        data = []
        for i in range(rng.randint(30, 250)):
            terms = set()
            if rng.random() < 0.5:
                terms.add("mnist.thick.vthick")
            if rng.random() < 0.4:
                terms.add("mnist.height.vlow")
            data.append(sole_entity_input(f"d{trial}_{i:04d}", terms))
        r = rng.choice([5, 10, 20, 33])
        result = build_heldout_split(data, reqs, r=r)
        test_refs = {li.input_ref for li in result.test}
        train_refs = {li.input_ref for li in result.train}
        assert not test_refs & train_refs
        assert test_refs | train_refs == {li.input_ref for li in data}
        for rq in reqs:
            d = [li for li in data if eval_precondition(rq.precondition, li)]
            cap = math.floor(r / 100 * len(d))
            assert sum(1 for li in d if li.input_ref in test_refs) <= cap
    passed("split builder: exactly 10 of 100 at r=10, disjointness and caps on 20 randomized fixtures")

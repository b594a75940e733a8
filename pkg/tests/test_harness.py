import sys
import time

import pytest

from rbt.errors import GeneratorExhausted, MalformedFile
from rbt.harness import (
    REASON_CRASH,
    REASON_POSTCONDITION,
    ReplaySource,
    StubMut,
    estimate_false_positives,
    generator_from_spec,
    mut_from_spec,
    run_campaign,
)
from rbt.protocol import run_conformance
from rbt.snl import parse_requirement


@pytest.fixture()
def replay_dir(tmp_path):
    d = tmp_path / "inputs"
    d.mkdir()
    for i in range(10):
        name = f"img_{i:02d}_bad.png" if i < 3 else f"img_{i:02d}_ok.png"
        (d / name).write_text("stub", encoding="utf-8")
    return d


@pytest.fixture()
def m1(mnist_glossary):
    return parse_requirement(
        mnist_glossary,
        ("The digit is a 2 and has very low height", "label as 2"),
        req_id="M1",
    )


class TestReplaySource:
    def test_sampling_without_replacement(self, replay_dir):
        src = ReplaySource(replay_dir)
        picks = src.obtain(10, seed=1, prompt="")
        assert sorted(picks) == sorted(src.files)

    def test_exhausted(self, replay_dir):
        src = ReplaySource(replay_dir)
        with pytest.raises(GeneratorExhausted):
            src.obtain(11, seed=1, prompt="")

    def test_spec_parsing(self, replay_dir):
        assert isinstance(generator_from_spec(f"replay:{replay_dir}"), ReplaySource)
        assert isinstance(mut_from_spec("stub:pass"), StubMut)
        with pytest.raises(MalformedFile):
            generator_from_spec("magic:wand")
        with pytest.raises(MalformedFile):
            mut_from_spec("nonsense")


class TestStubCampaigns:
    def test_counted_fixture_pass_rate_exact(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1,
            ReplaySource(replay_dir),
            StubMut("fail_if_contains:bad"),
            n=10,
            reps=5,
            seed=7,
            glossary=mnist_glossary,
        )
        assert report.pass_rate_mean == 0.7
        assert report.pass_rate_std == 0.0
        for rep in report.reps:
            assert rep.passes == 7
            assert {f.reason for f in rep.failures} == {REASON_POSTCONDITION}

    def test_always_pass_stub(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("pass"), n=10, reps=3, seed=1,
            glossary=mnist_glossary,
        )
        assert report.pass_rates == [1.0, 1.0, 1.0]

    def test_accounting_invariant(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("fail_if_contains:bad"),
            n=10, reps=4, seed=3, glossary=mnist_glossary,
        )
        for rep in report.reps:
            assert rep.passes + len(rep.failures) == rep.n

    def test_seed_determinism_byte_identical(self, replay_dir, m1, mnist_glossary):
        def run():
            return run_campaign(
                m1, ReplaySource(replay_dir), StubMut("fail_if_contains:bad"),
                n=8, reps=3, seed=42, glossary=mnist_glossary,
            ).dumps()

        assert run() == run()

    def test_crash_injection_records_reason_and_continues(
        self, replay_dir, m1, mnist_glossary
    ):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("crash_if_contains:bad"),
            n=10, reps=2, seed=5, glossary=mnist_glossary,
        )
        for rep in report.reps:
            assert rep.passes == 7
            assert {f.reason for f in rep.failures} == {REASON_CRASH}

    def test_regression_requirement_with_stub(self, sgsm_glossary, replay_dir):
        from rbt.oracle import FieldSpec, OutputSchema

        req = parse_requirement(
            sgsm_glossary,
            ("A vehicle is within 10 meters, in front, and in the same lane", "not accelerate"),
            req_id="S1",
        )
        schema = OutputSchema(kind="regression", fields=(FieldSpec("accel"), FieldSpec("steer")))
        report = run_campaign(
            req, ReplaySource(replay_dir), StubMut("pass"), n=5, reps=2, seed=1,
            glossary=sgsm_glossary, schema=schema,
        )
        assert report.pass_rate_mean == 1.0

    def test_taxonomy_requirement_with_stub(self, imagenet_glossary, replay_dir):
        import rbt
        from rbt.taxonomy import load_taxonomy

        req = parse_requirement(
            imagenet_glossary,
            ("The single animal has no limbs and no ears", "label as a hyponym of snake"),
            req_id="I4",
        )
        taxonomy = load_taxonomy(rbt.data_path("taxonomy_imagenet.jsonl"))
        report = run_campaign(
            req, ReplaySource(replay_dir), StubMut("fail"), n=4, reps=1, seed=1,
            glossary=imagenet_glossary, taxonomy=taxonomy,
        )
        assert report.pass_rate_mean == 0.0

    def test_large_campaign_shape_under_60s(self, tmp_path, m1, mnist_glossary):
        d = tmp_path / "big"
        d.mkdir()
        for i in range(1000):
            (d / f"t{i:04d}.png").write_text("x", encoding="utf-8")
        start = time.perf_counter()
        report = run_campaign(
            m1, ReplaySource(d), StubMut("pass"), n=1000, reps=10, seed=11,
            glossary=mnist_glossary,
        )
        elapsed = time.perf_counter() - start
        assert report.pass_rate_mean == 1.0 and len(report.reps) == 10
        assert elapsed < 60


class TestExecAdapters:
    def test_process_generator_and_mut(self, adapter_script, m1, mnist_glossary):
        gen = generator_from_spec(f"exec:{sys.executable} {adapter_script} generator")
        mut = mut_from_spec(f"exec:{sys.executable} {adapter_script} mut class:2")
        try:
            report = run_campaign(
                m1, gen, mut, n=6, reps=2, seed=9, glossary=mnist_glossary
            )
        finally:
            gen.close()
        assert report.pass_rates == [1.0, 1.0]

    def test_wrong_label_fails_postcondition(self, adapter_script, m1, mnist_glossary, replay_dir):
        mut = mut_from_spec(f"exec:{sys.executable} {adapter_script} mut class:9")
        report = run_campaign(
            m1, ReplaySource(replay_dir), mut, n=5, reps=1, seed=2,
            glossary=mnist_glossary,
        )
        assert report.pass_rate_mean == 0.0
        assert all(f.reason == REASON_POSTCONDITION for f in report.reps[0].failures)

    def test_mut_crash_captured_and_campaign_continues(
        self, adapter_script, m1, mnist_glossary, replay_dir
    ):
        mut = mut_from_spec(
            f"exec:{sys.executable} {adapter_script} mut die_if_contains:bad"
        )
        report = run_campaign(
            m1, ReplaySource(replay_dir), mut, n=10, reps=1, seed=4,
            glossary=mnist_glossary, timeout=20,
        )
        rep = report.reps[0]
        assert rep.passes == 7
        crash_failures = [f for f in rep.failures if f.reason == REASON_CRASH]
        assert len(crash_failures) == 3
        assert any("injected adapter death" in f.detail for f in crash_failures)

    def test_mut_timeout_fails_single_test_and_continues(
        self, adapter_script, m1, mnist_glossary, replay_dir
    ):
        from rbt.harness import REASON_TIMEOUT

        mut = mut_from_spec(
            f"exec:{sys.executable} {adapter_script} mut hang_if_contains:bad"
        )
        report = run_campaign(
            m1, ReplaySource(replay_dir), mut, n=10, reps=1, seed=8,
            glossary=mnist_glossary, timeout=2,
        )
        rep = report.reps[0]
        assert rep.passes == 7
        assert {f.reason for f in rep.failures} == {REASON_TIMEOUT}

    def test_worker_pool_matches_serial(self, adapter_script, m1, mnist_glossary, replay_dir):
        def run(workers):
            mut = mut_from_spec(f"exec:{sys.executable} {adapter_script} mut class:2")
            return run_campaign(
                m1, ReplaySource(replay_dir), mut, n=10, reps=2, seed=6,
                glossary=mnist_glossary, workers=workers,
            ).dumps()

        assert run(1) == run(3)


class TestConformance:
    def test_scripted_adapters_pass_fuzz(self, adapter_script):
        for role, extra in (("generator", ""), ("mut", " class:2")):
            results = run_conformance(
                f"{sys.executable} {adapter_script} {role}{extra}", role
            )
            assert all(r.ok for r in results), [r for r in results if not r.ok]

    def test_silent_adapter_fails_fuzz(self, tmp_path):
        bad = tmp_path / "bad.py"
        bad.write_text("import sys\nsys.exit(0)\n", encoding="utf-8")
        results = run_conformance(f"{sys.executable} {bad}", "mut")
        assert not results[0].ok  # no handshake


class TestFalsePositiveEstimate:
    def test_perfect_precondition_match_gives_zero(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("fail"), n=10, reps=1, seed=1,
            glossary=mnist_glossary,
        )
        assert estimate_false_positives(report, pmp=1.0) == 0.0

    def test_direct_formula_value(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("fail_if_contains:bad"),
            n=10, reps=1, seed=1, glossary=mnist_glossary,
        )
        # ptp == 0.7 exactly on the counted fixture
        got = estimate_false_positives(report, pmp=0.9)
        assert got == pytest.approx((1 - 0.9) * (1 - 0.7), abs=0)
        assert report.fp_estimate == got and report.pmp == 0.9

    def test_grid_matches_product_formula(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("pass"), n=10, reps=1, seed=1,
            glossary=mnist_glossary,
        )
        for i in range(11):
            pmp = i / 10
            for j in range(11):
                report.reps[0].passes = j  # forge ptp = j/10
                expected = (1 - pmp) * (1 - j / 10)
                assert estimate_false_positives(report, pmp) == expected

    def test_pmp_out_of_range(self, replay_dir, m1, mnist_glossary):
        report = run_campaign(
            m1, ReplaySource(replay_dir), StubMut("pass"), n=10, reps=1, seed=1,
            glossary=mnist_glossary,
        )
        with pytest.raises(ValueError):
            estimate_false_positives(report, 1.5)

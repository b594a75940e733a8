"""Test campaign execution against a black-box model under test.

Each repetition obtains n inputs from the generator source, runs the MUT
on every input, applies the postcondition oracle, and tallies failures.
A MUT crash or timeout fails that single test with a reason code and the
campaign continues; reports are deterministic given the seed and carry
no timestamps.
"""
from __future__ import annotations

import itertools
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    AdapterTimeout,
    GeneratorExhausted,
    MalformedFile,
    MutCrashed,
    ProtocolViolation,
)
from .glossary import Glossary
from .oracle import (
    CLASS,
    REGRESSION,
    ModelOutput,
    OutputSchema,
    bind_check,
)
from .protocol import DEFAULT_TIMEOUT, GeneratorClient, MutClient
from .snl import Requirement, render_precondition
from .taxonomy import Taxonomy

REASON_POSTCONDITION = "postcondition"
REASON_CRASH = "crash"
REASON_TIMEOUT = "timeout"
REASON_PROTOCOL = "protocol"
REASON_ADAPTER_ERROR = "adapter-error"


def derive_seed(seed: int, rep: int) -> int:
    return seed * 1_000_003 + rep


# -- generator sources ------------------------------------------------------


class ReplaySource:
    """Replays files from a directory, sampling without replacement per rep."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.files = sorted(
            str(p) for p in self.directory.iterdir() if p.is_file()
        )
        if not self.files:
            raise GeneratorExhausted(f"replay directory {directory} is empty")

    def obtain(self, n: int, seed: int, prompt: str) -> list[str]:
        if len(self.files) < n:
            raise GeneratorExhausted(
                f"replay directory holds {len(self.files)} inputs, campaign needs {n}"
            )
        rng = random.Random(seed)
        return rng.sample(self.files, n)

    def close(self):
        pass


class ProcessGenerator:
    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self._client = GeneratorClient(command, timeout)

    def obtain(self, n: int, seed: int, prompt: str) -> list[str]:
        return self._client.generate(prompt, n, seed)

    def close(self):
        self._client.close()


def generator_from_spec(spec: str, timeout: float = DEFAULT_TIMEOUT):
    """"replay:DIR" or "exec:COMMAND"."""
    kind, _, rest = spec.partition(":")
    if kind == "replay" and rest:
        return ReplaySource(rest)
    if kind == "exec" and rest:
        return ProcessGenerator(rest, timeout)
    raise MalformedFile(f"unknown generator spec {spec!r}")


# -- models under test --------------------------------------------------------


class StubCrash(Exception):
    """Injected crash from a builtin stub."""


def synthesize_output(g, post, taxonomy, schema, want: bool) -> ModelOutput:
    """Deterministically find an output that makes the postcondition == want."""
    check = bind_check(g, post, taxonomy=taxonomy, schema=schema)
    preds = [g.output_predicates[k] for k in sorted(set(post.atoms()))]

    class_candidates: list[str] = []
    regression_fields: set[str] = set()
    for p in preds:
        if p.kind == "class-equals":
            class_candidates.append(str(p.payload["label"]))
        elif p.kind == "class-in-taxonomy":
            leaves = sorted(taxonomy.leaves_under(p.payload["root"]))
            class_candidates.extend(leaves[:1])
        else:
            regression_fields.add(p.payload["field"])

    if regression_fields:
        if schema is not None and schema.kind == REGRESSION:
            regression_fields |= {f.name for f in schema.fields}
        names = sorted(regression_fields)
        for values in itertools.product((-1.0, 0.0, 1.0), repeat=len(names)):
            out = ModelOutput.regression(**dict(zip(names, values)))
            if check(out) == want:
                return out
    else:
        class_candidates.append("__none_of_the_above__")
        for label in class_candidates:
            out = ModelOutput.classification(label)
            if check(out) == want:
                return out
    raise ValueError(
        f"stub cannot synthesize an output with postcondition == {want}"
    )


class StubMut:
    """Builtin in-process MUT driven by a simple rule string.

    Rules: "pass", "fail", "fail_if_contains:SUB", "crash_if_contains:SUB",
    "class:LABEL", "regression:f=v,...".
    """

    def __init__(self, rule: str):
        self.rule = rule

    def bind(self, g, requirement, taxonomy, schema):
        post = requirement.postcondition
        rule, _, arg = self.rule.partition(":")
        if rule == "pass":
            out = synthesize_output(g, post, taxonomy, schema, want=True)
            return lambda ref: out
        if rule == "fail":
            out = synthesize_output(g, post, taxonomy, schema, want=False)
            return lambda ref: out
        if rule == "fail_if_contains":
            good = synthesize_output(g, post, taxonomy, schema, want=True)
            bad = synthesize_output(g, post, taxonomy, schema, want=False)
            return lambda ref: bad if arg in Path(ref).name else good
        if rule == "crash_if_contains":
            good = synthesize_output(g, post, taxonomy, schema, want=True)

            def infer(ref):
                if arg in Path(ref).name:
                    raise StubCrash(f"injected crash on {ref}")
                return good

            return infer
        if rule == "class":
            out = ModelOutput.classification(arg)
            return lambda ref: out
        if rule == "regression":
            fields = {}
            for pair in arg.split(","):
                name, _, value = pair.partition("=")
                fields[name.strip()] = float(value)
            out = ModelOutput.regression(**fields)
            return lambda ref: out
        raise MalformedFile(f"unknown stub rule {self.rule!r}")


class ExecMut:
    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout

    def spawn(self, timeout: Optional[float] = None) -> MutClient:
        return MutClient(self.command, timeout if timeout is not None else self.timeout)


def mut_from_spec(spec: str, timeout: float = DEFAULT_TIMEOUT):
    """"stub:RULE" or "exec:COMMAND"."""
    kind, _, rest = spec.partition(":")
    if kind == "stub" and rest:
        return StubMut(rest)
    if kind == "exec" and rest:
        return ExecMut(rest, timeout)
    raise MalformedFile(f"unknown MUT spec {spec!r}")


# -- reports -------------------------------------------------------------------


@dataclass
class Failure:
    input_ref: str
    reason: str
    output: Optional[dict] = None
    detail: str = ""

    def to_json(self):
        row = {"input": self.input_ref, "reason": self.reason}
        if self.output is not None:
            row["output"] = self.output
        if self.detail:
            row["detail"] = self.detail
        return row


@dataclass
class RepResult:
    rep: int
    n: int
    passes: int
    failures: list[Failure] = field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        return self.passes / self.n if self.n else 0.0

    def to_json(self):
        return {
            "rep": self.rep,
            "n": self.n,
            "passes": self.passes,
            "failures": [f.to_json() for f in self.failures],
        }


@dataclass
class RunReport:
    requirement_id: str
    n: int
    reps: list[RepResult]
    seed: int
    pmp: Optional[float] = None
    fp_estimate: Optional[float] = None

    @property
    def pass_rates(self) -> list[float]:
        return [r.pass_rate for r in self.reps]

    @property
    def pass_rate_mean(self) -> float:
        rates = self.pass_rates
        return sum(rates) / len(rates) if rates else 0.0

    @property
    def pass_rate_std(self) -> float:
        rates = self.pass_rates
        if not rates:
            return 0.0
        mean = self.pass_rate_mean
        return math.sqrt(sum((r - mean) ** 2 for r in rates) / len(rates))

    def to_json(self) -> dict:
        return {
            "requirement": self.requirement_id,
            "n": self.n,
            "seed": self.seed,
            "reps": [r.to_json() for r in self.reps],
            "pass_rate_mean": self.pass_rate_mean,
            "pass_rate_std": self.pass_rate_std,
            "pass_rates": self.pass_rates,
            "pmp": self.pmp,
            "fp_estimate": self.fp_estimate,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    def write(self, path):
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")


# -- campaign -------------------------------------------------------------------


def _run_one(infer, check, input_ref: str):
    try:
        out = infer(input_ref)
    except StubCrash as e:
        return Failure(input_ref, REASON_CRASH, detail=str(e))
    except MutCrashed as e:
        return Failure(input_ref, REASON_CRASH, detail=e.stderr or str(e))
    except AdapterTimeout as e:
        return Failure(input_ref, REASON_TIMEOUT, detail=str(e))
    except ProtocolViolation as e:
        return Failure(input_ref, REASON_PROTOCOL, detail=str(e))
    if isinstance(out, dict):
        if "error" in out:
            return Failure(input_ref, REASON_ADAPTER_ERROR, detail=str(out["error"]))
        try:
            out = ModelOutput.from_json(out)
        except MalformedFile as e:
            return Failure(input_ref, REASON_PROTOCOL, detail=str(e))
    if check(out):
        return None
    return Failure(input_ref, REASON_POSTCONDITION, output=out.to_json())


def _exec_infer(client_holder: dict, exec_mut: ExecMut, timeout: Optional[float]):
    """Single-flight infer over one owned client; respawn after crashes."""

    def infer(input_ref: str):
        client = client_holder.get("client")
        if client is None:
            client = exec_mut.spawn(timeout)
            client_holder["client"] = client
        try:
            return client.infer(input_ref)
        except (MutCrashed, AdapterTimeout):
            # process is dead or wedged; next test gets a fresh one
            try:
                client.recover()
            except Exception:
                client_holder["client"] = None
            raise

    return infer


def run_campaign(
    requirement: Requirement,
    generator,
    mut,
    n: int,
    reps: int,
    seed: int,
    *,
    glossary: Glossary,
    taxonomy: Optional[Taxonomy] = None,
    schema: Optional[OutputSchema] = None,
    workers: int = 1,
    timeout: Optional[float] = None,  # None: keep each adapter's own timeout
) -> RunReport:
    if n < 1 or reps < 1:
        raise ValueError("n and reps must both be at least 1")
    check = bind_check(glossary, requirement.postcondition, taxonomy=taxonomy, schema=schema)
    prompt = render_precondition(glossary, requirement.precondition)

    holders: list[dict] = []  # one owned client per worker

    def make_infer():
        if isinstance(mut, StubMut):
            return mut.bind(glossary, requirement, taxonomy, schema)
        # eager first spawn: a broken adapter aborts the campaign up front,
        # while later crashes stay isolated to single tests
        holder: dict = {"client": mut.spawn(timeout)}
        holders.append(holder)
        return _exec_infer(holder, mut, timeout)

    rep_results: list[RepResult] = []
    try:
        if workers <= 1 or isinstance(mut, StubMut):
            infer = make_infer()
            for rep in range(reps):
                inputs = generator.obtain(n, derive_seed(seed, rep), prompt)
                failures = [
                    f for f in (_run_one(infer, check, ref) for ref in inputs) if f
                ]
                rep_results.append(
                    RepResult(rep=rep, n=n, passes=n - len(failures), failures=failures)
                )
        else:
            infers = [make_infer() for _ in range(workers)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for rep in range(reps):
                    inputs = generator.obtain(n, derive_seed(seed, rep), prompt)
                    futures = [
                        pool.submit(_run_one, infers[i % workers], check, ref)
                        for i, ref in enumerate(inputs)
                    ]
                    results = [f.result() for f in futures]  # merged by index
                    failures = [f for f in results if f]
                    rep_results.append(
                        RepResult(rep=rep, n=n, passes=n - len(failures), failures=failures)
                    )
    finally:
        for holder in holders:
            client = holder.get("client")
            if client is not None:
                client.close()

    return RunReport(requirement_id=requirement.id, n=n, reps=rep_results, seed=seed)


def estimate_false_positives(report: RunReport, pmp: float) -> float:
    """False-positive estimate (1 - pmp) * (1 - ptp) with ptp = mean pass rate."""
    if not 0.0 <= pmp <= 1.0:
        raise ValueError("pmp must lie in [0, 1]")
    ptp = report.pass_rate_mean
    estimate = (1.0 - pmp) * (1.0 - ptp)
    report.pmp = pmp
    report.fp_estimate = estimate
    return estimate

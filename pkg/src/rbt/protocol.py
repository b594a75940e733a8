"""Stdio JSONL wire protocol shared by generator and MUT adapters.

Adapters speak line-delimited JSON over stdin/stdout.  The first line an
adapter emits is the handshake {"protocol": "rbt/1", "kind": "generator"
| "mut"}.  Requests carry an "op"; malformed requests must produce an
{"error": ...} line without ending the session.
"""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional

from .errors import AdapterTimeout, MutCrashed, ProtocolViolation

PROTOCOL_VERSION = "rbt/1"
ROLE_GENERATOR = "generator"
ROLE_MUT = "mut"

DEFAULT_TIMEOUT = 60.0
_STDERR_CAP = 200  # lines kept for crash reports


def _as_command(command) -> list[str]:
    if isinstance(command, str):
        return shlex.split(command)
    return list(command)


class JsonlProcess:
    """One adapter subprocess with line-framed JSON and handshake checking."""

    def __init__(self, command, role: str, timeout: float = DEFAULT_TIMEOUT):
        self.command = _as_command(command)
        self.role = role
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None
        self._lines: queue.Queue = queue.Queue()
        self._stderr: list[str] = []
        self.start()

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        self._lines = queue.Queue()
        self._stderr = []
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ProtocolViolation(f"cannot spawn adapter {self.command!r}: {e}") from e
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        self._handshake()

    def _pump_stdout(self):
        proc = self._proc
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _pump_stderr(self):
        proc = self._proc
        for line in proc.stderr:
            if len(self._stderr) < _STDERR_CAP:
                self._stderr.append(line.rstrip("\n"))

    def _handshake(self):
        hello = self.recv()
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolViolation(
                f"adapter handshake declares protocol {hello.get('protocol')!r}, "
                f"expected {PROTOCOL_VERSION!r}"
            )
        if hello.get("kind") != self.role:
            raise ProtocolViolation(
                f"adapter is a {hello.get('kind')!r}, expected {self.role!r}"
            )

    @property
    def stderr_tail(self) -> str:
        return "\n".join(self._stderr)

    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def restart(self) -> None:
        # a process needing a restart is crashed or wedged: kill, don't drain
        self.kill()
        self.start()

    # -- framing ---------------------------------------------------------

    def send(self, obj: dict) -> None:
        if not self.alive():
            raise MutCrashed(
                f"adapter {self.command[0]} exited before request", stderr=self.stderr_tail
            )
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise MutCrashed(
                f"adapter {self.command[0]} pipe closed: {e}", stderr=self.stderr_tail
            ) from e

    def recv(self, timeout: Optional[float] = None) -> dict:
        try:
            line = self._lines.get(timeout=timeout or self.timeout)
        except queue.Empty:
            raise AdapterTimeout(
                f"adapter {self.command[0]} sent nothing for {timeout or self.timeout:g}s"
            ) from None
        if line is None:
            raise MutCrashed(
                f"adapter {self.command[0]} closed its output", stderr=self.stderr_tail
            )
        line = line.strip()
        if not line:
            return self.recv(timeout)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolViolation(f"adapter sent non-JSON line {line[:80]!r}") from e
        if not isinstance(obj, dict):
            raise ProtocolViolation(f"adapter sent non-object line {line[:80]!r}")
        return obj


class GeneratorClient:
    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self.proc = JsonlProcess(command, ROLE_GENERATOR, timeout)

    def generate(self, prompt: str, count: int, seed: int) -> list[str]:
        from .errors import GeneratorExhausted

        self.proc.send(
            {"op": "generate", "prompt": prompt, "count": count, "seed": seed}
        )
        paths: list[str] = []
        while True:
            resp = self.proc.recv()
            if "error" in resp:
                raise ProtocolViolation(f"generator error: {resp['error']}")
            if resp.get("op") == "done":
                break
            if "path" not in resp:
                raise ProtocolViolation(f"generator sent unexpected line {resp!r}")
            paths.append(resp["path"])
            if len(paths) > count:
                raise ProtocolViolation("generator sent more paths than requested")
        if len(paths) < count:
            raise GeneratorExhausted(
                f"generator produced {len(paths)} of {count} requested inputs"
            )
        return paths

    def close(self):
        self.proc.close()


class MutClient:
    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self.proc = JsonlProcess(command, ROLE_MUT, timeout)

    def infer(self, input_ref: str) -> dict:
        """Raw response object for one inference request."""
        if not self.proc.alive():
            self.proc.restart()
        self.proc.send({"op": "infer", "input": input_ref})
        return self.proc.recv()

    def recover(self):
        self.proc.restart()

    def close(self):
        self.proc.close()


# -- conformance ---------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def run_conformance(command, role: str, timeout: float = 10.0) -> list[CheckResult]:
    """Scripted protocol fuzz: valid/invalid request interleavings.

    Exercises the handshake, error recovery on malformed and unknown
    requests, role-specific request/response shapes, and session reuse.
    """
    results: list[CheckResult] = []

    def record(name, ok, detail=""):
        results.append(CheckResult(name, bool(ok), detail))

    try:
        proc = JsonlProcess(command, role, timeout)
        record("handshake", True)
    except (ProtocolViolation, MutCrashed, AdapterTimeout) as e:
        record("handshake", False, str(e))
        return results

    def expect_error_line(name):
        try:
            resp = proc.recv()
            record(name, "error" in resp, f"got {resp!r}")
        except (ProtocolViolation, MutCrashed, AdapterTimeout) as e:
            record(name, False, str(e))

    def valid_roundtrip(name):
        try:
            if role == ROLE_GENERATOR:
                proc.send({"op": "generate", "prompt": "conformance", "count": 2, "seed": 7})
                paths = []
                while True:
                    resp = proc.recv()
                    if resp.get("op") == "done":
                        break
                    if "error" in resp or "path" not in resp:
                        record(name, False, f"got {resp!r}")
                        return
                    paths.append(resp["path"])
                record(name, len(paths) == 2, f"{len(paths)} paths")
            else:
                proc.send({"op": "infer", "input": "conformance-input"})
                resp = proc.recv()
                ok = resp.get("kind") == "class" and "label" in resp or (
                    resp.get("kind") == "regression" and isinstance(resp.get("outputs"), dict)
                )
                record(name, ok, f"got {resp!r}")
        except (ProtocolViolation, MutCrashed, AdapterTimeout) as e:
            record(name, False, str(e))

    valid_roundtrip("valid-request")

    # malformed JSON must yield an error line, then the session continues
    try:
        proc._proc.stdin.write("this is not json\n")
        proc._proc.stdin.flush()
        expect_error_line("malformed-json-recovered")
    except OSError as e:
        record("malformed-json-recovered", False, str(e))

    valid_roundtrip("session-continues-after-garbage")

    proc.send({"op": "frobnicate"})
    expect_error_line("unknown-op-errors")

    valid_roundtrip("session-continues-after-unknown-op")

    try:
        proc.close()
        record("eof-shutdown", True)
    except Exception as e:  # noqa: BLE001 - report, never raise, from a checker
        record("eof-shutdown", False, str(e))
    return results

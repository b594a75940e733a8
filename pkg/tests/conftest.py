import json

import pytest

import rbt
from rbt.glossary import load_glossary


@pytest.fixture(scope="session")
def mnist_glossary():
    return load_glossary(rbt.data_path("glossary_mnist.json"))


@pytest.fixture(scope="session")
def celeba_glossary():
    return load_glossary(rbt.data_path("glossary_celeba.json"))


@pytest.fixture(scope="session")
def sgsm_glossary():
    return load_glossary(rbt.data_path("glossary_sgsm.json"))


@pytest.fixture(scope="session")
def imagenet_glossary():
    return load_glossary(rbt.data_path("glossary_imagenet.json"))


@pytest.fixture(scope="session")
def all_glossaries(mnist_glossary, celeba_glossary, sgsm_glossary, imagenet_glossary):
    return {
        "mnist": mnist_glossary,
        "celeba": celeba_glossary,
        "sgsm": sgsm_glossary,
        "imagenet": imagenet_glossary,
    }


def write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


# minimal protocol-conformant adapter used by harness/protocol/cli tests;
# argv: role [mode], modes: class:LABEL | regression | die_if_contains:SUB
ADAPTER_SCRIPT = r'''
import json
import sys

role = sys.argv[1]
mode = sys.argv[2] if len(sys.argv) > 2 else "class:2"
print(json.dumps({"protocol": "rbt/1", "kind": role}), flush=True)

for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    try:
        req = json.loads(line)
    except Exception:
        print(json.dumps({"error": "malformed request"}), flush=True)
        continue
    op = req.get("op")
    if role == "generator" and op == "generate":
        for i in range(req["count"]):
            print(json.dumps({"path": f"gen-{req['seed']}-{i:04d}.png"}), flush=True)
        print(json.dumps({"op": "done"}), flush=True)
    elif role == "mut" and op == "infer":
        kind, _, arg = mode.partition(":")
        if kind == "class":
            print(json.dumps({"kind": "class", "label": arg}), flush=True)
        elif kind == "regression":
            print(json.dumps({"kind": "regression",
                              "outputs": {"accel": -1.0, "steer": 0.0}}), flush=True)
        elif kind == "die_if_contains":
            if arg in req["input"]:
                sys.stderr.write("injected adapter death\n")
                sys.exit(3)
            print(json.dumps({"kind": "class", "label": "2"}), flush=True)
        elif kind == "hang_if_contains":
            if arg in req["input"]:
                import time
                time.sleep(120)
            print(json.dumps({"kind": "class", "label": "2"}), flush=True)
        else:
            print(json.dumps({"error": f"unknown mode {mode}"}), flush=True)
    else:
        print(json.dumps({"error": f"unknown op {op!r}"}), flush=True)
'''


@pytest.fixture(scope="session")
def adapter_script(tmp_path_factory):
    p = tmp_path_factory.mktemp("adapter") / "adapter.py"
    p.write_text(ADAPTER_SCRIPT, encoding="utf-8")
    return str(p)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path

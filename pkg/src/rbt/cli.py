"""Command-line surface for the pipeline.

Subcommands mirror the pipeline phases: label, filter, split, run,
metrics.  Every command reads a project config JSON, writes its artifact
to --out, and prints a one-line summary.  Exit codes: 0 success, 2
configuration errors, 3 data errors, 4 protocol errors.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .errors import ConfigError, DataError, ProtocolError, RbtError
from .filterset import build_heldout_split, filter_dataset
from .glossary import Glossary, load_glossary
from .harness import estimate_false_positives, generator_from_spec, mut_from_spec, run_campaign
from .labeling import (
    GroundTruthProvider,
    MorphoLabeler,
    SceneGraphLabeler,
    ingest_vqa_verdicts,
    label_dataset,
    read_labels_manifest,
    validate_labels,
    write_labels_manifest,
    write_prompt_manifest,
)
from .metrics import (
    js_divergence,
    kid,
    load_feature_manifest,
    precondition_match,
    term_distribution,
)
from .oracle import load_output_schema
from .snl import load_requirements
from .taxonomy import load_taxonomy

log = logging.getLogger("rbt")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging():
    level = os.environ.get("RBT_LOG", "warn").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@dataclass
class ProjectConfig:
    root: Path
    glossary_path: Path
    requirements_path: Path
    taxonomy_path: Optional[Path] = None
    schema_path: Optional[Path] = None
    rules_path: Optional[Path] = None
    labels_path: Optional[Path] = None
    inputs_path: Optional[Path] = None
    trigger: str = "TRGR"
    labeler: Optional[dict] = None
    campaign: Optional[dict] = None

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        root = path.parent

        def resolve(key, required=False):
            value = doc.get(key)
            if value is None:
                if required:
                    raise ConfigError(f"config is missing required key {key!r}")
                return None
            p = Path(value)
            return p if p.is_absolute() else root / p

        cfg = cls(
            root=root,
            glossary_path=resolve("glossary", required=True),
            requirements_path=resolve("requirements", required=True),
            taxonomy_path=resolve("taxonomy"),
            schema_path=resolve("output_schema"),
            rules_path=resolve("rules"),
            labels_path=resolve("labels"),
            inputs_path=resolve("inputs"),
            trigger=doc.get("trigger", "TRGR"),
            labeler=doc.get("labeler"),
            campaign=doc.get("campaign") or {},
        )
        for p in (cfg.glossary_path, cfg.requirements_path):
            if not p.exists():
                raise ConfigError(f"configured file does not exist: {p}")
        return cfg

    def glossary(self) -> Glossary:
        return load_glossary(self.glossary_path)

    def requirements(self, g: Glossary):
        return load_requirements(g, self.requirements_path)

    def requirement(self, g: Glossary, rid: str):
        for r in self.requirements(g):
            if r.id == rid:
                return r
        raise ConfigError(f"requirement {rid!r} not in {self.requirements_path}")

    def taxonomy(self):
        return load_taxonomy(self.taxonomy_path) if self.taxonomy_path else None

    def schema(self):
        return load_output_schema(self.schema_path) if self.schema_path else None

    def labels(self, override=None):
        path = Path(override) if override else self.labels_path
        if path is None:
            raise ConfigError("no labels manifest configured (config key 'labels')")
        if not path.exists():
            raise ConfigError(f"labels manifest does not exist: {path}")
        return read_labels_manifest(path)


def _meta() -> dict:
    # the only place a timestamp may appear in any artifact
    return {
        "tool": f"rbt {__version__}",
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# -- commands -----------------------------------------------------------------


def _collect_inputs(cfg: ProjectConfig, suffixes) -> list[str]:
    if cfg.inputs_path is None:
        raise ConfigError("no inputs directory configured (config key 'inputs')")
    if not cfg.inputs_path.is_dir():
        raise ConfigError(f"inputs path is not a directory: {cfg.inputs_path}")
    return sorted(
        str(p)
        for p in cfg.inputs_path.iterdir()
        if p.is_file() and (not suffixes or p.suffix.lower() in suffixes)
    )


def _build_labeler(cfg: ProjectConfig, g: Glossary, kind: Optional[str]):
    spec = dict(cfg.labeler or {})
    if kind:
        spec["kind"] = kind
    kind = spec.get("kind")
    if kind == "morpho":
        pattern = spec.get("class_pattern")
        fmt = spec.get("class_format")
        if not pattern or not fmt:
            raise ConfigError("morpho labeler needs class_pattern and class_format")
        rx = re.compile(pattern)

        def class_term_for(ref: str) -> str:
            m = rx.search(Path(ref).name)
            if not m:
                raise DataError(f"cannot derive class from file name {ref!r}")
            return fmt.format(m.group(1))

        return MorphoLabeler(g, class_term_for, threshold=spec.get("threshold", 0.5)), {".png", ".idx"}
    if kind == "scenegraph":
        if cfg.rules_path is None:
            raise ConfigError("scenegraph labeler needs a rules file (config key 'rules')")
        from .scenegraph import load_rules

        rules = load_rules(cfg.rules_path)
        return SceneGraphLabeler(g, rules, max_len=spec.get("max_len", 4)), {".json"}
    raise ConfigError(f"unknown labeler kind {kind!r}")


def cmd_label(args) -> int:
    cfg = ProjectConfig.load(args.config)
    g = cfg.glossary()
    kind = args.labeler or (cfg.labeler or {}).get("kind")
    if kind == "vqa-prompts":
        # emit the prompt manifest an external VQA run consumes
        inputs = _collect_inputs(cfg, None)
        write_prompt_manifest(inputs, g, args.out)
        print(f"wrote {len(inputs) * len(g.terms)} prompts for {len(inputs)} inputs -> {args.out}")
        return 0
    if kind == "manifest":
        source = (cfg.labeler or {}).get("path") or args.answers
        if not source:
            raise ConfigError("manifest labeler needs a source manifest path")
        labels = read_labels_manifest(source)
        skipped = []
    elif kind == "vqa-answers":
        answers = (cfg.labeler or {}).get("answers")
        if args.answers:
            answers = args.answers
        if not answers:
            raise ConfigError("vqa-answers labeler needs an answers manifest path")
        labels = ingest_vqa_verdicts(answers, g)
        skipped = []
    else:
        labeler, suffixes = _build_labeler(cfg, g, args.labeler)
        inputs = _collect_inputs(cfg, suffixes)
        run = label_dataset(inputs, labeler, fail_fraction=args.fail_fraction)
        labels, skipped = run.labels, run.skipped
    for li in labels:
        validate_labels(g, li)
    write_labels_manifest(labels, args.out)
    print(f"labeled {len(labels)} inputs ({len(skipped)} skipped) -> {args.out}")
    for ref, reason in skipped:
        log.warning("skipped %s: %s", ref, reason)
    return 0


def cmd_filter(args) -> int:
    cfg = ProjectConfig.load(args.config)
    g = cfg.glossary()
    req = cfg.requirement(g, args.requirement)
    labels = cfg.labels(args.labels)
    manifest = filter_dataset(g, req.precondition, labels, trigger=args.trigger or cfg.trigger)
    manifest.write(args.out)
    note = f" ({manifest.warning})" if manifest.warning else ""
    print(f"{req.id}: {len(manifest.rows)} of {len(labels)} inputs match{note} -> {args.out}")
    return 0


def cmd_split(args) -> int:
    cfg = ProjectConfig.load(args.config)
    g = cfg.glossary()
    reqs = cfg.requirements(g)
    labels = cfg.labels(args.labels)
    split = build_heldout_split(labels, reqs, r=args.r)
    write_labels_manifest(split.train, args.out_train)
    write_labels_manifest(split.test, args.out_test)
    print(
        f"split {len(labels)} inputs: {len(split.train)} train -> {args.out_train}, "
        f"{len(split.test)} test -> {args.out_test}"
    )
    return 0


def cmd_run(args) -> int:
    cfg = ProjectConfig.load(args.config)
    g = cfg.glossary()
    req = cfg.requirement(g, args.requirement)
    campaign = cfg.campaign or {}
    n = args.n or campaign.get("n", 100)
    reps = args.reps or campaign.get("reps", 1)
    seed = args.seed if args.seed is not None else campaign.get("seed", 0)
    workers = args.workers or campaign.get("workers", 1)
    timeout = args.timeout_secs or campaign.get("timeout_secs", 60.0)

    generator = generator_from_spec(args.generator, timeout)
    mut = mut_from_spec(args.mut, timeout)
    try:
        report = run_campaign(
            req, generator, mut, n=n, reps=reps, seed=seed,
            glossary=g, taxonomy=cfg.taxonomy(), schema=cfg.schema(),
            workers=workers, timeout=timeout,
        )
    finally:
        generator.close()
    if args.pmp is not None:
        estimate_false_positives(report, args.pmp)
    doc = report.to_json()
    doc["meta"] = _meta()
    _write_json(args.out, doc)
    print(
        f"{req.id}: pass rate {report.pass_rate_mean:.3f} ± {report.pass_rate_std:.3f} "
        f"over {reps} reps of {n} tests -> {args.out}"
    )
    return 0


def cmd_metrics(args) -> int:
    cfg = ProjectConfig.load(args.config)
    g = cfg.glossary()
    if args.which == "match":
        req = cfg.requirement(g, args.requirement)
        labels = cfg.labels(args.labels)
        provider = GroundTruthProvider(labels, g)
        refs = [li.input_ref for li in labels]
        value = precondition_match(req.precondition, refs, provider)
        doc = {"metric": "precondition-match", "requirement": req.id,
               "value": value, "std": 0.0, "inputs": len(refs)}
    elif args.which == "js":
        ref_labels = read_labels_manifest(_require(args.ref, "--ref"))
        gen_labels = read_labels_manifest(_require(args.gen, "--gen"))
        value = js_divergence(
            term_distribution(ref_labels, mode=args.count_mode),
            term_distribution(gen_labels, mode=args.count_mode),
        )
        doc = {"metric": "js-divergence", "value": value, "std": 0.0,
               "inputs": len(ref_labels) + len(gen_labels)}
    else:  # kid
        _, ref_feats = load_feature_manifest(_require(args.ref, "--ref"))
        _, gen_feats = load_feature_manifest(_require(args.gen, "--gen"))
        mean, std = kid(ref_feats, gen_feats, block=args.block)
        doc = {"metric": "kid", "value": mean, "std": std,
               "inputs": len(ref_feats) + len(gen_feats)}
    doc["meta"] = _meta()
    if args.out:
        _write_json(args.out, doc)
    print(f"{doc['metric']}: {doc['value']:.6f} ± {doc['std']:.6f}")
    return 0


def _require(value, flag):
    if not value:
        raise ConfigError(f"{flag} is required for this metric")
    return value


# -- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbt",
        description="Requirements-based testing pipeline for learned components.",
    )
    parser.add_argument("--version", action="version", version=f"rbt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="label a dataset with glossary terms")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--labeler",
        choices=["morpho", "scenegraph", "vqa-answers", "vqa-prompts", "manifest"],
    )
    p.add_argument("--answers", help="source manifest for vqa-answers / manifest labelers")
    p.add_argument("--fail-fraction", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("filter", help="build a precondition-filtered fine-tune manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--requirement", required=True)
    p.add_argument("--labels", help="labels manifest (defaults to config)")
    p.add_argument("--trigger")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("split", help="build the held-out train/test split")
    p.add_argument("--config", required=True)
    p.add_argument("-r", type=float, required=True, help="held-out percentage per requirement")
    p.add_argument("--labels")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("run", help="run a test campaign against a model under test")
    p.add_argument("--config", required=True)
    p.add_argument("--requirement", required=True)
    p.add_argument("--generator", required=True, help="replay:DIR or exec:CMD")
    p.add_argument("--mut", required=True, help="stub:RULE or exec:CMD")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--timeout-secs", type=float)
    p.add_argument("--pmp", type=float, help="precondition match for the fp estimate")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("metrics", help="compute test-set quality metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--which", choices=["match", "js", "kid"], required=True)
    p.add_argument("--requirement")
    p.add_argument("--labels", help="labels manifest for match")
    p.add_argument("--ref", help="reference manifest (js: labels, kid: features)")
    p.add_argument("--gen", help="generated manifest (js: labels, kid: features)")
    p.add_argument("--count-mode", choices=["occurrence", "presence"], default="occurrence")
    p.add_argument("--block", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_metrics)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        log.error("%s", e)
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ProtocolError as e:
        log.error("%s", e)
        print(f"protocol error: {e}", file=sys.stderr)
        return 4
    except (DataError, RbtError) as e:
        log.error("%s", e)
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

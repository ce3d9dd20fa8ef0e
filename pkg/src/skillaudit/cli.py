"""Command-line entry point: one subcommand per stage plus ``audit`` for the whole run.

Exit codes: 0 success, 1 input error, 2 invariant violation, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .bids import load_bids
from .config import DEFAULTS, AuditConfig
from .errors import AuditError, InputError
from .interests import diff_interests, load_snapshots
from .metrics import validation_metrics
from .pipeline import STAGES, add_bid_tables, fingerprint, parse_stages, run_pipeline
from .policy import (
    DataFlowTuple, DataOntology, DisclosureClassifier, Lexicon, PolicyDocument, audit_skill,
    load_gold, load_policies,
)
from .endpoints import OrgOntology
from .report import FORMATS, AuditReport, Table, canonical_json, emit, load_report, render_text

log = logging.getLogger("skillaudit")


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _defaults_help() -> str:
    knobs = {k: v for k, v in DEFAULTS.items() if k != "paths"}
    lines = []
    for section, val in sorted(knobs.items()):
        if isinstance(val, dict):
            lines += [f"  {section}.{k} = {v!r}" for k, v in sorted(val.items())]
        else:
            lines.append(f"  {section} = {val!r}")
    return "config defaults (override with --set key=value):\n" + "\n".join(lines)


def _add_common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--config", type=Path, help="audit config JSON; relative paths resolve against its directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted key (repeatable; wins over the file)")
    p.add_argument("--out", type=Path, required=out_required,
                   help="output directory (default: print to stdout)")
    p.add_argument("--format", choices=FORMATS, default="text", help="output format (default: text)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skillaudit", description=__doc__.splitlines()[0],
                     epilog=_defaults_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="run the pipeline (all stages, or a prefix with --stages)")
    _add_common(p)
    p.add_argument("--stages", help=f"comma-separated prefix of {','.join(STAGES)}")

    for stage in ("ingest", "resolve", "classify", "syncs"):
        p = sub.add_parser(stage, help=f"run the pipeline up to the {stage} stage")
        _add_common(p)
        if stage == "syncs":
            p.add_argument("--partners-out", type=Path,
                           help="also write the platform's direct partners, one org per line")

    bids = sub.add_parser("bids", help="bid aggregates and significance tests")
    bsub = bids.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for action, text in (("stats", "median and mean CPM on common slots"),
                         ("compare", "Mann-Whitney U of interest personas vs control (and vs web personas)"),
                         ("split", "partner vs non-partner bid split")):
        p = bsub.add_parser(action, help=text)
        _add_common(p)
        p.add_argument("--bids", type=Path, help="bid JSONL (default: paths.bids from the config)")
        p.add_argument("--control", help="control persona (default: the one vanilla persona)")
        if action == "split":
            p.add_argument("--partners", type=Path, required=True,
                           help="newline-delimited partner org names (as written by `syncs --partners-out`)")

    pol = sub.add_parser("policy", help="privacy-policy consistency")
    psub = pol.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = psub.add_parser("check", help="classify data-flow tuples against skill policies")
    _add_common(p)
    p.add_argument("--tuples", type=Path, required=True, help="CSV with columns skill_id, data_type, entity")
    p.add_argument("--policies", type=Path, help="directory of <skill_id>.txt (default: from config)")
    p = psub.add_parser("validate", help="micro/macro precision, recall and F1 against gold labels")
    _add_common(p)
    p.add_argument("--predicted", type=Path, required=True, help="verdict CSV (as written by `policy check`)")
    p.add_argument("--gold", type=Path, help="gold CSV (default: paths.gold from the config)")

    intr = sub.add_parser("interests", help="inferred-interest snapshots")
    isub = intr.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = isub.add_parser("diff", help="per-persona interest changes across data requests")
    _add_common(p)
    p.add_argument("--dir", type=Path, help="snapshot directory (default: paths.interests from the config)")

    rep = sub.add_parser("report", help="re-render a saved JSON report")
    rsub = rep.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = rsub.add_parser("emit", help="render audit_report.json as json, csv_bundle or text")
    p.add_argument("report", type=Path, help="audit_report.json")
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=FORMATS, default="text")

    p = sub.add_parser("demo", help="write the bundled demo dataset and its config.json")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--scale", type=int, default=1, help="capture iterations; 10 gives ~110k flow records")
    p.add_argument("--seed", type=int, default=7)
    return parser


# --------------------------------------------------------------------------- helpers


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise InputError(f"--set expects KEY=VALUE, got {pair!r}")
        out[key.strip()] = value
    return out


def _config(args) -> AuditConfig:
    return AuditConfig.load(args.config, _overrides(args.overrides))


def _output(report: AuditReport, args) -> None:
    if args.out is not None:
        for path in emit(report, args.format, args.out):
            print(path)
        return
    if args.format == "json":
        sys.stdout.write(canonical_json(report.to_json()))
    elif args.format == "text":
        sys.stdout.write(render_text(report))
    else:
        raise InputError("--format csv_bundle needs --out")


def _standalone_report(cfg: AuditConfig, stage: str) -> AuditReport:
    return AuditReport(fingerprint=fingerprint(cfg), stages=[stage])


def _read_tuples(path: Path) -> list[DataFlowTuple]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read tuples {path}: {exc}") from exc
    out = []
    for i, row in enumerate(rows, start=2):
        if not row.get("skill_id") or not row.get("entity"):
            raise InputError(f"{path}:{i}: skill_id and entity are required")
        out.append(DataFlowTuple(row["skill_id"].strip(), row["entity"].strip(),
                                 (row.get("data_type") or "").strip() or None))
    return out


# --------------------------------------------------------------------------- commands


def cmd_audit(args) -> None:
    cfg = _config(args)
    stages = parse_stages(args.stages) if args.command == "audit" else \
        list(STAGES[: STAGES.index(args.command) + 1])
    report = run_pipeline(cfg, stages)
    _output(report, args)
    if getattr(args, "partners_out", None):
        partners = report.sections["syncs"]["direct_partners"]
        try:
            args.partners_out.write_text("".join(f"{p}\n" for p in partners), encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot write {args.partners_out}: {exc}") from exc


def cmd_bids(args) -> None:
    cfg = _config(args)
    if args.control:
        cfg.data["bids"]["control"] = args.control
    path = args.bids or cfg.path("bids")
    if path is None:
        raise InputError("no bid file: pass --bids or set paths.bids")
    bids = load_bids(path)
    report = _standalone_report(cfg, f"bids {args.action}")
    partners = None
    if args.action == "split":
        try:
            partners = {ln.strip() for ln in args.partners.read_text("utf-8").splitlines() if ln.strip()}
        except OSError as exc:
            raise InputError(f"cannot read partners {args.partners}: {exc}") from exc
    add_bid_tables(report, bids, cfg, partners, None, parts=(args.action,))
    _output(report, args)


def cmd_policy(args) -> None:
    cfg = _config(args)
    report = _standalone_report(cfg, f"policy {args.action}")
    if args.action == "check":
        lexicon = Lexicon.load(cfg.path("lexicon"))
        directory = args.policies or cfg.path("policies")
        if directory is None:
            raise InputError("no policy directory: pass --policies or set paths.policies")
        policies = load_policies(directory, lexicon)
        platform = None
        if cfg.path("platform_policy"):
            platform = PolicyDocument.from_text("__platform__", cfg.path("platform_policy").read_text("utf-8"),
                                                lexicon, includes_platform_policy=True)
        classifier = DisclosureClassifier(DataOntology.load(cfg.path("data_ontology")),
                                          OrgOntology.load(cfg.path("org_ontology")), lexicon)
        tuples = _read_tuples(args.tuples)
        rows = []
        for skill in sorted({t.skill_id for t in tuples}):
            audit = audit_skill(skill, tuples, policies, classifier,
                                cfg.get("policy.include_platform_policy"), platform)
            rows += [[v.tuple.skill_id, v.tuple.data_type or "", v.tuple.entity, v.verdict,
                      v.matched_term, v.evidence_sentence] for v in audit.verdicts]
        report.add_table(Table("policy_verdicts", "Disclosure verdicts",
                               ["skill_id", "data_type", "entity", "verdict", "matched_term", "evidence"], rows))
    else:
        gold_path = args.gold or cfg.path("gold")
        if gold_path is None:
            raise InputError("no gold labels: pass --gold or set paths.gold")
        vr = validation_metrics(load_gold(args.predicted), load_gold(gold_path))
        report.sections["validation"] = {
            "micro": vars(vr.micro), "macro": vars(vr.macro), "macro_f1_of_means": vr.macro_f1_of_means,
            "per_class": {c: vars(m) for c, m in vr.per_class.items()}, "confusion": vr.confusion,
        }
        report.add_table(Table("policy_validation", "Disclosure classifier vs gold labels",
                               ["Averaging", "Precision", "Recall", "F1"], [
            ["micro", vr.micro.precision, vr.micro.recall, vr.micro.f1],
            ["macro", vr.macro.precision, vr.macro.recall, vr.macro.f1],
            *[[c, m.precision, m.recall, m.f1] for c, m in vr.per_class.items()],
        ]))
    _output(report, args)


def cmd_interests(args) -> None:
    cfg = _config(args)
    directory = args.dir or cfg.path("interests")
    if directory is None:
        raise InputError("no snapshot directory: pass --dir or set paths.interests")
    timeline = diff_interests(load_snapshots(directory))
    report = _standalone_report(cfg, "interests diff")
    report.sections["interests"] = {p: [vars(s) for s in steps] for p, steps in timeline.items()}
    report.add_table(Table("interests", "Inferred advertising interests across data requests",
                           ["Persona", "Request", "Status", "Added", "Removed"],
                           [[p, s.request_label, s.status, s.added, s.removed]
                            for p, steps in timeline.items() for s in steps]))
    _output(report, args)


def cmd_report(args) -> None:
    _output(load_report(args.report), args)


def cmd_demo(args) -> None:
    from .demo import generate_demo

    if args.scale < 1:
        raise InputError("--scale must be >= 1")
    try:
        print(generate_demo(args.out, args.scale, args.seed))
    except OSError as exc:
        raise InputError(f"cannot write demo dataset to {args.out}: {exc}") from exc


COMMANDS = {
    "audit": cmd_audit, "ingest": cmd_audit, "resolve": cmd_audit, "classify": cmd_audit, "syncs": cmd_audit,
    "bids": cmd_bids, "policy": cmd_policy, "interests": cmd_interests, "report": cmd_report, "demo": cmd_demo,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except AuditError as exc:
        print(f"skillaudit: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit 3
        print(f"skillaudit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``deidflow`` command line.

Every subcommand prints a short human summary on stdout and, where it
produces results, writes them as JSON to a file. Exit status is 0 only when
everything succeeded, 1 when the work ran but something failed or was
refused, and 2 for usage or configuration problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .corpus.bench import run_benchmark
from .corpus.fixtures import write_pet_ct_fixtures
from .corpus.generate import (
    CorpusSpec,
    InvalidSpec,
    default_corpus_spec,
    filter_catalog_classes,
    generate_corpus,
    ultrasound_classes,
)
from .engine import Status, deid_bytes
from .orchestrator import (
    AggregateReport,
    LocalObjectStore,
    ManifestEntry,
    NothingApproved,
    ProcessRuntime,
    ScalePolicy,
    ThreadRuntime,
    WorkQueue,
    ingest_directory,
    run_pool,
    submit_request,
    write_manifest,
)
from .orchestrator.pool import DEFAULT_CADENCE, PoolStalled
from .pseudonym import MappingStore, Mode, PseudonymError, StudyRegistration, read_exclusions
from .regression import FixtureMissing, MissingBackground, SuiteSyntaxError, load_suite, run_suite
from .rules import ScriptParams, default_script_text, load_texts
from .rules.anon import parse_anon_script
from .rules.common import MissingParam, ScriptError
from .rules.filter import parse_filter_script
from .rules.scrub import parse_scrub_script

OK, FAILED, USAGE = 0, 1, 2

log = logging.getLogger("deidflow")


class ConfigError(Exception):
    pass


# Config file keys mirror the long flag names with dashes turned into underscores.
CONFIG_KEYS = {
    "filter", "scrub", "anon", "input", "out", "manifest", "workers", "max_workers", "window", "seed",
    "params", "mapping_store", "exclusions", "queue", "input_store", "runtime", "cadence",
    "visibility_timeout", "max_attempts",
}


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return cfg


def resolve(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is None or value == []:
        value = cfg.get(name, default)
    return default if value is None else value


def parse_params(pairs, cfg_params=None) -> dict[str, str]:
    params = {k: str(v) for k, v in (cfg_params or {}).items()}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param expects key=value, got {pair!r}")
        params[key] = value
    return params


def require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def dicom_files(root: Path) -> list[Path]:
    """Files that look like DICOM by name: ``.dcm`` or no extension at all."""
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in (".dcm", ""))


def script_paths(args, cfg) -> dict[str, Path | None]:
    out = {}
    for kind in ("filter", "scrub", "anon"):
        p = resolve(args, cfg, kind)
        out[kind] = require_file(p, f"{kind} script") if p else None
    return out


def load_rules(args, cfg):
    paths = script_paths(args, cfg)
    return load_texts(paths["filter"], paths["scrub"], paths["anon"], name="cli")


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def open_mappings(args, cfg) -> MappingStore:
    path = resolve(args, cfg, "mapping_store")
    if not path:
        raise ConfigError("--mapping-store is required")
    excl = resolve(args, cfg, "exclusions")
    return MappingStore(path, read_exclusions(require_file(excl, "exclusion list")) if excl else ())


def open_queue(args, cfg) -> WorkQueue:
    path = resolve(args, cfg, "queue")
    if not path:
        raise ConfigError("--queue is required")
    return WorkQueue(path, visibility_timeout=float(resolve(args, cfg, "visibility_timeout", 60.0)),
                     max_attempts=int(resolve(args, cfg, "max_attempts", 3)))


# -- subcommands ---------------------------------------------------------------

def cmd_validate(args, cfg) -> int:
    paths = script_paths(args, cfg)
    parsers = {"filter": parse_filter_script, "scrub": parse_scrub_script, "anon": parse_anon_script}
    failures = 0
    for kind, parse in parsers.items():
        path = paths[kind]
        label = str(path) if path else f"<default {kind}>"
        text = path.read_text() if path else default_script_text(kind)
        try:
            parse(text, label)
        except ScriptError as exc:
            failures += 1
            print(exc)
        else:
            print(f"{label}: ok")
    return OK if failures == 0 else FAILED


def cmd_run(args, cfg) -> int:
    src = require_dir(resolve(args, cfg, "input"), "input directory")
    if not resolve(args, cfg, "out"):
        raise ConfigError("--out is required")
    out_dir = Path(resolve(args, cfg, "out"))
    rules = load_rules(args, cfg).compile()
    try:
        params = ScriptParams.from_mapping(parse_params(args.param, cfg.get("params")))
    except (MissingParam, ValueError) as exc:
        raise ConfigError(f"script parameters: {exc}") from None

    started = time.monotonic()
    entries = []
    for path in dicom_files(src):
        rel = path.relative_to(src).as_posix()
        t0 = time.time()
        try:
            raw = path.read_bytes()
        except OSError as exc:
            entries.append(ManifestEntry("", params.accession, rel, Status.ERROR.value, reason=str(exc),
                                         error_kind="ReadError", input_key=rel, started=t0, finished=time.time()))
            continue
        data, outcome = deid_bytes(raw, rules, params)
        key = None
        if data is not None:
            target = out_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
            key = rel
        d = outcome.as_dict()
        entries.append(ManifestEntry("", params.accession, rel, d["status"], reason=d["reason"],
                                     error_kind=d["error_kind"], rects=d["rects"], transforms=d["transforms"],
                                     bytes_in=d["bytes_in"], bytes_out=d["bytes_out"], output_key=key,
                                     output_syntax=d["output_syntax"], input_key=rel, started=t0,
                                     finished=time.time()))
    report = AggregateReport.from_entries(entries, time.monotonic() - started)
    manifest = Path(resolve(args, cfg, "manifest") or out_dir / "manifest.jsonl")
    write_manifest(manifest, entries)
    print(report.summary())
    print(f"manifest: {manifest}")
    return OK if report.error == 0 else FAILED


def cmd_submit(args, cfg) -> int:
    mappings = open_mappings(args, cfg)
    queue = open_queue(args, cfg)
    store_root = resolve(args, cfg, "input_store")
    if not store_root:
        raise ConfigError("--input-store is required")
    inputs = LocalObjectStore(store_root)
    src = resolve(args, cfg, "input")
    if src:
        ing = ingest_directory(require_dir(src, "input directory"), inputs)
        print(f"ingested {ing.instances} instance(s) in {len(ing.accessions)} accession(s); "
              f"{len(ing.unroutable)} unroutable")
    reg = mappings.study(args.study)
    accessions = args.accession or sorted(reg.approved_accessions)
    texts = load_rules(args, cfg)
    extra = {k: v for k, v in parse_params(args.param, cfg.get("params")).items()
             if k not in ("accession", "mrn", "jitter")}
    sub = submit_request(mappings, queue, inputs, args.study, accessions, texts, extra)
    print(f"request {sub.request_id}: {sub.count} enqueued, {len(sub.rejected)} rejected")
    show_real = reg.mode is Mode.REVERSIBLE
    for r in sub.rejected:
        print(f"  rejected {r.accession if show_real else '<redacted>'}: {r.reason}")
    if args.report:
        write_json(args.report, {"request_id": sub.request_id, "enqueued": sub.count,
                                 "rejected": [{"accession": r.accession if show_real else None,
                                               "reason": r.reason} for r in sub.rejected]})
    return OK if not sub.rejected else FAILED


def cmd_pool(args, cfg) -> int:
    queue = open_queue(args, cfg)
    in_root, out_root = resolve(args, cfg, "input_store"), resolve(args, cfg, "out")
    if not in_root or not out_root:
        raise ConfigError("--input-store and --out are required")
    policy = ScalePolicy(float(resolve(args, cfg, "window", 3600.0)),
                         min_workers=int(resolve(args, cfg, "workers", 0)),
                         max_workers=int(resolve(args, cfg, "max_workers", 8)))
    runtime = ProcessRuntime() if resolve(args, cfg, "runtime", "process") == "process" else ThreadRuntime()
    manifest_dir = Path(resolve(args, cfg, "manifest") or Path(out_root).parent / "manifests")
    res = run_pool(policy, queue, LocalObjectStore(require_dir(in_root, "input store")),
                   LocalObjectStore(out_root), runtime=runtime, manifest_dir=manifest_dir,
                   cadence=float(resolve(args, cfg, "cadence", DEFAULT_CADENCE)))
    print(res.report.summary())
    print(f"workers: peak {res.peak_workers}, started {res.spawned}; dead letters: {len(res.dead_letters)}")
    for rid, path in res.manifests.items():
        print(f"manifest {rid}: {path}")
    write_json(manifest_dir / "report.json", {**res.report.as_dict(), "dead_letters": len(res.dead_letters)})
    return OK if res.ok else FAILED


def cmd_regress(args, cfg) -> int:
    suite = load_suite(require_file(args.suite, "suite"))
    report = run_suite(suite)
    print("\n".join(report.lines()))
    if args.report:
        write_json(args.report, report.as_dict())
    return OK if report.passed else FAILED


def cmd_synth(args, cfg) -> int:
    out = resolve(args, cfg, "out")
    if not out:
        raise ConfigError("--out is required")
    seed = int(resolve(args, cfg, "seed", 0))
    if args.kind == "pet-ct":
        ledger = write_pet_ct_fixtures(out, count=args.count or 2, seed=seed)
    else:
        if args.kind == "default":
            spec = default_corpus_spec(args.count or 1000, seed)
        elif args.kind == "filter-catalog":
            spec = CorpusSpec(filter_catalog_classes(args.count or 1), seed=seed)
        else:
            spec = CorpusSpec(ultrasound_classes(args.count or 1), seed=seed)
        ledger = generate_corpus(spec, out)
    print(f"wrote {len(ledger)} instance(s) to {out}")
    return OK


def cmd_bench(args, cfg) -> int:
    corpus = require_dir(resolve(args, cfg, "input"), "corpus directory")
    counts = [int(x) for x in (args.worker_counts or "1,2,4").split(",")]
    report = run_benchmark(corpus, counts, texts=load_rules(args, cfg),
                           runtime=resolve(args, cfg, "runtime", "process"),
                           window=float(resolve(args, cfg, "window", 3600.0)),
                           seed=int(resolve(args, cfg, "seed", 0)))
    target = Path(args.report or resolve(args, cfg, "manifest") or "bench-report.json")
    report.write(target)
    print(report.table())
    print(f"report: {target}")
    return OK


def cmd_map(args, cfg) -> int:
    store = open_mappings(args, cfg)
    if args.action == "register":
        approved = set(args.accession or ())
        if args.accession_file:
            approved |= {ln.strip() for ln in Path(args.accession_file).read_text().splitlines() if ln.strip()}
        seed = resolve(args, cfg, "seed")
        reg = StudyRegistration(args.study, Mode(args.mode), approved)
        if seed is not None:
            reg.seed = int(seed)
        store.register_study(reg)
        print(f"registered {args.study} ({args.mode}) with {len(approved)} approved accession(s)")
    elif args.action == "approve":
        store.approve(args.study, args.accession or ())
        print(f"approved {len(args.accession or ())} accession(s) for {args.study}")
    elif args.action == "export":
        reg = store.study(args.study)
        rows = [m.to_record() for m in store.mappings(args.study)]
        for r in rows:
            r.pop("type")
        payload = {"study_id": reg.study_id, "mode": reg.mode.value, "purged": reg.purged, "mappings": rows}
        if args.report:
            write_json(args.report, payload)
        print(f"{len(rows)} mapping(s) for {args.study}" + (f" -> {args.report}" if args.report else ""))
    elif args.action == "purge":
        n = store.purge_links(args.study)
        print(f"purged real identifiers from {n} mapping(s) of {args.study}")
    elif args.action == "resolve":
        for anon in args.accession or ():
            acc, mrn = store.resolve(args.study, anon)
            print(f"{anon} -> accession {acc}, mrn {mrn}")
    return OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--filter", help="filter script")
    common.add_argument("--scrub", help="pixel scrub script")
    common.add_argument("--anon", help="anonymizer script")
    common.add_argument("--in", dest="input", help="input directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("--manifest", help="manifest file (run) or directory (pool)")
    common.add_argument("--workers", type=int, help="minimum workers")
    common.add_argument("--max-workers", type=int)
    common.add_argument("--window", type=float, help="delivery window in seconds")
    common.add_argument("--seed", type=int)
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="script parameter (repeatable)")
    common.add_argument("--mapping-store")
    common.add_argument("--exclusions")
    common.add_argument("--queue")
    common.add_argument("--input-store")
    common.add_argument("--runtime", choices=("process", "thread"))
    common.add_argument("--cadence", type=float)
    common.add_argument("--report", help="write a JSON report here")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="deidflow", description="DICOM de-identification pipeline")
    p.add_argument("--version", action="version", version=f"deidflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="parse the three scripts and report errors")
    sub.add_parser("run", parents=[common], help="de-identify a directory directly, no queue")

    s = sub.add_parser("submit", parents=[common], help="ingest files and enqueue a study request")
    s.add_argument("--study", required=True)
    s.add_argument("--accession", action="append", help="limit to these accessions (default: all approved)")

    sub.add_parser("pool", parents=[common], help="drain the queue with an autoscaling worker pool")

    r = sub.add_parser("regress", parents=[common], help="run a scenario suite")
    r.add_argument("suite")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--kind", choices=("default", "filter-catalog", "ultrasound", "pet-ct"), default="default")
    s.add_argument("--count", type=int, help="instances (default) or per-class count (others)")

    b = sub.add_parser("bench", parents=[common], help="benchmark a corpus at several pool sizes")
    b.add_argument("--worker-counts", help="comma-separated pool sizes, default 1,2,4")

    m = sub.add_parser("map", parents=[common], help="study and pseudonym administration")
    m.add_argument("action", choices=("register", "approve", "export", "purge", "resolve"))
    m.add_argument("--study", required=True)
    m.add_argument("--mode", choices=[x.value for x in Mode], default=Mode.IRREVERSIBLE.value)
    m.add_argument("--accession", action="append", help="approve/resolve these (repeatable)")
    m.add_argument("--accession-file", help="file with one approved accession per line")
    return p


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "submit": cmd_submit, "pool": cmd_pool,
            "regress": cmd_regress, "synth": cmd_synth, "bench": cmd_bench, "map": cmd_map}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except (SuiteSyntaxError, MissingBackground, FixtureMissing, ScriptError, InvalidSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED
    except (NothingApproved, PseudonymError) as exc:
        print(f"refused: {type(exc).__name__}: {exc}", file=sys.stderr)
        return FAILED
    except (PoolStalled, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())

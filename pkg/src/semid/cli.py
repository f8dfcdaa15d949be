"""Command-line front end: explore, coalesce, identify, eval, translate."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .coalesce import DecisionTree, TreeFormatError, coalesce
from .corpus import CorpusError, FunctionRecord, load_corpus, read_tsv, select
from .evaluate import evaluate, geometric_mean
from .explore import FuzzConfig, explore_corpus, write_profiles
from .identify import DialectMismatch, identify, read_labels, write_labels
from .iovec import MalformedIOVec, canonical_json, read_store, to_dialect, write_store
from .isa import DIALECTS, get_dialect
from .vm import BACKEND, DEFAULT_BUDGET

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STORE_SUFFIX = ".iovecs.jsonl"

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "budget": DEFAULT_BUDGET,
    "coverage_threshold": 0.85,
    "max_execs": 2000,
    "dcis_cap": 32,
    "translate": None,
    "out": ".",
}


class CliError(Exception):
    pass


def _common(p: argparse.ArgumentParser, fuzz: bool = False) -> None:
    # defaults are None so that config-file values can be told apart from flags
    p.add_argument("--config", type=Path, help="TOML file overriding built-in defaults")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--budget", type=int, help=f"instruction budget per run (default {DEFAULT_BUDGET})")
    p.add_argument("--translate", choices=sorted(DIALECTS), metavar="DIALECT",
                   help="translate IOVecs to this dialect (xa or ab)")
    p.add_argument("--out", type=Path, help="output directory (default .)")
    if fuzz:
        p.add_argument("--coverage-threshold", type=float, help="stop exploring at this coverage (default 0.85)")
        p.add_argument("--max-execs", type=int, help="executions per function (default 2000)")
        p.add_argument("--dcis-cap", type=int, help="maximum DCIS size (default 32)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"semid {__version__} ({BACKEND} VM)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="fuzz a corpus and write one IOVec store per function")
    p.add_argument("corpus", type=Path)
    p.add_argument("--variant", action="append", help="only these variants (repeatable)")
    p.add_argument("--exclude", action="append", help="skip these function names (repeatable)")
    _common(p, fuzz=True)

    p = sub.add_parser("coalesce", help="build tree.json from IOVec stores")
    p.add_argument("stores", type=Path, help="directory of *.iovecs.jsonl files")
    p.add_argument("--corpus", type=Path, required=True, help="corpus the stores were explored from")
    _common(p)

    p = sub.add_parser("identify", help="label corpus functions with a tree")
    p.add_argument("tree", type=Path)
    p.add_argument("corpus", type=Path)
    p.add_argument("--variant", action="append", help="only these variants (repeatable)")
    _common(p)

    p = sub.add_parser("eval", help="score labels.jsonl files")
    p.add_argument("labels", type=Path, nargs="+")
    p.add_argument("--truth", type=Path, help="labels.tsv mapping names to ground-truth labels")
    _common(p)

    p = sub.add_parser("translate", help="rewrite an IOVec store for another dialect")
    p.add_argument("store", type=Path)
    _common(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Flags beat the config file, which beats the defaults."""
    settings = dict(DEFAULTS)
    if args.config is not None:
        try:
            with open(args.config, "rb") as fh:
                conf = tomllib.load(fh)
        except OSError as exc:
            raise CliError(f"{args.config}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise CliError(f"{args.config}: invalid TOML ({exc})") from None
        for key, value in conf.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise CliError(f"{args.config}: unknown setting {key!r}")
            settings[key] = value
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["jobs"] < 1:
        raise CliError("--jobs must be at least 1")
    if settings["budget"] < 1:
        raise CliError("--budget must be positive")
    if settings["translate"] is not None:
        settings["translate"] = get_dialect(settings["translate"])
    settings["out"] = Path(settings["out"])
    return settings


def _load(corpus: Path) -> list[FunctionRecord]:
    records = load_corpus(corpus)
    if not records:
        raise CliError(f"{corpus}: no functions found")
    return records


def cmd_explore(args, s) -> int:
    records = select(_load(args.corpus), variants=args.variant, exclude=args.exclude)
    if not records:
        raise CliError("no functions left after --variant/--exclude filtering")
    try:
        config = FuzzConfig(coverage_threshold=s["coverage_threshold"], max_executions=s["max_execs"],
                            dcis_cap=s["dcis_cap"], budget=s["budget"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    profiles = explore_corpus(records, config, seed=s["seed"], jobs=s["jobs"])
    write_profiles(profiles, s["out"])
    for p in profiles:
        print(f"{p.record.key}\tdcis={len(p.dcis)}\texecs={p.executions}\tcoverage={p.coverage_fraction:.3f}")
    empty = [p.record.key for p in profiles if not p.dcis]
    if empty:
        print(f"unclassifiable (empty DCIS): {', '.join(empty)}", file=sys.stderr)
    return 0


def _parse_store_name(path: Path) -> tuple[str, str]:
    stem = path.name[:-len(STORE_SUFFIX)]
    name, sep, variant = stem.partition(".")
    if not sep or not name or not variant:
        raise CliError(f"{path}: store name must be <function>.<variant>{STORE_SUFFIX}")
    return name, variant


def cmd_coalesce(args, s) -> int:
    if not args.stores.is_dir():
        raise CliError(f"{args.stores}: not a directory")
    files = sorted(args.stores.glob("*" + STORE_SUFFIX))
    if not files:
        raise CliError(f"{args.stores}: no {STORE_SUFFIX} files")
    by_key = {(r.name, r.variant): r for r in _load(args.corpus)}
    training = []
    for f in files:
        key = _parse_store_name(f)
        if key not in by_key:
            raise CliError(f"{f}: no function {key[0]!r} variant {key[1]!r} in {args.corpus}")
        training.append((by_key[key], read_store(f)))
    training.sort(key=lambda t: (t[0].name, t[0].variant))

    dialects = {rec.dialect for rec, _ in training}
    if s["translate"] is not None:
        training = [(rec, [to_dialect(v, rec.dialect) for v in dcis]) for rec, dcis in training]
    elif len(dialects) > 1:
        raise CliError("stores mix dialects " + ", ".join(sorted(d.id for d in dialects))
                       + "; pass --translate <dialect> to coalesce them anyway")
    for rec, dcis in training:
        for v in dcis:
            if v.dialect != rec.dialect:
                raise CliError(f"{rec.key}: store holds {v.dialect.id} IOVecs for a {rec.dialect.id} "
                               "function; pass --translate")
    _, tree = coalesce(training, s["budget"], s["jobs"])
    s["out"].mkdir(parents=True, exist_ok=True)
    tree.save(s["out"] / "tree.json")
    print(f"classes={len(tree.leaves())} interior={tree.interior_count()} depth={tree.depth()} "
          f"unclassifiable={len(tree.unclassifiable)}")
    return 0


def cmd_identify(args, s) -> int:
    tree = DecisionTree.load(args.tree)
    records = select(_load(args.corpus), variants=args.variant)
    if not records:
        raise CliError("no functions selected")
    allow = s["translate"] is not None
    for rec in records:
        if rec.dialect != tree.dialect:
            if not allow:
                raise CliError(f"{rec.key} is {rec.dialect.id} but {args.tree} is {tree.dialect.id}; "
                               f"pass --translate {rec.dialect.id}")
            if rec.dialect != s["translate"]:
                raise CliError(f"{rec.key} is {rec.dialect.id}, not the --translate target "
                               f"{s['translate'].id}")
    idents = [identify(rec, tree, s["budget"], translate=allow) for rec in records]
    s["out"].mkdir(parents=True, exist_ok=True)
    write_labels(s["out"] / "labels.jsonl", tree, idents)
    known = sum(1 for i in idents if i.known)
    print(f"identified {known}/{len(idents)}")
    return 0


def cmd_eval(args, s) -> int:
    truth = read_tsv(args.truth) if args.truth else None
    reports = []
    for path in args.labels:
        header, records = read_labels(path)
        started = time.perf_counter()
        report = evaluate(header, records, truth)
        report.seconds = time.perf_counter() - started
        reports.append((path, report))
        print(f"== {path}")
        print(report.format())
    summary = {"reports": {str(p): r.to_dict() for p, r in reports}}
    if len(reports) > 1:
        gm = geometric_mean([r.f1 for _, r in reports])
        summary["geometric_mean_f1"] = round(gm, 6)
        print(f"geometric mean F1 {gm:.4f}")
    if args.out is not None or s["out"] != Path("."):
        s["out"].mkdir(parents=True, exist_ok=True)
        (s["out"] / "report.json").write_text(canonical_json(summary) + "\n", encoding="utf-8")
    return 0


def cmd_translate(args, s) -> int:
    if s["translate"] is None:
        raise CliError("translate needs --translate <dialect>")
    if not args.store.name.endswith(STORE_SUFFIX):
        raise CliError(f"{args.store}: expected a {STORE_SUFFIX} file")
    iovecs = read_store(args.store)
    out = [to_dialect(v, s["translate"]) for v in iovecs]
    s["out"].mkdir(parents=True, exist_ok=True)
    _parse_store_name(args.store)
    dest = s["out"] / args.store.name
    if dest.resolve() == args.store.resolve():
        raise CliError(f"{dest}: refusing to overwrite the input store; choose another --out")
    write_store(dest, out)
    print(dest)
    return 0


COMMANDS = {"explore": cmd_explore, "coalesce": cmd_coalesce, "identify": cmd_identify,
            "eval": cmd_eval, "translate": cmd_translate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve(args)
        return COMMANDS[args.command](args, settings)
    except (CliError, CorpusError, TreeFormatError, MalformedIOVec, DialectMismatch) as exc:
        print(f"semid: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"semid: error: {exc.filename}: no such file", file=sys.stderr)
        return 1
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"semid: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Identification of unknown functions by walking a decision tree."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .coalesce import DecisionTree, Interior, Leaf
from .corpus import FunctionRecord
from .iovec import Outcome, canonical_json, run_iovec, to_dialect
from .vm import DEFAULT_BUDGET

UNKNOWN = "Unknown"


class DialectMismatch(ValueError):
    pass


@dataclass
class Identification:
    name: str
    variant: str
    label: list[str] | None                   # class member names, None = Unknown
    path: list[tuple[int, str]] = field(default_factory=list)   # (column, outcome)
    confirm: tuple[int, str] | None = None
    confirm_on_path: bool = False
    executions: int = 0
    accepted: int = 0
    leaf: Leaf | None = field(default=None, repr=False)

    @property
    def known(self) -> bool:
        return self.label is not None


def _check_dialect(function: FunctionRecord, tree: DecisionTree, translate: bool) -> None:
    if function.dialect != tree.dialect and not translate:
        raise DialectMismatch(f"{function.key} is {function.dialect.id} but the tree is "
                              f"{tree.dialect.id}; translation not enabled")


def identify(function: FunctionRecord, tree: DecisionTree, budget: int = DEFAULT_BUDGET,
             translate: bool = False) -> Identification:
    _check_dialect(function, tree, translate)
    result = Identification(function.name, function.variant, None)
    dialect = function.dialect
    cache: dict[int, Outcome] = {}

    def run(col: int) -> Outcome:
        # a confirmation IOVec already on the path is reused, not re-executed
        if col not in cache:
            cache[col] = run_iovec(function.image, to_dialect(tree.columns[col].iovec, dialect), budget)
            result.executions += 1
            if cache[col] is Outcome.ACCEPT:
                result.accepted += 1
        return cache[col]

    node = tree.root
    if node is None:
        return result
    while isinstance(node, Interior):
        outcome = run(node.column)
        result.path.append((node.column, outcome.value))
        node = node.accept if outcome is Outcome.ACCEPT else node.reject
    result.leaf = node
    if node.confirm is None:
        return result
    result.confirm_on_path = node.confirm in cache
    outcome = run(node.confirm)
    result.confirm = (node.confirm, outcome.value)
    if outcome is Outcome.ACCEPT:
        result.label = tree.class_names(node)
    return result


@dataclass
class OracleResult:
    label: list[str] | None
    candidates: list[list[str]]
    executions: int


def oracle_identify(function: FunctionRecord, tree: DecisionTree, budget: int = DEFAULT_BUDGET,
                    translate: bool = False, reached: Leaf | None = None) -> OracleResult:
    """Exhaustive classification: run every stored IOVec and pick a class whose whole DCIS is accepted.

    When several classes qualify the one whose leaf ``reached`` names wins,
    otherwise the first in leaf order.
    """
    _check_dialect(function, tree, translate)
    dialect = function.dialect
    accepted = [run_iovec(function.image, to_dialect(col.iovec, dialect), budget) is Outcome.ACCEPT
                for col in tree.columns]
    winners = [leaf for leaf in tree.leaves()
               if (cols := tree.class_dcis(leaf)) and all(accepted[c] for c in cols)]
    candidates = [tree.class_names(leaf) for leaf in winners]
    if not winners:
        return OracleResult(None, [], len(tree.columns))
    pick = winners[0]
    if reached is not None:
        for leaf in winners:
            if leaf is reached:
                pick = leaf
    return OracleResult(tree.class_names(pick), candidates, len(tree.columns))


# -- labels.jsonl ------------------------------------------------------------

def assign_label(name: str, members: list[str] | None) -> str:
    """The FUT's own name if its class contains it, else the first member, else Unknown."""
    if not members:
        return UNKNOWN
    return name if name in members else members[0]


def header_record(tree: DecisionTree) -> dict:
    return {
        "kind": "header",
        "dialect": tree.dialect.id,
        "corpus_hash": tree.corpus_hash,
        "classes": tree.classes(),
        "unclassifiable": [tree.functions[i][0] for i in tree.unclassifiable],
    }


def label_record(ident: Identification) -> dict:
    return {
        "kind": "label",
        "name": ident.name,
        "variant": ident.variant,
        "label": assign_label(ident.name, ident.label),
        "class": ident.label or [],
        "path": [[c, o] for c, o in ident.path],
        "confirm": None if ident.confirm is None else list(ident.confirm),
        "confirm_on_path": ident.confirm_on_path,
        "executions": ident.executions,
        "accepted": ident.accepted,
    }


def write_labels(path: str | Path, tree: DecisionTree, idents: list[Identification]) -> None:
    lines = [canonical_json(header_record(tree))]
    lines += [canonical_json(label_record(i)) for i in idents]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels(path: str | Path) -> tuple[dict, list[dict]]:
    header, records = None, []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
            if rec.get("kind") == "header":
                header = rec
            else:
                for key in ("name", "label", "class"):
                    if key not in rec:
                        raise ValueError(f"{path}:{n}: label record missing {key!r}")
                records.append(rec)
    if header is None:
        raise ValueError(f"{path}: missing header record")
    return header, records

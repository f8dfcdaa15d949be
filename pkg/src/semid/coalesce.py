"""Accept matrix and decision-tree induction.

Every training function is run against every stored IOVec. The resulting
boolean matrix is split greedily into a binary tree: interior nodes hold IOVec
columns, leaves hold the functions no column can tell apart.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .asm import disassemble
from .corpus import FunctionRecord
from .iovec import IOVec, Outcome, canonical_json, iovec_from_dict, iovec_to_dict, run_iovec, to_dialect
from .isa import Dialect, get_dialect
from .vm import DEFAULT_BUDGET

TREE_FORMAT = 1


class TreeFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    owner: int          # row index of the function whose DCIS holds the IOVec
    ordinal: int        # position within that DCIS
    iovec: IOVec


@dataclass
class AcceptMatrix:
    functions: list[FunctionRecord]
    dcis_sizes: list[int]
    columns: list[Column]
    cells: list[tuple[bool, ...]]   # cells[row][col]

    def row(self, i: int) -> tuple[bool, ...]:
        return self.cells[i]

    def classified(self) -> list[int]:
        return [i for i, n in enumerate(self.dcis_sizes) if n > 0]

    def unclassifiable(self) -> list[int]:
        return [i for i, n in enumerate(self.dcis_sizes) if n == 0]

    def owned_columns(self, row: int) -> list[int]:
        return [c for c, col in enumerate(self.columns) if col.owner == row]


def _row_outcomes(args) -> tuple[bool, ...]:
    record, columns, budget = args
    dialect = record.image.dialect
    return tuple(run_iovec(record.image, to_dialect(col.iovec, dialect), budget) is Outcome.ACCEPT
                 for col in columns)


def build_matrix(training: list[tuple[FunctionRecord, list[IOVec]]], budget: int = DEFAULT_BUDGET,
                 jobs: int = 1) -> AcceptMatrix:
    """Evaluate every function against the union of all DCIS.

    Own-DCIS cells are re-run like every other cell rather than assumed.
    IOVecs are translated to each function's dialect when they differ.
    """
    functions = [rec for rec, _ in training]
    columns = [Column(i, k, v) for i, (_, dcis) in enumerate(training) for k, v in enumerate(dcis)]
    work = [(rec, columns, budget) for rec in functions]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_row_outcomes, work))
    else:
        cells = [_row_outcomes(w) for w in work]
    return AcceptMatrix(functions, [len(d) for _, d in training], columns, cells)


# -- tree ------------------------------------------------------------------

@dataclass
class Leaf:
    functions: list[int]            # row indices into the training table
    confirm: int | None             # column index; None only for an empty class
    confirm_on_path: bool = False


@dataclass
class Interior:
    column: int
    accept: "Leaf | Interior"
    reject: "Leaf | Interior"


Node = Leaf | Interior


@dataclass
class DecisionTree:
    dialect: Dialect
    corpus_hash: str
    functions: list[tuple[str, str]]       # (name, variant) per training row
    columns: list[Column]
    root: Node | None
    unclassifiable: list[int] = field(default_factory=list)

    # -- queries -----------------------------------------------------------
    def leaves(self) -> list[Leaf]:
        out = []

        def walk(node):
            if isinstance(node, Leaf):
                out.append(node)
            else:
                walk(node.accept)
                walk(node.reject)
        if self.root is not None:
            walk(self.root)
        return out

    def interior_count(self) -> int:
        def count(node):
            return 0 if isinstance(node, Leaf) else 1 + count(node.accept) + count(node.reject)
        return 0 if self.root is None else count(self.root)

    def depth(self) -> int:
        def d(node):
            return 0 if isinstance(node, Leaf) else 1 + max(d(node.accept), d(node.reject))
        return 0 if self.root is None else d(self.root)

    def class_names(self, leaf: Leaf) -> list[str]:
        return [self.functions[i][0] for i in leaf.functions]

    def classes(self) -> list[list[str]]:
        return [self.class_names(leaf) for leaf in self.leaves()]

    def class_dcis(self, leaf: Leaf) -> list[int]:
        members = set(leaf.functions)
        return [c for c, col in enumerate(self.columns) if col.owner in members]

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        def node_dict(node):
            if isinstance(node, Leaf):
                return {"leaf": {"functions": node.functions, "confirm": node.confirm,
                                 "confirm_on_path": node.confirm_on_path}}
            return {"column": node.column, "accept": node_dict(node.accept),
                    "reject": node_dict(node.reject)}
        return {
            "format": TREE_FORMAT,
            "dialect": self.dialect.id,
            "corpus_hash": self.corpus_hash,
            "functions": [{"name": n, "variant": v} for n, v in self.functions],
            "iovecs": [{"owner": c.owner, "ordinal": c.ordinal, "iovec": iovec_to_dict(c.iovec)}
                       for c in self.columns],
            "root": None if self.root is None else node_dict(self.root),
            "unclassifiable": self.unclassifiable,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        try:
            if d.get("format") != TREE_FORMAT:
                raise TreeFormatError(f"unsupported tree format {d.get('format')!r}")
            functions = [(f["name"], f["variant"]) for f in d["functions"]]
            columns = [Column(int(c["owner"]), int(c["ordinal"]), iovec_from_dict(c["iovec"]))
                       for c in d["iovecs"]]

            def node(nd):
                if "leaf" in nd:
                    lf = nd["leaf"]
                    leaf = Leaf([int(i) for i in lf["functions"]], lf["confirm"],
                                bool(lf.get("confirm_on_path", False)))
                    if any(not 0 <= i < len(functions) for i in leaf.functions):
                        raise TreeFormatError("leaf names an unknown function")
                    if leaf.confirm is not None and not 0 <= leaf.confirm < len(columns):
                        raise TreeFormatError("leaf confirmation IOVec out of range")
                    return leaf
                col = int(nd["column"])
                if not 0 <= col < len(columns):
                    raise TreeFormatError(f"node column {col} out of range")
                return Interior(col, node(nd["accept"]), node(nd["reject"]))
            root = None if d["root"] is None else node(d["root"])
            return cls(get_dialect(d["dialect"]), d["corpus_hash"], functions, columns, root,
                       [int(i) for i in d.get("unclassifiable", [])])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, TreeFormatError):
                raise
            raise TreeFormatError(f"malformed tree: {exc}") from None

    def dumps(self) -> str:
        return canonical_json(self.to_dict()) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DecisionTree":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise TreeFormatError(f"{path}: not valid JSON ({exc})") from None
        try:
            return cls.from_dict(data)
        except TreeFormatError as exc:
            raise TreeFormatError(f"{path}: {exc}") from None


def corpus_hash(functions: list[FunctionRecord]) -> str:
    h = hashlib.sha256()
    for rec in sorted(functions, key=lambda r: (r.name, r.variant)):
        h.update(f"{rec.name}\t{rec.variant}\n".encode())
        h.update(disassemble(rec.image).encode())
    return h.hexdigest()


def _confirmation(matrix: AcceptMatrix, members: list[int], path: list[tuple[int, bool]]) -> tuple[int | None, bool]:
    on_path = {c for c, _ in path}
    mset = set(members)
    candidates = [c for c, col in enumerate(matrix.columns) if col.owner in mset and c not in on_path]
    if candidates:
        # max() returns the lowest column index on coverage ties
        return max(candidates, key=lambda c: len(matrix.columns[c].iovec.coverage)), False
    for c, accepted in reversed(path):
        if accepted:
            return c, True
    return None, False


def build_tree(matrix: AcceptMatrix) -> DecisionTree:
    rows = matrix.classified()
    ncols = len(matrix.columns)
    dialects = {matrix.functions[i].dialect for i in rows} or {rec.dialect for rec in matrix.functions}
    dialect = min(dialects, key=lambda d: d.id) if dialects else get_dialect("xa")

    def grow(members: list[int], path: list[tuple[int, bool]]) -> Node:
        best, best_score = None, None
        for c in range(ncols):
            acc = sum(1 for r in members if matrix.cells[r][c])
            if 0 < acc < len(members):
                score = abs(2 * acc - len(members))
                if best_score is None or score < best_score:
                    best, best_score = c, score
        if best is None:
            confirm, reused = _confirmation(matrix, members, path)
            return Leaf(list(members), confirm, reused)
        yes = [r for r in members if matrix.cells[r][best]]
        no = [r for r in members if not matrix.cells[r][best]]
        return Interior(best, grow(yes, path + [(best, True)]), grow(no, path + [(best, False)]))

    root = grow(rows, []) if rows else None
    return DecisionTree(dialect, corpus_hash(matrix.functions),
                        [(r.name, r.variant) for r in matrix.functions], list(matrix.columns),
                        root, matrix.unclassifiable())


def row_partition(matrix: AcceptMatrix) -> list[list[int]]:
    """Brute-force oracle: classified functions grouped by identical matrix rows."""
    groups: dict[tuple[bool, ...], list[int]] = {}
    for i in matrix.classified():
        groups.setdefault(matrix.cells[i], []).append(i)
    return list(groups.values())


def coalesce(training: list[tuple[FunctionRecord, list[IOVec]]], budget: int = DEFAULT_BUDGET,
             jobs: int = 1) -> tuple[AcceptMatrix, DecisionTree]:
    matrix = build_matrix(training, budget, jobs)
    return matrix, build_tree(matrix)

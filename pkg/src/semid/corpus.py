"""Function corpora: loading ``.sevm`` trees and deriving code variants."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .asm import AsmError, assemble_all
from .isa import BRANCH_OPS, Dialect, FunctionImage, Instruction, Op, get_dialect


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class FunctionRecord:
    name: str
    variant: str
    image: FunctionImage
    ground_truth_label: str | None = None

    @property
    def key(self) -> str:
        return f"{self.name}.{self.variant}"

    @property
    def dialect(self) -> Dialect:
        return self.image.dialect


def fixtures_path() -> Path:
    return Path(str(resources.files("semid") / "fixtures"))


def read_tsv(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if not row or row[0].startswith("#"):
                continue
            if len(row) < 2:
                raise CorpusError(f"{path}: expected two tab-separated columns, got {row!r}")
            out[row[0].strip()] = row[1].strip()
    return out


def load_corpus(path: str | Path) -> list[FunctionRecord]:
    """Load every ``.func`` block under ``path``.

    Files are visited in sorted relative-path order; the variant tag of a
    record is the file stem and its name comes from the ``.func`` line.
    """
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"{root}: not a directory")
    labels = {}
    if (root / "labels.tsv").exists():
        labels = read_tsv(root / "labels.tsv")
    records: list[FunctionRecord] = []
    seen: dict[tuple[str, str], Path] = {}
    for file in sorted(root.rglob("*.sevm"), key=lambda p: p.relative_to(root).as_posix()):
        try:
            images = assemble_all(file.read_text(encoding="utf-8"), source=str(file))
        except AsmError as exc:
            raise CorpusError(str(exc)) from None
        for image in images:
            key = (image.name, file.stem)
            if key in seen:
                raise CorpusError(f"{file}: duplicate function {image.name!r} variant {file.stem!r} "
                                  f"(first defined in {seen[key]})")
            seen[key] = file
            records.append(FunctionRecord(image.name, file.stem, image, labels.get(image.name)))
    return records


def select(records: list[FunctionRecord], variants=None, names=None, exclude=None) -> list[FunctionRecord]:
    out = []
    for rec in records:
        if variants and rec.variant not in variants:
            continue
        if names and rec.name not in names:
            continue
        if exclude and rec.name in exclude:
            continue
        out.append(rec)
    return out


def pointer_signatures(path: str | Path | None = None) -> dict[str, frozenset[int]]:
    """Documented pointer-argument slots from ``signatures.tsv``."""
    path = Path(path) if path is not None else fixtures_path() / "signatures.tsv"
    out = {}
    for name, slots in read_tsv(path).items():
        out[name] = frozenset() if slots == "-" else frozenset(int(s) for s in slots.split(","))
    return out


# -- variant derivation ---------------------------------------------------

def register_map(src: Dialect, dst: Dialect) -> dict[int, int]:
    """Register correspondence that preserves calling-convention roles."""
    mapping = {src.return_register: dst.return_register, src.stack_register: dst.stack_register}
    mapping.update(zip(src.arg_registers, dst.arg_registers))
    rest_src = [r for r in range(16) if r not in mapping]
    rest_dst = [r for r in range(16) if r not in mapping.values()]
    mapping.update(zip(rest_src, rest_dst))
    return mapping


_USES_A = {Op.LI, Op.MOV, Op.ADDI, Op.LD, Op.LDB, Op.ST, Op.STB} | BRANCH_OPS
_USES_A |= {Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.AND, Op.OR, Op.XOR, Op.SHL, Op.SHR}
_USES_B = _USES_A - {Op.LI, Op.ADDI}


def to_dialect(image: FunctionImage, target: Dialect | str) -> FunctionImage:
    """Rewrite a function for another dialect by renaming registers by role."""
    target = get_dialect(target)
    if target == image.dialect:
        return image
    m = register_map(image.dialect, target)
    code = tuple(
        Instruction(ins.op,
                    a=m[ins.a] if ins.op in _USES_A else ins.a,
                    b=m[ins.b] if ins.op in _USES_B else ins.b,
                    imm=ins.imm)
        for ins in image.code)
    return FunctionImage(image.name, target, code)


def _relocate(code: tuple[Instruction, ...], inserted_before: dict[int, list[Instruction]],
              prologue: list[Instruction], tail: list[Instruction]) -> tuple[list[Instruction], int]:
    """Splice instructions into ``code`` and rewrite branch targets.

    Old targets land on the first instruction inserted before them. Returns the
    new code and the index at which ``tail`` starts.
    """
    new_pos = []
    pos = len(prologue)
    for i in range(len(code)):
        new_pos.append(pos)
        pos += len(inserted_before.get(i, ())) + 1
    tail_start = pos
    out = list(prologue)
    for i, ins in enumerate(code):
        out.extend(inserted_before.get(i, ()))
        if ins.op in BRANCH_OPS or ins.op is Op.JMP:
            ins = Instruction(ins.op, ins.a, ins.b, new_pos[ins.imm])
        out.append(ins)
    out.extend(tail)
    return out, tail_start


def spill_variant(image: FunctionImage) -> FunctionImage:
    """Unoptimised-style variant: spill all argument registers to the stack and reload them."""
    d = image.dialect
    sp = d.stack_register
    frame = 8 * len(d.arg_registers)
    prologue = [Instruction(Op.ADDI, a=sp, imm=(-frame) & ((1 << 64) - 1))]
    prologue += [Instruction(Op.ST, a=sp, b=r, imm=8 * i) for i, r in enumerate(d.arg_registers)]
    prologue += [Instruction(Op.LD, a=r, b=sp, imm=8 * i) for i, r in enumerate(d.arg_registers)]
    epilogue = {i: [Instruction(Op.ADDI, a=sp, imm=frame)]
                for i, ins in enumerate(image.code) if ins.op is Op.RET}
    code, _ = _relocate(image.code, epilogue, prologue, [])
    return FunctionImage(image.name, d, tuple(code))


def bogus_branch_variant(image: FunctionImage, seed: int = 0, density: float = 0.3) -> FunctionImage:
    """Insert opaque never-taken branches into dead junk code.

    Each inserted ``bne sp, sp, junk`` compares the stack register with itself,
    so it never fires; the junk block it names is appended after the body.
    """
    rng = random.Random(seed)
    d = image.dialect
    sp = d.stack_register
    sites = [i for i in range(len(image.code)) if rng.random() < density]
    if not sites:
        sites = [rng.randrange(len(image.code))]
    tail = [Instruction(Op.LI, a=d.return_register, imm=0x0BADC0DE), Instruction(Op.RET)]
    placeholder = Instruction(Op.BNE, a=sp, b=sp, imm=0)
    code, tail_start = _relocate(image.code, {i: [placeholder] for i in sites}, [], tail)
    code = [Instruction(Op.BNE, a=sp, b=sp, imm=tail_start) if ins is placeholder else ins
            for ins in code]
    return FunctionImage(image.name, d, tuple(code))


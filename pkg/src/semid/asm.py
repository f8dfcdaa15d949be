"""Assembler and disassembler for the ``.sevm`` text format.

A source file holds one or more function blocks::

    .func strlen xa
        mov r0, r1
        li r8, 0
    loop:
        ldb r7, [r0+0]      ; one byte, zero-extended
        beq r7, r8, done
        addi r0, 1
        jmp loop
    done:
        sub r0, r1
        ret
    .end

Mnemonics are case-insensitive. Immediates are decimal or ``0x`` hex and may
carry a leading minus sign. Memory operands are ``[reg]``, ``[reg+disp]`` or
``[reg-disp]`` with a 16-bit signed displacement. Binary arithmetic is
two-operand (``add rd, rs`` means ``rd = rd + rs``); ``div`` is unsigned and
``blt``/``bge`` compare as two's-complement signed values.
"""

from __future__ import annotations

import re

from .isa import (
    BINARY_OPS,
    BRANCH_OPS,
    MASK64,
    Dialect,
    FunctionImage,
    Instruction,
    Op,
    get_dialect,
    to_signed,
)

_LABEL_RE = re.compile(r"^([A-Za-z_.$][\w.$]*)\s*:")
_MEM_RE = re.compile(r"^\[\s*(\w+)\s*(?:([+-])\s*(\w+)\s*)?\]$")
_IDENT_RE = re.compile(r"^[A-Za-z_.$][\w.$]*$")


class AsmError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        text = message
        if line is not None:
            text = f"{text} line {line}"
        if source is not None:
            text = f"{source}: {text}"
        super().__init__(text)


def parse_int(token: str) -> int:
    tok = token.strip().lower()
    sign = 1
    if tok.startswith("-"):
        sign, tok = -1, tok[1:]
    elif tok.startswith("+"):
        tok = tok[1:]
    if tok.startswith("0x") and len(tok) > 2:
        value = int(tok[2:], 16)
    elif tok.isdigit():
        value = int(tok, 10)
    else:
        raise ValueError(f"bad immediate '{token}'")
    return sign * value


def _split_operands(text: str) -> list[str]:
    text = text.strip()
    if not text:
        return []
    return [part.strip() for part in text.split(",")]


class _Block:
    def __init__(self, name: str, dialect: Dialect, line: int):
        self.name = name
        self.dialect = dialect
        self.line = line
        self.labels: dict[str, int] = {}
        # (mnemonic, operands, line)
        self.pending: list[tuple[str, list[str], int]] = []


def _imm(tok: str, lineno: int, lo: int, hi: int, what: str = "immediate") -> int:
    try:
        value = parse_int(tok)
    except ValueError:
        raise AsmError(f"bad {what} '{tok}'", lineno) from None
    if not lo <= value <= hi:
        raise AsmError(f"{what} '{tok}' out of range", lineno)
    return value


def _reg(dialect: Dialect, tok: str, lineno: int) -> int:
    try:
        return dialect.parse_reg(tok)
    except ValueError as exc:
        raise AsmError(str(exc), lineno) from None


def _mem(dialect: Dialect, tok: str, lineno: int) -> tuple[int, int]:
    m = _MEM_RE.match(tok.strip())
    if not m:
        raise AsmError(f"bad memory operand '{tok}'", lineno)
    base = _reg(dialect, m.group(1), lineno)
    disp = 0
    if m.group(2):
        disp = _imm(m.group(3), lineno, 0, 1 << 16, "displacement")
        if m.group(2) == "-":
            disp = -disp
        if not -(1 << 15) <= disp < (1 << 15):
            raise AsmError(f"displacement '{tok}' out of range", lineno)
    return base, disp


def _encode(block: _Block, mnemonic: str, ops: list[str], lineno: int) -> Instruction:
    try:
        op = Op[mnemonic.upper()]
    except KeyError:
        raise AsmError(f"unknown mnemonic '{mnemonic}'", lineno) from None
    d = block.dialect

    def arity(n: int) -> None:
        if len(ops) != n:
            raise AsmError(f"'{mnemonic}' takes {n} operand(s), got {len(ops)}", lineno)

    if op is Op.LI:
        arity(2)
        return Instruction(op, a=_reg(d, ops[0], lineno),
                           imm=_imm(ops[1], lineno, -(1 << 63), MASK64) & MASK64)
    if op is Op.ADDI:
        arity(2)
        return Instruction(op, a=_reg(d, ops[0], lineno),
                           imm=_imm(ops[1], lineno, -(1 << 63), MASK64) & MASK64)
    if op is Op.MOV or op in BINARY_OPS:
        arity(2)
        return Instruction(op, a=_reg(d, ops[0], lineno), b=_reg(d, ops[1], lineno))
    if op in (Op.LD, Op.LDB):
        arity(2)
        base, disp = _mem(d, ops[1], lineno)
        return Instruction(op, a=_reg(d, ops[0], lineno), b=base, imm=disp & MASK64)
    if op in (Op.ST, Op.STB):
        arity(2)
        base, disp = _mem(d, ops[0], lineno)
        return Instruction(op, a=base, b=_reg(d, ops[1], lineno), imm=disp & MASK64)
    if op in BRANCH_OPS:
        arity(3)
        return Instruction(op, a=_reg(d, ops[0], lineno), b=_reg(d, ops[1], lineno),
                           imm=_target(block, ops[2], lineno))
    if op is Op.JMP:
        arity(1)
        return Instruction(op, imm=_target(block, ops[0], lineno))
    if op is Op.SYS:
        arity(1)
        return Instruction(op, imm=_imm(ops[0], lineno, 0, (1 << 63) - 1, "syscall id"))
    arity(0)
    return Instruction(Op.RET)


def _target(block: _Block, label: str, lineno: int) -> int:
    if label not in block.labels:
        raise AsmError(f"unresolved label '{label}'", lineno)
    return block.labels[label]


def assemble_all(text: str, source: str | None = None) -> list[FunctionImage]:
    """Assemble every ``.func`` block of ``text`` in order."""
    images: list[FunctionImage] = []
    block: _Block | None = None
    try:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split(";", 1)[0].strip()
            if not line:
                continue
            if line.startswith(".func"):
                if block is not None:
                    raise AsmError("nested .func", lineno)
                parts = line.split()
                if len(parts) != 3 or not _IDENT_RE.match(parts[1]):
                    raise AsmError("expected '.func <name> <xa|ab>'", lineno)
                try:
                    dialect = get_dialect(parts[2])
                except ValueError as exc:
                    raise AsmError(str(exc), lineno) from None
                block = _Block(parts[1], dialect, lineno)
                continue
            if line == ".end":
                if block is None:
                    raise AsmError(".end without .func", lineno)
                images.append(_finish(block))
                block = None
                continue
            if block is None:
                raise AsmError("instruction outside .func block", lineno)
            m = _LABEL_RE.match(line)
            while m:
                name = m.group(1)
                if name in block.labels:
                    raise AsmError(f"duplicate label '{name}'", lineno)
                block.labels[name] = len(block.pending)
                line = line[m.end():].strip()
                m = _LABEL_RE.match(line)
            if not line:
                continue
            mnemonic, *rest = line.split(None, 1)
            rest = rest[0] if rest else ""
            block.pending.append((mnemonic, _split_operands(rest), lineno))
        if block is not None:
            raise AsmError(f"missing .end for '{block.name}'", block.line)
    except AsmError as exc:
        if source is None or exc.source is not None:
            raise
        wrapped = AsmError(str(exc), source=source)
        wrapped.line = exc.line
        raise wrapped from None
    return images


def _finish(block: _Block) -> FunctionImage:
    if not block.pending:
        raise AsmError(f"function '{block.name}' is empty", block.line)
    n = len(block.pending)
    for label, index in block.labels.items():
        if index >= n:
            raise AsmError(f"label '{label}' points past the last instruction", block.line)
    code = tuple(_encode(block, mn, ops, ln) for mn, ops, ln in block.pending)
    return FunctionImage(block.name, block.dialect, code)


def assemble(text: str) -> FunctionImage:
    images = assemble_all(text)
    if len(images) != 1:
        raise AsmError(f"expected exactly one .func block, found {len(images)}")
    return images[0]


def disassemble(image: FunctionImage) -> str:
    d = image.dialect
    targets = sorted({ins.imm for ins in image.code if ins.op in BRANCH_OPS or ins.op is Op.JMP})
    names = {t: f"L{t}" for t in targets}
    lines = [f".func {image.name} {d.id}"]
    for index, ins in enumerate(image.code):
        if index in names:
            lines.append(f"{names[index]}:")
        lines.append("    " + format_instruction(ins, d, names))
    lines.append(".end")
    return "\n".join(lines) + "\n"


def format_instruction(ins: Instruction, dialect: Dialect, labels: dict[int, str] | None = None) -> str:
    r = dialect.reg_name
    mn = ins.op.name.lower()
    op = ins.op

    def target() -> str:
        if labels and ins.imm in labels:
            return labels[ins.imm]
        return str(ins.imm)

    def mem(base: int) -> str:
        disp = to_signed(ins.imm)
        return f"[{r(base)}{'-' if disp < 0 else '+'}{abs(disp)}]"

    if op is Op.LI:
        return f"{mn} {r(ins.a)}, {hex(ins.imm)}"
    if op is Op.ADDI:
        return f"{mn} {r(ins.a)}, {to_signed(ins.imm)}"
    if op is Op.MOV or op in BINARY_OPS:
        return f"{mn} {r(ins.a)}, {r(ins.b)}"
    if op in (Op.LD, Op.LDB):
        return f"{mn} {r(ins.a)}, {mem(ins.b)}"
    if op in (Op.ST, Op.STB):
        return f"{mn} {mem(ins.a)}, {r(ins.b)}"
    if op in BRANCH_OPS:
        return f"{mn} {r(ins.a)}, {r(ins.b)}, {target()}"
    if op is Op.JMP:
        return f"{mn} {target()}"
    if op is Op.SYS:
        return f"{mn} {ins.imm}"
    return mn

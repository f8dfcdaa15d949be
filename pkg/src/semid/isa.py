"""Instruction set of the sandbox machine and its two calling-convention dialects."""

from __future__ import annotations

import enum
from array import array
from dataclasses import dataclass, field

NUM_REGISTERS = 16
MASK64 = (1 << 64) - 1


class Op(enum.IntEnum):
    # numeric values are shared with both interpreter kernels
    LI = 0
    MOV = 1
    ADD = 2
    SUB = 3
    MUL = 4
    DIV = 5
    AND = 6
    OR = 7
    XOR = 8
    SHL = 9
    SHR = 10
    ADDI = 11
    LD = 12
    LDB = 13
    ST = 14
    STB = 15
    BEQ = 16
    BNE = 17
    BLT = 18
    BGE = 19
    JMP = 20
    SYS = 21
    RET = 22


BINARY_OPS = frozenset({Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.AND, Op.OR, Op.XOR, Op.SHL, Op.SHR})
BRANCH_OPS = frozenset({Op.BEQ, Op.BNE, Op.BLT, Op.BGE})
LOAD_OPS = frozenset({Op.LD, Op.LDB})
STORE_OPS = frozenset({Op.ST, Op.STB})
MEMORY_OPS = LOAD_OPS | STORE_OPS
ACCESS_WIDTH = {Op.LD: 8, Op.ST: 8, Op.LDB: 1, Op.STB: 1}


@dataclass(frozen=True)
class Dialect:
    id: str
    prefix: str
    arg_registers: tuple[int, ...]
    return_register: int
    stack_register: int

    def reg_name(self, index: int) -> str:
        return f"{self.prefix}{index}"

    def parse_reg(self, name: str) -> int:
        name = name.strip().lower()
        if not name.startswith(self.prefix):
            raise ValueError(f"register '{name}' is not a {self.id} register")
        digits = name[len(self.prefix):]
        if not digits.isdigit() or not 0 <= int(digits) < NUM_REGISTERS:
            raise ValueError(f"register '{name}' is not a {self.id} register")
        return int(digits)

    def slot_of(self, register: int) -> int | None:
        try:
            return self.arg_registers.index(register)
        except ValueError:
            return None

    def __str__(self) -> str:
        return self.id


XA = Dialect("xa", "r", arg_registers=(1, 2, 3, 4, 5, 6), return_register=0, stack_register=15)
AB = Dialect("ab", "a", arg_registers=(2, 3, 4, 5, 6, 7), return_register=1, stack_register=0)
DIALECTS = {"xa": XA, "ab": AB}


def get_dialect(value: str | Dialect) -> Dialect:
    if isinstance(value, Dialect):
        return value
    try:
        return DIALECTS[value.lower()]
    except KeyError:
        raise ValueError(f"unknown dialect {value!r} (expected xa or ab)") from None


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction.

    Operand use by opcode:

    ============  =========  ==========  ==================
    opcode        ``a``      ``b``       ``imm``
    ============  =========  ==========  ==================
    LI            dest                   64-bit immediate
    MOV / binop   dest       src
    ADDI          dest                   signed immediate
    LD / LDB      dest       base        displacement
    ST / STB      base       src         displacement
    Bxx           lhs        rhs         target index
    JMP                                  target index
    SYS                                  syscall id
    ============  =========  ==========  ==================
    """

    op: Op
    a: int = 0
    b: int = 0
    imm: int = 0


@dataclass(frozen=True)
class FunctionImage:
    name: str
    dialect: Dialect
    code: tuple[Instruction, ...]
    _packed: tuple = field(default=None, compare=False, repr=False, hash=False)

    def __len__(self) -> int:
        return len(self.code)

    @property
    def packed(self) -> tuple[array, array, array, array]:
        """Flat opcode/operand arrays consumed by the interpreter kernels."""
        if self._packed is None:
            ops = array("B", (int(i.op) & 0xFF for i in self.code))
            ra = array("B", (i.a & 0xFF for i in self.code))
            rb = array("B", (i.b & 0xFF for i in self.code))
            imms = array("q", (_to_signed(i.imm) for i in self.code))
            object.__setattr__(self, "_packed", (ops, ra, rb, imms))
        return self._packed


def _to_signed(value: int) -> int:
    value &= MASK64
    return value - (1 << 64) if value >> 63 else value


def to_signed(value: int) -> int:
    return _to_signed(value)

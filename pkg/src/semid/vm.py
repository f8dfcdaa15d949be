"""Deterministic sandbox machine: memory model, machine state and ``execute``.

The interpreter loop lives in a compiled extension (``semid._vmcore``) with a
pure-Python twin (``semid._vmcore_py``). The compiled kernel is used when it
imports; set ``SEMID_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

from .isa import NUM_REGISTERS, Dialect, FunctionImage

if os.environ.get("SEMID_PURE") == "1":
    from . import _vmcore_py as _kernel
else:
    try:
        from . import _vmcore as _kernel
    except ImportError:  # extension not built
        from . import _vmcore_py as _kernel

BACKEND = "native" if _kernel.__name__.endswith("_vmcore") else "python"

PAGE_SIZE = 4096
STACK_SIZE = 0x4000
STACK_BASE = 0x7FFF_0000
STACK_TOP = STACK_BASE + STACK_SIZE
DEFAULT_BUDGET = 1_000_000


class FaultKind(enum.Enum):
    UNMAPPED_READ = 1
    UNMAPPED_WRITE = 2
    DIVIDE_BY_ZERO = 3
    ILLEGAL_INSTRUCTION = 4

    @property
    def is_memory(self) -> bool:
        return self in (FaultKind.UNMAPPED_READ, FaultKind.UNMAPPED_WRITE)


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    trace_position: int
    instruction_index: int
    address: int | None = None
    base_register: int | None = None
    width: int = 0


@dataclass(frozen=True)
class TraceEntry:
    instruction_index: int
    pre_registers: tuple[int, ...]
    effective_address: int | None


class Memory:
    """Mapped regions with byte-exact bounds.

    Every access must fall entirely inside one region, otherwise the access
    faults. Regions never grow during execution.
    """

    def __init__(self, regions: dict[int, bytearray] | None = None):
        self.regions: dict[int, bytearray] = dict(regions or {})

    def map(self, base: int, data: bytes | bytearray | int) -> bytearray:
        buf = bytearray(data) if not isinstance(data, int) else bytearray(data)
        if not buf:
            raise ValueError("cannot map an empty region")
        for other, obuf in self.regions.items():
            if base < other + len(obuf) and other < base + len(buf):
                raise ValueError(f"region at {base:#x} overlaps region at {other:#x}")
        self.regions[base] = buf
        return buf

    def region_of(self, address: int, width: int = 1) -> tuple[int, bytearray] | None:
        for base, buf in self.regions.items():
            if base <= address and address + width <= base + len(buf):
                return base, buf
        return None

    def is_mapped(self, address: int, width: int = 1) -> bool:
        return self.region_of(address, width) is not None

    def read(self, address: int, width: int) -> bytes:
        hit = self.region_of(address, width)
        if hit is None:
            raise KeyError(f"unmapped read at {address:#x}")
        base, buf = hit
        return bytes(buf[address - base:address - base + width])

    def read_u64(self, address: int) -> int:
        return int.from_bytes(self.read(address, 8), "little")

    def write(self, address: int, data: bytes) -> None:
        hit = self.region_of(address, len(data))
        if hit is None:
            raise KeyError(f"unmapped write at {address:#x}")
        base, buf = hit
        buf[address - base:address - base + len(data)] = data

    def copy(self) -> "Memory":
        return Memory({base: bytearray(buf) for base, buf in self.regions.items()})

    def snapshot(self) -> tuple[tuple[int, bytes], ...]:
        return tuple(sorted((base, bytes(buf)) for base, buf in self.regions.items()))


@dataclass
class ProgramState:
    dialect: Dialect
    registers: list[int]
    memory: Memory


@dataclass
class MachineState:
    registers: list[int]
    memory: Memory
    syscalls_seen: frozenset[int]
    instructions_executed: int
    coverage: frozenset[int]


class Status(enum.Enum):
    RET = 0
    FAULT = 1
    TIMEOUT = 2


@dataclass
class RunResult:
    status: Status
    state: MachineState
    fault: Fault | None = None
    trace: list[TraceEntry] | None = field(default=None, repr=False)

    @property
    def coverage(self) -> frozenset[int]:
        return self.state.coverage

    @property
    def syscalls_seen(self) -> frozenset[int]:
        return self.state.syscalls_seen

    @property
    def returned(self) -> bool:
        return self.status is Status.RET


def new_state(dialect: Dialect) -> ProgramState:
    """Empty program state: zeroed registers and a mapped, zeroed stack."""
    regs = [0] * NUM_REGISTERS
    regs[dialect.stack_register] = STACK_TOP
    mem = Memory()
    mem.map(STACK_BASE, STACK_SIZE)
    return ProgramState(dialect, regs, mem)


def execute(function: FunctionImage, initial: ProgramState, budget: int = DEFAULT_BUDGET,
            tracing: bool = False) -> RunResult:
    if function.dialect != initial.dialect:
        raise ValueError(f"function dialect {function.dialect.id} does not match "
                         f"state dialect {initial.dialect.id}")
    if budget <= 0:
        raise ValueError("budget must be positive")
    sp = initial.registers[initial.dialect.stack_register]
    if initial.memory.region_of(sp - 8, 8) is None:
        raise ValueError("stack region is not mapped")

    memory = initial.memory.copy()
    bases = list(memory.regions)
    bufs = [memory.regions[b] for b in bases]
    ops, ra, rb, imms = function.packed
    status, regs, executed, cov, syscalls, fault, raw_trace = _kernel.run(
        ops, ra, rb, imms, list(initial.registers), bases, bufs,
        initial.dialect.return_register, budget, tracing)

    state = MachineState(
        registers=list(regs),
        memory=memory,
        syscalls_seen=frozenset(syscalls),
        instructions_executed=executed,
        coverage=frozenset(i for i, hit in enumerate(cov) if hit),
    )
    flt = None
    if fault is not None:
        kind, addr, base_reg, width, pos, pc = fault
        kind = FaultKind(kind)
        flt = Fault(kind, trace_position=pos, instruction_index=pc,
                    address=addr if kind.is_memory else None,
                    base_register=base_reg if kind.is_memory else None,
                    width=width)
    trace = None
    if raw_trace is not None:
        trace = [TraceEntry(pc, regs_before, ea) for pc, regs_before, ea in raw_trace]
    return RunResult(Status(status), state, flt, trace)

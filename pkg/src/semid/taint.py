"""Pointer inference by backwards taint propagation over execution traces.

When a run faults on an unmapped address, the register that produced the
address is tainted and the trace is walked backwards. Only plain moves
(``t = u``: register moves, loads, stores) carry taint: if ``t`` is tainted and
``u`` is not, the taint moves to ``u``. Moves where ``u`` is already tainted,
and every ``t = t op u`` arithmetic form, leave the taint untouched. Whatever is
still tainted when the walk reaches the first instruction is the root sink,
the location that should have held a valid pointer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterator

from .isa import FunctionImage, Op
from .iovec import (
    IOVec,
    MemoryObject,
    OBJECT_STRIDE,
    capture_output,
    instantiate_input,
)
from .vm import DEFAULT_BUDGET, Fault, Status, TraceEntry, execute

DEFAULT_OBJECT_SIZE = 64
NEAR_RADIUS = 4096
MAX_FIX_ITERATIONS = 16
MAX_OBJECTS = 32
TRACE_LIMIT = 200_000

# taint locations: ("reg", index) or ("mem", address)
Location = tuple[str, int]


class SinkKind(enum.Enum):
    ARG_REGISTER = "arg_register"
    OBJECT_CELL = "object_cell"
    UNRECOVERABLE = "unrecoverable"


@dataclass(frozen=True)
class RootSink:
    kind: SinkKind
    evidence: int
    slot: int | None = None
    object_id: int | None = None
    offset: int | None = None
    reason: str = ""

    @classmethod
    def unrecoverable(cls, evidence: int, reason: str) -> "RootSink":
        return cls(SinkKind.UNRECOVERABLE, evidence, reason=reason)


@dataclass(frozen=True)
class GiveUp:
    reason: str
    iterations: int = 0


def move_operands(ins, entry: TraceEntry, return_register: int) -> tuple[Location, Location | None] | None:
    """``(t, u)`` for instructions of the form ``t = u``; ``u`` is None for immediates."""
    op = ins.op
    if op is Op.MOV:
        return ("reg", ins.a), ("reg", ins.b)
    if op is Op.LI:
        return ("reg", ins.a), None
    if op is Op.LD or op is Op.LDB:
        return ("reg", ins.a), ("mem", entry.effective_address)
    if op is Op.ST or op is Op.STB:
        return ("mem", entry.effective_address), ("reg", ins.b)
    if op is Op.SYS:
        return ("reg", return_register), None
    return None


def taint_sweep(trace: list[TraceEntry], fault: Fault,
                function: FunctionImage) -> Iterator[tuple[int, frozenset[Location]]]:
    """Yield ``(trace_position, tainted)`` after each backwards step."""
    tainted: set[Location] = {("reg", fault.base_register)}
    ret_reg = function.dialect.return_register
    for pos in range(fault.trace_position - 1, -1, -1):
        entry = trace[pos]
        form = move_operands(function.code[entry.instruction_index], entry, ret_reg)
        if form is not None:
            t, u = form
            if t in tainted and (u is None or u not in tainted):
                tainted.discard(t)
                if u is not None:
                    tainted.add(u)
        yield pos, frozenset(tainted)
        if not tainted:
            return


def backtrace_sink(trace: list[TraceEntry] | None, fault: Fault | None, function: FunctionImage,
                   objects: tuple[MemoryObject, ...] = ()) -> RootSink:
    if not trace or fault is None or not fault.kind.is_memory:
        return RootSink.unrecoverable(0, "no memory fault to trace")
    seed: frozenset[Location] = frozenset({("reg", fault.base_register)})
    tainted = seed
    evidence = fault.trace_position
    for pos, now in taint_sweep(trace, fault, function):
        if now != tainted:
            evidence = pos
        tainted = now
    if not tainted:
        return RootSink.unrecoverable(evidence, "taint ends at an immediate")
    (kind, where), = tainted
    if kind == "reg":
        slot = function.dialect.slot_of(where)
        if slot is None:
            return RootSink.unrecoverable(
                evidence, f"sink {function.dialect.reg_name(where)} is not an argument register")
        return RootSink(SinkKind.ARG_REGISTER, evidence, slot=slot)
    for obj in objects:
        if obj.contains(where):
            offset = where - obj.base_address
            if offset + 8 <= obj.size:
                return RootSink(SinkKind.OBJECT_CELL, evidence, object_id=obj.object_id, offset=offset)
            break
    return RootSink.unrecoverable(evidence, f"sink cell {where:#x} is outside every object")


def _round8(n: int) -> int:
    return (n + 7) & ~7


def patch(iovec: IOVec, sink: RootSink, fault: Fault) -> IOVec | GiveUp:
    """Create or extend an object for the faulting address and store its base at the sink."""
    if sink.kind is SinkKind.UNRECOVERABLE:
        return GiveUp(sink.reason)
    addr = fault.address
    objects = list(iovec.objects)
    target = None
    for i, obj in enumerate(objects):
        base = obj.base_address
        if base <= addr < base + obj.size + NEAR_RADIUS:
            needed = _round8(addr - base + max(fault.width, 1))
            if needed > OBJECT_STRIDE:
                return GiveUp("object would outgrow its arena slot")
            objects[i] = replace(obj, size=max(obj.size, needed))
            target = obj.object_id
            break
    if target is None:
        if len(objects) >= MAX_OBJECTS:
            return GiveUp("object table full")
        target = max((o.object_id for o in objects), default=-1) + 1
        objects.append(MemoryObject(target, DEFAULT_OBJECT_SIZE))

    pointer_args = dict(iovec.pointer_args)
    if sink.kind is SinkKind.ARG_REGISTER:
        pointer_args[sink.slot] = target
    else:
        for i, obj in enumerate(objects):
            if obj.object_id == sink.object_id:
                objects[i] = obj.with_pointer(sink.offset, target)
                break
    return replace(iovec, objects=tuple(objects), pointer_args=tuple(sorted(pointer_args.items())))


def patch_and_restart(function: FunctionImage, iovec: IOVec, sink: RootSink, fault: Fault,
                      budget: int = DEFAULT_BUDGET):
    """Patch the input layout and re-run from the beginning.

    Returns ``(patched_iovec, run_result)``, or a ``GiveUp``.
    """
    patched = patch(iovec, sink, fault)
    if isinstance(patched, GiveUp):
        return patched
    return patched, execute(function, instantiate_input(patched), budget)


def fresh_template(seed: int, function: FunctionImage) -> IOVec:
    return IOVec(seed=seed, dialect=function.dialect)


def generate_accepting_run(function: FunctionImage, start: IOVec | int, budget: int = DEFAULT_BUDGET,
                           max_fix: int = MAX_FIX_ITERATIONS) -> IOVec | GiveUp:
    """Run, and on every memory fault infer pointers and restart, until the function returns.

    ``start`` is either a seed or an input template whose object layout is kept
    and extended.
    """
    current = fresh_template(start, function) if isinstance(start, int) else start.input_template()
    fixes = 0
    while True:
        state = instantiate_input(current)
        run = execute(function, state, budget)
        if run.status is Status.RET:
            observed = capture_output(run, current)
            return replace(current, expected_return=observed.ret, expected_objects=observed.objects,
                           expected_syscalls=observed.syscalls, coverage=run.coverage)
        if run.status is Status.TIMEOUT:
            return GiveUp("timeout", fixes)
        fault = run.fault
        if not fault.kind.is_memory:
            return GiveUp(fault.kind.name.lower(), fixes)
        if fixes >= max_fix:
            return GiveUp("fix iteration cap", fixes)
        if fault.trace_position > TRACE_LIMIT:
            return GiveUp("trace too long", fixes)
        traced = execute(function, state, budget, tracing=True)
        sink = backtrace_sink(traced.trace, traced.fault, function, current.objects)
        patched = patch(current, sink, fault)
        if isinstance(patched, GiveUp):
            return GiveUp(patched.reason, fixes)
        current = patched
        fixes += 1


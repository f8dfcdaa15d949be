"""IOVecs: reproducible input program states paired with expected outputs.

An IOVec never stores a memory image. The input state is rebuilt from a
64-bit seed, the inferred object layout and a small set of explicit value
overrides written by the mutator:

* argument slot ``i`` not holding a pointer gets ``derive_arg(seed, i)``
  unless ``arg_overrides`` names it;
* object ``k`` is filled word by word with ``mix64(seed, 0x100 + (k << 24) + w)``
  (little-endian), then ``byte_overrides`` are applied, then every pointer
  sub-member is written as the 8-byte base address of its target.

Objects live at fixed addresses (``OBJECT_ARENA_BASE + id * OBJECT_STRIDE``),
so pointer values are identical in every execution.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .isa import MASK64, Dialect, FunctionImage, get_dialect, to_signed
from .vm import DEFAULT_BUDGET, ProgramState, RunResult, Status, execute, new_state

OBJECT_ARENA_BASE = 0x0010_0000
OBJECT_STRIDE = 0x0001_0000
NUM_ARG_SLOTS = 6

_GOLDEN = 0x9E3779B97F4A7C15


class MalformedIOVec(ValueError):
    pass


def mix64(seed: int, ordinal: int) -> int:
    """splitmix64 finalizer over ``seed + (ordinal + 1) * golden``."""
    z = (seed + (ordinal + 1) * _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_arg(seed: int, slot: int) -> int:
    """Seed-derived value of a non-pointer argument slot.

    The two low bits of the mixer output pick a value class so that small
    counts and small signed values show up often: 0 -> [0, 16),
    1 -> [-128, 128), otherwise the full 64-bit word.
    """
    h = mix64(seed, slot)
    cls = h & 3
    if cls == 0:
        return (h >> 8) & 0xF
    if cls == 1:
        return (((h >> 8) & 0xFF) - 128) & MASK64
    return h


def derive_object_bytes(seed: int, object_id: int, size: int) -> bytearray:
    out = bytearray()
    for word in range((size + 7) // 8):
        out += mix64(seed, 0x100 + (object_id << 24) + word).to_bytes(8, "little")
    del out[size:]
    return out


def object_base(object_id: int) -> int:
    return OBJECT_ARENA_BASE + object_id * OBJECT_STRIDE


@dataclass(frozen=True)
class MemoryObject:
    object_id: int
    size: int
    pointer_offsets: tuple[tuple[int, int], ...] = ()

    @property
    def base_address(self) -> int:
        return object_base(self.object_id)

    def contains(self, address: int) -> bool:
        return self.base_address <= address < self.base_address + self.size

    def with_pointer(self, offset: int, target: int) -> "MemoryObject":
        cells = dict(self.pointer_offsets)
        cells[offset] = target
        return replace(self, pointer_offsets=tuple(sorted(cells.items())))


class ReturnKind(enum.Enum):
    POINTER = "pointer"
    NONPOINTER = "nonpointer"


@dataclass(frozen=True)
class ReturnExpectation:
    kind: ReturnKind
    value: int | None = None

    @classmethod
    def pointer(cls) -> "ReturnExpectation":
        return cls(ReturnKind.POINTER)

    @classmethod
    def nonpointer(cls, value: int) -> "ReturnExpectation":
        return cls(ReturnKind.NONPOINTER, value & MASK64)


@dataclass(frozen=True)
class ObjectState:
    """Post-execution contents of one object.

    ``data`` holds the final bytes with recognised pointer cells zeroed;
    ``pointers`` lists those cells as ``(offset, target_object_id)``.
    """

    object_id: int
    data: bytes
    pointers: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class ObservedState:
    ret: ReturnExpectation
    objects: tuple[ObjectState, ...]
    syscalls: frozenset[int]


@dataclass(frozen=True)
class IOVec:
    seed: int
    dialect: Dialect
    pointer_args: tuple[tuple[int, int], ...] = ()
    objects: tuple[MemoryObject, ...] = ()
    arg_overrides: tuple[tuple[int, int], ...] = ()
    byte_overrides: tuple[tuple[int, int, int], ...] = ()
    expected_return: ReturnExpectation | None = None
    expected_objects: tuple[ObjectState, ...] = ()
    expected_syscalls: frozenset[int] = frozenset()
    coverage: frozenset[int] = field(default_factory=frozenset)

    @property
    def has_expectations(self) -> bool:
        return self.expected_return is not None

    def object(self, object_id: int) -> MemoryObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise MalformedIOVec(f"IOVec references missing object {object_id}")

    def input_template(self) -> "IOVec":
        """Copy with the output half stripped."""
        return replace(self, expected_return=None, expected_objects=(),
                       expected_syscalls=frozenset(), coverage=frozenset())


class Outcome(enum.Enum):
    FAULT = "fault"
    TIMEOUT = "timeout"
    STATE_MISMATCH = "state_mismatch"
    ACCEPT = "accept"


def instantiate_input(iovec: IOVec, state: ProgramState | None = None) -> ProgramState:
    if state is None:
        state = new_state(iovec.dialect)
    ids = {obj.object_id for obj in iovec.objects}
    if len(ids) != len(iovec.objects):
        raise MalformedIOVec("duplicate object id")
    for obj in iovec.objects:
        if obj.size <= 0 or obj.size > OBJECT_STRIDE:
            raise MalformedIOVec(f"object {obj.object_id} has invalid size {obj.size}")
        for offset, target in obj.pointer_offsets:
            if target not in ids:
                raise MalformedIOVec(f"object {obj.object_id} points to missing object {target}")
            if not 0 <= offset <= obj.size - 8:
                raise MalformedIOVec(f"pointer offset {offset} outside object {obj.object_id}")
    overrides: dict[int, list[tuple[int, int]]] = {}
    for obj_id, offset, value in iovec.byte_overrides:
        overrides.setdefault(obj_id, []).append((offset, value))

    for obj in iovec.objects:
        data = derive_object_bytes(iovec.seed, obj.object_id, obj.size)
        for offset, value in overrides.get(obj.object_id, ()):
            if offset < obj.size:
                data[offset] = value & 0xFF
        for offset, target in obj.pointer_offsets:
            data[offset:offset + 8] = object_base(target).to_bytes(8, "little")
        state.memory.map(obj.base_address, data)

    pointers = dict(iovec.pointer_args)
    arg_over = dict(iovec.arg_overrides)
    for slot in range(NUM_ARG_SLOTS):
        reg = iovec.dialect.arg_registers[slot]
        if slot in pointers:
            if pointers[slot] not in ids:
                raise MalformedIOVec(f"pointer argument {slot} targets missing object {pointers[slot]}")
            state.registers[reg] = object_base(pointers[slot])
        elif slot in arg_over:
            state.registers[reg] = arg_over[slot] & MASK64
        else:
            state.registers[reg] = derive_arg(iovec.seed, slot)
    return state


def capture_output(run: RunResult, iovec_input: IOVec) -> ObservedState:
    if run.status is not Status.RET:
        raise ValueError("capture_output needs a run that returned")
    mem = run.state.memory
    ret_value = run.state.registers[iovec_input.dialect.return_register]
    if mem.is_mapped(ret_value):
        ret = ReturnExpectation.pointer()
    else:
        ret = ReturnExpectation.nonpointer(ret_value)

    bases = {obj.base_address: obj.object_id for obj in iovec_input.objects}
    objects = []
    for obj in iovec_input.objects:
        data = bytearray(mem.read(obj.base_address, obj.size))
        pointers = []
        for offset, _ in obj.pointer_offsets:
            value = int.from_bytes(data[offset:offset + 8], "little")
            if value in bases:
                pointers.append((offset, bases[value]))
                data[offset:offset + 8] = bytes(8)
        objects.append(ObjectState(obj.object_id, bytes(data), tuple(pointers)))
    return ObservedState(ret, tuple(objects), run.state.syscalls_seen)


def returns_match(expected: ReturnExpectation, observed: ReturnExpectation) -> bool:
    if expected.kind is not observed.kind:
        return False
    if expected.kind is ReturnKind.POINTER:
        return True
    if expected.value == observed.value:
        return True
    e, o = to_signed(expected.value), to_signed(observed.value)
    return (e > 0 and o > 0) or (e < 0 and o < 0)


def states_match(expected: IOVec | ObservedState, observed: ObservedState) -> bool:
    if isinstance(expected, IOVec):
        if not expected.has_expectations:
            raise ValueError("IOVec carries no expected output state")
        expected = ObservedState(expected.expected_return, expected.expected_objects,
                                 expected.expected_syscalls)
    if not returns_match(expected.ret, observed.ret):
        return False
    if expected.syscalls != observed.syscalls:
        return False
    return expected.objects == observed.objects


def run_iovec(function: FunctionImage, iovec: IOVec, budget: int = DEFAULT_BUDGET) -> Outcome:
    if function.dialect != iovec.dialect:
        raise ValueError(f"IOVec dialect {iovec.dialect.id} differs from function "
                         f"dialect {function.dialect.id}; translate it first")
    run = execute(function, instantiate_input(iovec), budget)
    if run.status is Status.FAULT:
        return Outcome.FAULT
    if run.status is Status.TIMEOUT:
        return Outcome.TIMEOUT
    if states_match(iovec, capture_output(run, iovec)):
        return Outcome.ACCEPT
    return Outcome.STATE_MISMATCH


def translate(iovec: IOVec, target: Dialect | str) -> IOVec:
    """Re-express an IOVec in another dialect.

    Argument slots are calling-convention positions, so slot ``i`` in one
    dialect is slot ``i`` in the other; only the register names behind them
    change. Every stored value is keyed by slot, which makes translation a
    relabelling of the dialect.
    """
    target = get_dialect(target)
    if target == iovec.dialect:
        raise ValueError(f"IOVec is already in dialect {target.id}")
    return replace(iovec, dialect=target)


def to_dialect(iovec: IOVec, target: Dialect | str) -> IOVec:
    target = get_dialect(target)
    return iovec if iovec.dialect == target else translate(iovec, target)


# -- serialization ---------------------------------------------------------

def _u64(value: int) -> str:
    return str(value & MASK64)


def iovec_to_dict(v: IOVec) -> dict:
    out = {
        "seed": _u64(v.seed),
        "dialect": v.dialect.id,
        "pointer_args": [[slot, obj] for slot, obj in v.pointer_args],
        "objects": [
            {"id": o.object_id, "size": o.size,
             "base": _u64(o.base_address),
             "pointer_offsets": [[off, t] for off, t in o.pointer_offsets]}
            for o in v.objects
        ],
        "arg_overrides": [[slot, _u64(val)] for slot, val in v.arg_overrides],
        "byte_overrides": [list(t) for t in v.byte_overrides],
        "coverage": sorted(v.coverage),
        "expected_syscalls": sorted(v.expected_syscalls),
        "expected_objects": [
            {"id": s.object_id, "data": s.data.hex(),
             "pointers": [[off, t] for off, t in s.pointers]}
            for s in v.expected_objects
        ],
    }
    if v.expected_return is None:
        out["expected_return"] = None
    elif v.expected_return.kind is ReturnKind.POINTER:
        out["expected_return"] = {"kind": "pointer"}
    else:
        out["expected_return"] = {"kind": "nonpointer", "value": _u64(v.expected_return.value)}
    return out


def iovec_from_dict(d: dict) -> IOVec:
    try:
        ret = d["expected_return"]
        if ret is None:
            expected_return = None
        elif ret["kind"] == "pointer":
            expected_return = ReturnExpectation.pointer()
        else:
            expected_return = ReturnExpectation.nonpointer(int(ret["value"]))
        objects = []
        for o in d["objects"]:
            obj = MemoryObject(int(o["id"]), int(o["size"]),
                               tuple(tuple(map(int, p)) for p in o["pointer_offsets"]))
            if "base" in o and int(o["base"]) != obj.base_address:
                raise MalformedIOVec(f"object {obj.object_id} base does not follow placement rule")
            objects.append(obj)
        return IOVec(
            seed=int(d["seed"]),
            dialect=get_dialect(d["dialect"]),
            pointer_args=tuple(tuple(map(int, p)) for p in d["pointer_args"]),
            objects=tuple(objects),
            arg_overrides=tuple((int(s), int(v)) for s, v in d["arg_overrides"]),
            byte_overrides=tuple(tuple(map(int, t)) for t in d["byte_overrides"]),
            expected_return=expected_return,
            expected_objects=tuple(
                ObjectState(int(s["id"]), bytes.fromhex(s["data"]),
                            tuple(tuple(map(int, p)) for p in s["pointers"]))
                for s in d["expected_objects"]),
            expected_syscalls=frozenset(int(x) for x in d["expected_syscalls"]),
            coverage=frozenset(int(x) for x in d["coverage"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedIOVec):
            raise
        raise MalformedIOVec(f"bad IOVec record: {exc}") from None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dumps(v: IOVec) -> str:
    return canonical_json(iovec_to_dict(v))


def loads(text: str) -> IOVec:
    return iovec_from_dict(json.loads(text))


def write_store(path: str | Path, iovecs: Iterable[IOVec]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in iovecs:
            fh.write(dumps(v) + "\n")


def read_store(path: str | Path) -> list[IOVec]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(loads(line))
            except (MalformedIOVec, json.JSONDecodeError) as exc:
                raise MalformedIOVec(f"{path}:{lineno}: {exc}") from None
    return out

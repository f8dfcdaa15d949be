"""Coverage-guided mutational exploration that builds each function's DCIS."""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import FunctionRecord
from .iovec import (
    MASK64,
    NUM_ARG_SLOTS,
    IOVec,
    derive_arg,
    derive_object_bytes,
    write_store,
)
from .taint import GiveUp, generate_accepting_run
from .vm import DEFAULT_BUDGET

INTERESTING_U64 = (0, 1, MASK64, 0x7FFF_FFFF_FFFF_FFFF, 0x8000_0000_0000_0000)
INTERESTING_U8 = (0, 1, 0xFF, 0x7F, 0x80)
MUTATORS = ("bitflip", "interesting", "random_byte", "arith")


@dataclass(frozen=True)
class FuzzConfig:
    coverage_threshold: float = 0.85
    max_executions: int = 2000
    dcis_cap: int = 32
    budget: int = DEFAULT_BUDGET
    # relative weights of MUTATORS, in order
    mutation_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if not 0 < self.coverage_threshold <= 1:
            raise ValueError("coverage_threshold must be in (0, 1]")
        if self.max_executions <= 0 or self.dcis_cap <= 0 or self.budget <= 0:
            raise ValueError("caps and budget must be positive")
        if len(self.mutation_weights) != len(MUTATORS) or sum(self.mutation_weights) <= 0:
            raise ValueError(f"mutation_weights needs {len(MUTATORS)} non-negative weights")


@dataclass
class FunctionProfile:
    record: FunctionRecord
    dcis: list[IOVec]
    executions: int = 0
    covered: frozenset[int] = frozenset()
    giveups: dict[str, int] = field(default_factory=dict)

    @property
    def coverage_fraction(self) -> float:
        return len(self.covered) / len(self.record.image)


def _mutate_u64(value: int, how: str, rng: random.Random) -> int:
    if how == "bitflip":
        return value ^ (1 << rng.randrange(64))
    if how == "interesting":
        return rng.choice(INTERESTING_U64)
    if how == "random_byte":
        shift = 8 * rng.randrange(8)
        return (value & ~(0xFF << shift) & MASK64) | (rng.randrange(256) << shift)
    delta = rng.randint(1, 16)
    return (value + (delta if rng.random() < 0.5 else -delta)) & MASK64


def _mutate_u8(value: int, how: str, rng: random.Random) -> int:
    if how == "bitflip":
        return value ^ (1 << rng.randrange(8))
    if how == "interesting":
        return rng.choice(INTERESTING_U8)
    if how == "random_byte":
        return rng.randrange(256)
    delta = rng.randint(1, 16)
    return (value + (delta if rng.random() < 0.5 else -delta)) & 0xFF


def mutate(iovec: IOVec, rng: random.Random, weights=(1.0, 1.0, 1.0, 1.0)) -> IOVec:
    """Rewrite one non-pointer value of ``iovec``; the pointer layout is untouched."""
    how = rng.choices(MUTATORS, weights=weights)[0]
    pointer_slots = {slot for slot, _ in iovec.pointer_args}
    arg_slots = [s for s in range(NUM_ARG_SLOTS) if s not in pointer_slots]

    byte_slots = []
    for obj in iovec.objects:
        masked = set()
        for off, _ in obj.pointer_offsets:
            masked.update(range(off, off + 8))
        byte_slots.extend((obj, off) for off in range(obj.size) if off not in masked)

    template = iovec.input_template()
    if arg_slots and (not byte_slots or rng.random() < 0.5):
        slot = rng.choice(arg_slots)
        overrides = dict(iovec.arg_overrides)
        current = overrides.get(slot, derive_arg(iovec.seed, slot))
        overrides[slot] = _mutate_u64(current, how, rng)
        return replace(template, arg_overrides=tuple(sorted(overrides.items())))
    if not byte_slots:
        return template
    obj, off = rng.choice(byte_slots)
    overrides = {(o, k): v for o, k, v in iovec.byte_overrides}
    current = overrides.get((obj.object_id, off))
    if current is None:
        current = derive_object_bytes(iovec.seed, obj.object_id, off + 1)[off]
    overrides[(obj.object_id, off)] = _mutate_u8(current, how, rng)
    return replace(template, byte_overrides=tuple(sorted((o, k, v) for (o, k), v in overrides.items())))


def explore_function(record: FunctionRecord, config: FuzzConfig = FuzzConfig(),
                     rng_seed: int = 0) -> FunctionProfile:
    rng = random.Random(rng_seed)
    image = record.image
    static = len(image)
    dcis: list[IOVec] = []
    covered: set[int] = set()
    giveups: Counter = Counter()
    executions = 0
    while executions < config.max_executions and len(covered) / static < config.coverage_threshold:
        if dcis:
            # max() keeps the earliest member on ties
            parent = max(dcis, key=lambda v: len(v.coverage))
            template = mutate(parent, rng, config.mutation_weights)
        else:
            template = IOVec(seed=rng.getrandbits(64), dialect=image.dialect)
        executions += 1
        result = generate_accepting_run(image, template, config.budget)
        if isinstance(result, GiveUp):
            giveups[result.reason] += 1
            continue
        if result.coverage - covered:
            dcis.append(result)
            covered |= result.coverage
            if len(dcis) > config.dcis_cap:
                dcis.remove(min(dcis, key=lambda v: len(v.coverage)))
    return FunctionProfile(record, dcis, executions, frozenset(covered), dict(sorted(giveups.items())))


def function_seed(seed: int, record: FunctionRecord) -> int:
    digest = hashlib.sha256(f"{seed}:{record.name}:{record.variant}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _explore_one(args):
    record, config, seed = args
    return explore_function(record, config, function_seed(seed, record))


def explore_corpus(records: list[FunctionRecord], config: FuzzConfig = FuzzConfig(), seed: int = 0,
                   jobs: int = 1) -> list[FunctionProfile]:
    """Explore every record; results are ordered like ``records`` whatever ``jobs`` is."""
    work = [(rec, config, seed) for rec in records]
    if jobs <= 1 or len(work) <= 1:
        return [_explore_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_explore_one, work))


def store_name(record: FunctionRecord) -> str:
    return f"{record.name}.{record.variant}.iovecs.jsonl"


def write_profiles(profiles: list[FunctionProfile], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for prof in profiles:
        path = out / store_name(prof.record)
        write_store(path, prof.dcis)
        paths.append(path)
    return paths

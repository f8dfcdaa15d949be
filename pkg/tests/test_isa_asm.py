import pytest

from semid.asm import AsmError, assemble, assemble_all, disassemble, parse_int
from semid.isa import AB, XA, Op, get_dialect


def test_identity_function():
    img = assemble(".func id xa\n    mov r0, r1\n    ret\n.end\n")
    assert img.name == "id" and img.dialect is XA
    assert [i.op for i in img.code] == [Op.MOV, Op.RET]
    assert (img.code[0].a, img.code[0].b) == (0, 1)


def test_unresolved_label_message():
    src = ".func f xa\n    li r1, 0\n    beq r1, r2, nowhere\n    ret\n.end\n"
    with pytest.raises(AsmError) as err:
        assemble(src)
    assert "unresolved label 'nowhere' line 3" in str(err.value)
    assert err.value.line == 3


@pytest.mark.parametrize("src, fragment", [
    (".func f xa\n    frob r1\n    ret\n.end\n", "unknown mnemonic"),
    (".func f xa\n    mov a0, r1\n    ret\n.end\n", "not a xa register"),
    (".func f ab\n    ld a1, [a2+70000]\n    ret\n.end\n", "out of range"),
    (".func f xa\n    mov r0\n    ret\n.end\n", "operand"),
    (".func f xa\nx:\nx:\n    ret\n.end\n", "duplicate label"),
    (".func f xa\n.end\n", "empty"),
    (".func f xa\n    ret\n", ".end"),
])
def test_assembler_errors(src, fragment):
    with pytest.raises(AsmError, match=fragment):
        assemble_all(src)


def test_error_names_source_file():
    with pytest.raises(AsmError, match="bad.sevm"):
        assemble_all(".func f xa\n    bogus\n.end\n", source="bad.sevm")


@pytest.mark.parametrize("tok, value", [("0", 0), ("42", 42), ("-7", -7), ("0x1F", 31), ("-0x10", -16)])
def test_parse_int(tok, value):
    assert parse_int(tok) == value


def test_disassemble_round_trip(corpus):
    for rec in corpus:
        again = assemble(disassemble(rec.image))
        assert again.code == rec.image.code
        assert again.dialect == rec.image.dialect


def test_tabs_and_case():
    img = assemble(".func t ab\n\tMOV\ta1, a2\n\tRET\n.end\n")
    assert img.dialect is AB and img.code[0].op is Op.MOV


def test_dialects():
    assert get_dialect("XA") is XA
    assert XA.slot_of(1) == 0 and AB.slot_of(2) == 0 and AB.slot_of(1) is None
    with pytest.raises(ValueError):
        get_dialect("arm")

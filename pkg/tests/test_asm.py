import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurocomp import corpus
from neurocomp.asm import (
    FAULT,
    HALTED,
    TIMEOUT,
    ArityError,
    AsmError,
    DuplicateLabelError,
    ImmediateRangeError,
    LinkError,
    UndefinedLabelError,
    UnknownOpcodeError,
    convention_violations,
    decompile,
    link,
    oracle_run,
    parse,
)
from neurocomp.compiler import compile_program
from neurocomp.layout import MachineLayout
from neurocomp.tasks import fib_pairwise

SMALL = corpus.SMALL


# -- parser -----------------------------------------------------------------------------

def test_parse_halt():
    prog = parse("halt")
    assert len(prog) == 1 and prog.lines[0].op == "halt"


def test_parse_listing_loop_and_label():
    prog = parse(corpus.source("listing1"))
    assert prog.labels == {"fib_loop": 1}
    assert [ins.op for ins in prog.lines] == ["inc", "write", "add", "read", "write", "inc", "jump"]
    assert str(prog.lines[-1]) == "jump 4 fib_loop"


def test_parse_syntax_variants():
    prog = parse("start: set 3 r2  # comment\n\n  add r2 2 4\nend: halt")
    assert prog.labels == {"start": 0, "end": 2}
    assert prog.lines[0].arg1.value == 3 and prog.lines[0].dest.value == 2
    # inc/dec accept the one-operand shorthand
    assert parse("inc 5").lines[0] == parse("inc 5 5").lines[0]


@pytest.mark.parametrize("text,err,needle", [
    ("jump 4 nowhere", UndefinedLabelError, "nowhere"),
    ("frobnicate 1 2", UnknownOpcodeError, "frobnicate"),
    ("add 1 2", ArityError, "add"),
    ("a: halt\na: halt", DuplicateLabelError, "'a'"),
    ("set 16 2", ImmediateRangeError, "16"),
    ("add x 2 3", AsmError, "register"),
])
def test_parse_diagnostics_are_distinct(text, err, needle):
    with pytest.raises(err) as info:
        parse(text, n=16)
    assert needle in str(info.value)
    assert type(info.value) is err


def test_diagnostic_carries_position():
    with pytest.raises(UnknownOpcodeError) as info:
        parse("halt\n  bogus 1", source="x.asm")
    assert (info.value.line, info.value.column) == (2, 3)
    assert str(info.value).startswith("x.asm:2:3: unknown-opcode error")


@pytest.mark.parametrize("stem", corpus.sources())
def test_parse_print_round_trip(stem):
    n = 32 if stem == "sort" else 16
    prog = parse(corpus.source(stem), name=stem, n=n)
    again = parse(prog.text(), name=stem, n=n)
    assert again == prog
    assert again.text() == prog.text()


# -- linker -----------------------------------------------------------------------------

def test_link_lowers_call_and_ret():
    lib = corpus.load("call").library()
    ops = [ins.op for ins in lib.lines]
    assert "call" not in ops and "ret" not in ops
    i = ops.index("store")
    assert ops[i + 1] == "jump"
    assert lib.lines[i].dest.value == 1  # return address register
    assert lib.lines[i + 1].arg1.value == 0  # unconditional via the true register
    assert lib.resolve(lib.lines[i + 1].arg2) == lib.entry_points["double"]
    assert ops[-2:] == ["inc", "jumpr"]


def test_link_single_program():
    prog = parse("add 2 3 4\nhalt", name="solo")
    lib = link([prog])
    assert lib.entry_points == {"solo": 0}
    assert list(lib.lines) == list(prog.lines)


def test_link_errors():
    with pytest.raises(LinkError, match="sort2"):
        link([parse("call sort2\nhalt")])
    with pytest.raises(LinkError):
        link([parse("halt", name="a"), parse("halt", name="a")])
    with pytest.raises(LinkError):
        link([parse("halt\n" * 5)], n=4)
    with pytest.raises(LinkError):
        link([parse("set 3 0\nhalt")], strict=True)


def test_convention_violations_detect_reserved_writes():
    assert convention_violations(parse("set 3 1\nhalt"))
    assert not convention_violations(parse("set 3 2\nhalt"))


# -- oracle -----------------------------------------------------------------------------

def test_oracle_halt_only():
    st = oracle_run(parse("halt"), mem0=[3, 4], regs0={2: 5})
    assert st.status == HALTED and st.steps == 1
    assert st.mem[:2] == [3, 4] and st.regs[2] == 5


def test_oracle_listing_loop_fills_tape():
    st = oracle_run(corpus.load("listing1").library(), regs0={3: 3, 4: 1}, max_steps=1 + 6 * 6, layout=SMALL)
    assert st.status == TIMEOUT
    # each pass overwrites the tape cell with the new sum, so the tape is the sequence shifted by one
    assert st.mem[3:9] == [1, 2, 3, 5, 8, 13]


def test_oracle_fib_tape():
    st = oracle_run(corpus.load("fib_tape").library(), regs0={3: 2, 5: 6}, layout=SMALL)
    assert st.status == HALTED and st.mem[2:8] == [1, 1, 2, 3, 5, 8]


@pytest.mark.parametrize("n,want", [(32, 18), (16, 2)])
def test_oracle_fib_depth_three(n, want):
    layout = MachineLayout(n=n, registers=8, mem_size=16)
    lib = link([parse(corpus.source("fib"), name="fib", n=n)], n=n)
    st = oracle_run(lib, regs0={2: 6, 3: 2, 4: 3}, layout=layout)
    assert st.status == HALTED and st.mem[0] == want == fib_pairwise(6, 2, 3, n)


def test_oracle_call_ret():
    st = oracle_run(corpus.load("call").library(), start="main", regs0={2: 3, 3: 4}, layout=SMALL)
    assert st.status == HALTED and st.mem[0] == 14


def test_oracle_sort_small_arrays():
    lib = corpus.load("sort").library()
    for arr in itertools.product(range(4), repeat=3):
        st = oracle_run(lib, mem0=list(arr), regs0={2: 3}, layout=corpus.WIDE)
        assert st.status == HALTED and st.mem[:3] == sorted(arr)


def test_oracle_fault_and_timeout_are_statuses():
    assert oracle_run(parse("jump 0 0"), max_steps=5).status == TIMEOUT
    assert oracle_run(parse("set 9 2\njumpr 0 2")).status == FAULT
    with pytest.raises(ValueError):
        oracle_run(parse("halt"), mem0=[16])


def test_oracle_jump_needs_exactly_one():
    # condition register holds 2: not taken
    st = oracle_run(parse("set 2 3\njump 3 0\nhalt"), max_steps=10)
    assert st.status == HALTED and st.steps == 3


programs = st.lists(
    st.tuples(st.sampled_from(["add", "sub", "mul", "max", "min", "copy", "inc", "dec", "read", "write", "set",
                               "jump", "halt"]),
              st.integers(0, 7), st.integers(0, 7), st.integers(2, 7)),
    min_size=1, max_size=8,
)


def _render(spec):
    out = []
    for op, a, b, d in spec:
        out.append({"copy": f"copy {a} {d}", "inc": f"inc {a} {d}", "dec": f"dec {a} {d}",
                    "read": f"read {a} {d}", "write": f"write {a} {b}", "set": f"set {a} {d}",
                    "jump": f"jump {a} {b % len(spec)}", "halt": "halt"}.get(op, f"{op} {a} {b} {d}"))
    return "\n".join(out)


@given(programs, st.lists(st.integers(0, 15), min_size=8, max_size=8))
def test_oracle_is_total_and_values_stay_in_range(spec, regs):
    st_ = oracle_run(parse(_render(spec)), regs0=regs, max_steps=30)
    assert st_.status in (HALTED, TIMEOUT, FAULT)
    assert all(0 <= v < 16 for v in st_.mem + st_.regs)
    assert st_.steps <= 30


# -- decompiler -------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(corpus.LIBRARIES))
def test_decompile_compile_is_identity(name):
    entry = corpus.load(name)
    lib = entry.library()
    dec = decompile(compile_program(lib, entry.layout))
    assert dec.text == lib.text()
    assert all(c == 1.0 for c in dec.confidences) and not any(dec.uncertain)


def test_decompile_flags_uniform_noise():
    pm = compile_program(parse("add 2 3 4\nhalt"), SMALL)
    rng = np.random.default_rng(0)
    noisy = np.full_like(pm.probs, 0.0)
    for sl in SMALL.fields.values():
        block = rng.random((pm.n_lines, sl.stop - sl.start)) + 1.0
        noisy[:, sl] = block / block.sum(axis=1, keepdims=True)
    dec = decompile(pm.with_probs(noisy), threshold=0.9)
    assert all(dec.uncertain)

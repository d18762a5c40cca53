"""Toy-ISA parser and executor tests.

Branch-by-branch oracles are written out by hand next to each program;
the executor must reproduce them exactly.
"""

import pytest

from branchreplay.errors import (
    ParseError,
    StepBudgetExceeded,
    UndefinedRegister,
)
from branchreplay.uasm.exec import (
    InputSpec,
    contract_trace,
    crypto_cf_trace,
    ct_check,
    eval_expr,
    make_state,
    run_program,
    secret_assignments,
    secret_cells_of,
    step_arch,
)
from branchreplay.uasm.parser import parse_program

MASK = (1 << 64) - 1


# -- parser ---------------------------------------------------------------------

def test_parse_minimal_program():
    p = parse_program("""\
.reg x
        x <- 1 + 2 * 3
        ret
""")
    assert [i.op for i in p.instructions] == ["assign", "ret"]
    assert p.registers == frozenset({"x"})
    assert p.terminal == 2


def test_parse_labels_and_targets():
    p = parse_program("""\
.reg c
START:  c <- 0
        beqz c, END
        c <- 1
END:    ret
""")
    assert p.labels["START"] == 0
    assert p.labels["END"] == 3
    assert p.instructions[1].target == 3


def test_parse_label_alone_on_line():
    p = parse_program("""\
.reg c
TOP:
        c <- 1
        beqz c, TOP
        ret
""")
    assert p.labels["TOP"] == 0
    assert p.instructions[1].target == 0


def test_parse_crypto_range_tags_branches():
    p = parse_program("""\
.reg c
.crypto INNER DONE
        c <- 2
INNER:  c <- c - 1
        beqz c, DONE
        store c, 8
        beqz c, INNER
DONE:   ret
""")
    assert p.crypto == (1, 5)
    # branch instructions inside the range are tagged, others are not
    assert p.instructions[2].tag is True
    assert p.instructions[4].tag is True
    assert p.instructions[3].tag is False  # store: not a branch


def test_parse_explicit_tag_suffix():
    p = parse_program("""\
.reg c
        beqz c, END @c
END:    ret
""")
    assert p.instructions[0].tag is True


def test_parse_rejects_unknown_register_use():
    with pytest.raises(ParseError):
        parse_program("        x <- 1\n        ret\n")


def test_parse_rejects_undefined_label():
    with pytest.raises(ParseError) as err:
        parse_program(".reg c\n        beqz c, NOWHERE\n        ret\n")
    assert "NOWHERE" in str(err.value)


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as err:
        parse_program(".reg x\n        x <- (1 +\n        ret\n")
    assert err.value.line == 2


# -- expression evaluation ---------------------------------------------------------

def _ev(src: str, **regs) -> int:
    p = parse_program(
        ".reg out " + " ".join(regs) + f"\n        out <- {src}\n        ret\n"
    )
    state = make_state(p, InputSpec(regs=regs))
    final = run_program(p, state)
    return final.regs["out"]


def test_precedence_mul_before_add():
    assert _ev("1 + 2 * 3") == 7


def test_parentheses_override():
    assert _ev("(1 + 2) * 3") == 9


def test_wraparound_add():
    assert _ev("a + 2", a=MASK) == 1


def test_unsigned_subtract_wraps():
    assert _ev("0 - 1") == MASK


def test_unsigned_comparison():
    # all values are unsigned: 2^64-1 > 5
    assert _ev("a > 5", a=MASK) == 1


def test_division_by_zero_is_zero():
    assert _ev("7 / 0") == 0
    assert _ev("7 % 0") == 0


def test_shift_amount_masked_to_six_bits():
    assert _ev("1 << 64") == 1  # 64 & 63 == 0
    assert _ev("2 >> 65") == 1  # 65 & 63 == 1


def test_rotate_idiom():
    # rot13 as used by the mixing workload
    v = 0xDEADBEEF
    got = _ev("(a << 13) | (a >> 51)", a=v)
    assert got == ((v << 13) | (v >> 51)) & MASK


# -- executor ------------------------------------------------------------------------

LOOP_SRC = """\
.reg i t
LOOP:   i <- i + 1
        t <- i == 5
        beqz t, LOOP
        ret
"""


def test_counted_loop_branch_oracle():
    """Five trips: the loop-back branch goes to 0 four times, then falls
    through to 3."""
    p = parse_program(LOOP_SRC)
    trace = contract_trace(p, make_state(p))
    branch_obs = [o for o in trace if o.kind == "pc"]
    assert [o.value for o in branch_obs] == [0, 0, 0, 0, 3]


def test_run_program_final_state():
    p = parse_program(LOOP_SRC)
    final = run_program(p, make_state(p))
    assert final.regs["i"] == 5
    assert final.regs["pc"] == p.terminal


def test_step_arch_is_pure():
    p = parse_program(LOOP_SRC)
    s0 = make_state(p)
    s1, obs = step_arch(p, s0)
    assert s0.regs["i"] == 0 and s0.regs["pc"] == 0
    assert s1.regs["i"] == 1 and s1.regs["pc"] == 1
    assert obs is None  # assigns are silent


def test_loads_and_stores_observe_addresses_not_values():
    p = parse_program("""\
.reg x
        load x, 4
        store x, 12
        ret
""")
    trace = contract_trace(p, make_state(p, InputSpec(mem={4: 77})))
    assert [(o.kind, o.value) for o in trace] == [
        ("load", 4), ("store", 12), ("ret", 3),
    ]


def test_call_ret_use_shadow_stack():
    p = parse_program("""\
.reg x
        call FN
        x <- 2
        ret
FN:     x <- 1
        ret
""")
    trace = contract_trace(p, make_state(p))
    assert [(o.kind, o.value) for o in trace] == [
        ("call", 3), ("ret", 1), ("ret", 5),
    ]
    final = run_program(p, make_state(p))
    assert final.regs["x"] == 2


def test_ret_on_empty_stack_terminates():
    p = parse_program(".reg x\n        ret\n")
    final = run_program(p, make_state(p))
    assert final.regs["pc"] == p.terminal


def test_budget_exceeded_raises():
    p = parse_program(".reg c\nSPIN:   beqz c, SPIN\n        ret\n")
    with pytest.raises(StepBudgetExceeded):
        run_program(p, make_state(p), budget=100)


def test_input_spec_rejects_undeclared_register():
    p = parse_program(".reg x\n        ret\n")
    with pytest.raises(UndefinedRegister):
        make_state(p, InputSpec(regs={"y": 1}))


def test_crypto_cf_trace_keeps_only_tagged_control_flow():
    p = parse_program("""\
.reg c
.crypto IN OUT
        c <- 1
IN:     beqz c, OUT
        c <- 0
        beqz c, OUT
OUT:    ret
""")
    cf = crypto_cf_trace(p, make_state(p))
    assert [(o.kind, o.value) for o in cf] == [("pc", 2), ("pc", 4), ("ret", 5)]
    assert all(o.tagged for o in cf)


# -- constant-time checking -------------------------------------------------------------

CT_SRC = """\
.reg k x
.secret 8 8
        load k, 8
        x <- k ^ 170
        store x, 16
        ret
"""

LEAKY_SRC = """\
.reg k x
.secret 8 8
        load k, 8
        beqz k, ZERO
        x <- 1
ZERO:   store x, 16
        ret
"""

ADDR_LEAK_SRC = """\
.reg k x
.secret 8 8
        load k, 8
        load x, k + 16
        ret
"""


def test_ct_check_passes_linear_code():
    p = parse_program(CT_SRC)
    verdict = ct_check(p, [InputSpec()], secret_cells_of(p), (0, 1, 255))
    assert verdict.passed


def test_ct_check_catches_secret_branch():
    p = parse_program(LEAKY_SRC)
    verdict = ct_check(p, [InputSpec()], secret_cells_of(p), (0, 1))
    assert not verdict.passed
    assert verdict.diff_index is not None
    assert "pc" in verdict.describe() or "trace" in verdict.describe()


def test_ct_check_catches_secret_address():
    p = parse_program(ADDR_LEAK_SRC)
    verdict = ct_check(p, [InputSpec()], secret_cells_of(p), (0, 4))
    assert not verdict.passed


def test_secret_assignments_cartesian():
    assigns = secret_assignments((8, 9), (0, 1))
    assert len(assigns) == 4
    assert {8: 0, 9: 1} in assigns


def test_secret_cells_of_range():
    p = parse_program(CT_SRC)
    assert secret_cells_of(p) == (8,)


# -- bundled workloads are constant-time --------------------------------------------------

def test_bundled_crypto_workloads_are_constant_time():
    from branchreplay.workloads import corpus

    for name in ("toy_aes2", "decrypt_loop", "stream_cipher"):
        prog, i1, i2 = corpus()[name]
        cells = secret_cells_of(prog)
        assert cells, name
        verdict = ct_check(prog, [i1, i2], cells, (0, 1))
        assert verdict.passed, (name, verdict.describe())

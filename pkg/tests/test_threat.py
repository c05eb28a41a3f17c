import random

from specfence import ir
from specfence.threat import (
    DERIVED,
    DIRECT,
    ThreatModel,
    compute_vinst,
    format_taint_map,
    taint_map,
)
from conftest import random_program


def test_fig1_strong(fig1):
    v = compute_vinst(fig1, ThreatModel.STRONG)
    assert v.labels == {1, 2}
    assert v.rationale[1] == "strong-all-memory"


def test_fig1_classical(fig1):
    # a[i] is attacker-indexed but reveals nothing new; the nested b[k] does
    v = compute_vinst(fig1, ThreatModel.CLASSICAL)
    assert v.labels == {2}
    assert v.rationale[2] == "tainted-index"


def test_classical_without_inputs_is_empty():
    src = ("program p\nvar x : u4\narray a[4] : u4\n"
           "L0: x := load a[x]\nL1: halt\n")
    p = ir.parse_program(src)
    assert compute_vinst(p, ThreatModel.CLASSICAL).labels == set()


def test_taint_map_fig1(fig1):
    facts = taint_map(fig1)
    # hand fixpoint on the four instructions
    assert facts.tainted_after(0) == {"i"}
    assert facts.tainted_after(1) == {"i", "k"}
    assert facts.after[1]["i"] == DIRECT
    assert facts.after[1]["k"] == DERIVED
    assert facts.tainted_after(2) == {"i", "k", "tmp"}


def test_taint_direct_propagation():
    src = "program p\ninput x : u4\nvar y : u4\nL0: y := x + 1\nL1: halt\n"
    p = ir.parse_program(src)
    facts = taint_map(p)
    assert facts.after[0]["y"] == DIRECT


def test_taint_constant_assign_untainted():
    p = ir.parse_program("program p\nvar x : u4\nL0: x := 5\nL1: halt\n")
    facts = taint_map(p)
    assert facts.tainted_after(0) == set()


def test_taint_kill_and_array_wholesale():
    src = ("program p\ninput x : u4\nvar y : u4\narray a[4] : u4\n"
           "L0: y := x\n"
           "L1: store a[0] := y\n"
           "L2: y := 0\n"
           "L3: y := load a[1]\n"
           "L4: halt\n")
    p = ir.parse_program(src)
    facts = taint_map(p)
    assert "a" in facts.tainted_after(1)        # array tainted wholesale
    assert "y" not in facts.tainted_after(2)    # constant assignment kills
    assert "y" in facts.tainted_after(3)        # reloaded taint from the array


def test_monotonicity_classical_subset_strong():
    rng = random.Random(11)
    for i in range(300):
        p = random_program(rng, i)
        strong = compute_vinst(p, ThreatModel.STRONG).labels
        classical = compute_vinst(p, ThreatModel.CLASSICAL).labels
        assert classical <= strong, f"program {i}"


def test_confluence_fifo_vs_lifo():
    rng = random.Random(12)
    for i in range(300):
        p = random_program(rng, i)
        assert taint_map(p, "fifo") == taint_map(p, "lifo"), f"program {i}"


def test_loads_only_flag(fig1):
    src = ("program p\ninput x : u4\narray a[4] : u4\n"
           "L0: store a[x] := x\nL1: halt\n")
    p = ir.parse_program(src)
    assert compute_vinst(p, ThreatModel.STRONG).labels == {0}
    assert compute_vinst(p, ThreatModel.STRONG, loads_only=True).labels == set()


def test_format_taint_map(fig1):
    text = format_taint_map(fig1, taint_map(fig1))
    assert "L1: i:direct, k:derived" in text

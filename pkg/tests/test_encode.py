import random

import pytest

from specfence import encode, ir, threat
from specfence.encode import (
    AlreadyActiveError,
    CapacityError,
    Placement,
    SpecMode,
    add_fence,
    encode_speculative,
    encode_standard,
    fence_sites,
)
from specfence.logic import formula as F
from specfence.logic.explicit import CompiledTs, explicit_reachable
from specfence.logic.solver import check_sat
from specfence.threat import ThreatModel, compute_vinst
from conftest import random_init_env, random_program, random_walk


def _spec_system(p, model=ThreatModel.STRONG, placement=Placement.AFTER_BRANCH,
                 mode=None, active=frozenset()):
    vin = compute_vinst(p, model)
    sites = fence_sites(p, vin, placement)
    return encode_speculative(p, vin, sites, mode or SpecMode.unbounded(),
                              active=set(active))


# ---------------------------------------------------------------------------
# encode_standard

def test_standard_fig1_layout(fig1):
    ts = encode_standard(fig1)
    names = [v.name for v in ts.state_vars]
    assert names[:3] == ["i", "k", "tmp"]
    assert "a[0]" in names and "a[3]" in names and "b[63]" in names
    assert names[-1] == "pc"
    assert ts.meta.pc_width == 3           # 4 labels + halt point fit; bot=7
    assert ts.meta.bot_code == 7
    assert ts.state_bit_count() == 8 * 3 + 4 * 8 + 64 * 8 + 3


def test_assert_false_bad_in_one_step():
    p = ir.parse_program("program p\nvar x : u1\nL0: assert 0\nL1: halt\n")
    r = explicit_reachable(encode_standard(p))
    assert r.verdict == "UNSAFE"
    assert len(r.trace) == 2


def test_assume_false_blocks_assert():
    p = ir.parse_program("program p\nvar x : u1\nL0: assume 0\nL1: assert 0\nL2: halt\n")
    assert explicit_reachable(encode_standard(p)).verdict == "SAFE"


def test_capacity_error():
    p = ir.parse_program(
        "program p\nvar x : u64\narray a[64] : u64\nL0: x := load a[x]\nL1: halt\n")
    with pytest.raises(CapacityError):
        encode_standard(p, capacity_bits=1000)


# ---------------------------------------------------------------------------
# fence sites

def test_fence_sites_after_branch_fig1(fig1):
    vin = compute_vinst(fig1, ThreatModel.CLASSICAL)
    sites = fence_sites(fig1, vin, Placement.AFTER_BRANCH)
    assert [(s.id, s.anchor, s.position) for s in sites] == [
        ("then@L0", 1, "then"), ("else@L0", 3, "else")]


def test_fence_sites_before_memory_fig1(fig1):
    vin = compute_vinst(fig1, ThreatModel.CLASSICAL)
    sites = fence_sites(fig1, vin, Placement.BEFORE_MEMORY)
    assert [(s.id, s.anchor) for s in sites] == [("before@L2", 2)]


def test_fence_sites_empty_vinst():
    p = ir.parse_program("program p\ninput x : u2\nL0: x := x + 1\nL1: halt\n")
    vin = compute_vinst(p, ThreatModel.STRONG)
    assert fence_sites(p, vin, Placement.BEFORE_MEMORY) == []


def test_fence_sites_every_inst_excludes_bookkeeping(fig1):
    vin = compute_vinst(fig1, ThreatModel.STRONG)
    sites = fence_sites(fig1, vin, Placement.EVERY_INST)
    # halt (L3) carries no site
    assert [s.anchor for s in sites] == [0, 1, 2]


# ---------------------------------------------------------------------------
# encode_speculative verdicts

def test_speculative_fig1_unsafe_then_fenced_safe(fig1):
    ts = _spec_system(fig1, ThreatModel.CLASSICAL)
    assert explicit_reachable(ts).verdict == "UNSAFE"
    assert explicit_reachable(add_fence(ts, "then@L0")).verdict == "SAFE"


def test_speculative_empty_vinst_always_safe():
    p = ir.parse_program(
        "program p\ninput x : u2\nvar y : u2\nL0: br (x < 2) L1 L2\nL1: y := x\nL2: halt\n")
    ts = _spec_system(p, ThreatModel.STRONG)
    assert not ts.meta.vinst
    assert explicit_reachable(ts).verdict == "SAFE"


def test_add_fence_matches_actively_encoded_system(fig1):
    vin = compute_vinst(fig1, ThreatModel.CLASSICAL)
    sites = fence_sites(fig1, vin, Placement.AFTER_BRANCH)
    base = encode_speculative(fig1, vin, sites, SpecMode.unbounded())
    direct = encode_speculative(fig1, vin, sites, SpecMode.unbounded(),
                                active={"then@L0"})
    assert add_fence(base, "then@L0").init_fixed == direct.init_fixed
    assert add_fence(base, "then@L0").updates is base.updates


def test_add_fence_twice_raises(fig1):
    ts = add_fence(_spec_system(fig1, ThreatModel.CLASSICAL), "then@L0")
    with pytest.raises(AlreadyActiveError):
        add_fence(ts, "then@L0")


def test_fence_off_the_leak_path_keeps_verdict(fig1):
    # the else side never speculates into the leak; fencing it changes nothing
    ts = _spec_system(fig1, ThreatModel.CLASSICAL)
    fenced = add_fence(ts, "else@L0")
    assert explicit_reachable(ts).verdict == explicit_reachable(fenced).verdict == "UNSAFE"


# ---------------------------------------------------------------------------
# totality

def _assert_total(ts):
    # symbolic: the disjunction of guards is valid
    guards = F.or_([u.guard for u in ts.updates])
    assert check_sat(F.not_(guards)) is None, "guards are not exhaustive"


def test_totality_symbolic_and_random_states(fig1):
    rng = random.Random(5)
    systems = [
        encode_standard(fig1),
        _spec_system(fig1, ThreatModel.CLASSICAL),
        _spec_system(fig1, ThreatModel.STRONG, Placement.EVERY_INST,
                     SpecMode.bounded(3)),
    ]
    for ts in systems:
        _assert_total(ts)
        compiled = CompiledTs(ts)
        widths = dict(zip(compiled.names, compiled.widths))
        for _ in range(1000):
            env = {n: rng.randrange(1 << w) for n, w in widths.items()}
            assert compiled.firing_updates(compiled.tuple_of(env)), env


def test_totality_random_programs():
    rng = random.Random(6)
    for i in range(25):
        p = random_program(rng, i)
        ts = _spec_system(p, ThreatModel.STRONG,
                          rng.choice(list(Placement)),
                          SpecMode.bounded(3) if i % 3 else SpecMode.unbounded())
        _assert_total(ts)


# ---------------------------------------------------------------------------
# simulation and monotonicity properties

def _lift_standard_run(p, ts_std, ts_hat, rng, steps=12):
    """Drive the standard system; replay in the speculative one with correct
    predictions; projections onto the standard variables must agree."""
    std = CompiledTs(ts_std)
    hat = CompiledTs(ts_hat)
    meta = ts_hat.meta
    cur_std = random_init_env(std, rng)
    cur_hat = dict(ts_hat.init_fixed)
    for name in ts_hat.init_free:
        cur_hat[name] = cur_std[name]
    shared = [v.name for v in ts_std.state_vars if v.name != "pc"]

    for _ in range(steps):
        s = std.tuple_of(cur_std)
        fired = std.firing_updates(s)
        assert len(fired) == 1
        cu = fired[0]
        inputs = {n: rng.randrange(1 << w)
                  for n, w in zip(cu.input_names, cu.input_widths)}
        nxt_std = std.env_of(cu.step(s, tuple(inputs.get(n, 0)
                                              for n in cu.input_names)))

        # correct prediction: the branch choice input equals the condition
        label = cur_std["pc"]
        if label < len(p.insts) and isinstance(p.insts[label], ir.CondBranch):
            cond = ir.eval_expr(p.insts[label].cond, cur_std)
            inputs[f"ch@L{label}"] = cond
        if cur_hat["pc"] in meta.assert_code.values():
            mid = hat.step_env(cur_hat, {})  # assertion node passes at spec=0
            assert mid["spec"] == 0
            cur_hat = mid
        assert cur_hat["pc"] == cur_std["pc"], "lifted run lost pc alignment"
        cur_hat = hat.step_env(cur_hat, inputs)
        cur_std = nxt_std
        assert cur_hat["spec"] == 0
        for name in shared:
            assert cur_hat[name] == cur_std[name], name
        if cur_hat["pc"] in meta.assert_code.values():
            cur_hat = hat.step_env(cur_hat, {})

        std_pc = cur_std["pc"]
        hat_pc = cur_hat["pc"]
        assert hat_pc == std_pc or hat_pc == meta.assert_code.get(std_pc)


def test_simulation_standard_into_speculative():
    rng = random.Random(21)
    for i in range(60):
        p = random_program(rng, i)
        ts_std = encode_standard(p)
        ts_hat = _spec_system(p, ThreatModel.STRONG,
                              rng.choice([Placement.AFTER_BRANCH, Placement.EVERY_INST]))
        # random fence values (Lemma 1 holds for any frozen fence assignment)
        for s in ts_hat.meta.sites:
            if rng.random() < 0.4:
                ts_hat = add_fence(ts_hat, s.id)
        _lift_standard_run(p, ts_std, ts_hat, rng)


def test_fence_monotonicity_executions_contained():
    # every concrete execution of add_fence(ts, s) satisfies ts's Tr stepwise
    rng = random.Random(22)
    for i in range(60):
        p = random_program(rng, i)
        base = _spec_system(p, ThreatModel.STRONG)
        if not base.meta.sites:
            continue
        site = rng.choice(base.meta.sites).id
        fenced = add_fence(base, site)
        run = random_walk(CompiledTs(fenced), rng, steps=10)
        checker = CompiledTs(base)
        for pre, post in zip(run, run[1:]):
            assert checker.is_step(pre, post)


def test_spec_monotone_and_bounded_saturation():
    rng = random.Random(23)
    for i in range(80):
        p = random_program(rng, i)
        k = rng.choice([1, 2, 4])
        bounded = i % 2 == 0
        ts = _spec_system(p, ThreatModel.STRONG,
                          mode=SpecMode.bounded(k) if bounded else SpecMode.unbounded())
        compiled = CompiledTs(ts)
        run = random_walk(compiled, rng, steps=14)
        specs = [st["spec"] for st in run]
        for a, b in zip(specs, specs[1:]):
            assert not (a > 0 and b == 0), "spec dropped back to zero"
        if bounded:
            assert max(specs) <= k
            for st, nxt in zip(run, run[1:]):
                if st["spec"] == k:
                    assert nxt == st, "saturated state must stutter"

import itertools
import random

import pytest

from specfence import encode, ir, threat
from specfence.encode import Placement, SpecMode
from specfence.logic import formula as F
from specfence.logic.cdcl import ResourceError, Solver
from specfence.logic.cube import BitLit, Cube, cube_from_env
from specfence.logic.explicit import CompiledTs, explicit_reachable
from specfence.logic.inductive import PreconditionError, generalize
from specfence.logic.solver import check_sat


# ---------------------------------------------------------------------------
# check_sat basics and differential testing

def test_modular_wraparound_model():
    x = F.bv_var("x", 4)
    m = check_sat(F.eq(F.add(x, F.bv_const(1, 4)), F.bv_const(0, 4)))
    assert m is not None and m["x"] == 15


def test_contradiction_unsat():
    a = F.bool_var("a")
    assert check_sat(F.and_(a, F.not_(a))) is None


def _random_term(rng, vars_, width, depth):
    if depth == 0 or rng.random() < 0.3:
        if vars_.get(width) and rng.random() < 0.7:
            return F.bv_var(rng.choice(vars_[width]), width)
        return F.bv_const(rng.randrange(1 << width), width)
    op = rng.randrange(8)
    if op < 5:
        fn = [F.add, F.sub, F.mul, F.band, F.bxor][op]
        return fn(_random_term(rng, vars_, width, depth - 1),
                  _random_term(rng, vars_, width, depth - 1))
    if op == 5:
        return F.bnot(_random_term(rng, vars_, width, depth - 1))
    if op == 6:
        return F.ite(_random_formula(rng, vars_, depth - 1),
                     _random_term(rng, vars_, width, depth - 1),
                     _random_term(rng, vars_, width, depth - 1))
    if width > 1:
        return F.zext(_random_term(rng, vars_, width - 1, depth - 1), width)
    return F.trunc(_random_term(rng, vars_, width + 1, depth - 1), width)


def _random_formula(rng, vars_, depth):
    if depth == 0 or rng.random() < 0.25:
        k = rng.randrange(3)
        if k == 0:
            return F.bool_var(rng.choice(vars_["bool"]))
        return F.TRUE if k == 1 else F.FALSE
    op = rng.randrange(6)
    w = rng.choice([1, 2, 3])
    if op == 0:
        return F.eq(_random_term(rng, vars_, w, depth - 1),
                    _random_term(rng, vars_, w, depth - 1))
    if op == 1:
        return F.ult(_random_term(rng, vars_, w, depth - 1),
                     _random_term(rng, vars_, w, depth - 1))
    if op == 2:
        return F.ule(_random_term(rng, vars_, w, depth - 1),
                     _random_term(rng, vars_, w, depth - 1))
    if op == 3:
        return F.not_(_random_formula(rng, vars_, depth - 1))
    if op == 4:
        return F.and_(_random_formula(rng, vars_, depth - 1),
                      _random_formula(rng, vars_, depth - 1))
    return F.or_(_random_formula(rng, vars_, depth - 1),
                 F.iff_(_random_formula(rng, vars_, depth - 1),
                        _random_formula(rng, vars_, depth - 1)))


def _brute_force_sat(f):
    vars_ = F.node_vars(f)
    assert sum(max(w, 1) for w in vars_.values()) <= 16
    names = sorted(vars_)
    for combo in itertools.product(*(range(1 << max(vars_[n], 1)) for n in names)):
        if F.evaluate(f, dict(zip(names, combo))):
            return True
    return False


def test_check_sat_matches_truth_tables():
    rng = random.Random(100)
    vars_ = {1: ["p", "q"], 2: ["u", "v"], 3: ["s"], "bool": ["a", "b"]}
    for i in range(400):
        f = _random_formula(rng, vars_, depth=4)
        if sum(max(w, 1) for w in F.node_vars(f).values()) > 16:
            continue
        expected = _brute_force_sat(f)
        got = check_sat(f) is not None
        assert got == expected, f"formula {i}: {F.render(f)}"


def test_solver_assumption_core():
    s = Solver()
    a, b, c = s.new_var(), s.new_var(), s.new_var()
    s.add_clause([-a, -b])
    assert s.solve([a, c, b]) is False
    core = s.core()
    assert core <= {a, b, c} and {a, b} <= core


def test_conflict_budget_resource_error():
    a = F.bool_var("a")
    b = F.bool_var("b")
    f = F.and_(F.or_(a, b), F.or_(a, F.not_(b)),
               F.or_(F.not_(a), b), F.or_(F.not_(a), F.not_(b)))
    with pytest.raises(ResourceError):
        check_sat(f, conflict_budget=0)


# ---------------------------------------------------------------------------
# cubes

def test_cube_rejects_contradiction():
    with pytest.raises(ValueError):
        Cube((BitLit("x", 0, True), BitLit("x", 0, False)))


def test_cube_membership_and_render():
    c = cube_from_env({"x": 5}, {"x": 3})
    assert c.contains_state({"x": 5})
    assert not c.contains_state({"x": 4})
    assert c.render({"x": 3}) == "x=5"
    partial = Cube((BitLit("x", 2, True),))
    assert partial.render({"x": 3}) == "x=0b1??"


# ---------------------------------------------------------------------------
# generalize

def _freeze_trans(widths):
    return F.and_(F.eq(F.bv_var(n + "'", w), F.bv_var(n, w))
                  for n, w in widths.items())


def test_generalize_minimal_cube_unchanged():
    x = F.bv_var("x", 2)
    init = F.or_(F.eq(x, F.bv_const(1, 2)), F.eq(x, F.bv_const(2, 2)))
    trans = _freeze_trans({"x": 2})
    cube = cube_from_env({"x": 3}, {"x": 2})
    out = generalize(cube, F.TRUE, trans, init)
    assert out == cube  # dropping either bit would admit an init state


def test_generalize_drops_redundant_frozen_literal():
    widths = {"x": 1, "fence": 1}
    init = F.and_(F.eq(F.bv_var("x", 1), F.bv_const(0, 1)),
                  F.eq(F.bv_var("fence", 1), F.bv_const(0, 1)))
    trans = _freeze_trans(widths)
    cube = Cube((BitLit("x", 0, True), BitLit("fence", 0, True)))
    out = generalize(cube, F.TRUE, trans, init)
    assert out == Cube((BitLit("x", 0, True),))


def test_generalize_shrinks_to_pc_literals_and_is_subset_minimal():
    widths = {"pc": 2, "j": 3, "k": 3}
    init = F.eq(F.bv_var("pc", 2), F.bv_const(0, 2))
    trans = _freeze_trans(widths)
    cube = cube_from_env({"pc": 3, "j": 5, "k": 2}, widths)
    out = generalize(cube, F.TRUE, trans, init)
    assert all(l.var == "pc" for l in out.lits)

    # independent oracle: brute-force all states for both conditions
    names = sorted(widths)

    def states():
        for combo in itertools.product(*(range(1 << widths[n]) for n in names)):
            yield dict(zip(names, combo))

    def valid(c: Cube) -> bool:
        for s in states():
            if F.evaluate(init, s) and c.contains_state(s):
                return False
        for s in states():
            if c.contains_state(s):
                continue
            t = dict(s)  # frozen transition: successor equals the state
            if c.contains_state(t):
                return False
        return True

    assert valid(out)
    for lit in out.lits:  # subset-minimal: no single further drop stays valid
        if len(out) > 1:
            assert not valid(out.without(lit))


def test_generalize_precondition_error():
    x = F.bv_var("x", 2)
    init = F.eq(x, F.bv_const(3, 2))  # init inside the cube
    trans = _freeze_trans({"x": 2})
    cube = cube_from_env({"x": 3}, {"x": 2})
    with pytest.raises(PreconditionError):
        generalize(cube, F.TRUE, trans, init)


# ---------------------------------------------------------------------------
# explicit-state oracle

def _fig1_spec(fig1, fences=(), placement=Placement.AFTER_BRANCH,
               model=threat.ThreatModel.CLASSICAL, mode=None):
    vin = threat.compute_vinst(fig1, model)
    sites = encode.fence_sites(fig1, vin, placement)
    return encode.encode_speculative(fig1, vin, sites,
                                     mode or SpecMode.unbounded(),
                                     active=set(fences))


def test_explicit_fig1_unsafe_four_states(fig1):
    ts = _fig1_spec(fig1)
    r = explicit_reachable(ts)
    assert r.verdict == "UNSAFE"
    assert len(r.trace) == 4
    meta = ts.meta
    pcs = [st["pc"] for st in r.trace]
    assert pcs == [0, 1, meta.assert_code[2], meta.bot_code]
    assert [st["spec"] for st in r.trace] == [0, 1, 1, 1]


def test_explicit_fig1_fenced_safe(fig1):
    ts = encode.add_fence(_fig1_spec(fig1), "then@L0")
    assert explicit_reachable(ts).verdict == "SAFE"


def test_explicit_standard_fig1_safe(fig1):
    assert explicit_reachable(encode.encode_standard(fig1)).verdict == "SAFE"


def test_budget_exceeded(fig1):
    ts = _fig1_spec(fig1)
    assert explicit_reachable(ts, state_budget=10).verdict == "BUDGET"


# ---------------------------------------------------------------------------
# BMC agreement

def _bmc_formula(ts, depth, final):
    def frame(i):
        def rename(name):
            if name.endswith("'"):
                return f"{name[:-1]}#{i + 1}"
            return f"{name}#{i}"
        return rename

    parts = [F.subst_vars(ts.init_formula(), frame(0))]
    tr = ts.tr_formula()
    for i in range(depth):
        parts.append(F.subst_vars(tr, frame(i)))
    parts.append(F.subst_vars(final, frame(depth)))
    return F.and_(parts)


def test_bmc_fig1_assertion_node_reachable_depth3(fig1):
    ts = _fig1_spec(fig1)
    meta = ts.meta
    pc = F.bv_var("pc", meta.pc_width)
    spec = F.bv_var("spec", meta.spec_width)
    target = F.and_(F.eq(pc, F.bv_const(meta.assert_code[2], meta.pc_width)),
                    F.not_(F.eq(spec, F.bv_const(0, meta.spec_width))))
    # the explicit oracle's shortest leak reaches a@L2 in 2 steps and bot in 3;
    # at depth 3 the assertion node is still occupied on longer interleavings?
    # assert the tight facts instead: reachable at depth 2, not at depth 1
    assert check_sat(_bmc_formula(ts, 2, target)) is not None
    assert check_sat(_bmc_formula(ts, 1, target)) is None


def test_bmc_depth_matches_oracle_on_bad():
    src = ("program p\ninput x : u2\nvar v : u2\narray a[2] : u2\n"
           "L0: br (x < 1) L1 L3\n"
           "L1: v := load a[x]\n"
           "L2: v := v + 1\n"
           "L3: halt\n")
    p = ir.parse_program(src)
    vin = threat.compute_vinst(p, threat.ThreatModel.STRONG)
    sites = encode.fence_sites(p, vin, Placement.AFTER_BRANCH)
    ts = encode.encode_speculative(p, vin, sites, SpecMode.unbounded())
    r = explicit_reachable(ts)
    assert r.verdict == "UNSAFE"
    d = len(r.trace) - 1
    assert check_sat(_bmc_formula(ts, d, ts.bad)) is not None
    assert check_sat(_bmc_formula(ts, d - 1, ts.bad)) is None

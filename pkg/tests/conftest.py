"""Shared fixtures: corpus paths, random program generation, concrete walks."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from specfence import ir

ROOT = Path(__file__).resolve().parent.parent
BENCH = ROOT / "benchmarks"
KOCHER = BENCH / "kocher"

FIG1_TEXT = (BENCH / "fig1.sir").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def fig1() -> ir.Program:
    return ir.parse_program(FIG1_TEXT)


@pytest.fixture(scope="session")
def test_deep() -> ir.Program:
    return ir.parse_program((BENCH / "test_deep.sir").read_text(encoding="utf-8"))


def kocher_programs() -> list[tuple[str, ir.Program]]:
    out = []
    for path in sorted(KOCHER.glob("*.sir")):
        out.append((path.stem, ir.parse_program(path.read_text(encoding="utf-8"))))
    return out


def corpus_programs() -> list[tuple[str, ir.Program]]:
    """All 17 corpus programs (15 Kocher patterns + fig1 + test_deep)."""
    out = kocher_programs()
    for path in (BENCH / "fig1.sir", BENCH / "test_deep.sir"):
        out.append((path.stem, ir.parse_program(path.read_text(encoding="utf-8"))))
    return out


# ---------------------------------------------------------------------------
# random program generation (textual; the parser enforces validity)

def random_program(rng: random.Random, idx: int = 0) -> ir.Program:
    """Small random valid program; most draws contain a speculative leak."""
    blen = rng.choice([2, 4])
    lines = [
        f"program rnd{idx}",
        "input x : u3",
        "var v : u3",
        "var w : u3",
        "array a[4] : u3",
        f"array b[{blen}] : u3",
    ]
    shape = rng.randrange(5)
    exprs = [
        "x", "v", "w", "(x + 1)", "(v ^ x)", "(w & 3)", "(x + v)",
        f"{rng.randrange(8)}",
    ]

    def e() -> str:
        return rng.choice(exprs)

    body: list[str] = []
    bound = rng.choice([2, 3, 4])
    if shape == 0:  # guarded nested load
        body = [
            f"br (x < {bound}) L1 L4",
            "v := load a[x]",
            "w := load b[v]",
            "goto L4",
            "halt",
        ]
    elif shape == 1:  # both sides touch memory
        body = [
            f"v := {e()}",
            f"br (x < {bound}) L2 L4",
            "w := load a[x]",
            "goto L5",
            f"store a[{rng.randrange(4)}] := {e()}",
            "halt",
        ]
    elif shape == 2:  # small loop with a guarded load
        body = [
            "v := 0",
            f"br (v < x) L2 L6",
            f"br (v < {bound}) L3 L6",
            "w := load a[v]",
            "v := v + 1",
            "goto L1",
            "halt",
        ]
    elif shape == 3:  # two stacked branches
        body = [
            f"br (x < {bound}) L1 L5",
            f"br (v <= {rng.randrange(4)}) L2 L5",
            "v := load a[x]",
            f"w := {e()}",
            "store b[v] := w",
            "halt",
        ]
    else:  # straight-line prefix, then the leak
        body = [
            f"v := {e()}",
            f"w := {e()}",
            f"br ((x ^ v) < {bound}) L3 L5",
            "w := load a[x]",
            "v := load b[w]",
            "halt",
        ]
    lines += [f"L{i}: {inst}" for i, inst in enumerate(body)]
    return ir.parse_program("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# concrete random walks over compiled systems

def random_init_env(compiled, rng: random.Random) -> dict[str, int]:
    widths = dict(zip(compiled.names, compiled.widths))
    env = dict(compiled.ts.init_fixed)
    for name in compiled.ts.init_free:
        env[name] = rng.randrange(1 << widths[name])
    return env


def random_walk(compiled, rng: random.Random, steps: int,
                init_env: dict[str, int] | None = None) -> list[dict[str, int]]:
    """Random execution from a random initial state; inputs drawn uniformly."""
    cur = random_init_env(compiled, rng) if init_env is None else init_env
    trace = [cur]
    for _ in range(steps):
        s = compiled.tuple_of(cur)
        fired = compiled.firing_updates(s)
        assert len(fired) == 1, "guards must be deterministic per state"
        cu = fired[0]
        x = tuple(rng.randrange(1 << w) for w in cu.input_widths)
        cur = compiled.env_of(cu.step(s, x))
        trace.append(cur)
    return trace

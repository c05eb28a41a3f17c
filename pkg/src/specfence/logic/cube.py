"""Cubes: conjunctions of state-bit literals."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class BitLit:
    """One literal over a named bit of a state variable."""

    var: str
    bit: int
    value: bool

    def negated(self) -> "BitLit":
        return BitLit(self.var, self.bit, not self.value)


@dataclass(frozen=True)
class Cube:
    """Conjunction of bit literals over current-state variables.

    Literals are kept sorted and contradiction-free; a cube with all bits of
    every state variable denotes a single state.
    """

    lits: tuple[BitLit, ...]

    def __post_init__(self):
        seen: dict[tuple[str, int], bool] = {}
        for l in self.lits:
            key = (l.var, l.bit)
            if seen.get(key, l.value) != l.value:
                raise ValueError(f"contradictory literals on {key}")
            seen[key] = l.value
        object.__setattr__(self, "lits", tuple(sorted(set(self.lits))))

    def __len__(self) -> int:
        return len(self.lits)

    def __iter__(self):
        return iter(self.lits)

    def subset_of(self, other: "Cube") -> bool:
        return set(self.lits) <= set(other.lits)

    def without(self, lit: BitLit) -> "Cube":
        return Cube(tuple(l for l in self.lits if l != lit))

    def contains_state(self, env: dict[str, int]) -> bool:
        """Does a concrete state (word-level values) satisfy the cube?"""
        return all(bool((env[l.var] >> l.bit) & 1) == l.value for l in self.lits)

    def render(self, widths: dict[str, int]) -> str:
        """Word-level display: full values where all bits fixed, else patterns."""
        by_var: dict[str, dict[int, bool]] = {}
        for l in self.lits:
            by_var.setdefault(l.var, {})[l.bit] = l.value
        parts = []
        for var in sorted(by_var):
            bits = by_var[var]
            w = widths.get(var, max(bits) + 1)
            if len(bits) == w:
                val = sum(1 << i for i, b in bits.items() if b)
                parts.append(f"{var}={val}")
            else:
                pat = "".join(
                    ("1" if bits[i] else "0") if i in bits else "?"
                    for i in reversed(range(w)))
                parts.append(f"{var}=0b{pat}")
        return " & ".join(parts) if parts else "true"


def cube_from_env(env: dict[str, int], widths: dict[str, int]) -> Cube:
    """Full-assignment cube from word-level state values."""
    lits = []
    for var, w in widths.items():
        v = env[var]
        for i in range(w):
            lits.append(BitLit(var, i, bool((v >> i) & 1)))
    return Cube(tuple(lits))

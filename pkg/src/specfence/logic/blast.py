"""Tseitin bit-blasting of formulas/terms to CNF over a CDCL solver.

Nodes are hash-consed, so caching by node id gives structural sharing; gate
construction also caches at the literal level (same gate over the same
literals is emitted once).  Bit tuples are LSB first.
"""

from __future__ import annotations

from specfence.logic import formula as F
from specfence.logic.cdcl import Solver


class BitBlaster:
    def __init__(self, solver: Solver):
        self.solver = solver
        self._true = solver.new_var()
        solver.add_clause([self._true])
        self.term_bits: dict[int, tuple[int, ...]] = {}
        self.form_lit: dict[int, int] = {}
        self.var_bits: dict[str, tuple[int, ...]] = {}
        self.bool_lits: dict[str, int] = {}
        self._gate: dict[tuple, int] = {}

    @property
    def true_lit(self) -> int:
        return self._true

    @property
    def false_lit(self) -> int:
        return -self._true

    # -- variable registries (stable per name)

    def bv_bits(self, name: str, width: int) -> tuple[int, ...]:
        bits = self.var_bits.get(name)
        if bits is None:
            bits = tuple(self.solver.new_var() for _ in range(width))
            self.var_bits[name] = bits
        assert len(bits) == width, f"width clash for {name}"
        return bits

    def bool_lit(self, name: str) -> int:
        lit = self.bool_lits.get(name)
        if lit is None:
            lit = self.solver.new_var()
            self.bool_lits[name] = lit
        return lit

    # -- literal-level gates

    def _and2(self, a: int, b: int) -> int:
        t, f = self._true, -self._true
        if a == f or b == f or a == -b:
            return f
        if a == t or a == b:
            return b
        if b == t:
            return a
        key = ("and", a, b) if a < b else ("and", b, a)
        g = self._gate.get(key)
        if g is None:
            g = self.solver.new_var()
            self.solver.add_clause([-g, a])
            self.solver.add_clause([-g, b])
            self.solver.add_clause([g, -a, -b])
            self._gate[key] = g
        return g

    def _or2(self, a: int, b: int) -> int:
        return -self._and2(-a, -b)

    def _xor2(self, a: int, b: int) -> int:
        t, f = self._true, -self._true
        if a == t:
            return -b
        if a == f:
            return b
        if b == t:
            return -a
        if b == f:
            return a
        if a == b:
            return f
        if a == -b:
            return t
        key = ("xor", a, b) if a < b else ("xor", b, a)
        g = self._gate.get(key)
        if g is None:
            g = self.solver.new_var()
            self.solver.add_clause([-g, a, b])
            self.solver.add_clause([-g, -a, -b])
            self.solver.add_clause([g, -a, b])
            self.solver.add_clause([g, a, -b])
            self._gate[key] = g
        return g

    def _iff2(self, a: int, b: int) -> int:
        return -self._xor2(a, b)

    def _ite(self, c: int, a: int, b: int) -> int:
        t, f = self._true, -self._true
        if c == t:
            return a
        if c == f:
            return b
        if a == b:
            return a
        if a == t and b == f:
            return c
        if a == f and b == t:
            return -c
        key = ("ite", c, a, b)
        g = self._gate.get(key)
        if g is None:
            g = self.solver.new_var()
            self.solver.add_clause([-g, -c, a])
            self.solver.add_clause([-g, c, b])
            self.solver.add_clause([g, -c, -a])
            self.solver.add_clause([g, c, -b])
            self._gate[key] = g
        return g

    def _and_many(self, lits: list[int]) -> int:
        t, f = self._true, -self._true
        out = []
        seen = set()
        for l in lits:
            if l == f:
                return f
            if l == t or l in seen:
                continue
            if -l in seen:
                return f
            seen.add(l)
            out.append(l)
        if not out:
            return t
        if len(out) == 1:
            return out[0]
        key = ("andN",) + tuple(sorted(out))
        g = self._gate.get(key)
        if g is None:
            g = self.solver.new_var()
            for l in out:
                self.solver.add_clause([-g, l])
            self.solver.add_clause([g] + [-l for l in out])
            self._gate[key] = g
        return g

    def _or_many(self, lits: list[int]) -> int:
        return -self._and_many([-l for l in lits])

    # -- word-level operations on bit tuples

    def _adder(self, a: tuple[int, ...], b: tuple[int, ...], carry: int) -> tuple[int, ...]:
        out = []
        for ai, bi in zip(a, b):
            axb = self._xor2(ai, bi)
            out.append(self._xor2(axb, carry))
            carry = self._or2(self._and2(ai, bi), self._and2(carry, axb))
        return tuple(out)

    def _ult_lit(self, a: tuple[int, ...], b: tuple[int, ...]) -> int:
        r = -self._true
        for ai, bi in zip(a, b):  # LSB to MSB; higher bits override
            r = self._ite(self._xor2(ai, bi), bi, r)
        return r

    def _eq_lit(self, a: tuple[int, ...], b: tuple[int, ...]) -> int:
        return self._and_many([self._iff2(ai, bi) for ai, bi in zip(a, b)])

    # -- node translation

    def term(self, node: F.Node) -> tuple[int, ...]:
        got = self.term_bits.get(node.nid)
        if got is not None:
            return got
        op = node.op
        if op == "var":
            bits = self.bv_bits(node.aux, node.width)
        elif op == "const":
            t, f = self._true, -self._true
            bits = tuple(t if (node.aux >> i) & 1 else f for i in range(node.width))
        elif op == "add":
            bits = self._adder(self.term(node.args[0]), self.term(node.args[1]), -self._true)
        elif op == "sub":
            b = self.term(node.args[1])
            bits = self._adder(self.term(node.args[0]), tuple(-x for x in b), self._true)
        elif op == "mul":
            a = self.term(node.args[0])
            b = self.term(node.args[1])
            w = node.width
            acc = tuple(-self._true for _ in range(w))
            for i in range(w):
                partial = tuple(-self._true for _ in range(i)) + tuple(
                    self._and2(b[i], a[j]) for j in range(w - i))
                acc = self._adder(acc, partial, -self._true)
            bits = acc
        elif op == "band":
            bits = tuple(self._and2(x, y) for x, y in
                         zip(self.term(node.args[0]), self.term(node.args[1])))
        elif op == "bor":
            bits = tuple(self._or2(x, y) for x, y in
                         zip(self.term(node.args[0]), self.term(node.args[1])))
        elif op == "bxor":
            bits = tuple(self._xor2(x, y) for x, y in
                         zip(self.term(node.args[0]), self.term(node.args[1])))
        elif op == "bnot":
            bits = tuple(-x for x in self.term(node.args[0]))
        elif op == "ite":
            c = self.lit(node.args[0])
            bits = tuple(self._ite(c, x, y) for x, y in
                         zip(self.term(node.args[1]), self.term(node.args[2])))
        elif op == "zext":
            inner = self.term(node.args[0])
            bits = inner + tuple(-self._true for _ in range(node.width - len(inner)))
        elif op == "trunc":
            bits = self.term(node.args[0])[: node.width]
        else:
            raise AssertionError(f"not a term op: {op}")
        self.term_bits[node.nid] = bits
        return bits

    def lit(self, node: F.Node) -> int:
        got = self.form_lit.get(node.nid)
        if got is not None:
            return got
        op = node.op
        if op == "true":
            lit = self._true
        elif op == "false":
            lit = -self._true
        elif op == "bvar":
            lit = self.bool_lit(node.aux)
        elif op == "not":
            lit = -self.lit(node.args[0])
        elif op == "and":
            lit = self._and_many([self.lit(a) for a in node.args])
        elif op == "or":
            lit = self._or_many([self.lit(a) for a in node.args])
        elif op == "iff":
            lit = self._iff2(self.lit(node.args[0]), self.lit(node.args[1]))
        elif op == "eq":
            lit = self._eq_lit(self.term(node.args[0]), self.term(node.args[1]))
        elif op == "ult":
            lit = self._ult_lit(self.term(node.args[0]), self.term(node.args[1]))
        elif op == "ule":
            lit = -self._ult_lit(self.term(node.args[1]), self.term(node.args[0]))
        else:
            raise AssertionError(f"not a formula op: {op}")
        self.form_lit[node.nid] = lit
        return lit

    def assert_formula(self, node: F.Node) -> None:
        """Assert a formula, flattening top-level conjunctions/disjunctions."""
        if node.op == "and":
            for a in node.args:
                self.assert_formula(a)
        elif node.op == "or":
            self.solver.add_clause([self.lit(a) for a in node.args])
        else:
            self.solver.add_clause([self.lit(node)])

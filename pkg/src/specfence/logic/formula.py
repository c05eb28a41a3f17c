"""Quantifier-free formulas over booleans and fixed-width unsigned bit-vectors.

Nodes are hash-consed: structurally equal subterms are the same object, so
equality is identity and downstream caches (bit-blasting, evaluation,
substitution) key on `nid`.  Constructors perform term-level constant
folding.  Formulas have width 0; terms have width 1..64.
"""

from __future__ import annotations

from typing import Callable, Iterable

MAX_WIDTH = 64

TERM_OPS = frozenset({
    "var", "const", "add", "sub", "mul", "band", "bor", "bxor", "bnot",
    "ite", "zext", "trunc",
})
FORMULA_OPS = frozenset({
    "true", "false", "bvar", "and", "or", "not", "iff", "eq", "ult", "ule",
})


class Node:
    __slots__ = ("op", "width", "args", "aux", "nid")

    def __init__(self, op: str, width: int, args: tuple, aux, nid: int):
        self.op = op
        self.width = width
        self.args = args
        self.aux = aux
        self.nid = nid

    @property
    def is_formula(self) -> bool:
        return self.width == 0

    def __repr__(self):
        return f"<{self.op}/{self.width}#{self.nid} {render(self)}>"


_interned: dict[tuple, Node] = {}
_next_id = 0


def _mk(op: str, width: int, args: tuple = (), aux=None) -> Node:
    global _next_id
    key = (op, width, tuple(a.nid for a in args), aux)
    node = _interned.get(key)
    if node is None:
        node = Node(op, width, args, aux, _next_id)
        _next_id += 1
        _interned[key] = node
    return node


TRUE = _mk("true", 0)
FALSE = _mk("false", 0)


def _mask(width: int) -> int:
    return (1 << width) - 1


# ---------------------------------------------------------------------------
# Terms

def bv_var(name: str, width: int) -> Node:
    assert 1 <= width <= MAX_WIDTH, width
    return _mk("var", width, aux=name)


def bv_const(value: int, width: int) -> Node:
    assert 1 <= width <= MAX_WIDTH, width
    return _mk("const", width, aux=value & _mask(width))


def _binop(op: str, a: Node, b: Node, fold: Callable[[int, int], int]) -> Node:
    assert a.width == b.width and a.width > 0, (op, a, b)
    if a.op == "const" and b.op == "const":
        return bv_const(fold(a.aux, b.aux), a.width)
    return _mk(op, a.width, (a, b))


def add(a: Node, b: Node) -> Node:
    if a.op == "const" and a.aux == 0:
        return b
    if b.op == "const" and b.aux == 0:
        return a
    return _binop("add", a, b, lambda x, y: x + y)


def sub(a: Node, b: Node) -> Node:
    if b.op == "const" and b.aux == 0:
        return a
    return _binop("sub", a, b, lambda x, y: x - y)


def mul(a: Node, b: Node) -> Node:
    if a.op == "const" and a.aux == 1:
        return b
    if b.op == "const" and b.aux == 1:
        return a
    if (a.op == "const" and a.aux == 0) or (b.op == "const" and b.aux == 0):
        return bv_const(0, a.width)
    return _binop("mul", a, b, lambda x, y: x * y)


def band(a: Node, b: Node) -> Node:
    full = _mask(a.width)
    if a.op == "const":
        if a.aux == 0:
            return bv_const(0, a.width)
        if a.aux == full:
            return b
    if b.op == "const":
        if b.aux == 0:
            return bv_const(0, a.width)
        if b.aux == full:
            return a
    if a is b:
        return a
    return _binop("band", a, b, lambda x, y: x & y)


def bor(a: Node, b: Node) -> Node:
    full = _mask(a.width)
    if a.op == "const":
        if a.aux == 0:
            return b
        if a.aux == full:
            return bv_const(full, a.width)
    if b.op == "const":
        if b.aux == 0:
            return a
        if b.aux == full:
            return bv_const(full, a.width)
    if a is b:
        return a
    return _binop("bor", a, b, lambda x, y: x | y)


def bxor(a: Node, b: Node) -> Node:
    if a is b:
        return bv_const(0, a.width)
    if a.op == "const" and a.aux == 0:
        return b
    if b.op == "const" and b.aux == 0:
        return a
    return _binop("bxor", a, b, lambda x, y: x ^ y)


def bnot(a: Node) -> Node:
    if a.op == "const":
        return bv_const(~a.aux, a.width)
    if a.op == "bnot":
        return a.args[0]
    return _mk("bnot", a.width, (a,))


def ite(cond: Node, a: Node, b: Node) -> Node:
    assert cond.is_formula and a.width == b.width and a.width > 0
    if cond is TRUE:
        return a
    if cond is FALSE:
        return b
    if a is b:
        return a
    return _mk("ite", a.width, (cond, a, b))


def zext(a: Node, width: int) -> Node:
    assert width >= a.width
    if width == a.width:
        return a
    if a.op == "const":
        return bv_const(a.aux, width)
    return _mk("zext", width, (a,))


def trunc(a: Node, width: int) -> Node:
    assert width <= a.width
    if width == a.width:
        return a
    if a.op == "const":
        return bv_const(a.aux, width)
    return _mk("trunc", width, (a,))


# ---------------------------------------------------------------------------
# Formulas

def bool_var(name: str) -> Node:
    return _mk("bvar", 0, aux=name)


def eq(a: Node, b: Node) -> Node:
    assert a.width == b.width and a.width > 0
    if a is b:
        return TRUE
    if a.op == "const" and b.op == "const":
        return TRUE if a.aux == b.aux else FALSE
    if a.nid > b.nid:
        a, b = b, a
    return _mk("eq", 0, (a, b))


def ult(a: Node, b: Node) -> Node:
    assert a.width == b.width and a.width > 0
    if a is b:
        return FALSE
    if a.op == "const" and b.op == "const":
        return TRUE if a.aux < b.aux else FALSE
    if b.op == "const" and b.aux == 0:
        return FALSE
    if a.op == "const" and a.aux == _mask(a.width):
        return FALSE
    return _mk("ult", 0, (a, b))


def ule(a: Node, b: Node) -> Node:
    assert a.width == b.width and a.width > 0
    if a is b:
        return TRUE
    if a.op == "const" and b.op == "const":
        return TRUE if a.aux <= b.aux else FALSE
    if a.op == "const" and a.aux == 0:
        return TRUE
    if b.op == "const" and b.aux == _mask(b.width):
        return TRUE
    return _mk("ule", 0, (a, b))


def not_(a: Node) -> Node:
    assert a.is_formula
    if a is TRUE:
        return FALSE
    if a is FALSE:
        return TRUE
    if a.op == "not":
        return a.args[0]
    return _mk("not", 0, (a,))


def and_(*parts: Node | Iterable[Node]) -> Node:
    flat: list[Node] = []
    for p in parts:
        for f in ([p] if isinstance(p, Node) else p):
            assert f.is_formula
            if f is FALSE:
                return FALSE
            if f is TRUE:
                continue
            flat.append(f)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return _mk("and", 0, tuple(flat))


def or_(*parts: Node | Iterable[Node]) -> Node:
    flat: list[Node] = []
    for p in parts:
        for f in ([p] if isinstance(p, Node) else p):
            assert f.is_formula
            if f is TRUE:
                return TRUE
            if f is FALSE:
                continue
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return _mk("or", 0, tuple(flat))


def implies(a: Node, b: Node) -> Node:
    return or_(not_(a), b)


def iff_(a: Node, b: Node) -> Node:
    if a is b:
        return TRUE
    if a is TRUE:
        return b
    if b is TRUE:
        return a
    if a is FALSE:
        return not_(b)
    if b is FALSE:
        return not_(a)
    if a.nid > b.nid:
        a, b = b, a
    return _mk("iff", 0, (a, b))


def bit_is_set(t: Node) -> Node:
    """1-bit term as a formula."""
    assert t.width == 1
    if t.op == "const":
        return TRUE if t.aux else FALSE
    return eq(t, bv_const(1, 1))


def bool_to_bit(f: Node) -> Node:
    """Formula as a 1-bit term."""
    assert f.is_formula
    return ite(f, bv_const(1, 1), bv_const(0, 1))


# ---------------------------------------------------------------------------
# Traversal utilities

def node_vars(root: Node) -> dict[str, int]:
    """All bit-vector/boolean variables with widths (0 = boolean)."""
    seen: set[int] = set()
    out: dict[str, int] = {}
    stack = [root]
    while stack:
        n = stack.pop()
        if n.nid in seen:
            continue
        seen.add(n.nid)
        if n.op in ("var", "bvar"):
            out[n.aux] = n.width
        stack.extend(n.args)
    return out


def subst_vars(root: Node, rename: Callable[[str], str],
               memo: dict[int, Node] | None = None) -> Node:
    """Rename every variable (used to prime or frame-index state copies)."""
    if memo is None:
        memo = {}

    def walk(n: Node) -> Node:
        got = memo.get(n.nid)
        if got is not None:
            return got
        if n.op == "var":
            out = bv_var(rename(n.aux), n.width)
        elif n.op == "bvar":
            out = bool_var(rename(n.aux))
        elif not n.args:
            out = n
        else:
            args = tuple(walk(a) for a in n.args)
            if all(x is y for x, y in zip(args, n.args)):
                out = n
            else:
                out = _rebuild(n, args)
        memo[n.nid] = out
        return out

    return walk(root)


_REBUILDERS = {
    "add": add, "sub": sub, "mul": mul, "band": band, "bor": bor,
    "bxor": bxor, "eq": eq, "ult": ult, "ule": ule, "iff": iff_,
}


def _rebuild(n: Node, args: tuple) -> Node:
    if n.op in _REBUILDERS:
        return _REBUILDERS[n.op](*args)
    if n.op == "bnot":
        return bnot(args[0])
    if n.op == "ite":
        return ite(*args)
    if n.op == "zext":
        return zext(args[0], n.width)
    if n.op == "trunc":
        return trunc(args[0], n.width)
    if n.op == "not":
        return not_(args[0])
    if n.op == "and":
        return and_(args)
    if n.op == "or":
        return or_(args)
    raise AssertionError(n.op)


def evaluate(root: Node, env: dict[str, int],
             memo: dict[int, int | bool] | None = None) -> int | bool:
    """Evaluate under a total assignment (ints for terms, 0/1 ok for bools)."""
    if memo is None:
        memo = {}

    def walk(n: Node) -> int | bool:
        got = memo.get(n.nid)
        if got is not None or n.nid in memo:
            return got
        op = n.op
        if op == "true":
            v: int | bool = True
        elif op == "false":
            v = False
        elif op == "var":
            v = env[n.aux] & _mask(n.width)
        elif op == "bvar":
            v = bool(env[n.aux])
        elif op == "const":
            v = n.aux
        elif op == "add":
            v = (walk(n.args[0]) + walk(n.args[1])) & _mask(n.width)
        elif op == "sub":
            v = (walk(n.args[0]) - walk(n.args[1])) & _mask(n.width)
        elif op == "mul":
            v = (walk(n.args[0]) * walk(n.args[1])) & _mask(n.width)
        elif op == "band":
            v = walk(n.args[0]) & walk(n.args[1])
        elif op == "bor":
            v = walk(n.args[0]) | walk(n.args[1])
        elif op == "bxor":
            v = walk(n.args[0]) ^ walk(n.args[1])
        elif op == "bnot":
            v = (~walk(n.args[0])) & _mask(n.width)
        elif op == "ite":
            v = walk(n.args[1]) if walk(n.args[0]) else walk(n.args[2])
        elif op == "zext":
            v = walk(n.args[0])
        elif op == "trunc":
            v = walk(n.args[0]) & _mask(n.width)
        elif op == "eq":
            v = walk(n.args[0]) == walk(n.args[1])
        elif op == "ult":
            v = walk(n.args[0]) < walk(n.args[1])
        elif op == "ule":
            v = walk(n.args[0]) <= walk(n.args[1])
        elif op == "not":
            v = not walk(n.args[0])
        elif op == "and":
            v = all(walk(a) for a in n.args)
        elif op == "or":
            v = any(walk(a) for a in n.args)
        elif op == "iff":
            v = bool(walk(n.args[0])) == bool(walk(n.args[1]))
        else:
            raise AssertionError(op)
        memo[n.nid] = v
        return v

    return walk(root)


def render(root: Node) -> str:
    """Compact s-expression rendering, for debugging and the encode dump."""
    op = root.op
    if op == "true":
        return "true"
    if op == "false":
        return "false"
    if op == "var":
        return root.aux
    if op == "bvar":
        return root.aux
    if op == "const":
        return f"#b{root.aux:0{root.width}b}" if root.width <= 8 else f"(_ bv{root.aux} {root.width})"
    name = {"band": "bvand", "bor": "bvor", "bxor": "bvxor", "bnot": "bvnot",
            "add": "bvadd", "sub": "bvsub", "mul": "bvmul", "ult": "bvult",
            "ule": "bvule", "eq": "=", "iff": "=", "zext": f"zext{root.width}",
            "trunc": f"trunc{root.width}"}.get(op, op)
    return "(" + name + " " + " ".join(render(a) for a in root.args) + ")"

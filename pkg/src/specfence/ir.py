"""Mini intermediate representation: text format, parsing, validation, queries.

Programs are a flat list of numbered instructions over fixed-width unsigned
variables and small constant-length arrays.  The text grammar is line
oriented (`#` starts a comment):

    program <name>
    var <id> : u<width>
    input <id> : u<width>
    array <id>[<len>] : u<width>
    L<k>: <id> := <expr>
    L<k>: br <expr> L<i> L<j>
    L<k>: goto L<i>
    L<k>: <id> := load <arr>[<expr>]
    L<k>: store <arr>[<expr>] := <expr>
    L<k>: assume <expr>
    L<k>: assert <expr>
    L<k>: halt

Expressions use infix `+ - * & | ^ == < <=`, prefix `~`, `ite(c,a,b)`,
`zext<w>(e)`, `trunc<w>(e)` and decimal/hex constants.  All arithmetic is
modular in the operand width; comparisons are 1-bit.  Branch targets may
name any instruction label or the one-past-the-end halt label.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class ParseError(Exception):
    """Syntax error, with 1-based source position."""

    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class ValidationError(Exception):
    """A program invariant does not hold."""


MAX_WIDTH = 64
MAX_ARRAY_LEN = 64


# ---------------------------------------------------------------------------
# Expressions

@dataclass(frozen=True)
class Expr:
    width: int


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    value: int


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # add sub mul and or xor eq ult ule
    a: Expr
    b: Expr


@dataclass(frozen=True)
class NotOp(Expr):
    a: Expr


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Extend(Expr):
    op: str  # zext trunc
    a: Expr


ARITH_OPS = {"add", "sub", "mul", "and", "or", "xor"}
CMP_OPS = {"eq", "ult", "ule"}


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, BinOp):
        return expr_vars(e.a) | expr_vars(e.b)
    if isinstance(e, NotOp):
        return expr_vars(e.a)
    if isinstance(e, Ite):
        return expr_vars(e.cond) | expr_vars(e.a) | expr_vars(e.b)
    if isinstance(e, Extend):
        return expr_vars(e.a)
    raise TypeError(f"not an expression: {e!r}")


def eval_expr(e: Expr, env: dict[str, int]) -> int:
    """Evaluate a typed expression; all arithmetic modular in the width."""
    mask = (1 << e.width) - 1
    if isinstance(e, Var):
        return env[e.name] & mask
    if isinstance(e, Const):
        return e.value & mask
    if isinstance(e, BinOp):
        a = eval_expr(e.a, env)
        b = eval_expr(e.b, env)
        if e.op == "add":
            return (a + b) & mask
        if e.op == "sub":
            return (a - b) & mask
        if e.op == "mul":
            return (a * b) & mask
        if e.op == "and":
            return a & b
        if e.op == "or":
            return a | b
        if e.op == "xor":
            return a ^ b
        if e.op == "eq":
            return int(a == b)
        if e.op == "ult":
            return int(a < b)
        if e.op == "ule":
            return int(a <= b)
        raise ValueError(e.op)
    if isinstance(e, NotOp):
        return (~eval_expr(e.a, env)) & mask
    if isinstance(e, Ite):
        return eval_expr(e.a, env) if eval_expr(e.cond, env) else eval_expr(e.b, env)
    if isinstance(e, Extend):
        return eval_expr(e.a, env) & mask
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Instructions and programs

@dataclass(frozen=True)
class Instruction:
    pass


@dataclass(frozen=True)
class Assign(Instruction):
    dest: str
    expr: Expr


@dataclass(frozen=True)
class CondBranch(Instruction):
    cond: Expr
    then_target: int
    else_target: int


@dataclass(frozen=True)
class Goto(Instruction):
    target: int


@dataclass(frozen=True)
class Load(Instruction):
    dest: str
    array: str
    index: Expr


@dataclass(frozen=True)
class Store(Instruction):
    array: str
    index: Expr
    value: Expr


@dataclass(frozen=True)
class Assume(Instruction):
    cond: Expr


@dataclass(frozen=True)
class Assert(Instruction):
    cond: Expr


@dataclass(frozen=True)
class Halt(Instruction):
    pass


@dataclass(frozen=True)
class VarDecl:
    name: str
    width: int
    is_input: bool = False


@dataclass(frozen=True)
class ArrayDecl:
    name: str
    length: int
    elem_width: int


@dataclass(frozen=True)
class Program:
    name: str
    vars: tuple[VarDecl, ...]
    arrays: tuple[ArrayDecl, ...]
    insts: tuple[Instruction, ...]

    entry = 0

    @property
    def halt_label(self) -> int:
        """One past the last instruction; a legal branch target that halts."""
        return len(self.insts)

    @property
    def inputs(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.vars if v.is_input)

    def var_decl(self, name: str) -> VarDecl:
        for v in self.vars:
            if v.name == name:
                return v
        raise KeyError(name)

    def array_decl(self, name: str) -> ArrayDecl:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)


def conditional_instructions(p: Program) -> set[int]:
    """Labels of conditional branches (the set C)."""
    return {i for i, inst in enumerate(p.insts) if isinstance(inst, CondBranch)}


def memory_instructions(p: Program) -> set[int]:
    """Labels of all loads and stores."""
    return {i for i, inst in enumerate(p.insts) if isinstance(inst, (Load, Store))}


def index_width(length: int) -> int:
    """Width of an array's index domain: ceil(log2(length)), minimum 1."""
    return max(1, (length - 1).bit_length())


# ---------------------------------------------------------------------------
# Validation

def validate(p: Program) -> None:
    """Check all Program invariants; raise ValidationError on the first hit."""
    if not p.insts:
        raise ValidationError("program has no instructions")
    names: set[str] = set()
    for v in p.vars:
        if v.name in names:
            raise ValidationError(f"duplicate declaration of '{v.name}'")
        names.add(v.name)
        if not 1 <= v.width <= MAX_WIDTH:
            raise ValidationError(f"variable '{v.name}' width {v.width} out of range 1..{MAX_WIDTH}")
    for a in p.arrays:
        if a.name in names:
            raise ValidationError(f"duplicate declaration of '{a.name}'")
        names.add(a.name)
        if not 1 <= a.elem_width <= MAX_WIDTH:
            raise ValidationError(f"array '{a.name}' element width {a.elem_width} out of range")
        if not 1 <= a.length <= MAX_ARRAY_LEN:
            raise ValidationError(f"array '{a.name}' length {a.length} out of range 1..{MAX_ARRAY_LEN}")

    var_widths = {v.name: v.width for v in p.vars}
    array_decls = {a.name: a for a in p.arrays}

    def check_expr(e: Expr, label: int) -> None:
        if isinstance(e, Var):
            if e.name not in var_widths:
                raise ValidationError(f"L{label}: undeclared variable '{e.name}'")
            if e.width != var_widths[e.name]:
                raise ValidationError(
                    f"L{label}: variable '{e.name}' used at width {e.width}, declared u{var_widths[e.name]}")
        elif isinstance(e, Const):
            if not 1 <= e.width <= MAX_WIDTH:
                raise ValidationError(f"L{label}: constant width {e.width} out of range")
            if not 0 <= e.value < (1 << e.width):
                raise ValidationError(f"L{label}: constant {e.value} does not fit in u{e.width}")
        elif isinstance(e, BinOp):
            check_expr(e.a, label)
            check_expr(e.b, label)
            if e.a.width != e.b.width:
                raise ValidationError(
                    f"L{label}: operand widths differ ({e.a.width} vs {e.b.width}) in '{e.op}'")
            want = 1 if e.op in CMP_OPS else e.a.width
            if e.width != want:
                raise ValidationError(f"L{label}: '{e.op}' result width {e.width}, expected {want}")
        elif isinstance(e, NotOp):
            check_expr(e.a, label)
            if e.width != e.a.width:
                raise ValidationError(f"L{label}: '~' changes width")
        elif isinstance(e, Ite):
            check_expr(e.cond, label)
            check_expr(e.a, label)
            check_expr(e.b, label)
            if e.cond.width != 1:
                raise ValidationError(f"L{label}: ite condition must be 1-bit")
            if e.a.width != e.b.width or e.width != e.a.width:
                raise ValidationError(f"L{label}: ite arm widths disagree")
        elif isinstance(e, Extend):
            check_expr(e.a, label)
            if not 1 <= e.width <= MAX_WIDTH:
                raise ValidationError(f"L{label}: {e.op} width out of range")
            if e.op == "zext" and e.width < e.a.width:
                raise ValidationError(f"L{label}: zext to narrower width")
            if e.op == "trunc" and e.width > e.a.width:
                raise ValidationError(f"L{label}: trunc to wider width")
        else:
            raise ValidationError(f"L{label}: malformed expression node {e!r}")

    def check_target(t: int, label: int) -> None:
        if not 0 <= t <= p.halt_label:
            raise ValidationError(f"L{label}: branch to undefined label L{t}")

    def check_cond(e: Expr, label: int) -> None:
        check_expr(e, label)
        if e.width != 1:
            raise ValidationError(f"L{label}: condition must be 1-bit, got u{e.width}")

    for label, inst in enumerate(p.insts):
        if isinstance(inst, Assign):
            if inst.dest not in var_widths:
                raise ValidationError(f"L{label}: assignment to undeclared variable '{inst.dest}'")
            check_expr(inst.expr, label)
            if inst.expr.width != var_widths[inst.dest]:
                raise ValidationError(
                    f"L{label}: assigning u{inst.expr.width} expression to "
                    f"'{inst.dest}' of width u{var_widths[inst.dest]}")
        elif isinstance(inst, CondBranch):
            check_cond(inst.cond, label)
            check_target(inst.then_target, label)
            check_target(inst.else_target, label)
        elif isinstance(inst, Goto):
            check_target(inst.target, label)
        elif isinstance(inst, Load):
            if inst.dest not in var_widths:
                raise ValidationError(f"L{label}: load into undeclared variable '{inst.dest}'")
            if inst.array not in array_decls:
                raise ValidationError(f"L{label}: load from undeclared array '{inst.array}'")
            check_expr(inst.index, label)
            if var_widths[inst.dest] != array_decls[inst.array].elem_width:
                raise ValidationError(
                    f"L{label}: load of u{array_decls[inst.array].elem_width} element "
                    f"into u{var_widths[inst.dest]} variable")
        elif isinstance(inst, Store):
            if inst.array not in array_decls:
                raise ValidationError(f"L{label}: store into undeclared array '{inst.array}'")
            check_expr(inst.index, label)
            check_expr(inst.value, label)
            if inst.value.width != array_decls[inst.array].elem_width:
                raise ValidationError(
                    f"L{label}: storing u{inst.value.width} value into array of "
                    f"u{array_decls[inst.array].elem_width} elements")
        elif isinstance(inst, (Assume, Assert)):
            check_cond(inst.cond, label)
        elif isinstance(inst, Halt):
            pass
        else:
            raise ValidationError(f"L{label}: unknown instruction {inst!r}")


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#.*)
  | (?P<num>0x[0-9a-fA-F]+|\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|==|<=|[:\[\](),+\-*&|^~<>])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num id op eol
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        pos = 0
        while pos < len(line):
            m = _TOKEN_RE.match(line, pos)
            if m is None:
                raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            pos = m.end()
            if m.lastgroup in ("ws", "comment"):
                continue
            toks.append(_Tok(m.lastgroup, m.group(), lineno, m.start() + 1))
        toks.append(_Tok("eol", "", lineno, len(line) + 1))
    toks.append(_Tok("eol", "", len(text.splitlines()) + 1, 1))
    return toks


# ---------------------------------------------------------------------------
# Parser

_KEYWORDS = {"program", "var", "input", "array", "br", "goto", "load", "store",
             "assume", "assert", "halt", "ite", "zext", "trunc"}


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    # -- token helpers

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def fail(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    def expect_op(self, text: str) -> _Tok:
        t = self.peek()
        if t.kind != "op" or t.text != text:
            raise self.fail(f"expected '{text}', found {t.text!r}")
        return self.next()

    def expect_id(self) -> _Tok:
        t = self.peek()
        if t.kind != "id":
            raise self.fail(f"expected identifier, found {t.text!r}")
        return self.next()

    def expect_num(self) -> int:
        t = self.peek()
        if t.kind != "num":
            raise self.fail(f"expected number, found {t.text!r}")
        self.next()
        return int(t.text, 0)

    def expect_eol(self) -> None:
        t = self.peek()
        if t.kind != "eol":
            raise self.fail(f"trailing input {t.text!r}")
        self.next()

    def skip_blank(self) -> None:
        while self.peek().kind == "eol" and self.pos < len(self.toks) - 1:
            self.next()

    def at_end(self) -> bool:
        return self.pos >= len(self.toks) - 1 and self.peek().kind == "eol"

    def expect_width(self) -> int:
        t = self.expect_id()
        m = re.fullmatch(r"u(\d+)", t.text)
        if not m:
            raise ParseError(f"expected width annotation u<n>, found {t.text!r}", t.line, t.col)
        return int(m.group(1))

    def expect_label_ref(self) -> int:
        t = self.expect_id()
        m = re.fullmatch(r"L(\d+)", t.text)
        if not m:
            raise ParseError(f"expected label L<n>, found {t.text!r}", t.line, t.col)
        return int(m.group(1))

    # -- raw (untyped) expressions; widths are filled in by the typing pass

    def parse_expr(self):
        return self._cmp()

    def _cmp(self):
        a = self._bitor()
        t = self.peek()
        if t.kind == "op" and t.text in ("==", "<", "<="):
            self.next()
            b = self._bitor()
            op = {"==": "eq", "<": "ult", "<=": "ule"}[t.text]
            return ("bin", op, a, b, t)
        return a

    def _binop_chain(self, sub, ops: dict[str, str]):
        a = sub()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in ops:
                self.next()
                b = sub()
                a = ("bin", ops[t.text], a, b, t)
            else:
                return a

    def _bitor(self):
        return self._binop_chain(self._bitxor, {"|": "or"})

    def _bitxor(self):
        return self._binop_chain(self._bitand, {"^": "xor"})

    def _bitand(self):
        return self._binop_chain(self._addsub, {"&": "and"})

    def _addsub(self):
        return self._binop_chain(self._mul, {"+": "add", "-": "sub"})

    def _mul(self):
        return self._binop_chain(self._unary, {"*": "mul"})

    def _unary(self):
        t = self.peek()
        if t.kind == "op" and t.text == "~":
            self.next()
            return ("not", self._unary(), t)
        return self._atom()

    def _atom(self):
        t = self.peek()
        if t.kind == "num":
            self.next()
            return ("const", int(t.text, 0), t)
        if t.kind == "op" and t.text == "(":
            self.next()
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if t.kind == "id":
            if t.text == "ite":
                self.next()
                self.expect_op("(")
                c = self.parse_expr()
                self.expect_op(",")
                a = self.parse_expr()
                self.expect_op(",")
                b = self.parse_expr()
                self.expect_op(")")
                return ("ite", c, a, b, t)
            if t.text in ("zext", "trunc"):
                self.next()
                self.expect_op("<")
                w = self.expect_num()
                self.expect_op(">")
                self.expect_op("(")
                e = self.parse_expr()
                self.expect_op(")")
                return ("ext", t.text, w, e, t)
            if t.text in _KEYWORDS:
                raise ParseError(f"keyword {t.text!r} is not a variable", t.line, t.col)
            self.next()
            return ("var", t.text, t)
        raise self.fail(f"expected expression, found {t.text!r}")


# -- typing of raw expressions

class _Typer:
    def __init__(self, var_widths: dict[str, int]):
        self.var_widths = var_widths

    def _err(self, msg: str, tok: _Tok) -> ParseError:
        return ParseError(msg, tok.line, tok.col)

    def infer(self, raw) -> int | None:
        """Bottom-up width, or None when only constants constrain it."""
        kind = raw[0]
        if kind == "var":
            _, name, tok = raw
            if name not in self.var_widths:
                raise self._err(f"undeclared variable '{name}'", tok)
            return self.var_widths[name]
        if kind == "const":
            return None
        if kind == "bin":
            _, op, a, b, tok = raw
            if op in CMP_OPS:
                return 1
            return self._unify(self.infer(a), self.infer(b), tok)
        if kind == "not":
            return self.infer(raw[1])
        if kind == "ite":
            _, _, a, b, tok = raw
            return self._unify(self.infer(a), self.infer(b), tok)
        if kind == "ext":
            return raw[2]
        raise AssertionError(raw)

    def _unify(self, wa: int | None, wb: int | None, tok: _Tok) -> int | None:
        if wa is None:
            return wb
        if wb is None:
            return wa
        if wa != wb:
            raise self._err(f"operand widths disagree ({wa} vs {wb})", tok)
        return wa

    def check(self, raw, want: int) -> Expr:
        """Top-down width assignment producing a typed expression."""
        kind = raw[0]
        if kind == "var":
            _, name, tok = raw
            w = self.var_widths.get(name)
            if w is None:
                raise self._err(f"undeclared variable '{name}'", tok)
            if w != want:
                raise self._err(f"'{name}' has width u{w}, expected u{want}", tok)
            return Var(w, name)
        if kind == "const":
            _, value, tok = raw
            if not 0 <= value < (1 << want):
                raise self._err(f"constant {value} does not fit in u{want}", tok)
            return Const(want, value)
        if kind == "bin":
            _, op, a, b, tok = raw
            if op in CMP_OPS:
                if want != 1:
                    raise self._err(f"comparison yields u1, expected u{want}", tok)
                wop = self._unify(self.infer(a), self.infer(b), tok)
                if wop is None:
                    raise self._err("cannot infer operand width of comparison", tok)
                return BinOp(1, op, self.check(a, wop), self.check(b, wop))
            return BinOp(want, op, self.check(a, want), self.check(b, want))
        if kind == "not":
            _, a, _tok = raw
            return NotOp(want, self.check(a, want))
        if kind == "ite":
            _, c, a, b, _tok = raw
            return Ite(want, self.check(c, 1), self.check(a, want), self.check(b, want))
        if kind == "ext":
            _, op, w, a, tok = raw
            if w != want:
                raise self._err(f"{op}<{w}> used where u{want} expected", tok)
            wa = self.infer(a)
            if wa is None:
                raise self._err(f"cannot infer operand width of {op}", tok)
            if op == "zext" and w < wa:
                raise self._err(f"zext<{w}> narrows a u{wa} operand", tok)
            if op == "trunc" and w > wa:
                raise self._err(f"trunc<{w}> widens a u{wa} operand", tok)
            return Extend(w, op, self.check(a, wa))
        raise AssertionError(raw)

    def check_inferred(self, raw, tok: _Tok, default: int | None = None) -> Expr:
        w = self.infer(raw)
        if w is None:
            w = default
        if w is None:
            raise self._err("cannot infer expression width from constants alone", tok)
        return self.check(raw, w)


def parse_program(text: str) -> Program:
    """Parse and validate a mini-IR program."""
    ps = _Parser(text)
    ps.skip_blank()
    t = ps.expect_id()
    if t.text != "program":
        raise ParseError("program must start with 'program <name>'", t.line, t.col)
    name = ps.expect_id().text
    ps.expect_eol()

    vars_: list[VarDecl] = []
    arrays: list[ArrayDecl] = []
    insts: list[Instruction] = []
    inst_lines: list[int] = []

    while True:
        ps.skip_blank()
        if ps.at_end():
            break
        t = ps.peek()
        if t.kind != "id":
            raise ps.fail(f"expected declaration or instruction, found {t.text!r}")
        if t.text in ("var", "input"):
            ps.next()
            vname = ps.expect_id().text
            ps.expect_op(":")
            w = ps.expect_width()
            ps.expect_eol()
            vars_.append(VarDecl(vname, w, is_input=(t.text == "input")))
            continue
        if t.text == "array":
            ps.next()
            aname = ps.expect_id().text
            ps.expect_op("[")
            length = ps.expect_num()
            ps.expect_op("]")
            ps.expect_op(":")
            w = ps.expect_width()
            ps.expect_eol()
            arrays.append(ArrayDecl(aname, length, w))
            continue

        # instruction line: L<k>: ...
        m = re.fullmatch(r"L(\d+)", t.text)
        if not m:
            raise ps.fail(f"expected label L<n>, found {t.text!r}")
        label = int(m.group(1))
        if label != len(insts):
            raise ParseError(f"label L{label} out of order, expected L{len(insts)}", t.line, t.col)
        ps.next()
        ps.expect_op(":")
        inst_lines.append(t.line)
        insts.append(_parse_instruction(ps))

    if not insts:
        t = ps.peek()
        raise ParseError("program has no instructions (write an explicit 'halt')", t.line, t.col)

    var_widths = {v.name: v.width for v in vars_}
    array_decls = {a.name: a for a in arrays}
    typer = _Typer(var_widths)
    typed: list[Instruction] = []
    for label, inst in enumerate(insts):
        line = inst_lines[label]
        try:
            typed.append(_type_instruction(inst, typer, var_widths, array_decls, line))
        except KeyError as e:  # undeclared name surfaced during typing
            raise ParseError(f"undeclared name {e.args[0]!r}", line, 1) from None

    prog = Program(name, tuple(vars_), tuple(arrays), tuple(typed))
    validate(prog)
    return prog


def _parse_instruction(ps: _Parser):
    """Parse one instruction body into a raw (untyped) form."""
    t = ps.peek()
    if t.kind != "id":
        raise ps.fail(f"expected instruction, found {t.text!r}")
    if t.text == "br":
        ps.next()
        cond = ps.parse_expr()
        then_t = ps.expect_label_ref()
        else_t = ps.expect_label_ref()
        ps.expect_eol()
        return ("br", cond, then_t, else_t, t)
    if t.text == "goto":
        ps.next()
        target = ps.expect_label_ref()
        ps.expect_eol()
        return ("goto", target, t)
    if t.text == "store":
        ps.next()
        arr = ps.expect_id().text
        ps.expect_op("[")
        idx = ps.parse_expr()
        ps.expect_op("]")
        ps.expect_op(":=")
        val = ps.parse_expr()
        ps.expect_eol()
        return ("store", arr, idx, val, t)
    if t.text == "assume":
        ps.next()
        cond = ps.parse_expr()
        ps.expect_eol()
        return ("assume", cond, t)
    if t.text == "assert":
        ps.next()
        cond = ps.parse_expr()
        ps.expect_eol()
        return ("assert", cond, t)
    if t.text == "halt":
        ps.next()
        ps.expect_eol()
        return ("halt", t)
    if t.text in _KEYWORDS:
        raise ps.fail(f"unexpected keyword {t.text!r}")
    # assignment or load
    dest = ps.expect_id().text
    ps.expect_op(":=")
    t2 = ps.peek()
    if t2.kind == "id" and t2.text == "load":
        ps.next()
        arr = ps.expect_id().text
        ps.expect_op("[")
        idx = ps.parse_expr()
        ps.expect_op("]")
        ps.expect_eol()
        return ("load", dest, arr, idx, t)
    expr = ps.parse_expr()
    ps.expect_eol()
    return ("assign", dest, expr, t)


def _type_instruction(raw, typer: _Typer, var_widths: dict[str, int],
                      array_decls: dict[str, ArrayDecl], line: int) -> Instruction:
    kind = raw[0]
    if kind == "assign":
        _, dest, expr, tok = raw
        if dest not in var_widths:
            raise ParseError(f"assignment to undeclared variable '{dest}'", tok.line, tok.col)
        return Assign(dest, typer.check(expr, var_widths[dest]))
    if kind == "br":
        _, cond, then_t, else_t, _tok = raw
        return CondBranch(typer.check(cond, 1), then_t, else_t)
    if kind == "goto":
        return Goto(raw[1])
    if kind == "load":
        _, dest, arr, idx, tok = raw
        if dest not in var_widths:
            raise ParseError(f"load into undeclared variable '{dest}'", tok.line, tok.col)
        if arr not in array_decls:
            raise ParseError(f"load from undeclared array '{arr}'", tok.line, tok.col)
        # constant-only indexes default to the array's index domain width
        return Load(dest, arr, typer.check_inferred(
            idx, tok, default=index_width(array_decls[arr].length)))
    if kind == "store":
        _, arr, idx, val, tok = raw
        if arr not in array_decls:
            raise ParseError(f"store into undeclared array '{arr}'", tok.line, tok.col)
        return Store(arr, typer.check_inferred(idx, tok,
                                               default=index_width(array_decls[arr].length)),
                     typer.check(val, array_decls[arr].elem_width))
    if kind == "assume":
        return Assume(typer.check(raw[1], 1))
    if kind == "assert":
        return Assert(typer.check(raw[1], 1))
    if kind == "halt":
        return Halt()
    raise AssertionError(raw)


# ---------------------------------------------------------------------------
# Pretty printer (parse . pretty_print is the identity on valid programs)

def pretty_print(p: Program) -> str:
    lines = [f"program {p.name}"]
    for v in p.vars:
        kw = "input" if v.is_input else "var"
        lines.append(f"{kw} {v.name} : u{v.width}")
    for a in p.arrays:
        lines.append(f"array {a.name}[{a.length}] : u{a.elem_width}")
    for label, inst in enumerate(p.insts):
        lines.append(f"L{label}: {_print_inst(inst)}")
    return "\n".join(lines) + "\n"


def _print_inst(inst: Instruction) -> str:
    if isinstance(inst, Assign):
        return f"{inst.dest} := {print_expr(inst.expr)}"
    if isinstance(inst, CondBranch):
        return f"br {print_expr(inst.cond)} L{inst.then_target} L{inst.else_target}"
    if isinstance(inst, Goto):
        return f"goto L{inst.target}"
    if isinstance(inst, Load):
        return f"{inst.dest} := load {inst.array}[{print_expr(inst.index)}]"
    if isinstance(inst, Store):
        return f"store {inst.array}[{print_expr(inst.index)}] := {print_expr(inst.value)}"
    if isinstance(inst, Assume):
        return f"assume {print_expr(inst.cond)}"
    if isinstance(inst, Assert):
        return f"assert {print_expr(inst.cond)}"
    if isinstance(inst, Halt):
        return "halt"
    raise TypeError(inst)


_OP_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "and": "&", "or": "|",
              "xor": "^", "eq": "==", "ult": "<", "ule": "<="}


def print_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, BinOp):
        return f"({print_expr(e.a)} {_OP_SYMBOL[e.op]} {print_expr(e.b)})"
    if isinstance(e, NotOp):
        return f"~{print_expr(e.a)}"
    if isinstance(e, Ite):
        return f"ite({print_expr(e.cond)}, {print_expr(e.a)}, {print_expr(e.b)})"
    if isinstance(e, Extend):
        return f"{e.op}<{e.width}>({print_expr(e.a)})"
    raise TypeError(e)

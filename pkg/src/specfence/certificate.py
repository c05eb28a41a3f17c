"""Self-contained SMT-LIB2 certificates and their independent re-check.

A certificate declares one Bool constant per state bit (current and next
copies, plus transition input bits), defines Init, Tr, Bad, Inv and InvNext
as boolean terms built from shared gate definitions, and ends with three
check blocks asserting the negation of the inductive-invariant conditions:

    (i)   Init -> Inv
    (ii)  Inv & Tr -> Inv'
    (iii) Inv -> not Bad

Each block must report unsat.  The text is a pure function of the system
and invariant (gate names come from traversal order, never from object
identity), so re-export is byte-identical.  check_certificate re-parses the
text from scratch and decides the three queries with the internal solver,
or with any external process that reads SMT-LIB2 on stdin.
"""

from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass

from specfence.encode import TransitionSystem
from specfence.logic import formula as F
from specfence.logic.inductive import primed
from specfence.logic.solver import Model, check_sat


class OracleError(Exception):
    """External solver process failed or spoke an unexpected protocol."""


CERT_VERSION = "specfence-cert-v1"


# ---------------------------------------------------------------------------
# bit naming

def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", name)


class _BitNames:
    def __init__(self, ts: TransitionSystem):
        self.cur: dict[tuple[str, int], str] = {}
        self.nxt: dict[tuple[str, int], str] = {}
        self.inputs: dict[tuple[str, int], str] = {}
        self.comment_rows: list[str] = []
        used: set[str] = set()

        def base(name: str) -> str:
            b = _sanitize(name)
            candidate = b
            n = 2
            while candidate in used:
                candidate = f"{b}_{n}"
                n += 1
            used.add(candidate)
            return candidate

        for v in ts.state_vars:
            b = base(v.name)
            for i in range(v.width):
                self.cur[(v.name, i)] = f"b_{b}_{i}"
                self.nxt[(v.name, i)] = f"bn_{b}_{i}"
            self.comment_rows.append(
                f"; state {v.name} ({v.kind}, u{v.width}): bits b_{b}_0..b_{b}_{v.width - 1},"
                f" next bn_{b}_*")
        seen_inputs: set[str] = set()
        for u in ts.updates:
            for iv in u.inputs:
                if iv.name in seen_inputs:
                    continue
                seen_inputs.add(iv.name)
                b = base(iv.name)
                for i in range(iv.width):
                    self.inputs[(iv.name, i)] = f"i_{b}_{i}"
                self.comment_rows.append(
                    f"; input {iv.name} (u{iv.width}): bits i_{b}_0..i_{b}_{iv.width - 1}")

    def all_symbols(self) -> list[str]:
        return (list(self.cur.values()) + list(self.nxt.values())
                + list(self.inputs.values()))


# ---------------------------------------------------------------------------
# boolean gate builder emitting define-funs

class _SmtGates:
    TRUE = "true"
    FALSE = "false"

    def __init__(self):
        self.defs: list[tuple[str, str]] = []
        self._by_body: dict[str, str] = {}

    def _gate(self, body: str) -> str:
        tok = self._by_body.get(body)
        if tok is None:
            tok = f"g{len(self.defs)}"
            self.defs.append((tok, body))
            self._by_body[body] = tok
        return tok

    def neg(self, a: str) -> str:
        if a == self.TRUE:
            return self.FALSE
        if a == self.FALSE:
            return self.TRUE
        if a.startswith("(not ") and a.endswith(")"):
            return a[5:-1]
        return f"(not {a})"

    def and2(self, a: str, b: str) -> str:
        if a == self.FALSE or b == self.FALSE:
            return self.FALSE
        if a == self.TRUE:
            return b
        if b == self.TRUE:
            return a
        if a == b:
            return a
        if a > b:
            a, b = b, a
        return self._gate(f"(and {a} {b})")

    def or2(self, a: str, b: str) -> str:
        return self.neg(self.and2(self.neg(a), self.neg(b)))

    def xor2(self, a: str, b: str) -> str:
        if a == self.TRUE:
            return self.neg(b)
        if a == self.FALSE:
            return b
        if b == self.TRUE:
            return self.neg(a)
        if b == self.FALSE:
            return a
        if a == b:
            return self.FALSE
        if a > b:
            a, b = b, a
        return self._gate(f"(xor {a} {b})")

    def iff2(self, a: str, b: str) -> str:
        return self.neg(self.xor2(a, b))

    def ite(self, c: str, a: str, b: str) -> str:
        if c == self.TRUE:
            return a
        if c == self.FALSE:
            return b
        if a == b:
            return a
        return self._gate(f"(ite {c} {a} {b})")

    def and_many(self, lits: list[str]) -> str:
        out = []
        for l in lits:
            if l == self.FALSE:
                return self.FALSE
            if l == self.TRUE:
                continue
            out.append(l)
        if not out:
            return self.TRUE
        acc = out[0]
        for l in out[1:]:
            acc = self.and2(acc, l)
        return acc

    def or_many(self, lits: list[str]) -> str:
        return self.neg(self.and_many([self.neg(l) for l in lits]))


class _NodeToSmt:
    """Blast formulas/terms to boolean gate tokens over named bits."""

    def __init__(self, gates: _SmtGates, names: _BitNames, widths: dict[str, int]):
        self.g = gates
        self.names = names
        self.widths = widths
        self._term: dict[int, tuple[str, ...]] = {}
        self._form: dict[int, str] = {}

    def _var_bits(self, name: str, width: int) -> tuple[str, ...]:
        if name.endswith("'"):
            base = name[:-1]
            return tuple(self.names.nxt[(base, i)] for i in range(width))
        if (name, 0) in self.names.cur:
            return tuple(self.names.cur[(name, i)] for i in range(width))
        if (name, 0) in self.names.inputs:
            return tuple(self.names.inputs[(name, i)] for i in range(width))
        raise KeyError(f"unknown variable {name!r} in certificate export")

    def term(self, n: F.Node) -> tuple[str, ...]:
        got = self._term.get(n.nid)
        if got is not None:
            return got
        g = self.g
        op = n.op
        if op == "var":
            bits = self._var_bits(n.aux, n.width)
        elif op == "const":
            bits = tuple(g.TRUE if (n.aux >> i) & 1 else g.FALSE for i in range(n.width))
        elif op in ("add", "sub"):
            a = self.term(n.args[0])
            b = self.term(n.args[1])
            if op == "sub":
                b = tuple(g.neg(x) for x in b)
            carry = g.TRUE if op == "sub" else g.FALSE
            out = []
            for ai, bi in zip(a, b):
                axb = g.xor2(ai, bi)
                out.append(g.xor2(axb, carry))
                carry = g.or2(g.and2(ai, bi), g.and2(carry, axb))
            bits = tuple(out)
        elif op == "mul":
            a = self.term(n.args[0])
            b = self.term(n.args[1])
            w = n.width
            acc = tuple(g.FALSE for _ in range(w))
            for i in range(w):
                partial = tuple(g.FALSE for _ in range(i)) + tuple(
                    g.and2(b[i], a[j]) for j in range(w - i))
                out = []
                carry = g.FALSE
                for x, y in zip(acc, partial):
                    s = g.xor2(x, y)
                    out.append(g.xor2(s, carry))
                    carry = g.or2(g.and2(x, y), g.and2(carry, s))
                acc = tuple(out)
            bits = acc
        elif op == "band":
            bits = tuple(g.and2(x, y) for x, y in zip(self.term(n.args[0]), self.term(n.args[1])))
        elif op == "bor":
            bits = tuple(g.or2(x, y) for x, y in zip(self.term(n.args[0]), self.term(n.args[1])))
        elif op == "bxor":
            bits = tuple(g.xor2(x, y) for x, y in zip(self.term(n.args[0]), self.term(n.args[1])))
        elif op == "bnot":
            bits = tuple(g.neg(x) for x in self.term(n.args[0]))
        elif op == "ite":
            c = self.formula(n.args[0])
            bits = tuple(g.ite(c, x, y)
                         for x, y in zip(self.term(n.args[1]), self.term(n.args[2])))
        elif op == "zext":
            inner = self.term(n.args[0])
            bits = inner + tuple(g.FALSE for _ in range(n.width - len(inner)))
        elif op == "trunc":
            bits = self.term(n.args[0])[: n.width]
        else:
            raise AssertionError(op)
        self._term[n.nid] = bits
        return bits

    def formula(self, n: F.Node) -> str:
        got = self._form.get(n.nid)
        if got is not None:
            return got
        g = self.g
        op = n.op
        if op == "true":
            tok = g.TRUE
        elif op == "false":
            tok = g.FALSE
        elif op == "bvar":
            # convention: "<var>@<bit>" refers to one state bit
            var, _, bit = n.aux.rpartition("@")
            tok = self._var_bits(var, self.widths[var])[int(bit)]
        elif op == "not":
            tok = g.neg(self.formula(n.args[0]))
        elif op == "and":
            tok = g.and_many([self.formula(a) for a in n.args])
        elif op == "or":
            tok = g.or_many([self.formula(a) for a in n.args])
        elif op == "iff":
            tok = g.iff2(self.formula(n.args[0]), self.formula(n.args[1]))
        elif op == "eq":
            a = self.term(n.args[0])
            b = self.term(n.args[1])
            tok = g.and_many([g.iff2(x, y) for x, y in zip(a, b)])
        elif op in ("ult", "ule"):
            a = self.term(n.args[0])
            b = self.term(n.args[1])
            if op == "ule":
                a, b = b, a
            r = g.FALSE
            for ai, bi in zip(a, b):
                r = g.ite(g.xor2(ai, bi), bi, r)
            tok = g.neg(r) if op == "ule" else r
        else:
            raise AssertionError(op)
        self._form[n.nid] = tok
        return tok


# ---------------------------------------------------------------------------
# invariant clause handling (kept in clausal form for mutation testing)

def _invariant_clauses(inv: F.Node) -> list[list[tuple[str, int, bool]]]:
    """Invariant as clauses of (var, bit, positive) literals."""
    def lit_of(n: F.Node) -> tuple[str, int, bool]:
        pos = True
        if n.op == "not":
            pos = False
            n = n.args[0]
        if n.op != "bvar":
            raise ValueError("invariant is not clausal over state bits")
        var, _, bit = n.aux.rpartition("@")
        return var, int(bit), pos

    if inv is F.TRUE:
        return []
    clauses = inv.args if inv.op == "and" else (inv,)
    out = []
    for cl in clauses:
        lits = cl.args if cl.op == "or" else (cl,)
        out.append([lit_of(l) for l in lits])
    return out


def _clause_smt(clause: list[tuple[str, int, bool]], names: _BitNames,
                nxt: bool) -> str:
    table = names.nxt if nxt else names.cur
    toks = [table[(var, bit)] if pos else f"(not {table[(var, bit)]})"
            for var, bit, pos in clause]
    if not toks:
        return "false"
    if len(toks) == 1:
        return toks[0]
    return "(or " + " ".join(toks) + ")"


def _inv_smt(clauses: list[list[tuple[str, int, bool]]], names: _BitNames,
             nxt: bool) -> str:
    if not clauses:
        return "true"
    parts = [_clause_smt(c, names, nxt) for c in clauses]
    if len(parts) == 1:
        return parts[0]
    return "(and " + " ".join(parts) + ")"


# ---------------------------------------------------------------------------
# export

def export_certificate(ts: TransitionSystem, inv: F.Node | None,
                       header_note: str = "") -> str:
    """Serialize system plus invariant; pass inv=None for an encode-only dump."""
    names = _BitNames(ts)
    gates = _SmtGates()
    conv = _NodeToSmt(gates, names, ts.widths())

    init_tok = conv.formula(ts.init_formula())
    tr_tok = conv.formula(ts.tr_formula())
    bad_tok = conv.formula(ts.bad)
    inv_clauses = _invariant_clauses(inv) if inv is not None else None

    lines = [f"; {CERT_VERSION}"]
    if header_note:
        lines.append(f"; {header_note}")
    meta = ts.meta
    mode = str(meta.mode) if meta.mode is not None else "standard"
    lines.append(f"; program {meta.program.name}, mode {mode}, "
                 f"fences [{','.join(ts.active_fences())}]")
    lines.append(f"; vinst {sorted(meta.vinst)}")
    lines.extend(names.comment_rows)
    lines.append("(set-logic QF_BV)")
    for sym in names.all_symbols():
        lines.append(f"(declare-const {sym} Bool)")
    for tok, body in gates.defs:
        lines.append(f"(define-fun {tok} () Bool {body})")
    lines.append(f"(define-fun Init () Bool {init_tok})")
    lines.append(f"(define-fun Tr () Bool {tr_tok})")
    lines.append(f"(define-fun Bad () Bool {bad_tok})")
    if inv_clauses is not None:
        lines.append(f"(define-fun Inv () Bool {_inv_smt(inv_clauses, names, False)})")
        lines.append(f"(define-fun InvNext () Bool {_inv_smt(inv_clauses, names, True)})")
        lines.append("; condition (i): Init -> Inv")
        lines.append("(push 1) (assert (and Init (not Inv))) (check-sat) (pop 1)")
        lines.append("; condition (ii): Inv & Tr -> Inv'")
        lines.append("(push 1) (assert (and Inv Tr (not InvNext))) (check-sat) (pop 1)")
        lines.append("; condition (iii): Inv -> not Bad")
        lines.append("(push 1) (assert (and Inv Bad)) (check-sat) (pop 1)")
        lines.append("; expected: unsat unsat unsat")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# parsing

def _sexp_tokens(text: str):
    for line in text.splitlines():
        line = line.split(";", 1)[0]
        line = line.replace("(", " ( ").replace(")", " ) ")
        yield from line.split()


def _parse_sexps(text: str) -> list:
    stack: list[list] = [[]]
    for tok in _sexp_tokens(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ValueError("unbalanced certificate s-expressions")
    return stack[0]


def _build_formula(sexp, table: dict[str, F.Node]) -> F.Node:
    if isinstance(sexp, str):
        if sexp == "true":
            return F.TRUE
        if sexp == "false":
            return F.FALSE
        if sexp in table:
            return table[sexp]
        return F.bool_var(sexp)
    head = sexp[0]
    args = [_build_formula(a, table) for a in sexp[1:]]
    if head == "and":
        return F.and_(args)
    if head == "or":
        return F.or_(args)
    if head == "not":
        return F.not_(args[0])
    if head == "xor":
        return F.not_(F.iff_(args[0], args[1]))
    if head == "=":
        return F.iff_(args[0], args[1])
    if head == "=>":
        return F.implies(args[0], args[1])
    if head == "ite":
        return F.or_(F.and_(args[0], args[1]), F.and_(F.not_(args[0]), args[2]))
    raise ValueError(f"unsupported operator in certificate: {head}")


@dataclass(frozen=True)
class CheckOutcome:
    passed: bool
    failed_condition: int | None = None  # 1, 2 or 3
    witness: Model | None = None

    def __bool__(self) -> bool:
        return self.passed


def parse_certificate(cert_text: str) -> list[F.Node]:
    """The three check-block formulas (to be shown unsatisfiable)."""
    table: dict[str, F.Node] = {}
    checks: list[F.Node] = []
    pending: F.Node | None = None
    for form in _parse_sexps(cert_text):
        if not isinstance(form, list) or not form:
            continue
        head = form[0]
        if head == "declare-const":
            continue
        if head == "define-fun":
            name = form[1]
            body = form[-1]
            table[name] = _build_formula(body, table)
        elif head == "assert":
            pending = _build_formula(form[1], table)
        elif head == "check-sat":
            if pending is None:
                raise ValueError("check-sat without a preceding assert")
            checks.append(pending)
            pending = None
    if len(checks) != 3:
        raise ValueError(f"expected 3 check blocks, found {len(checks)}")
    return checks


def check_certificate(cert_text: str, solver_cmd: list[str] | None = None,
                      seed: int = 0) -> CheckOutcome:
    """Re-check the three invariant conditions from the certificate text.

    With solver_cmd the script is piped to an external SMT-LIB2 process and
    its three sat/unsat answers are read back; otherwise the internal engine
    decides each block.
    """
    if solver_cmd is not None:
        try:
            proc = subprocess.run(solver_cmd, input=cert_text.encode(),
                                  stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                  timeout=300)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise OracleError(f"external solver failed: {e}") from e
        answers = [t for t in proc.stdout.decode().split()
                   if t in ("sat", "unsat", "unknown")]
        if len(answers) != 3:
            raise OracleError(
                f"expected 3 answers from external solver, got {answers!r} "
                f"(stderr: {proc.stderr.decode()[:200]!r})")
        for i, a in enumerate(answers, start=1):
            if a == "unknown":
                raise OracleError(f"external solver returned unknown on condition {i}")
            if a == "sat":
                return CheckOutcome(False, i, None)
        return CheckOutcome(True)

    for i, f in enumerate(parse_certificate(cert_text), start=1):
        model = check_sat(f, seed=seed)
        if model is not None:
            return CheckOutcome(False, i, model)
    return CheckOutcome(True)


# ---------------------------------------------------------------------------
# mutation helpers (for the certificate mutation test)

def invariant_shape(cert_text: str) -> list[int]:
    """Clause sizes of the Inv definition."""
    for form in _parse_sexps(cert_text):
        if isinstance(form, list) and form[:2] == ["define-fun", "Inv"]:
            clauses = _clauses_of(form[-1])
            return [len(c) for c in clauses]
    raise ValueError("certificate has no Inv definition")


def _clauses_of(body) -> list[list]:
    if body == "true":
        return []
    if isinstance(body, list) and body and body[0] == "and":
        clauses = body[1:]
    else:
        clauses = [body]
    out = []
    for c in clauses:
        if isinstance(c, list) and c and c[0] == "or":
            out.append(c[1:])
        else:
            out.append([c])
    return out


def _render_sexp(x) -> str:
    if isinstance(x, str):
        return x
    return "(" + " ".join(_render_sexp(a) for a in x) + ")"


def _next_name(sym: str) -> str:
    assert sym.startswith("b_"), sym
    return "bn_" + sym[2:]


def mutate_certificate(cert_text: str, clause_idx: int,
                       lit_idx: int | None) -> str:
    """Flip one literal (lit_idx) or delete one clause (lit_idx=None) of Inv."""
    forms = _parse_sexps(cert_text)
    clauses = None
    for form in forms:
        if isinstance(form, list) and form[:2] == ["define-fun", "Inv"]:
            clauses = _clauses_of(form[-1])
    if clauses is None:
        raise ValueError("certificate has no Inv definition")

    if lit_idx is None:
        clauses = clauses[:clause_idx] + clauses[clause_idx + 1:]
    else:
        lit = clauses[clause_idx][lit_idx]
        if isinstance(lit, list):  # (not b)
            clauses[clause_idx][lit_idx] = lit[1]
        else:
            clauses[clause_idx][lit_idx] = ["not", lit]

    def body(nxt: bool) -> str:
        rendered = []
        for c in clauses:
            lits = []
            for l in c:
                if isinstance(l, list):
                    sym = l[1]
                    lits.append(["not", _next_name(sym) if nxt else sym])
                else:
                    lits.append(_next_name(l) if nxt else l)
            rendered.append(lits[0] if len(lits) == 1 else ["or"] + lits)
        if not rendered:
            return "true"
        tree = rendered[0] if len(rendered) == 1 else ["and"] + rendered
        return _render_sexp(tree)

    out_lines = []
    for line in cert_text.splitlines():
        if line.startswith("(define-fun Inv "):
            out_lines.append(f"(define-fun Inv () Bool {body(False)})")
        elif line.startswith("(define-fun InvNext "):
            out_lines.append(f"(define-fun InvNext () Bool {body(True)})")
        else:
            out_lines.append(line)
    return "\n".join(out_lines) + "\n"

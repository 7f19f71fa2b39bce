"""AST, lexer and parser for the function-free ProbLog dialect."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from .errors import ParseError


@dataclass(frozen=True, order=True)
class Term:
    name: str
    is_var: bool = False

    def __str__(self) -> str:
        return self.name


def var(name: str) -> Term:
    return Term(name, True)


def const(name) -> Term:
    return Term(str(name), False)


@dataclass(frozen=True, order=True)
class Atom:
    pred: str
    args: tuple[Term, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return not any(t.is_var for t in self.args)

    def vars(self) -> list[str]:
        return [t.name for t in self.args if t.is_var]

    def values(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.args)

    def __str__(self) -> str:
        if not self.args:
            return self.pred
        return f"{self.pred}({','.join(t.name for t in self.args)})"


def atom(pred: str, *args) -> Atom:
    """Build an atom; string args starting uppercase or '_' become variables."""
    terms = []
    for a in args:
        if isinstance(a, Term):
            terms.append(a)
        else:
            s = str(a)
            terms.append(Term(s, s[:1].isupper() or s[:1] == "_"))
    return Atom(pred, tuple(terms))


@dataclass(frozen=True, order=True)
class Literal:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"\\+{self.atom}"


@dataclass(frozen=True, order=True)
class Constraint:
    lhs: Term
    op: str  # "=" or "\\="
    rhs: Term

    def __str__(self) -> str:
        return f"{self.lhs}{self.op}{self.rhs}"


def _norm_constraint(lhs: Term, op: str, rhs: Term) -> Constraint:
    if not lhs.is_var and rhs.is_var:
        lhs, rhs = rhs, lhs
    return Constraint(lhs, op, rhs)


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...] = ()
    cstr: tuple[Constraint, ...] = ()
    prob: Fraction | None = None

    def vars(self) -> list[str]:
        """Variables in order of first occurrence (head, body, constraints)."""
        seen: dict[str, None] = {}
        for t in self.head.args:
            if t.is_var:
                seen.setdefault(t.name)
        for lit in self.body:
            for t in lit.atom.args:
                if t.is_var:
                    seen.setdefault(t.name)
        for c in self.cstr:
            for t in (c.lhs, c.rhs):
                if t.is_var:
                    seen.setdefault(t.name)
        return list(seen)

    def pos_vars(self) -> set[str]:
        out = {v for lit in self.body if lit.positive for v in lit.atom.vars()}
        out |= {c.lhs.name for c in self.cstr if c.op == "=" and c.lhs.is_var and not c.rhs.is_var}
        return out

    def __str__(self) -> str:
        s = str(self.head)
        if self.prob is not None:
            s = f"{fmt_prob(self.prob)}::{s}"
        parts = [str(lit) for lit in self.body] + [str(c) for c in self.cstr]
        if parts:
            s += " :- " + ", ".join(parts)
        return s + "."


@dataclass(frozen=True)
class Clause:
    """One clause statement: heads carry optional probabilities; more than
    one head makes an annotated disjunction."""

    heads: tuple[tuple[Fraction | None, Atom], ...]
    body: tuple[Literal, ...] = ()
    cstr: tuple[Constraint, ...] = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    @property
    def is_ad(self) -> bool:
        return len(self.heads) > 1

    def __str__(self) -> str:
        hs = []
        for p, a in self.heads:
            hs.append(str(a) if p is None else f"{fmt_prob(p)}::{a}")
        s = "; ".join(hs)
        parts = [str(lit) for lit in self.body] + [str(c) for c in self.cstr]
        if parts:
            s += " :- " + ", ".join(parts)
        return s + "."


@dataclass(frozen=True)
class Evidence:
    atom: Atom
    value: bool
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def __str__(self) -> str:
        return f"evidence({self.atom},{'true' if self.value else 'false'})."


@dataclass
class Program:
    statements: list = field(default_factory=list)
    arity: dict[str, int] = field(default_factory=dict)

    @property
    def domain(self) -> set[str]:
        out = set()
        for st in self.statements:
            for a in _statement_atoms(st):
                out.update(t.name for t in a.args if not t.is_var)
            if isinstance(st, Clause):
                for c in st.cstr:
                    out.update(t.name for t in (c.lhs, c.rhs) if not t.is_var)
        return out

    @property
    def predicates(self) -> set[str]:
        return set(self.arity)

    def clauses(self) -> list[Clause]:
        return [s for s in self.statements if isinstance(s, Clause)]

    def evidence(self) -> list[Evidence]:
        return [s for s in self.statements if isinstance(s, Evidence)]

    def __str__(self) -> str:
        return "".join(str(s) + "\n" for s in self.statements)

    def __eq__(self, other) -> bool:
        return isinstance(other, Program) and self.statements == other.statements


def _statement_atoms(st) -> Iterator[Atom]:
    if isinstance(st, Evidence):
        yield st.atom
        return
    for _, a in st.heads:
        yield a
    for lit in st.body:
        yield lit.atom


def fmt_prob(p: Fraction) -> str:
    p = Fraction(p)
    if p.denominator == 1:
        return str(p.numerator)
    # print terminating decimals as decimals, everything else as p/q
    d, k = p.denominator, 0
    for f in (2, 5):
        while d % f == 0:
            d //= f
            k += 1
    if d == 1 and k <= 30:
        sign = "-" if p < 0 else ""
        digits = str(abs(p.numerator) * 10 ** k // p.denominator).rjust(k + 1, "0")
        return f"{sign}{digits[:-k]}.{digits[-k:]}".rstrip("0")
    return f"{p.numerator}/{p.denominator}"


# ---------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<decimal>\d+\.\d+)
  | (?P<integer>\d+)
  | (?P<string>'(?:[^'\\\n]|\\.)*'|"(?:[^"\\\n]|\\.)*")
  | (?P<variable>[A-Z_][A-Za-z0-9_]*)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<op>:-|::|\\\+|\\=|[=(),;./])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.arity: dict[str, int] = {}

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.kind in ("op",) and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not (self.tok.kind == "op" and self.tok.text == text):
            got = self.tok.text or "end of input"
            self.error(f"expected {text!r}, got {got!r}")
        t = self.tok
        self.i += 1
        return t

    def term(self) -> Term:
        t = self.tok
        if t.kind == "variable":
            self.i += 1
            return Term(t.text, True)
        if t.kind in ("ident", "integer", "string"):
            self.i += 1
            return Term(t.text, False)
        self.error(f"expected a term, got {t.text or 'end of input'!r}")

    def atom(self) -> Atom:
        t = self.tok
        if t.kind != "ident":
            self.error(f"expected a predicate name, got {t.text or 'end of input'!r}")
        self.i += 1
        args: list[Term] = []
        if self.accept("("):
            args.append(self.term())
            while self.accept(","):
                args.append(self.term())
            self.expect(")")
        a = Atom(t.text, tuple(args))
        self._check_arity(a, t)
        return a

    def _check_arity(self, a: Atom, t: Token):
        known = self.arity.setdefault(a.pred, a.arity)
        if known != a.arity:
            self.error(f"predicate {a.pred} used with arity {a.arity}, first used with arity {known}", t)

    def prob(self) -> Fraction:
        t = self.tok
        if t.kind == "decimal":
            self.i += 1
            v = Fraction(t.text)
        elif t.kind == "integer":
            self.i += 1
            if self.accept("/"):
                d = self.tok
                if d.kind != "integer":
                    self.error("expected an integer denominator")
                self.i += 1
                if int(d.text) == 0:
                    self.error("zero denominator", d)
                v = Fraction(int(t.text), int(d.text))
            else:
                v = Fraction(int(t.text))
        else:
            self.error(f"expected a probability, got {t.text or 'end of input'!r}")
        if not 0 <= v <= 1:
            self.error(f"probability {v} outside [0,1]", t)
        return v

    def _has_prob_prefix(self) -> bool:
        # prob "::" lookahead
        j = self.i
        k = self.toks[j].kind
        if k == "decimal":
            j += 1
        elif k == "integer":
            j += 1
            if self.toks[j].text == "/" and self.toks[j + 1].kind == "integer":
                j += 2
        else:
            return False
        return self.toks[j].kind == "op" and self.toks[j].text == "::"

    def annotated_atom(self) -> tuple[Fraction | None, Atom]:
        p = None
        if self._has_prob_prefix():
            p = self.prob()
            self.expect("::")
        return p, self.atom()

    def element(self, body: list, cstr: list):
        if self.accept("\\+"):
            body.append(Literal(self.atom(), False))
            return
        t = self.tok
        nxt = self.toks[self.i + 1]
        if t.kind == "ident" and not (nxt.kind == "op" and nxt.text in ("=", "\\=")):
            body.append(Literal(self.atom(), True))
            return
        lhs = self.term()
        op = self.tok
        if not (op.kind == "op" and op.text in ("=", "\\=")):
            self.error("expected '=' or '\\='")
        self.i += 1
        rhs = self.term()
        cstr.append(_norm_constraint(lhs, op.text, rhs))

    def statement(self):
        start = self.tok
        if (start.kind == "ident" and start.text == "evidence"
                and self.toks[self.i + 1].text == "("):
            self.i += 2
            a = self.atom()
            if not a.is_ground():
                self.error("evidence atom must be ground", start)
            self.expect(",")
            v = self.tok
            if v.text not in ("true", "false"):
                self.error("expected true or false")
            self.i += 1
            self.expect(")")
            self.expect(".")
            return Evidence(a, v.text == "true", start.line, start.col)
        heads = [self.annotated_atom()]
        while self.accept(";"):
            p, a = self.annotated_atom()
            heads.append((p, a))
        if len(heads) > 1 and any(p is None for p, _ in heads):
            self.error("every head of an annotated disjunction needs a probability", start)
        body: list[Literal] = []
        cstr: list[Constraint] = []
        if self.accept(":-"):
            self.element(body, cstr)
            while self.accept(","):
                self.element(body, cstr)
        self.expect(".")
        cl = Clause(tuple(heads), tuple(body), tuple(cstr), start.line, start.col)
        self._validate(cl, start)
        return cl

    def _validate(self, cl: Clause, tok: Token):
        total = sum((p for p, _ in cl.heads if p is not None), Fraction(0))
        if total > 1:
            self.error(f"annotated disjunction probabilities sum to {total} > 1", tok)
        bound = {v for lit in cl.body if lit.positive for v in lit.atom.vars()}
        bound |= {c.lhs.name for c in cl.cstr
                  if c.op == "=" and c.lhs.is_var and not c.rhs.is_var}
        # X = Y with one side bound binds the other
        changed = True
        while changed:
            changed = False
            for c in cl.cstr:
                if c.op == "=" and c.lhs.is_var and c.rhs.is_var:
                    if (c.lhs.name in bound) != (c.rhs.name in bound):
                        bound |= {c.lhs.name, c.rhs.name}
                        changed = True
        for _, h in cl.heads:
            free = [v for v in h.vars() if v not in bound]
            if free:
                self.error(f"unsafe clause: head variable {free[0]} not bound by a positive body literal", tok)
        for c in cl.cstr:
            for t in (c.lhs, c.rhs):
                if t.is_var and t.name not in bound:
                    self.error(f"unsafe clause: constraint variable {t.name} is unbound", tok)

    def run(self) -> Program:
        self._clause_preds: set[str] = set()
        stmts = []
        while self.tok.kind != "eof":
            st = self.statement()
            stmts.append(st)
            if isinstance(st, Clause):
                for a in _statement_atoms(st):
                    self._clause_preds.add(a.pred)
        for st in stmts:
            if isinstance(st, Evidence) and st.atom.pred not in self._clause_preds:
                raise ParseError(f"evidence on unknown predicate {st.atom.pred}", st.line, st.col)
        return Program(stmts, dict(self.arity))


def parse_program(text: str) -> Program:
    return _Parser(text).run()


def parse_atom(text: str, arity: dict[str, int] | None = None) -> Atom:
    p = _Parser(text)
    if arity:
        p.arity.update(arity)
    a = p.atom()
    if p.tok.kind != "eof":
        p.error(f"trailing input {p.tok.text!r}")
    return a


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    if p.tok.kind != "eof":
        p.error(f"trailing input {p.tok.text!r}")
    return t


def atoms_of(statements: Iterable) -> Iterator[Atom]:
    for st in statements:
        yield from _statement_atoms(st)

"""Relational calculus sentences: parsing, normal-form checks, translation
into logic programming rules, and evaluation over a database state."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Iterable, Union

from .errors import NotNF, ParseError
from .syntax import Atom, Literal, Rule, Term

# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Not:
    sub: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


Formula = Union[Atom, And, Or, Not, Exists]


def show(f: Formula) -> str:
    if isinstance(f, Atom):
        return str(f)
    if isinstance(f, Not):
        inner = show(f.sub)
        return f"!{inner}" if isinstance(f.sub, Atom) else f"!({inner})"
    if isinstance(f, Exists):
        return f"exists {f.var}. {show(f.body)}"
    op = " & " if isinstance(f, And) else " | "
    parts = []
    for side, s in (("l", f.left), ("r", f.right)):
        t = show(s)
        if (isinstance(f, And) and isinstance(s, Or)) or (isinstance(s, Exists) and side == "l"):
            t = f"({t})"
        parts.append(t)
    return op.join(parts)


def free_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset(f.vars())
    if isinstance(f, Not):
        return free_vars(f.sub)
    if isinstance(f, Exists):
        return free_vars(f.body) - {f.var}
    return free_vars(f.left) | free_vars(f.right)


def atoms(f: Formula) -> list[Atom]:
    if isinstance(f, Atom):
        return [f]
    if isinstance(f, Not):
        return atoms(f.sub)
    if isinstance(f, Exists):
        return atoms(f.body)
    return atoms(f.left) + atoms(f.right)


def as_literals(f: Formula) -> list[tuple[Atom, bool]] | None:
    """Ground-literal conjunction view of f, or None."""
    if isinstance(f, Atom):
        return [(f, True)] if f.is_ground() else None
    if isinstance(f, Not) and isinstance(f.sub, Atom):
        return [(f.sub, False)] if f.sub.is_ground() else None
    if isinstance(f, And):
        l, r = as_literals(f.left), as_literals(f.right)
        if l is not None and r is not None:
            return l + r
    return None


# ---------------------------------------------------------------- parser

_TOK = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<str>'(?:[^'\\\n]|\\.)*'|"(?:[^"\\\n]|\\.)*")
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<id>[a-z][A-Za-z0-9_]*)
  | (?P<op>\\\+|\\=|[&|!(),.=¬∧∨])
""", re.VERBOSE)

_OPS = {"¬": "!", "\\+": "!", "∧": "&", "∨": "|"}


def _tokens(text: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", 1, pos + 1)
        if m.lastgroup != "ws":
            t = m.group()
            out.append((m.lastgroup, _OPS.get(t, t), pos + 1))
        pos = m.end()
    out.append(("eof", "", pos + 1))
    return out


class _SentenceParser:
    def __init__(self, text: str, arity: dict[str, int] | None):
        self.toks = _tokens(text)
        self.i = 0
        self.arity = dict(arity or {})

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg: str):
        raise ParseError(msg, 1, self.tok[2])

    def accept(self, text: str) -> bool:
        if self.tok[0] in ("op", "id") and self.tok[1] == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            self.error(f"expected {text!r}, got {self.tok[1] or 'end of input'!r}")

    def disj(self) -> Formula:
        if self.tok[0] == "id" and self.tok[1] in ("exists", "forall"):
            return self.quant()
        f = self.conj()
        while self.accept("|"):
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.accept("&"):
            f = And(f, self.unary())
        return f

    def quant(self) -> Formula:
        kw = self.tok[1]
        self.i += 1
        if kw == "forall":
            raise NotNF(1, "universal quantifiers are not allowed")
        names = []
        while True:
            if self.tok[0] != "var":
                self.error("expected a variable after 'exists'")
            names.append(self.tok[1])
            self.i += 1
            if not self.accept(","):
                break
        self.expect(".")
        body = self.disj()
        for v in reversed(names):
            body = Exists(v, body)
        return body

    def unary(self) -> Formula:
        if self.accept("!"):
            return Not(self.unary())
        if self.tok[0] == "id" and self.tok[1] in ("exists", "forall"):
            return self.quant()
        if self.accept("("):
            f = self.disj()
            self.expect(")")
            return f
        return self.atom()

    def term(self) -> Term:
        kind, text, _ = self.tok
        if kind == "var":
            self.i += 1
            return Term(text, True)
        if kind in ("id", "num", "str"):
            self.i += 1
            return Term(text, False)
        self.error(f"expected a term, got {text or 'end of input'!r}")

    def atom(self) -> Atom:
        kind, name, _ = self.tok
        if kind != "id":
            self.error(f"expected an atom, got {name or 'end of input'!r}")
        self.i += 1
        args = []
        if self.accept("("):
            args.append(self.term())
            while self.accept(","):
                args.append(self.term())
            self.expect(")")
        if self.tok[1] in ("=", "\\="):
            raise NotNF(5, "equality and inequality terms are not allowed")
        known = self.arity.setdefault(name, len(args))
        if known != len(args):
            self.error(f"predicate {name} used with arity {len(args)}, expected {known}")
        return Atom(name, tuple(args))


def parse_formula(text: str, arity: dict[str, int] | None = None) -> Formula:
    p = _SentenceParser(text, arity)
    if p.tok[0] == "eof":
        p.error("empty sentence")
    f = p.disj()
    if p.tok[0] == "eof" or (p.tok[1] == "." and p.toks[p.i + 1][0] == "eof"):
        return f
    p.error(f"trailing input {p.tok[1]!r}")


def check_nf(f: Formula, allow_ground_negation: bool = False) -> None:
    bound: set[str] = set()

    def walk(g: Formula, guarded: bool):
        if isinstance(g, Atom):
            return
        if isinstance(g, Not):
            ground_lit = isinstance(g.sub, Atom) and g.sub.is_ground()
            if not guarded and not (allow_ground_negation and ground_lit):
                raise NotNF(2, f"negation {show(g)} must be guarded as ψ & !γ")
            walk(g.sub, False)
            return
        if isinstance(g, Exists):
            if g.var in bound:
                raise NotNF(4, f"variable {g.var} is bound by more than one quantifier")
            bound.add(g.var)
            walk(g.body, False)
            return
        if isinstance(g, Or):
            if free_vars(g.left) != free_vars(g.right):
                raise NotNF(3, f"disjuncts of {show(g)} have different free variables")
            walk(g.left, False)
            walk(g.right, False)
            return
        # conjunction: a negated side must be covered by the other side
        for a, b in ((g.left, g.right), (g.right, g.left)):
            if isinstance(b, Not):
                if not free_vars(b) <= free_vars(a) and not (
                        allow_ground_negation and isinstance(b.sub, Atom) and b.sub.is_ground()):
                    raise NotNF(2, f"negation {show(b)} is not guarded: free variables "
                                   f"{sorted(free_vars(b) - free_vars(a))} do not occur in {show(a)}")
        walk(g.left, isinstance(g.left, Not) and free_vars(g.left) <= free_vars(g.right))
        walk(g.right, isinstance(g.right, Not) and free_vars(g.right) <= free_vars(g.left))

    walk(f, False)


def parse_sentence(text: str, arity: dict[str, int] | None = None,
                   allow_ground_negation: bool = False) -> Formula:
    """Parse and validate a closed NF sentence.  With allow_ground_negation,
    negated ground atoms may stand anywhere (literal queries and secrets)."""
    f = parse_formula(text, arity)
    check_nf(f, allow_ground_negation)
    fv = free_vars(f)
    if fv:
        raise ParseError(f"sentence has free variables {sorted(fv)}")
    return f


# ---------------------------------------------------------------- translation


def _size(f: Formula) -> int:
    if isinstance(f, Atom):
        return 1
    if isinstance(f, Not):
        return 1 + _size(f.sub)
    if isinstance(f, Exists):
        return 1 + _size(f.body)
    return 1 + _size(f.left) + _size(f.right)


def _subformulas(f: Formula) -> list[Formula]:
    """Translated sub-formulas in pre-order; a negated ground atom outside a
    guarded conjunction is kept as one unit."""
    out: list[Formula] = []

    def walk(g: Formula, guarded: bool):
        if isinstance(g, Not):
            if guarded:
                walk(g.sub, False)
            else:
                out.append(g)
            return
        out.append(g)
        if isinstance(g, Exists):
            walk(g.body, False)
        elif isinstance(g, (And, Or)):
            walk(g.left, isinstance(g, And) and isinstance(g.left, Not))
            walk(g.right, isinstance(g, And) and isinstance(g.right, Not))

    walk(f, False)
    return out


@dataclass
class Translation:
    rules: list[Rule]
    head: Atom  # 0-ary for sentences
    names: dict[int, str]


def pl_translate(f: Formula, taken: Iterable[str] = (), tag: str | None = None) -> Translation:
    """Rules defining one fresh predicate per sub-formula, smallest first."""
    subs = _subformulas(f)
    order = sorted(range(len(subs)), key=lambda i: (_size(subs[i]), i))
    tag = tag or hashlib.sha1(show(f).encode()).hexdigest()[:6]
    taken = set(taken)
    name_of: dict[int, str] = {}
    for n, i in enumerate(order, start=1):
        name = f"h{n}_{tag}"
        while name in taken:
            name += "_"
        taken.add(name)
        name_of[id(subs[i])] = name

    def head(g: Formula) -> Atom:
        return Atom(name_of[id(g)], tuple(Term(v, True) for v in sorted(free_vars(g))))

    def ref(g: Formula) -> Literal:
        if isinstance(g, Not) and id(g) not in name_of:
            return Literal(head(g.sub), False)
        return Literal(head(g))

    rules: list[Rule] = []
    for i in order:
        g = subs[i]
        h = head(g)
        if isinstance(g, Atom):
            rules.append(Rule(h, (Literal(g),)))
        elif isinstance(g, Not):
            rules.append(Rule(h, (Literal(g.sub, False),)))
        elif isinstance(g, And):
            rules.append(Rule(h, (ref(g.left), ref(g.right))))
        elif isinstance(g, Or):
            rules.append(Rule(h, (ref(g.left),)))
            rules.append(Rule(h, (ref(g.right),)))
        else:
            rules.append(Rule(h, (ref(g.body),)))
    # the ordering places the whole formula last
    return Translation(rules, head(f), {i: name_of[id(subs[i])] for i in range(len(subs))})


# ---------------------------------------------------------------- evaluation


def evaluate(f: Formula, db: set[Atom], domain: Iterable[str] | None = None) -> bool:
    """Truth of a sentence in a finite database state (closed world)."""
    if domain is None:
        dom = {t.name for a in db for t in a.args} | {t.name for a in atoms(f) for t in a.args if not t.is_var}
    else:
        dom = set(domain)
    dom = sorted(dom)
    facts = {(a.pred, a.values()) for a in db}

    def ev(g: Formula, env: dict[str, str]) -> bool:
        if isinstance(g, Atom):
            return (g.pred, tuple(env[t.name] if t.is_var else t.name for t in g.args)) in facts
        if isinstance(g, Not):
            return not ev(g.sub, env)
        if isinstance(g, And):
            return ev(g.left, env) and ev(g.right, env)
        if isinstance(g, Or):
            return ev(g.left, env) or ev(g.right, env)
        return any(ev(g.body, {**env, g.var: c}) for c in dom)

    return ev(f, {})


def negate(f: Formula) -> Formula:
    return f.sub if isinstance(f, Not) else Not(f)


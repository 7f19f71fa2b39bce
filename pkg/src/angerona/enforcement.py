"""The Angerona policy decision point: policies, histories, knowledge and
the secure/pox/decide procedures."""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .analysis import analyze
from .bn import compile
from .core import CoreProgram, desugar
from .errors import AngeronaError, ParseError, ZeroEvidence
from .inference import Model
from .oracle import Oracle
from .polytree import PolytreeEngine
from .rc import Formula, Not, as_literals, evaluate, parse_sentence, pl_translate, show
from .syntax import Atom, Program, parse_atom

BORDERLINE = 1e-9


class BorderlineThreshold(UserWarning):
    """A float belief landed within 1e-9 of a threshold; the PDP denied."""


class InconsistentHistory(UserWarning):
    """The user's history has probability zero under their belief program."""


# ---------------------------------------------------------------- policy


@dataclass(frozen=True)
class Secret:
    users: frozenset[str]
    cofinite: bool  # True: applies to every user NOT in users
    sentence: Formula
    threshold: Fraction
    text: str = ""

    def applies(self, user: str) -> bool:
        return (user in self.users) != self.cofinite

    def __str__(self) -> str:
        who = f"USERS NOT IN {{{','.join(sorted(self.users))}}}" if self.cofinite else next(iter(self.users))
        return f"SECRET {show(self.sentence)} FOR {who} THRESHOLD {self.threshold}"


@dataclass
class Policy:
    secrets: list[Secret] = field(default_factory=list)

    def secrets_for(self, user: str) -> list[Secret]:
        return [s for s in self.secrets if s.applies(user)]


_SECRET = re.compile(r"SECRET\s+(?P<s>.+?)\s+FOR\s+(?P<who>USERS\s+NOT\s+IN\s*\{[^}]*\}|\S+)"
                     r"\s+THRESHOLD\s+(?P<t>\S+)\s*$")


def _threshold(text: str) -> Fraction:
    try:
        t = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"bad threshold {text!r}")
    if not 0 <= t <= 1:
        raise ParseError(f"threshold {text} outside [0,1]")
    return t


def parse_policy(text: str, arity: dict[str, int] | None = None) -> Policy:
    out = []
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith(("#", "%")):
            continue
        m = _SECRET.match(s)
        if not m:
            raise ParseError(f"expected 'SECRET <sentence> FOR <user> THRESHOLD <p>'", n, 1)
        who = m.group("who")
        try:
            phi = parse_sentence(m.group("s"), arity, allow_ground_negation=True)
        except ParseError as e:
            raise ParseError(e.msg, n, e.col) from None
        if who.startswith("USERS"):
            inner = who[who.index("{") + 1:who.index("}")]
            users = frozenset(u.strip() for u in inner.split(",") if u.strip())
            sec = Secret(users, True, phi, _threshold(m.group("t")), s)
        else:
            sec = Secret(frozenset([who]), False, phi, _threshold(m.group("t")), s)
        out.append(sec)
    return Policy(out)


@dataclass(frozen=True)
class Query:
    user: str
    sentence: Formula
    text: str


def parse_query_line(line: str, arity: dict[str, int] | None = None) -> Query:
    if ":" not in line:
        raise ParseError("expected '<user>: <sentence>'")
    user, rest = line.split(":", 1)
    user = user.strip()
    if not user:
        raise ParseError("missing user")
    return Query(user, parse_sentence(rest.strip(), arity, allow_ground_negation=True), rest.strip())


def parse_db(text: str) -> set[Atom]:
    out = set()
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith(("%", "#")):
            continue
        s = s.rstrip(".")
        try:
            a = parse_atom(s)
        except ParseError as e:
            raise ParseError(e.msg, n, e.col) from None
        if not a.is_ground():
            raise ParseError(f"database atom {a} is not ground", n, 1)
        out.add(a)
    return out


# ---------------------------------------------------------------- history


@dataclass(frozen=True)
class Event:
    user: str
    query: Formula
    decision: bool
    result: bool | None  # None stands for the dagger of a denied query

    def __post_init__(self):
        if not self.decision and self.result is not None:
            raise ValueError("a denied event carries no result")

    def to_json(self) -> dict:
        return {"user": self.user, "query": show(self.query), "decision": self.decision, "result": self.result}


History = list[Event]

# a knowledge item is a sentence with the polarity it was observed with
Knowledge = list[tuple[Formula, bool]]


def knowledge(h: Sequence[Event], user: str) -> Knowledge:
    return [(e.query, e.result) for e in h if e.user == user and e.decision]


def show_item(f: Formula, pol: bool) -> str:
    return show(f) if pol else f"!({show(f)})"


class Journal:
    """Append-only per-user event log; the history is rebuilt from it."""

    def __init__(self, directory: str | Path, arity: dict[str, int] | None = None):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.arity = arity

    def _file(self, user: str) -> Path:
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", user)
        return self.dir / f"{safe}.jsonl"

    def append(self, e: Event):
        with open(self._file(e.user), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")

    def load(self) -> History:
        out: History = []
        for f in sorted(self.dir.glob("*.jsonl")):
            for line in f.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    d = json.loads(line)
                    q = parse_sentence(d["query"], self.arity, allow_ground_negation=True)
                    out.append(Event(d["user"], q, d["decision"], d["result"]))
        return out


# ---------------------------------------------------------------- attacker model


class AtkModel:
    def __init__(self, default: str | Program | CoreProgram, per_user: dict[str, str | Program | CoreProgram] | None = None):
        self.default = Model(default)
        self.per_user = {u: Model(p) for u, p in (per_user or {}).items()}

    def model(self, user: str) -> Model:
        return self.per_user.get(user, self.default)

    def check_positive(self, preds: Iterable[str] | None = None) -> bool | None:
        """Every constraint-free state of the schema gets positive mass under
        each belief program; None when a program is above the world limit."""
        from .errors import TooManyWorlds
        ok = True
        for m in [self.default] + list(self.per_user.values()):
            try:
                dist = m.oracle.distribution(preds)
            except TooManyWorlds:
                warnings.warn("belief program too large for the positivity check; skipped")
                return None
            atoms = sorted({a for s in dist for a in s})
            ok &= len(dist) == 2 ** len(atoms) and all(p > 0 for p in dist.values())
        return ok


# ---------------------------------------------------------------- PDP


def compose(core: CoreProgram, know: Knowledge, target: Formula) -> tuple[CoreProgram, Atom]:
    """The belief program extended with PL rules for every knowledge item
    (observed as evidence on its head) and for the target sentence."""
    taken = set(core.arity)
    rules, evidence = [], []
    for f, v in know:
        t = pl_translate(f, taken)
        taken |= {r.head.pred for r in t.rules}
        rules += [r for r in t.rules if r not in rules]
        evidence.append((t.head, v))
    t = pl_translate(target, taken)
    rules += [r for r in t.rules if r not in rules]
    return core.with_rules(rules, evidence), t.head


@dataclass
class Decision:
    user: str
    text: str
    permit: bool | None  # None when the query could not be parsed
    result: bool | None = None
    error: str | None = None
    beliefs: dict[str, object] | None = None
    engine: str | None = None

    def line(self) -> str:
        if self.error:
            return f"ERROR {self.error}"
        if not self.permit:
            return "DENY"
        return f"PERMIT {'TRUE' if self.result else 'FALSE'}"


class PDP:
    def __init__(self, atk: AtkModel, policy: Policy, engine: str = "auto"):
        if engine not in ("auto", "polytree", "oracle"):
            raise ValueError(f"unknown engine {engine}")
        self.atk, self.policy, self.engine = atk, policy, engine
        self._composed: dict = {}
        self.last_engine: str | None = None

    # ------------------------------------------------------------ beliefs

    def belief(self, user: str, know: Knowledge, target: Formula, pol: bool = True):
        """P(target has truth value pol | knowledge)."""
        m = self.atk.model(user)
        if self.engine != "oracle":
            lit_t = as_literals(target)
            items = [(as_literals(f), v) for f, v in know]
            simple = lit_t is not None and all(l is not None for l, _ in items)
            negs = [l for l, v in items if not v and len(l) > 1] if simple else []
            if simple and len(negs) <= 10 and m.tractable():
                pos = [x for l, v in items if v for x in l]
                pos += [(a, not s) for l, v in items if not v and len(l) == 1 for a, s in l]
                ev = list(m.core.evidence) + pos
                self.last_engine = "polytree"
                return m.bn_conditional(lit_t, ev, negs, target_negated=not pol)
            if self.engine == "polytree" and not m.tractable():
                raise AngeronaError("belief program is not relaxed acyclic; the poly-tree engine cannot run")
        return self._composed_belief(m, know, target, pol)

    def _composed_belief(self, m: Model, know: Knowledge, target: Formula, pol: bool):
        key = (id(m), tuple((show(f), v) for f, v in know), show(target), pol)
        hit = self._composed.get(key)
        if hit is not None:
            self.last_engine = hit[1]
            return hit[0]
        core, head = compose(m.core, know, target)
        val, used = None, "oracle"
        if self.engine != "oracle":
            sub = Model(core)
            if sub.tractable():
                val, used = sub.bn_conditional([(head, pol)], list(core.evidence)), "polytree"
            elif self.engine == "polytree":
                raise AngeronaError("composed program is not relaxed acyclic; the poly-tree engine cannot run")
        if val is None:
            val = Oracle(core).query_prob([(head, pol)])
        self._composed[key] = (val, used)
        self.last_engine = used
        return val

    # ------------------------------------------------------------ decision procedure

    def _below(self, p, l: Fraction, inner: bool) -> bool:
        if isinstance(p, Fraction):
            return p < l
        if abs(p - float(l)) <= BORDERLINE:
            if inner:
                warnings.warn(f"belief {p!r} within {BORDERLINE} of threshold {l}; denying", BorderlineThreshold)
                return False
            return True  # keep checking a secret that may still be intact
        return p < float(l)

    def secure(self, h: Sequence[Event], user: str, secret: Secret, inner: bool = True) -> bool:
        try:
            p = self.belief(user, knowledge(h, user), secret.sentence)
        except ZeroEvidence:
            if inner:
                warnings.warn("conditioning on a zero-probability history; denying", InconsistentHistory)
            return not inner
        return self._below(p, secret.threshold, inner)

    def pox(self, h: Sequence[Event], user: str, q: Formula, outcome: bool = True) -> bool:
        try:
            return self.belief(user, knowledge(h, user), q, outcome) > 0
        except ZeroEvidence:
            return False

    def decide(self, h: Sequence[Event], user: str, q: Formula) -> bool:
        secrets = self.policy.secrets_for(user)
        if not secrets:
            return True
        pox_t = pox_f = None
        know = knowledge(h, user)
        for s in secrets:
            try:
                p = self.belief(user, know, s.sentence)
            except ZeroEvidence:
                # the history is impossible under the belief program, so no belief is defined
                warnings.warn(f"history of {user} has probability zero under the belief program; denying",
                              InconsistentHistory)
                return False
            if not self._below(p, s.threshold, inner=False):
                continue  # already violated
            if pox_t is None:
                pox_t = self.pox(h, user, q, True)
                pox_f = self.pox(h, user, q, False)
            if pox_t and not self.secure(list(h) + [Event(user, q, True, True)], user, s):
                return False
            if pox_f and not self.secure(list(h) + [Event(user, q, True, False)], user, s):
                return False
        return True

    def beliefs(self, h: Sequence[Event], user: str) -> dict[str, object]:
        out = {}
        for s in self.policy.secrets_for(user):
            try:
                out[show(s.sentence)] = self.belief(user, knowledge(h, user), s.sentence)
            except ZeroEvidence:
                out[show(s.sentence)] = None
        return out


def run_session(pdp: PDP, db: set[Atom], lines: Iterable[str], history: History | None = None,
                journal: Journal | None = None, audit: bool = False) -> list[Decision]:
    h: History = list(history or [])
    arity = dict(pdp.atk.default.core.arity)
    out = []
    for raw in lines:
        s = raw.strip()
        if not s or s.startswith(("#", "%")):
            continue
        try:
            q = parse_query_line(s, arity)
        except (ParseError, AngeronaError) as e:
            out.append(Decision(s.split(":", 1)[0].strip(), s, None, error=str(e)))
            continue
        permit = pdp.decide(h, q.user, q.sentence)
        result = evaluate(q.sentence, db) if permit else None
        ev = Event(q.user, q.sentence, permit, result)
        h.append(ev)
        if journal:
            journal.append(ev)
        d = Decision(q.user, q.text, permit, result, engine=pdp.last_engine)
        if audit:
            d.beliefs = pdp.beliefs(h, q.user)
        out.append(d)
    return out

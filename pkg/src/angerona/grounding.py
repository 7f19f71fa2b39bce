"""Relaxed grounding (semi-naive bottom-up) and the ground graph."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .core import CoreProgram
from .errors import ValidationError
from .syntax import Atom, Literal, Rule, Term


@dataclass(frozen=True, order=True)
class GroundRule:
    rule: int
    head: Atom
    body: tuple[Literal, ...]

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(map(str, self.body))}."


@dataclass
class GroundingResult:
    atoms: set[Atom]
    instances: dict[int, list[GroundRule]]
    switch_atoms: dict[Atom, Fraction] = field(default_factory=dict)

    def all_instances(self) -> Iterator[GroundRule]:
        for k in sorted(self.instances):
            yield from self.instances[k]

    def prob_atoms(self, core: CoreProgram) -> dict[Atom, Fraction]:
        out = dict(core.prob_atoms)
        out.update(self.switch_atoms)
        return out

    def dump(self) -> str:
        lines = ["% atoms"] + sorted(map(str, self.atoms)) + ["% instances"]
        for k in sorted(self.instances):
            lines += [f"r{k}: {gr}" for gr in self.instances[k]]
        return "\n".join(lines) + "\n"


def _match(args: tuple[Term, ...], tup: tuple[str, ...], env: dict[str, str]) -> dict[str, str] | None:
    new = None
    for t, v in zip(args, tup):
        if t.is_var:
            cur = env.get(t.name) if new is None else new.get(t.name)
            if cur is None:
                if new is None:
                    new = dict(env)
                new[t.name] = v
            elif cur != v:
                return None
        elif t.name != v:
            return None
    return env if new is None else new


def _subst(a: Atom, env: dict[str, str]) -> Atom:
    if a.is_ground():
        return a
    return Atom(a.pred, tuple(Term(env[t.name]) if t.is_var else t for t in a.args))


class _Relations:
    def __init__(self):
        self.rows: dict[str, set[tuple[str, ...]]] = defaultdict(set)
        self.idx: dict[tuple[str, tuple[int, ...]], dict[tuple, list]] = {}
        self.by_pred: dict[str, list[tuple[int, ...]]] = defaultdict(list)

    def add(self, pred: str, tup: tuple[str, ...]) -> bool:
        rows = self.rows[pred]
        if tup in rows:
            return False
        rows.add(tup)
        for pos in self.by_pred[pred]:
            self.idx[(pred, pos)].setdefault(tuple(tup[i] for i in pos), []).append(tup)
        return True

    def lookup(self, pred: str, pos: tuple[int, ...], key: tuple) -> list | set:
        if not pos:
            return self.rows[pred]
        ix = self.idx.get((pred, pos))
        if ix is None:
            ix = {}
            for tup in self.rows[pred]:
                ix.setdefault(tuple(tup[i] for i in pos), []).append(tup)
            self.idx[(pred, pos)] = ix
            self.by_pred[pred].append(pos)
        return ix.get(key, ())


class _RulePlan:
    def __init__(self, k: int, rule: Rule, switches: dict[str, Fraction]):
        self.k, self.rule = k, rule
        self.gens = [i for i, l in enumerate(rule.body) if l.positive and l.atom.pred not in switches]

    def solve(self, rel: _Relations, env: dict[str, str], todo: list[int]) -> Iterator[dict[str, str]]:
        env = _propagate(self.rule, env)
        if env is None:
            return
        if not todo:
            yield env
            return
        # pick the literal with the most bound argument positions
        best, best_pos = None, None
        for i in todo:
            args = self.rule.body[i].atom.args
            pos = tuple(j for j, t in enumerate(args) if not t.is_var or t.name in env)
            if best is None or len(pos) > len(best_pos):
                best, best_pos = i, pos
                if len(pos) == len(args):
                    break
        a = self.rule.body[best].atom
        key = tuple(env[a.args[j].name] if a.args[j].is_var else a.args[j].name for j in best_pos)
        rest = [i for i in todo if i != best]
        for tup in list(rel.lookup(a.pred, best_pos, key)):
            e2 = _match(a.args, tup, env)
            if e2 is not None:
                yield from self.solve(rel, e2, rest)


def _propagate(rule: Rule, env: dict[str, str]) -> dict[str, str] | None:
    """Apply equality bindings and check every constraint whose sides are bound."""
    if not rule.cstr:
        return env
    changed = True
    while changed:
        changed = False
        for c in rule.cstr:
            l = env.get(c.lhs.name) if c.lhs.is_var else c.lhs.name
            r = env.get(c.rhs.name) if c.rhs.is_var else c.rhs.name
            if l is None or r is None:
                if c.op == "=" and (l is not None or r is not None):
                    env = dict(env)
                    if l is None:
                        env[c.lhs.name] = r
                    else:
                        env[c.rhs.name] = l
                    changed = True
                continue
            if (l == r) != (c.op == "="):
                return None
    return env


def relaxed_ground(p: CoreProgram) -> GroundingResult:
    rel = _Relations()
    atoms: set[Atom] = set()
    delta: dict[str, set[tuple[str, ...]]] = defaultdict(set)
    for a in p.prob_atoms:
        if rel.add(a.pred, a.values()):
            atoms.add(a)
            delta[a.pred].add(a.values())
    plans = [_RulePlan(k, r, p.switches) for k, r in enumerate(p.rules)]
    seen: set[GroundRule] = set()
    instances: dict[int, list[GroundRule]] = defaultdict(list)
    switch_atoms: dict[Atom, Fraction] = {}

    def emit(plan: _RulePlan, env: dict[str, str], new_delta):
        r = plan.rule
        for lit in r.body:
            for v in lit.atom.vars():
                if v not in env:
                    raise ValidationError(f"rule {r} is not negation-guarded: {v} unbound")
        body = tuple(Literal(_subst(l.atom, env), l.positive) for l in r.body)
        pos = {l.atom for l in body if l.positive}
        if any(not l.positive and l.atom in pos for l in body):
            return
        gr = GroundRule(plan.k, _subst(r.head, env), body)
        if gr in seen:
            return
        seen.add(gr)
        instances[plan.k].append(gr)
        for l in body:
            if l.atom.pred in p.switches and l.atom not in switch_atoms:
                switch_atoms[l.atom] = p.switches[l.atom.pred]
                atoms.add(l.atom)
        h = gr.head
        if rel.add(h.pred, h.values()):
            atoms.add(h)
            new_delta[h.pred].add(h.values())

    first = True
    while delta or first:
        new_delta: dict[str, set[tuple[str, ...]]] = defaultdict(set)
        for plan in plans:
            if not plan.gens:
                if first:
                    for env in plan.solve(rel, {}, []):
                        emit(plan, env, new_delta)
                continue
            for i in plan.gens:
                a = plan.rule.body[i].atom
                d = delta.get(a.pred)
                if not d:
                    continue
                rest = [j for j in plan.gens if j != i]
                for tup in list(d):
                    env = _match(a.args, tup, {})
                    if env is not None:
                        for e2 in plan.solve(rel, env, rest):
                            emit(plan, e2, new_delta)
        first = False
        delta = {k: v for k, v in new_delta.items() if v}
    out = {k: sorted(v) for k, v in instances.items()}
    return GroundingResult(atoms, out, switch_atoms)


# ---------------------------------------------------------------- ground graph


@dataclass
class GroundGraph:
    atoms: list[Atom]
    instance_nodes: list[tuple[int, int, int]]  # (rule, instance index, body position)
    edges: list[tuple[object, object]]

    def is_forest(self, merge_duplicates: bool = False) -> bool:
        """Union-find check that the undirected graph has no cycle.  With
        merge_duplicates, repeated body atoms of one instance count once."""
        parent: dict = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        edges = self.edges
        if merge_duplicates:
            edges = _merged_edges(self)
        for u, v in edges:
            ru, rv = find(u), find(v)
            if ru == rv:
                return False
            parent[ru] = rv
        return True


def _merged_edges(g: GroundGraph):
    out, seen = [], set()
    for u, v in g.edges:
        if isinstance(u, Atom) and isinstance(v, tuple):
            key = (u, v[0], v[1])
            if key in seen:
                continue
            seen.add(key)
            out.append((u, (v[0], v[1])))
        elif isinstance(v, Atom) and isinstance(u, tuple):
            key = ("h", u[0], u[1])
            if key in seen:
                continue
            seen.add(key)
            out.append(((u[0], u[1]), v))
    return out


def ground_graph(p: CoreProgram, g: GroundingResult | None = None) -> GroundGraph:
    g = g or relaxed_ground(p)
    nodes: list[tuple[int, int, int]] = []
    edges = []
    for k in sorted(g.instances):
        for n, gr in enumerate(g.instances[k]):
            for j, lit in enumerate(gr.body, start=1):
                node = (k, n, j)
                nodes.append(node)
                if lit.atom in g.atoms:
                    edges.append((lit.atom, node))
                edges.append((node, gr.head))
    return GroundGraph(sorted(g.atoms), nodes, edges)

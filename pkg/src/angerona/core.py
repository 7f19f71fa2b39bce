"""Core programs: desugaring of probabilistic rules and annotated
disjunctions into switch atoms, and predicate-level stratification."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import networkx as nx

from .errors import NegativeCycle, ValidationError
from .syntax import Atom, Clause, Literal, Program, Rule, Term, parse_program


@dataclass(frozen=True)
class ADGroup:
    """Rules produced from one annotated disjunction, in disjunct order."""

    rules: tuple[int, ...]
    switches: tuple[str, ...]
    probs: tuple[Fraction, ...]
    source: int


@dataclass
class CoreProgram:
    prob_atoms: dict[Atom, Fraction]
    rules: list[Rule]
    evidence: list[tuple[Atom, bool]] = field(default_factory=list)
    # switch predicate -> probability; instantiated lazily by the grounder
    switches: dict[str, Fraction] = field(default_factory=dict)
    arity: dict[str, int] = field(default_factory=dict)
    user_preds: frozenset[str] = frozenset()
    ad_groups: list[ADGroup] = field(default_factory=list)
    rule_source: list[int] = field(default_factory=list)

    @cached_property
    def stratification(self) -> dict[str, int] | None:
        """Predicate-level μ, or None when only a ground-level stratification
        can exist (the oracle then stratifies ground atoms instead)."""
        try:
            return stratify(self)
        except NegativeCycle:
            return None

    @property
    def predicates(self) -> set[str]:
        return set(self.arity)

    def is_switch(self, pred: str) -> bool:
        return pred in self.switches

    def defined_preds(self) -> set[str]:
        return {r.head.pred for r in self.rules}

    def fact_preds(self) -> set[str]:
        """Predicates with no rule having them as head."""
        return self.predicates - self.defined_preds()

    def with_rules(self, extra: list[Rule], evidence: list[tuple[Atom, bool]] | None = None,
                   arity: dict[str, int] | None = None) -> "CoreProgram":
        ar = dict(self.arity)
        for r in extra:
            for a in [r.head] + [l.atom for l in r.body]:
                ar.setdefault(a.pred, a.arity)
        if arity:
            ar.update(arity)
        return CoreProgram(
            dict(self.prob_atoms), list(self.rules) + list(extra),
            list(self.evidence) + list(evidence or []), dict(self.switches), ar,
            self.user_preds | {r.head.pred for r in extra}, list(self.ad_groups),
            list(self.rule_source) + [-1] * len(extra))

    def __str__(self) -> str:
        lines = []
        for a in sorted(self.prob_atoms, key=str):
            p = self.prob_atoms[a]
            lines.append(f"{a}." if p == 1 else str(Rule(a, prob=p)))
        for name in sorted(self.switches):
            lines.append(f"% switch {name} with probability {self.switches[name]}")
        lines += [str(r) for r in self.rules]
        lines += [f"evidence({a},{'true' if v else 'false'})." for a, v in self.evidence]
        return "\n".join(lines) + "\n"


def merge_prob(v1: Fraction, v2: Fraction) -> Fraction:
    return 1 - (1 - v1) * (1 - v2)


def _fresh(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name += "_"
    taken.add(name)
    return name


def desugar(p: Program | str) -> CoreProgram:
    if isinstance(p, str):
        p = parse_program(p)
    arity = dict(p.arity)
    taken = set(arity)
    prob_atoms: dict[Atom, Fraction] = {}
    rules: list[Rule] = []
    sources: list[int] = []
    switches: dict[str, Fraction] = {}
    groups: list[ADGroup] = []

    def add_atom(a: Atom, v: Fraction):
        prob_atoms[a] = merge_prob(prob_atoms[a], v) if a in prob_atoms else v

    for k, st in enumerate(p.statements, start=1):
        if not isinstance(st, Clause):
            continue
        if len(st.heads) == 1:
            v, h = st.heads[0]
            plain = not st.body and not st.cstr
            if plain and h.is_ground():
                add_atom(h, Fraction(1) if v is None else v)
                continue
            if v is None or v == 1:
                rules.append(Rule(h, st.body, st.cstr))
                sources.append(k)
                continue
            rv = Rule(h, st.body, st.cstr).vars()
            name = _fresh(f"sw{k}", taken)
            switches[name] = v
            arity[name] = len(rv)
            sw = Atom(name, tuple(Term(x, True) for x in rv))
            rules.append(Rule(h, st.body + (Literal(sw),), st.cstr))
            sources.append(k)
            continue
        # annotated disjunction: chained switches
        probe = Rule(st.heads[0][1], st.body + tuple(Literal(a) for _, a in st.heads[1:]), st.cstr)
        rv = probe.vars()
        args = tuple(Term(x, True) for x in rv)
        names, probs, idx = [], [], []
        seen = Fraction(0)
        for i, (v, h) in enumerate(st.heads, start=1):
            if v > 0 and seen == 1:
                raise ValidationError(f"statement {k}: annotated disjunction renormalization divides by zero")
            pi = Fraction(0) if v == 0 else v / (1 - seen)
            seen += v
            name = _fresh(f"sw{k}_{i}", taken)
            switches[name] = pi
            arity[name] = len(rv)
            chain = tuple(Literal(Atom(n, args), False) for n in names)
            names.append(name)
            probs.append(pi)
            rules.append(Rule(h, st.body + chain + (Literal(Atom(name, args)),), st.cstr))
            sources.append(k)
            idx.append(len(rules) - 1)
        groups.append(ADGroup(tuple(idx), tuple(names), tuple(probs), k))

    evidence = [(e.atom, e.value) for e in p.evidence()]
    return CoreProgram(prob_atoms, rules, evidence, switches, arity,
                       frozenset(p.arity), groups, sources)


def predicate_graph(rules: list[Rule]) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    for r in rules:
        g.add_node(r.head.pred)
        for lit in r.body:
            g.add_edge(lit.atom.pred, r.head.pred, neg=not lit.positive)
    return g


def stratify(p: CoreProgram) -> dict[str, int]:
    """μ(a) = maximum number of negative edges on a path ending in a."""
    g = predicate_graph(p.rules)
    g.add_nodes_from(p.arity)
    comp = {}
    for i, scc in enumerate(nx.strongly_connected_components(g)):
        for n in scc:
            comp[n] = i
    for u, v, d in g.edges(data=True):
        if d["neg"] and comp[u] == comp[v]:
            sub = g.subgraph([n for n in g if comp[n] == comp[u]])
            try:
                path = nx.shortest_path(sub, v, u)
            except nx.NetworkXNoPath:
                path = [u]
            raise NegativeCycle(path + [path[0]] if len(path) > 1 or u == v else path)
    cond = nx.condensation(nx.DiGraph(g), scc=None)
    members = cond.graph["mapping"]
    level = {c: 0 for c in cond}
    # edge weights between components: max over the underlying edges
    w: dict[tuple[int, int], int] = {}
    for u, v, d in g.edges(data=True):
        cu, cv = members[u], members[v]
        if cu != cv:
            w[(cu, cv)] = max(w.get((cu, cv), 0), int(d["neg"]))
    for c in nx.topological_sort(cond):
        for s in cond.successors(c):
            level[s] = max(level[s], level[c] + w[(c, s)])
    return {n: level[members[n]] for n in g}

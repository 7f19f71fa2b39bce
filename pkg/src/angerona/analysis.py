"""Static acyclicity analysis: dependency graphs, ORD/DIS/UNQ annotation
derivation, propagation maps, rule connectivity and guard checking."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import networkx as nx

from .errors import CycleBudgetExceeded
from .syntax import Atom, Literal, Rule

MAX_KEY_ARITY = 8
DEFAULT_CYCLE_BUDGET = 10_000

Rel = dict[int, frozenset[int]]  # 1-based positions, multi-valued partial map


# ---------------------------------------------------------------- programs


@dataclass
class AProgram:
    """A program as seen by the analysis: rules with non-empty bodies plus
    the ground tuples of every predicate that has facts."""

    rules: list[Rule]
    facts: dict[str, set[tuple[str, ...]]]
    arity: dict[str, int]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.labels:
            self.labels = [f"r{i}" for i in range(len(self.rules))]
        for r in self.rules:
            for a in [r.head] + [l.atom for l in r.body]:
                self.arity.setdefault(a.pred, a.arity)

    @property
    def preds(self) -> set[str]:
        return set(self.arity)

    def rules_for(self, pred: str) -> list[Rule]:
        return [r for r in self.rules if r.head.pred == pred]

    def defined(self) -> set[str]:
        return {r.head.pred for r in self.rules}


def negation_guarded(r: Rule) -> bool:
    pv = r.pos_vars()
    for c in r.cstr:
        if c.op == "=" and c.lhs.is_var and c.rhs.is_var and (c.lhs.name in pv or c.rhs.name in pv):
            pv |= {c.lhs.name, c.rhs.name}
    return all(v in pv for l in r.body if not l.positive for v in l.atom.vars())


# ---------------------------------------------------------------- dependency graph


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    rule: int
    pos: int  # 1-based body position
    dst: str

    def label(self, labels: list[str] | None = None) -> str:
        r = labels[self.rule] if labels else f"r{self.rule}"
        return f"{self.src} -({r},{self.pos})-> {self.dst}"


@dataclass
class DependencyGraph:
    nodes: set[str]
    edges: list[Edge]

    def nx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.nodes)
        for e in self.edges:
            g.add_edge(e.src, e.dst, key=(e.rule, e.pos), edge=e)
        return g


def dependency_graph(p) -> DependencyGraph:
    rules = p.rules
    nodes = set(getattr(p, "arity", {}))
    edges = []
    for k, r in enumerate(rules):
        nodes.add(r.head.pred)
        for i, lit in enumerate(r.body, start=1):
            nodes.add(lit.atom.pred)
            edges.append(Edge(lit.atom.pred, k, i, r.head.pred))
    return DependencyGraph(nodes, edges)


def _scc_map(rules: list[Rule], preds: Iterable[str]) -> dict[str, int]:
    g = nx.DiGraph()
    g.add_nodes_from(preds)
    for r in rules:
        for l in r.body:
            g.add_edge(l.atom.pred, r.head.pred)
    out = {}
    for i, c in enumerate(nx.strongly_connected_components(g)):
        for n in c:
            out[n] = i
    return out


# ---------------------------------------------------------------- annotations


@dataclass(frozen=True, order=True)
class Annotation:
    kind: str  # ORD | DIS | UNQ
    preds: tuple[str, ...]
    key: tuple[int, ...] = ()

    def __str__(self) -> str:
        if self.kind == "ORD":
            return "ORD({" + ",".join(self.preds) + "})"
        if self.kind == "DIS":
            return f"DIS({self.preds[0]},{self.preds[1]})"
        return f"UNQ({self.preds[0]},{{{','.join(map(str, self.key))}}})"


def ORD(*preds: str) -> Annotation:
    return Annotation("ORD", tuple(sorted(preds)))


def DIS(a: str, b: str) -> Annotation:
    return Annotation("DIS", tuple(sorted((a, b))))


def UNQ(pred: str, key: Iterable[int]) -> Annotation:
    return Annotation("UNQ", (pred,), tuple(sorted(key)))


@dataclass
class Template:
    trace: dict[Annotation, str] = field(default_factory=dict)

    def add(self, a: Annotation, why: str) -> bool:
        if a in self.trace:
            return False
        self.trace[a] = why
        return True

    def __contains__(self, a: Annotation) -> bool:
        return a in self.trace

    def __iter__(self) -> Iterator[Annotation]:
        return iter(sorted(self.trace))

    def __len__(self) -> int:
        return len(self.trace)

    def keys(self, pred: str, arity: int | None = None) -> list[tuple[int, ...]]:
        """UNQ keys of pred, smallest first.  0-ary predicates are trivially
        unique and report the empty key."""
        ks = [a.key for a in self.trace if a.kind == "UNQ" and a.preds[0] == pred]
        if arity == 0:
            ks.append(())
        return sorted(ks, key=lambda k: (len(k), k))

    def dis_pairs(self) -> list[tuple[str, str]]:
        out = []
        for a in self.trace:
            if a.kind == "DIS":
                x, y = a.preds
                out.append((x, y))
                if x != y:
                    out.append((y, x))
        return sorted(out)

    def ords(self) -> list[tuple[str, ...]]:
        return sorted(a.preds for a in self.trace if a.kind == "ORD")

    def has_dis(self, a: str, b: str) -> bool:
        return DIS(a, b) in self.trace


def _subsets(n: int) -> list[tuple[int, ...]]:
    out = []
    for k in range(1, n + 1):
        out.extend(itertools.combinations(range(1, n + 1), k))
    return out


def _ord_ok(rels: list[set[tuple[str, ...]]], half: int) -> bool:
    g = nx.DiGraph()
    for rel in rels:
        for t in rel:
            u, v = t[:half], t[half:]
            if u == v:
                return False
            g.add_edge(u, v)
    return nx.is_directed_acyclic_graph(g)


def _eq_closure(r: Rule, seed: set[str]) -> set[str]:
    out = set(seed)
    changed = True
    while changed:
        changed = False
        for c in r.cstr:
            if c.op != "=":
                continue
            if c.lhs.is_var and not c.rhs.is_var and c.lhs.name not in out:
                out.add(c.lhs.name)
                changed = True
            elif c.lhs.is_var and c.rhs.is_var and (c.lhs.name in out) != (c.rhs.name in out):
                out |= {c.lhs.name, c.rhs.name}
                changed = True
    return out


def _const_vars(r: Rule) -> set[str]:
    return _eq_closure(r, set())


def derive_annotations(p: AProgram, max_ord_size: int = 3) -> Template:
    T = Template()
    arity = p.arity
    defined = p.defined()
    fact_only = sorted(pr for pr in p.preds if pr not in defined)
    scc = _scc_map(p.rules, p.preds)
    by_head: dict[str, list[Rule]] = defaultdict(list)
    for r in p.rules:
        by_head[r.head.pred].append(r)

    def lower(b: str, pr: str) -> bool:
        return scc[b] != scc[pr]

    # base UNQ, plus the always-valid full key
    for pr in sorted(p.preds):
        n = arity[pr]
        if n == 0:
            continue
        T.add(UNQ(pr, range(1, n + 1)), "full key")
        if pr in defined or n > MAX_KEY_ARITY:
            continue
        rows = p.facts.get(pr, set())
        for K in _subsets(n):
            idx = [i - 1 for i in K]
            proj = {tuple(t[i] for i in idx) for t in rows}
            if len(proj) == len(rows):
                T.add(UNQ(pr, K), "base: key over facts")

    # base DIS
    by_ar: dict[int, list[str]] = defaultdict(list)
    for pr in fact_only:
        by_ar[arity[pr]].append(pr)
    for n, ps in by_ar.items():
        for a, b in itertools.combinations_with_replacement(ps, 2):
            ra, rb = p.facts.get(a, set()), p.facts.get(b, set())
            if a == b and ra:
                continue
            if ra.isdisjoint(rb):
                T.add(DIS(a, b), "base: disjoint facts")

    # base ORD
    cand = [pr for pr in fact_only if arity[pr] > 0 and arity[pr] % 2 == 0]
    singles = [pr for pr in cand if _ord_ok([p.facts.get(pr, set())], arity[pr] // 2)]
    for pr in singles:
        T.add(ORD(pr), "base: acyclic fact relation")
    for size in range(2, max_ord_size + 1):
        for combo in itertools.combinations(singles, size):
            if len({arity[c] for c in combo}) != 1:
                continue
            if _ord_ok([p.facts.get(c, set()) for c in combo], arity[combo[0]] // 2):
                T.add(ORD(*combo), "base: acyclic union of fact relations")

    # inductive rules, saturated
    def covers(pr: str) -> list[set[str]] | None:
        if pr not in defined:
            return [{pr}]
        if p.facts.get(pr):
            return None
        out = []
        for r in by_head[pr]:
            out.append({l.atom.pred for l in r.body
                        if l.positive and l.atom.args == r.head.args and lower(l.atom.pred, pr)})
        return out

    def unq_holds(pr: str, K: tuple[int, ...]) -> bool:
        rules = by_head[pr]
        n = arity[pr]
        for r in rules:
            seed = {r.head.args[i - 1].name for i in K if r.head.args[i - 1].is_var}
            det = _eq_closure(r, seed)
            changed = True
            while changed:
                changed = False
                for l in r.body:
                    if not l.positive or not lower(l.atom.pred, pr):
                        continue
                    lv = set(l.atom.vars())
                    if lv <= det:
                        continue
                    for k in T.keys(l.atom.pred, l.atom.arity):
                        if all(not l.atom.args[i - 1].is_var or l.atom.args[i - 1].name in det for i in k):
                            det |= lv
                            det = _eq_closure(r, det)
                            changed = True
                            break
            need = {t.name for i, t in enumerate(r.head.args, start=1) if i not in K and t.is_var}
            if not need <= det:
                return False
        if len(K) < n:
            heads = [r.head.args for r in rules]
            heads += [tuple(_ct(v) for v in t) for t in p.facts.get(pr, set())]
            for h1, h2 in itertools.combinations(heads, 2):
                if not any(not h1[i - 1].is_var and not h2[i - 1].is_var
                           and h1[i - 1].name != h2[i - 1].name for i in K):
                    return False
        return True

    changed = True
    while changed:
        changed = False
        for pr in sorted(defined):
            n = arity[pr]
            if n == 0 or n > MAX_KEY_ARITY:
                continue
            for K in _subsets(n):
                if UNQ(pr, K) not in T and unq_holds(pr, K):
                    changed |= T.add(UNQ(pr, K), "inductive: head key determines body")
        cov = {pr: covers(pr) for pr in p.preds}
        for n, ps in itertools.groupby(sorted(p.preds, key=lambda x: (arity[x], x)), key=lambda x: arity[x]):
            ps = list(ps)
            for a, b in itertools.combinations(ps, 2):
                if DIS(a, b) in T or (a not in defined and b not in defined):
                    continue
                ca, cb = cov[a], cov[b]
                if not ca or not cb:
                    continue
                if all(any(T.has_dis(x, y) for x in c1 for y in c2) for c1 in ca for c2 in cb):
                    changed |= T.add(DIS(a, b), "inductive: subset of disjoint relations")
        for A in T.ords():
            for pr_old in A:
                for pr in sorted(defined):
                    if pr in A or arity[pr] != arity[pr_old] or p.facts.get(pr):
                        continue
                    rs = by_head[pr]
                    if rs and all(any(l.positive and l.atom.pred == pr_old and l.atom.args == r.head.args
                                      for l in r.body) for r in rs) and lower(pr_old, pr):
                        new = ORD(*((set(A) - {pr_old}) | {pr}))
                        changed |= T.add(new, f"inductive: {pr} is a subset of {pr_old}")
    return T


def _ct(v: str):
    from .syntax import Term
    return Term(v, False)


# ---------------------------------------------------------------- maps


def _rel_vertical(r: Rule, lit: Literal) -> Rel:
    out: dict[int, set[int]] = defaultdict(set)
    for i, t in enumerate(lit.atom.args, start=1):
        if t.is_var:
            for j, h in enumerate(r.head.args, start=1):
                if h == t:
                    out[i].add(j)
    return {k: frozenset(v) for k, v in out.items()}


def _rel_horizontal(l1: Literal, l2: Literal) -> Rel:
    out: dict[int, set[int]] = defaultdict(set)
    for i, t in enumerate(l1.atom.args, start=1):
        if t.is_var:
            for j, u in enumerate(l2.atom.args, start=1):
                if u == t:
                    out[i].add(j)
    return {k: frozenset(v) for k, v in out.items()}


def _as_map(rel: Rel) -> dict[int, int]:
    return {k: min(v) for k, v in sorted(rel.items())}


def vertical_map(r: Rule, lit: Literal) -> dict[int, int]:
    return _as_map(_rel_vertical(r, lit))


def horizontal_map(r: Rule, lit: Literal, lit2: Literal) -> dict[int, int]:
    return _as_map(_rel_horizontal(lit, lit2))


def _compose(a: Rel, b: Rel) -> Rel:
    out = {}
    for k, vs in a.items():
        s = frozenset(z for v in vs for z in b.get(v, ()))
        if s:
            out[k] = s
    return out


def _inverse(a: Rel) -> Rel:
    out: dict[int, set[int]] = defaultdict(set)
    for k, vs in a.items():
        for v in vs:
            out[v].add(k)
    return {k: frozenset(v) for k, v in out.items()}


def _ident(n: int) -> Rel:
    return {i: frozenset([i]) for i in range(1, n + 1)}


def _agrees(rel: Rel, nu: dict[int, int]) -> bool:
    return all(k in rel and v in rel[k] for k, v in nu.items())


def down_maps(p: AProgram, path: list[Edge], target: str) -> list[tuple[int, int, Rel]]:
    """All (split j, literal index, map) for ν-downward links of path to target."""
    out = []
    cur = _ident(p.arity[path[0].src])
    for j, e in enumerate(path):
        r = p.rules[e.rule]
        src = r.body[e.pos - 1]
        for li, l in enumerate(r.body):
            if l.positive and l.atom.pred == target:
                out.append((j, li, _compose(cur, _rel_horizontal(src, l))))
        cur = _compose(cur, _rel_vertical(r, src))
    return out


def up_maps(p: AProgram, path: list[Edge], target: str) -> list[tuple[int, int, Rel]]:
    """All (split j, literal index, map) for ν-upward links of path to target;
    maps go from positions of the path's final node."""
    out = []
    cur = _ident(p.arity[path[-1].dst])
    for j in range(len(path) - 1, -1, -1):
        e = path[j]
        r = p.rules[e.rule]
        for li, l in enumerate(r.body):
            if l.positive and l.atom.pred == target:
                out.append((j, li, _compose(cur, _inverse(_rel_vertical(r, l)))))
        cur = _compose(cur, _inverse(_rel_vertical(r, r.body[e.pos - 1])))
    return out


def path_links(p: AProgram, path: list[Edge], target: str, nu: dict[int, int], direction: str) -> bool:
    maps = down_maps(p, path, target) if direction == "downward" else up_maps(p, path, target)
    return any(_agrees(m, nu) for _, _, m in maps)


# ---------------------------------------------------------------- connectivity


@dataclass
class Connectivity:
    strong: bool
    weak: bool
    strong_witness: list[tuple[int, int | None]] | None = None  # (literal, parent)
    weak_witness: list[int] | None = None


def _key_ok(T: Template, a: Atom, allowed: set[str]) -> bool:
    for k in T.keys(a.pred, a.arity):
        if all(not a.args[i - 1].is_var or a.args[i - 1].name in allowed for i in k):
            return True
    return False


def strongly_connected(r: Rule, T: Template, head_vars: set[str] | None = None):
    base = set(r.head.vars()) if head_vars is None else set(head_vars)
    base = _eq_closure(r, base)
    body = r.body
    n = len(body)
    lvars = [set(l.atom.vars()) for l in body]

    def ok(i: int, support: set[str]) -> bool:
        l = body[i]
        if l.positive:
            return _key_ok(T, l.atom, support)
        return lvars[i] <= support

    failed: set[frozenset] = set()

    def search(placed: dict[int, tuple[frozenset, int | None]]):
        if len(placed) == n:
            return placed
        key = frozenset((i, v[1]) for i, v in placed.items())
        if key in failed:
            return None
        best = None
        for i in range(n):
            if i in placed:
                continue
            opts = []
            if ok(i, base):
                opts.append((frozenset(base | lvars[i]), None))
            for j, (pv, _) in placed.items():
                if lvars[i] & lvars[j] and ok(i, set(pv)):
                    opts.append((frozenset(pv | lvars[i]), j))
            if not opts:
                continue
            if best is None or len(opts) < len(best[1]):
                best = (i, opts)
        if best is None:
            failed.add(key)
            return None
        i, opts = best
        opts.sort(key=lambda o: -len(o[0]))
        for o in opts:
            res = search({**placed, i: o})
            if res is not None:
                return res
        failed.add(key)
        return None

    res = search({})
    if res is None:
        return False, None
    return True, sorted((i, v[1]) for i, v in res.items())


def weakly_connected(r: Rule, T: Template):
    body = r.body
    pos = [i for i, l in enumerate(body) if l.positive]
    cvars = _const_vars(r)

    def edge_ok(i: int, j: int) -> bool:
        a, b = body[i].atom, body[j].atom
        shared = set(a.vars()) & set(b.vars())
        if not shared:
            return False
        return _key_ok(T, a, shared) and _key_ok(T, b, shared)

    for root in pos:
        N = [root]
        grown = True
        while grown:
            grown = False
            for j in pos:
                if j not in N and any(edge_ok(m, j) for m in N):
                    N.append(j)
                    grown = True
        nvars = {v for i in N for v in body[i].atom.vars()} | cvars
        good = True
        for i, l in enumerate(body):
            if i in N:
                continue
            lv = set(l.atom.vars())
            if not lv <= nvars:
                good = False
                break
            if not any(_key_ok(T, body[m].atom, lv) for m in N):
                good = False
                break
        if good:
            return True, sorted(N)
    return False, None


def rule_connectivity(r: Rule, T: Template) -> Connectivity:
    s, sw = strongly_connected(r, T)
    w, ww = weakly_connected(r, T)
    return Connectivity(s, w, sw, ww)


# ---------------------------------------------------------------- guards


def _bijections(maps: list[Rel], n: int) -> Iterator[dict[int, int]]:
    """Bijections ν: K -> {1..n} (K ⊆ source positions) contained in one of maps."""
    seen = set()
    for m in maps:
        def rec(t: int, used: dict[int, int]):
            if t > n:
                key = tuple(sorted(used.items()))
                if key not in seen:
                    seen.add(key)
                    yield dict(used)
                return
            for k, vs in sorted(m.items()):
                if t in vs and k not in used:
                    used[k] = t
                    yield from rec(t + 1, used)
                    del used[k]
        yield from rec(1, {})


def head_guard(p: AProgram, T: Template, P1: list[Edge], P2: list[Edge], conn) -> str | None:
    if P1 == P2:
        if all(conn(e.rule).weak for e in P1):
            return "head-guarded: weakly connected rules"
        return None
    for a, b in T.dis_pairs():
        n = p.arity[a]
        m1 = [m for _, _, m in down_maps(p, P1, a)]
        if not m1:
            continue
        m2 = [m for _, _, m in down_maps(p, P2, b)]
        if not m2:
            continue
        for nu in _bijections(m1, n):
            if any(_agrees(m, nu) for m in m2):
                return f"head-guarded by {DIS(a, b)} with ν={nu}"
    return None


def tail_guard(p: AProgram, T: Template, P1: list[Edge], P2: list[Edge], conn) -> str | None:
    if P1 == P2:
        if all(conn(e.rule).strong for e in P1):
            return "tail-guarded: strongly connected rules"
        return None
    if (len(P1) == 1 and len(P2) == 1 and P1[0].rule == P2[0].rule
            and P1[0].src == P2[0].src and conn(P1[0].rule).strong):
        # both edges enter the same instance; a shared atom is one BN parent
        return "tail-guarded: parallel positions of one strongly connected rule"
    for a, b in T.dis_pairs():
        n = p.arity[a]
        m1 = [m for _, _, m in up_maps(p, P1, a)]
        if not m1:
            continue
        m2 = [m for _, _, m in up_maps(p, P2, b)]
        if not m2:
            continue
        for nu in _bijections(m1, n):
            if any(_agrees(m, nu) for m in m2):
                return f"tail-guarded by {DIS(a, b)} with ν={nu}"
    return None


def directed_guard(p: AProgram, T: Template, cycle: list[Edge]) -> str | None:
    n = len(cycle)
    for A in T.ords():
        width = p.arity[A[0]]
        h = width // 2
        for cuts in itertools.product([False, True], repeat=n - 1):
            bounds = [i for i, c in enumerate(cuts) if c] + [n - 1]
            segs, start = [], 0
            for b in bounds:
                segs.append((start, b))
                start = b + 1
            # per segment: candidate (down, up) map pairs through one o-literal
            per_seg = []
            for s, t in segs:
                seg = cycle[s:t + 1]
                r = p.rules[seg[-1].rule]
                cands = []
                for o in A:
                    downs = {li: m for j, li, m in down_maps(p, seg, o) if j == len(seg) - 1}
                    ups = {li: m for j, li, m in up_maps(p, seg[-1:], o) if j == 0}
                    for li in downs.keys() & ups.keys():
                        cands.append((downs[li], ups[li], str(r.body[li])))
                if not cands:
                    break
                per_seg.append(cands)
            else:
                for d0, _, _ in per_seg[0]:
                    for nu in _bijections([d0], h):
                        nu2 = {k: v + h for k, v in nu.items()}
                        lits = []
                        for c in per_seg:
                            hit = next((l for d, u, l in c if _agrees(d, nu) and _agrees(u, nu2)), None)
                            if hit is None:
                                break
                            lits.append(hit)
                        else:
                            return f"guarded by {ORD(*A)} with ν={nu} via {', '.join(lits)}"
    return None


# ---------------------------------------------------------------- cycles


@dataclass
class CycleReport:
    kind: str  # directed | undirected | degenerate
    edges: list[str]
    guard: str | None = None
    violation: str | None = None

    def to_json(self) -> dict:
        d = {"kind": self.kind, "edges": self.edges}
        if self.guard:
            d["guard"] = self.guard
        if self.violation:
            d["violation"] = self.violation
        return d


@dataclass
class AcyclicityReport:
    verdict: str  # acyclic | relaxed-acyclic | cyclic
    template: Template
    cycles: list[CycleReport] = field(default_factory=list)
    reason: str | None = None
    program: AProgram | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.verdict != "cyclic"

    @property
    def violations(self) -> list[CycleReport]:
        return [c for c in self.cycles if c.violation]

    def guards(self) -> list[str]:
        return [c.guard for c in self.cycles if c.guard]

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict,
            "annotations": [str(a) for a in self.template],
            "cycles": [c.to_json() for c in self.cycles],
        }
        if self.reason:
            out["reason"] = self.reason
        return out


def _directed_cycles(g: nx.MultiDiGraph, budget: int) -> Iterator[list[Edge]]:
    simple = nx.DiGraph()
    simple.add_nodes_from(g)
    for u, v in g.edges():
        simple.add_edge(u, v)
    count = 0
    for cyc in nx.simple_cycles(simple):
        pairs = [(cyc[i], cyc[(i + 1) % len(cyc)]) for i in range(len(cyc))]
        choices = [[d["edge"] for d in g.get_edge_data(u, v).values()] for u, v in pairs]
        for combo in itertools.product(*choices):
            count += 1
            if count > budget:
                raise CycleBudgetExceeded(f"more than {budget} simple directed cycles")
            yield list(combo)


def _undirected_cycles(g: nx.MultiDiGraph, budget: int) -> Iterator[list[tuple[Edge, bool]]]:
    """Simple undirected cycles as (edge, traversed forward) sequences."""
    und = nx.Graph()
    und.add_nodes_from(g)
    between: dict[frozenset, list[Edge]] = defaultdict(list)
    for _, _, d in g.edges(data=True):
        e = d["edge"]
        between[frozenset((e.src, e.dst))].append(e)
        if e.src != e.dst:
            und.add_edge(e.src, e.dst)
    count = 0

    def bump():
        nonlocal count
        count += 1
        if count > budget:
            raise CycleBudgetExceeded(f"more than {budget} simple undirected cycles")

    # two distinct edges between the same pair of nodes (incl. two self-loops)
    for key, es in sorted(between.items(), key=lambda kv: sorted(kv[0])):
        for e1, e2 in itertools.combinations(sorted(es), 2):
            bump()
            if e1.src == e2.src:
                yield [(e1, True), (e2, False)]
            else:
                yield [(e1, True), (e2, True)]
    for cyc in nx.simple_cycles(und):
        if len(cyc) < 3:
            continue
        pairs = [(cyc[i], cyc[(i + 1) % len(cyc)]) for i in range(len(cyc))]
        choices = [[(e, e.src == u) for e in sorted(between[frozenset((u, v))])] for u, v in pairs]
        for combo in itertools.product(*choices):
            bump()
            yield list(combo)


def _runs(cycle: list[tuple[Edge, bool]]) -> list[tuple[bool, list[Edge]]]:
    """Split a cyclic sequence into maximal same-orientation runs, each given
    as a directed path."""
    n = len(cycle)
    start = next(i for i in range(n) if cycle[i][1] != cycle[i - 1][1])
    seq = cycle[start:] + cycle[:start]
    runs: list[tuple[bool, list[Edge]]] = []
    for e, fwd in seq:
        if runs and runs[-1][0] == fwd:
            runs[-1][1].append(e)
        else:
            runs.append((fwd, [e]))
    return [(fwd, es if fwd else list(reversed(es))) for fwd, es in runs]


def _fmt_path(P: list[Edge], labels) -> str:
    return " . ".join(e.label(labels) for e in P) if P else "ε"


def check_guards(p: AProgram, T: Template | None = None, budget: int = DEFAULT_CYCLE_BUDGET,
                 verdict_ok: str = "acyclic") -> AcyclicityReport:
    if T is None:
        T = derive_annotations(p)
    for k, r in enumerate(p.rules):
        if not negation_guarded(r):
            return AcyclicityReport("cyclic", T, reason=f"rule {p.labels[k]} is not negation-guarded: {r}",
                                    program=p)
    labels = p.labels
    dg = dependency_graph(p).nx()
    conn_cache: dict[int, Connectivity] = {}

    def conn(k: int) -> Connectivity:
        if k not in conn_cache:
            conn_cache[k] = rule_connectivity(p.rules[k], T)
        return conn_cache[k]

    reports: list[CycleReport] = []
    for cyc in _directed_cycles(dg, budget):
        g = directed_guard(p, T, cyc)
        rep = CycleReport("directed", [e.label(labels) for e in cyc], guard=g)
        if g is None:
            rep.violation = "no ordering annotation guards this directed cycle"
        reports.append(rep)
    for cyc in _undirected_cycles(dg, budget):
        if all(f for _, f in cyc) or not any(f for _, f in cyc):
            continue  # a directed cycle, handled above
        runs = _runs(cyc)
        guard = None
        # runs alternate; a source sits between a backward and a forward run
        m = len(runs)
        for want_head in (True, False):
            for i in range(m):
                fwd, P = runs[i]
                nfwd, Q = runs[(i + 1) % m]
                if want_head and not fwd and nfwd:
                    guard = head_guard(p, T, P, Q, conn)
                elif not want_head and fwd and not nfwd:
                    guard = tail_guard(p, T, P, Q, conn)
                if guard:
                    guard = f"<{_fmt_path(P, labels)}, {_fmt_path(Q, labels)}> {guard}"
                    break
            if guard:
                break
        rep = CycleReport("undirected", [("" if f else "~") + e.label(labels) for e, f in cyc], guard=guard)
        if guard is None:
            structs = []
            for i in range(m):
                fwd, P = runs[i]
                nfwd, Q = runs[(i + 1) % m]
                if not fwd and nfwd:
                    structs.append(f"<{_fmt_path(P, labels)}, {_fmt_path(Q, labels)}, ε, ε>")
            rep.violation = "unguarded undirected structure " + "; ".join(structs)
        reports.append(rep)
    # equal-path structures <P, P, ε, ε>: two groundings of the same path
    reports.extend(_degenerate(p, dg, conn, labels))
    bad = any(r.violation for r in reports)
    return AcyclicityReport("cyclic" if bad else verdict_ok, T, reports, program=p)


def _degenerate(p: AProgram, dg: nx.MultiDiGraph, conn, labels) -> list[CycleReport]:
    out = []
    edges = sorted(d["edge"] for _, _, d in dg.edges(data=True))
    reach = {n: nx.descendants(dg, n) | {n} for n in dg}
    for e in edges:
        c = conn(e.rule)
        if not (c.weak or c.strong):
            out.append(CycleReport("degenerate", [e.label(labels)],
                                   violation=f"rule {labels[e.rule]} is neither weakly nor strongly connected"))
    for e1 in edges:
        if conn(e1.rule).weak:
            continue
        for e2 in edges:
            if e2 == e1 or conn(e2.rule).strong:
                continue
            if e2.src in reach[e1.dst]:
                out.append(CycleReport(
                    "degenerate", [e1.label(labels), e2.label(labels)],
                    violation=(f"groundings may diverge at {labels[e1.rule]} (not weakly connected) and "
                               f"re-join at {labels[e2.rule]} (not strongly connected)")))
    return out


# ---------------------------------------------------------------- core programs


def _atom_rows(atoms: Iterable[Atom]) -> dict[str, set[tuple[str, ...]]]:
    out: dict[str, set[tuple[str, ...]]] = defaultdict(set)
    for a in atoms:
        out[a.pred].add(a.values())
    return out


def aprogram(core, g=None) -> AProgram:
    """The analysed view of a core program; switch atoms count as facts."""
    from .grounding import relaxed_ground
    g = g or relaxed_ground(core)
    defined = core.defined_preds()
    facts = _atom_rows(a for a in g.atoms if a.pred not in defined)
    for a in core.prob_atoms:
        facts.setdefault(a.pred, set()).add(a.values())
    return AProgram(list(core.rules), dict(facts), dict(core.arity))


# ---------------------------------------------------------------- beta


@dataclass
class BetaResult:
    rules: list[Rule]
    cpt: dict[str, tuple[int, ...]]  # 1-based positions
    pdom: dict[str, list[tuple[str, ...]]]
    arity: dict[str, int]

    def project(self, a: Atom) -> tuple[Atom, tuple[str, ...] | None]:
        """Projected atom plus its value (the K positions) for CPT-like preds."""
        K = self.cpt.get(a.pred)
        if not K:
            return a, None
        keep = tuple(t for i, t in enumerate(a.args, start=1) if i not in K)
        val = tuple(a.args[i - 1].name for i in K)
        return Atom(a.pred, keep), val


def _project_rule(r: Rule, cpt: dict[str, tuple[int, ...]]) -> Rule:
    def pa(a: Atom) -> Atom:
        K = cpt.get(a.pred)
        if not K:
            return a
        return Atom(a.pred, tuple(t for i, t in enumerate(a.args, start=1) if i not in K))
    return Rule(pa(r.head), tuple(Literal(pa(l.atom), l.positive) for l in r.body), r.cstr, r.prob)


def _exclusive(l1s: list[Literal], l2s: list[Literal], cpt, T: Template) -> bool:
    for a in l1s:
        for b in l2s:
            if a.atom == b.atom and a.positive != b.positive:
                return True
            if not (a.positive and b.positive):
                continue
            if a.atom.pred == b.atom.pred and a.atom.pred in cpt:
                K = cpt[a.atom.pred]
                same_rest = all(a.atom.args[i - 1] == b.atom.args[i - 1]
                                for i in range(1, a.atom.arity + 1) if i not in K)
                differ = any(not a.atom.args[i - 1].is_var and not b.atom.args[i - 1].is_var
                             and a.atom.args[i - 1] != b.atom.args[i - 1] for i in K)
                if same_rest and differ:
                    return True
            if a.atom.pred != b.atom.pred and a.atom.args == b.atom.args and T.has_dis(a.atom.pred, b.atom.pred):
                return True
    return False


def _cpt_key(core, pr: str, cpt, T: Template):
    """(K, pdom) when pr is CPT-like, else None."""
    idx = [k for k, r in enumerate(core.rules) if r.head.pred == pr]
    if not idx or any(a.pred == pr for a in core.prob_atoms):
        return None
    groups = [g for g in core.ad_groups if g.rules and core.rules[g.rules[0]].head.pred == pr]
    covered = {k for g in groups for k in g.rules}
    if covered != set(idx):
        return None
    if any(core.rules[k].head.pred != pr for g in groups for k in g.rules):
        return None
    occ = [core.rules[k].head for k in idx]
    occ += [l.atom for r in core.rules for l in r.body if l.atom.pred == pr]
    n = core.arity[pr]
    K = tuple(i for i in range(1, n + 1) if all(not a.args[i - 1].is_var for a in occ))
    if not K:
        return None
    own = {s for g in groups for s in g.switches}

    def rest(a: Atom):
        return tuple(a.args[i - 1] for i in range(1, n + 1) if i not in K)

    def kv(a: Atom):
        return tuple(a.args[i - 1].name for i in K)

    pdom = sorted({kv(core.rules[k].head) for k in idx})
    bodies = []
    for g in groups:
        heads = [core.rules[k].head for k in g.rules]
        if len({rest(h) for h in heads}) != 1:
            return None
        vals = [kv(h) for h in heads]
        if len(set(vals)) != len(vals) or sorted(vals) != pdom:
            return None
        r0 = core.rules[g.rules[0]]
        body = [l for l in r0.body if l.atom.pred not in own]
        hv = {t.name for t in rest(r0.head) if t.is_var}
        ok, _ = strongly_connected(Rule(r0.head, tuple(body), r0.cstr), T, head_vars=hv)
        if not ok:
            return None
        bodies.append((rest(r0.head), body, r0))
    shapes = set()
    for h, body, r0 in bodies:
        pb = _project_rule(Rule(r0.head, tuple(body), ()), cpt).body
        shapes.add(tuple((l.atom.pred, l.atom.arity) for l in pb))
    if len(shapes) != 1:
        return None
    for (h1, b1, _), (h2, b2, _) in itertools.combinations(bodies, 2):
        ren: dict = {}
        never = False
        ok = True
        for t1, t2 in zip(h1, h2):
            if t1.is_var and t2.is_var:
                if ren.setdefault(t2, t1) != t1:
                    ok = False
            elif not t1.is_var and not t2.is_var:
                if t1 != t2:
                    never = True
            else:
                ok = False
        if never:
            continue
        if not ok:
            return None
        b2r = []
        for l in b2:
            if all(not t.is_var or t in ren for t in l.atom.args):
                b2r.append(Literal(Atom(l.atom.pred, tuple(ren.get(t, t) for t in l.atom.args)), l.positive))
        if not _exclusive(b1, b2r, cpt, T):
            return None
    return K, pdom


def beta_transform(core, T: Template | None = None) -> BetaResult:
    if T is None:
        T = derive_annotations(aprogram(core))
    g = nx.DiGraph()
    g.add_nodes_from(core.arity)
    for r in core.rules:
        for l in r.body:
            g.add_edge(l.atom.pred, r.head.pred)
    cond = nx.condensation(g)
    cpt: dict[str, tuple[int, ...]] = {}
    pdom: dict[str, list[tuple[str, ...]]] = {}
    for c in nx.topological_sort(cond):
        members = cond.nodes[c]["members"]
        if len(members) != 1:
            continue
        pr = next(iter(members))
        if g.has_edge(pr, pr) or core.is_switch(pr):
            continue
        res = _cpt_key(core, pr, cpt, T)
        if res:
            cpt[pr], pdom[pr] = res
    arity = {pr: n - len(cpt.get(pr, ())) for pr, n in core.arity.items()}
    return BetaResult([_project_rule(r, cpt) for r in core.rules], cpt, pdom, arity)


# ---------------------------------------------------------------- alpha


@dataclass
class AlphaResult:
    kernels: list[Rule]
    members: list[tuple[int, ...]]  # indices into the input rule list
    private: frozenset[str]
    labels: list[str]

    def class_of(self) -> dict[int, int]:
        return {m: i for i, ms in enumerate(self.members) for m in ms}


def _shape(r: Rule, hidden: set[str]):
    return (r.head, r.cstr, tuple((l.atom.pred, l.atom.args) for l in r.body if l.atom.pred not in hidden))


def alpha_transform(rules, switches: Iterable[str] = ()) -> AlphaResult:
    """Group rules that agree up to the sign of body literals; switch
    predicates used inside a single class are absorbed into it."""
    if hasattr(rules, "rules"):
        switches = set(switches) | set(getattr(rules, "switches", {}))
        rules = rules.rules
    rules = list(rules)
    private = set(switches)
    while True:
        keys = [_shape(r, private) for r in rules]
        users: dict[str, set] = defaultdict(set)
        for r, k in zip(rules, keys):
            for l in r.body:
                if l.atom.pred in private:
                    users[l.atom.pred].add(k)
        shared = {s for s, ks in users.items() if len(ks) > 1}
        if not shared:
            break
        private -= shared
    classes: dict = {}
    for k, key in enumerate(keys):
        classes.setdefault(key, []).append(k)
    kernels, members, labels = [], [], []
    for key, ms in classes.items():
        r0 = rules[ms[0]]
        body = []
        for i, l in enumerate(x for x in r0.body if x.atom.pred not in private):
            pos = all([x for x in rules[m].body if x.atom.pred not in private][i].positive for m in ms)
            body.append(Literal(l.atom, pos))
        kernels.append(Rule(r0.head, tuple(body), r0.cstr))
        members.append(tuple(ms))
        labels.append(f"r{ms[0]}")
    return AlphaResult(kernels, members, frozenset(private), labels)


# ---------------------------------------------------------------- pipeline


def is_acyclic(core, g=None, budget: int = DEFAULT_CYCLE_BUDGET) -> AcyclicityReport:
    ap = aprogram(core, g)
    return check_guards(ap, derive_annotations(ap), budget)


def is_relaxed_acyclic(core, g=None, budget: int = DEFAULT_CYCLE_BUDGET) -> AcyclicityReport:
    from .grounding import relaxed_ground
    for r in core.rules:
        if not negation_guarded(r):
            return AcyclicityReport("cyclic", Template(), reason=f"rule is not negation-guarded: {r}")
    g = g or relaxed_ground(core)
    T0 = derive_annotations(aprogram(core, g))
    beta = beta_transform(core, T0)
    alpha = alpha_transform(beta.rules, core.switches)
    heads = {r.head.pred for r in alpha.kernels}
    facts: dict[str, set] = defaultdict(set)
    for a in g.atoms:
        if a.pred in alpha.private:
            continue
        if a.pred not in heads or a in core.prob_atoms:
            pa, _ = beta.project(a)
            facts[pa.pred].add(pa.values())
    arity = {pr: n for pr, n in beta.arity.items() if pr not in alpha.private}
    ap = AProgram(alpha.kernels, dict(facts), arity, list(alpha.labels))
    rep = check_guards(ap, derive_annotations(ap), budget, verdict_ok="relaxed-acyclic")
    rep.extra = {"base_template": T0, "beta": beta, "alpha": alpha, "grounding": g}
    return rep


def analyze(core, g=None, budget: int = DEFAULT_CYCLE_BUDGET) -> AcyclicityReport:
    """Plain acyclicity first; relaxed acyclicity when that fails."""
    from .grounding import relaxed_ground
    g = g or relaxed_ground(core)
    plain = is_acyclic(core, g, budget)
    if plain.ok:
        plain.extra["plain"] = True
        return plain
    rel = is_relaxed_acyclic(core, g, budget)
    if rel.ok:
        return rel
    plain.extra["relaxed"] = rel
    return plain

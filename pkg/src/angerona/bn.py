"""Bayesian network construction from relaxed acyclic programs, and the
converse encoding of a poly-tree network as a program."""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .analysis import AcyclicityReport, alpha_transform, analyze, BetaResult
from .core import CoreProgram
from .errors import CompileError, NotAcyclic, NotPolytree
from .grounding import GroundRule, relaxed_ground
from .syntax import Atom, Program, fmt_prob, parse_program

BOOL = (True, False)


def fmt_value(v) -> str:
    if v is True:
        return "true"
    if v is False:
        return "false"
    if v is None:
        return "⊥"
    return ",".join(v) if isinstance(v, tuple) else str(v)


def fmt_exact(p: Fraction) -> str:
    """Decimal string when p has a terminating expansion, else 17 digits."""
    d = p.denominator
    for f in (2, 5):
        while d % f == 0:
            d //= f
    if d == 1:
        return fmt_prob(p)
    return f"{float(p):.17g}"


@dataclass
class Node:
    id: str
    role: str  # atom | rule | instance | aux
    domain: list
    parents: list[str]
    table: np.ndarray  # object array of Fractions, axes = parents then own value

    @property
    def cpt(self) -> np.ndarray:
        return self.table.astype(float)

    def prob(self, given: tuple, value) -> Fraction:
        return self.table[given + (self.domain.index(value),)]


@dataclass
class BayesianNetwork:
    nodes: dict[str, Node] = field(default_factory=dict)
    # original ground atom -> (node id, value that means "atom is true")
    atom_map: dict[Atom, tuple[str, object]] = field(default_factory=dict)

    def add(self, node: Node) -> Node:
        if node.id in self.nodes:
            raise CompileError(f"duplicate node {node.id}")
        want = tuple(len(self.nodes[p].domain) for p in node.parents) + (len(node.domain),)
        if node.table.shape != want:
            raise CompileError(f"CPT of {node.id} has shape {node.table.shape}, expected {want}")
        self.nodes[node.id] = node
        return node

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for n in self.nodes.values():
            for p in n.parents:
                out[p].append(n.id)
        return out

    def edges(self) -> list[tuple[str, str]]:
        return [(p, n.id) for n in self.nodes.values() for p in n.parents]

    def __len__(self) -> int:
        return len(self.nodes)

    def to_json(self) -> dict:
        out = []
        for n in self.nodes.values():
            rows = []
            for given in itertools.product(*(range(len(self.nodes[p].domain)) for p in n.parents)):
                g = [fmt_value(self.nodes[p].domain[i]) for p, i in zip(n.parents, given)]
                for j, v in enumerate(n.domain):
                    rows.append({"given": g, "value": fmt_value(v), "p": fmt_exact(n.table[given + (j,)])})
            out.append({"id": n.id, "role": n.role, "domain": [fmt_value(v) for v in n.domain],
                        "parents": list(n.parents), "cpt": rows})
        return {"nodes": out}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, ensure_ascii=False)


# ---------------------------------------------------------------- CPT gadgets


def cpt_or(n: int, D: Iterable) -> np.ndarray:
    """CPT over n variables: n-1 parents and the node itself, all with domain D."""
    D = list(D)
    if n < 1:
        raise CompileError("cpt_or needs at least the node itself")
    boolean = D == list(BOOL)
    if not boolean and n > 2:
        raise CompileError(f"value propagation over {n - 1} parents; a CPT-like atom has one derivation")
    t = np.full((len(D),) * n, Fraction(0), dtype=object)
    for given in itertools.product(range(len(D)), repeat=n - 1):
        if boolean:
            out = 0 if any(D[i] is True for i in given) else 1
        elif n == 1:
            out = D.index(None)
        else:
            out = given[0]
        t[given + (out,)] = Fraction(1)
    return t


def build_or_tree(leaves: list[str], root: str, D: Iterable) -> list[tuple[str, list[str], np.ndarray]]:
    """Pair up leaves into auxiliary nodes until at most two remain, which
    become the root's parents.  Returns (id, parents, table) per new node."""
    if not leaves:
        raise CompileError(f"no leaves for {root}")
    D = list(D)
    level, nodes, k = list(leaves), [], 0
    while len(level) > 2:
        nxt = []
        for j in range(0, len(level) - 1, 2):
            k += 1
            aid = f"{root[:-1]},aux{k}]"
            nodes.append((aid, [level[j], level[j + 1]], cpt_or(3, D)))
            nxt.append(aid)
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    nodes.append((root, level, cpt_or(len(level) + 1, D)))
    return nodes


# ---------------------------------------------------------------- compile


def _identity_beta(core: CoreProgram) -> BetaResult:
    return BetaResult(list(core.rules), {}, {}, dict(core.arity))


def compile(core: CoreProgram, report: AcyclicityReport | None = None, grounding=None) -> BayesianNetwork:
    if report is None:
        report = analyze(core, grounding)
    if not report.ok:
        raise NotAcyclic(report.reason or "program is not (relaxed) acyclic")
    g = report.extra.get("grounding") or grounding or relaxed_ground(core)
    beta: BetaResult = report.extra.get("beta") or _identity_beta(core)
    alpha = report.extra.get("alpha") or alpha_transform(beta.rules, core.switches)
    return _Compiler(core, g, beta, alpha).run()


class _Compiler:
    def __init__(self, core, g, beta, alpha):
        self.core, self.g, self.beta, self.alpha = core, g, beta, alpha
        self.bn = BayesianNetwork()
        self.probs = g.prob_atoms(core)
        self.proj: dict[Atom, tuple[Atom, object]] = {}
        for a in g.atoms:
            if a.pred in alpha.private:
                continue
            pa, val = beta.project(a)
            self.proj[a] = (pa, True if val is None else val)
        self.patoms = sorted({pa for pa, _ in self.proj.values()})
        self.pset = set(self.patoms)

    def domain(self, pa: Atom) -> list:
        if pa.pred in self.beta.cpt:
            return list(self.beta.pdom[pa.pred]) + [None]
        return list(BOOL)

    def run(self) -> BayesianNetwork:
        alpha, bn = self.alpha, self.bn
        class_of = alpha.class_of()
        groups: dict[tuple, list[GroundRule]] = {}
        for gr in self.g.all_instances():
            c = class_of[gr.rule]
            head, _ = self.beta.project(gr.head)
            body = tuple(self.beta.project(l.atom)[0] for l in gr.body if l.atom.pred not in alpha.private)
            groups.setdefault((c, head, body), []).append(gr)
        per_head: dict[Atom, dict[int, list[tuple]]] = {}
        for key in sorted(groups, key=lambda k: (str(k[1]), k[0], tuple(map(str, k[2])))):
            per_head.setdefault(key[1], {}).setdefault(key[0], []).append(key)

        # parents must exist before children: build atom nodes in dependency order
        order = self._order(groups)
        facts = {self.proj[a][0]: p for a, p in self.probs.items() if a in self.proj}
        for pa in order:
            D = self.domain(pa)
            rule_nodes = []
            p = facts.get(pa)
            if p is not None:
                if pa.pred in self.beta.cpt:
                    raise CompileError(f"CPT-like atom {pa} has facts")
                leaf = f"X[f,#1,{pa}]"
                bn.add(Node(leaf, "instance", list(BOOL), [], np.array([p, 1 - p], dtype=object)))
                rid = f"X[f,{pa}]"
                bn.add(Node(rid, "rule", list(BOOL), [leaf], cpt_or(2, BOOL)))
                rule_nodes.append(rid)
            for c, keys in sorted(per_head.get(pa, {}).items()):
                label = alpha.labels[c]
                leaves = []
                for n, key in enumerate(keys, start=1):
                    iid = f"X[{label},#{n},{pa}]"
                    self._instance(iid, key, groups[key], D)
                    leaves.append(iid)
                rid = f"X[{label},{pa}]"
                for nid, parents, table in build_or_tree(leaves, rid, D):
                    bn.add(Node(nid, "rule" if nid == rid else "aux", D, parents, table))
                rule_nodes.append(rid)
            bn.add(Node(f"X[{pa}]", "atom", D, rule_nodes, cpt_or(len(rule_nodes) + 1, D)))
        for a, (pa, v) in sorted(self.proj.items()):
            bn.atom_map[a] = (f"X[{pa}]", v)
        return bn

    def _order(self, groups) -> list[Atom]:
        import networkx as nx
        dg = nx.DiGraph()
        dg.add_nodes_from(self.patoms)
        for (c, head, body) in groups:
            for b in body:
                if b in self.pset:
                    dg.add_edge(b, head)
        if not nx.is_directed_acyclic_graph(dg):
            raise NotPolytree("ground dependencies are cyclic")
        return list(nx.lexicographical_topological_sort(dg, key=str))

    def _instance(self, iid: str, key: tuple, members: list[GroundRule], D: list):
        _, head, body = key
        parents: list[Atom] = []
        for b in body:
            if b in self.pset and b not in parents:
                parents.append(b)
        pdoms = [self.domain(b) for b in parents]
        pidx = {b: i for i, b in enumerate(parents)}
        private = self.alpha.private
        memo: dict[tuple, list[Fraction]] = {}
        table = np.full(tuple(len(d) for d in pdoms) + (len(D),), Fraction(0), dtype=object)
        for cfg in itertools.product(*(range(len(d)) for d in pdoms)):
            active = []
            for m, gr in enumerate(members):
                sws = []
                ok = True
                for lit in gr.body:
                    if lit.atom.pred in private:
                        sws.append((lit.atom, lit.positive))
                        continue
                    pa, val = self.beta.project(lit.atom)
                    if pa not in self.pset:
                        ok = not lit.positive
                    else:
                        x = pdoms[pidx[pa]][cfg[pidx[pa]]]
                        hit = x == (True if val is None else val)
                        ok = hit if lit.positive else not hit
                    if not ok:
                        break
                if ok:
                    _, hv = self.beta.project(gr.head)
                    active.append((True if hv is None else hv, tuple(sws)))
            k = tuple(active)
            if k not in memo:
                memo[k] = self._output(active, D, iid)
            table[cfg] = memo[k]
        self.bn.add(Node(iid, "instance", D, [f"X[{b}]" for b in parents], table))

    def _output(self, active, D, iid) -> list[Fraction]:
        atoms = sorted({a for _, sws in active for a, _ in sws})
        out = [Fraction(0)] * len(D)
        none = D.index(None) if None in D else D.index(False)
        for bits in itertools.product(BOOL, repeat=len(atoms)):
            w = Fraction(1)
            asg = dict(zip(atoms, bits))
            for a, b in asg.items():
                p = self.probs[a]
                w *= p if b else 1 - p
            if w == 0:
                continue
            fired = {hv for hv, sws in active if all(asg[a] == s for a, s in sws)}
            if len(fired) > 1:
                raise CompileError(f"{iid}: several values derivable at once: {sorted(map(str, fired))}")
            out[D.index(fired.pop()) if fired else none] += w
        return out


# ---------------------------------------------------------------- BN -> program

_IDENT = re.compile(r"[a-z][A-Za-z0-9_]*$")


def _names(bn: BayesianNetwork):
    preds, vals = {}, {}
    for i, (nid, n) in enumerate(bn.nodes.items()):
        preds[nid] = nid if _IDENT.match(nid) else f"n{i}"
        if n.domain != list(BOOL):
            vals[nid] = [str(v) if isinstance(v, str) and _IDENT.match(v) else f"v{j}"
                         for j, v in enumerate(n.domain)]
    return preds, vals


def bn_to_source(bn: BayesianNetwork) -> tuple[str, dict, dict]:
    """Program text encoding bn, plus the node -> predicate and node -> value
    constant maps used."""
    from .polytree import validate_polytree
    if not validate_polytree(bn):
        raise NotPolytree("network has an undirected cycle")
    preds, vals = _names(bn)

    def lit(nid: str, i: int) -> str:
        n = bn.nodes[nid]
        if nid in vals:
            return f"{preds[nid]}({vals[nid][i]})"
        return preds[nid] if n.domain[i] is True else f"\\+{preds[nid]}"

    lines = []
    for nid, n in bn.nodes.items():
        for given in itertools.product(*(range(len(bn.nodes[p].domain)) for p in n.parents)):
            body = ", ".join(lit(p, i) for p, i in zip(n.parents, given))
            tail = f" :- {body}." if body else "."
            row = [n.table[given + (j,)] for j in range(len(n.domain))]
            if nid in vals:
                heads = "; ".join(f"{fmt_prob(Fraction(q))}::{preds[nid]}({v})" for q, v in zip(row, vals[nid]))
                lines.append(heads + tail)
            else:
                q = Fraction(row[n.domain.index(True)])
                if q == 0 and body:
                    continue
                lines.append((preds[nid] if q == 1 else f"{fmt_prob(q)}::{preds[nid]}") + tail)
    return "\n".join(lines) + "\n", preds, vals


def bn_to_program(bn: BayesianNetwork) -> Program:
    return parse_program(bn_to_source(bn)[0])

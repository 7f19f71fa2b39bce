"""One object per belief program that answers probability queries with
either the poly-tree engine or the exact oracle."""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import cached_property
from typing import Sequence

from .analysis import AcyclicityReport, analyze
from .bn import BayesianNetwork, compile
from .core import CoreProgram, desugar
from .errors import AngeronaError, ZeroEvidence
from .grounding import GroundingResult, relaxed_ground
from .oracle import Oracle
from .polytree import PolytreeEngine
from .syntax import Atom, Program

Literals = Sequence[tuple[Atom, bool]]
ENGINES = ("auto", "polytree", "oracle")


class Model:
    def __init__(self, program: str | Program | CoreProgram):
        self.core = program if isinstance(program, CoreProgram) else desugar(program)

    @cached_property
    def grounding(self) -> GroundingResult:
        return relaxed_ground(self.core)

    @cached_property
    def report(self) -> AcyclicityReport:
        return analyze(self.core, self.grounding)

    @cached_property
    def bn(self) -> BayesianNetwork | None:
        if not self.report.ok:
            return None
        return compile(self.core, self.report, self.grounding)

    @cached_property
    def engine(self) -> PolytreeEngine | None:
        return None if self.bn is None else PolytreeEngine(self.bn)

    @cached_property
    def exact_engine(self) -> PolytreeEngine | None:
        return None if self.bn is None else PolytreeEngine(self.bn, exact=True)

    @cached_property
    def oracle(self) -> Oracle:
        return Oracle(self.core, self.grounding)

    def tractable(self) -> bool:
        if not hasattr(self, "_tractable"):
            try:
                self._tractable = self.bn is not None
            except AngeronaError:
                self._tractable = False
        return self._tractable

    # ------------------------------------------------------------ BN evidence

    def node_evidence(self, lits: Literals) -> dict[str, frozenset] | None:
        """Clamp nodes for a literal set; None when the literals are contradictory
        or force an absent atom to be true."""
        bn = self.bn
        out: dict[str, frozenset] = {}
        for a, v in lits:
            hit = bn.atom_map.get(a)
            if hit is None:
                if a in self.grounding.atoms:
                    raise AngeronaError(f"{a} is internal to a rule and cannot be observed")
                if v:
                    return None
                continue
            nid, val = hit
            dom = bn.nodes[nid].domain
            allowed = frozenset([val]) if v else frozenset(x for x in dom if x != val)
            cur = out.get(nid)
            allowed = allowed if cur is None else cur & allowed
            if not allowed:
                return None
            out[nid] = allowed
        return out

    def _conj_prob(self, eng: PolytreeEngine, lits: Literals):
        ev = self.node_evidence(lits)
        if ev is None:
            return 0
        try:
            return eng.evidence_prob(ev)
        except ZeroEvidence:
            return 0

    def bn_conditional(self, target: Literals, pos: Literals = (), negs: Sequence[Literals] = (),
                       target_negated: bool = False, exact: bool = False):
        """P(target | pos ∧ ¬n1 ∧ ... ∧ ¬nk) where target, pos and each ni are
        literal conjunctions; negated conjunctions expand by inclusion-exclusion."""
        eng = self.exact_engine if exact else self.engine
        comp = eng.comp

        def comps(lits: Literals) -> set[str]:
            out = set()
            for a, _ in lits:
                hit = self.bn.atom_map.get(a)
                if hit:
                    out.add(comp[hit[0]])
            return out

        # only components linked to the target matter; the rest cancel out
        rel = comps(target)
        neg_comps = [comps(n) for n in negs]
        grew = True
        while grew:
            grew = False
            for c in neg_comps:
                if c & rel and not c <= rel:
                    rel |= c
                    grew = True
        negs = [n for n, c in zip(negs, neg_comps) if c & rel or not c]
        pos = [(a, v) for a, v in pos if not comps([(a, v)]) or comps([(a, v)]) <= rel]

        def mass(base: Literals) -> Fraction | float:
            total = 0
            for k in range(len(negs) + 1):
                for sub in itertools.combinations(negs, k):
                    lits = list(base) + [l for n in sub for l in n]
                    total += (-1) ** k * self._conj_prob(eng, lits)
            return total

        if not negs and len(target) == 1 and target[0][0] in self.bn.atom_map:
            # a single literal is read off the cached component beliefs
            ev = self.node_evidence(pos)
            if ev is None:
                raise ZeroEvidence()
            a, v = target[0]
            nid, val = self.bn.atom_map[a]
            root = comp[nid]
            local = {k: s for k, s in ev.items() if comp[k] == root}
            beliefs, _ = eng.component_beliefs(root, local)
            dist = dict(zip(self.bn.nodes[nid].domain, beliefs[nid].tolist()))
            p = dist[val] if v else 1 - dist[val]
            if target_negated:
                p = 1 - p
            return p if exact else min(1.0, max(0.0, float(p)))

        den = mass(pos)
        if den == 0 or (not exact and den < 1e-300):
            raise ZeroEvidence()
        num = mass(list(pos) + list(target))
        p = num / den
        if target_negated:
            p = 1 - p
        if not exact:
            p = min(1.0, max(0.0, float(p)))
        return p

    # ------------------------------------------------------------ queries

    def prob(self, target: Atom | Literals, evidence: Literals = (), engine: str = "auto"):
        lits = [(target, True)] if isinstance(target, Atom) else list(target)
        ev = list(self.core.evidence) + list(evidence)
        if engine == "oracle" or (engine == "auto" and not self.tractable()):
            return self.oracle.query_prob(lits, list(evidence))
        if self.bn is None:
            raise AngeronaError(f"program is not relaxed acyclic: {self.report.reason or 'see the acyclicity report'}")
        return self.bn_conditional(lits, ev)

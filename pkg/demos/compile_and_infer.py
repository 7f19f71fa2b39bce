"""Compile the smokers program to a poly-tree network, then compare belief
propagation against exhaustive enumeration."""

from pathlib import Path

from angerona import Model
from angerona.polytree import PolytreeEngine
from angerona.syntax import parse_atom

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
m = Model((FIX / "smokers.pl").read_text())

print(f"{len(m.bn)} nodes, {len(m.bn.edges())} edges")
for nid in m.bn.nodes:
    if nid.startswith("X[cancer"):
        print("  ", nid, "<-", ", ".join(m.bn.nodes[nid].parents))

carl = parse_atom("cancer(carl)")
ev = [(parse_atom("cancer(alice)"), True), (parse_atom("cancer(bob)"), True)]
for e in ([], ev[:1], ev):
    bp = m.prob(carl, e, engine="polytree")
    exact = m.prob(carl, e, engine="oracle")
    shown = ", ".join(str(a) for a, _ in e) or "nothing"
    print(f"P(cancer(carl) | {shown}) = {bp:.6f}  (enumeration: {exact})")

# exact mode runs the same messages over fractions
eng = PolytreeEngine(m.bn, exact=True)
print("exact:", eng.marginal("X[cancer(carl)]", {"X[cancer(alice)]": True, "X[cancer(bob)]": True})[True])

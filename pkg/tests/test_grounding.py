import random

from hypothesis import given, settings, strategies as st

from angerona.analysis import is_acyclic
from angerona.core import desugar
from angerona.grounding import ground_graph, relaxed_ground
from angerona.oracle import Oracle
from angerona.syntax import parse_atom

from support import fixture, random_program

EX5 = desugar(fixture("example5.pl"))


def test_example5_atoms():
    g = relaxed_ground(EX5)
    assert sorted(map(str, g.atoms)) == ["a(1)", "a(2)", "a(3)", "b(1)", "b(2)", "b(3)", "d(1)", "e(2)", "f(1)",
                                         "o(1,2)", "o(2,3)"]


def test_example5_recursive_instances():
    g = relaxed_ground(EX5)
    assert [str(r) for r in g.instances[2]] == ["b(2) :- b(1), \\+f(1), o(1,2).", "b(3) :- b(2), \\+f(2), o(2,3)."]
    assert [str(r) for r in g.instances[0]] == ["b(1) :- a(1), d(1)."]


def test_negated_atom_outside_grounding_kept_in_body():
    g = relaxed_ground(EX5)
    assert parse_atom("f(2)") not in g.atoms
    gr = g.instances[2][1]
    assert any(not l.positive and str(l.atom) == "f(2)" for l in gr.body)


def test_facts_only():
    g = relaxed_ground(desugar("a(1). 0.5::b(2)."))
    assert sorted(map(str, g.atoms)) == ["a(1)", "b(2)"]
    assert not any(g.instances.values())


def test_smokers_cancer_atoms():
    g = relaxed_ground(desugar(fixture("smokers.pl")))
    cancer = sorted(str(a) for a in g.atoms if a.pred == "cancer")
    assert cancer == ["cancer(alice)", "cancer(bob)", "cancer(carl)"]


def test_switch_atoms_grounded_per_instance():
    c = desugar("w(a). w(b). 0.5::t(X) :- w(X).")
    g = relaxed_ground(c)
    assert len(g.switch_atoms) == 2
    assert set(g.switch_atoms.values()) == {c.switches[next(iter(c.switches))]}


def test_dump_lists_atoms_then_instances():
    text = relaxed_ground(EX5).dump()
    assert text.startswith("% atoms\n") and "% instances\nr0: b(1) :- a(1), d(1).\n" in text


def test_ground_graph_shape():
    gg = ground_graph(EX5)
    # one instance node per body literal of each ground instance
    assert len(gg.instance_nodes) == 2 + 2 + 3 + 3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_grounding_covers_every_model(seed):
    core = desugar(random_program(random.Random(seed)))
    o = Oracle(core)
    if sum(1 for p in o.probs.values() if 0 < p < 1) > 8:
        return
    g = relaxed_ground(core)
    for m in o.distribution():
        assert m <= g.atoms


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_instance_heads_are_atoms(seed):
    g = relaxed_ground(desugar(random_program(random.Random(seed))))
    for gr in g.all_instances():
        assert gr.head in g.atoms
        assert all(l.atom in g.atoms for l in gr.body if l.positive)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_acyclic_ground_graph_is_forest(seed):
    core = desugar(random_program(random.Random(seed)))
    if is_acyclic(core).ok:
        assert ground_graph(core).is_forest()

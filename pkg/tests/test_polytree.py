import random
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from angerona.bn import BOOL, BayesianNetwork, Node
from angerona.errors import NotPolytree, ZeroEvidence
from angerona.inference import Model
from angerona.polytree import PolytreeEngine, marginal, validate_polytree
from angerona.syntax import parse_atom

from support import brute_marginals, fixture, random_polytree_bn

A = parse_atom


def _arr(x):
    return np.array(x, dtype=object)


def _root(nid, p):
    return Node(nid, "atom", list(BOOL), [], _arr([F(p), 1 - F(p)]))


def _or(nid, parents):
    shape = (2,) * (len(parents) + 1)
    t = np.full(shape, F(0), dtype=object)
    for idx in np.ndindex(*shape[:-1]):
        t[idx + ((0 if 0 in idx else 1),)] = F(1)
    return Node(nid, "atom", list(BOOL), parents, t)


@pytest.fixture(scope="module")
def smokers():
    return Model(fixture("smokers.pl"))


def test_validate_example5():
    assert validate_polytree(Model(fixture("example5.pl")).bn)


def test_validate_collider_with_closing_edge():
    bn = BayesianNetwork()
    for n in [_root("a", F(1, 2)), _root("b", F(1, 2)), _or("c", ["a", "b"])]:
        bn.add(n)
    assert validate_polytree(bn)
    bn.add(_or("d", ["a", "c"]))
    assert not validate_polytree(bn)
    with pytest.raises(NotPolytree):
        PolytreeEngine(bn)


def test_validate_empty():
    assert validate_polytree(BayesianNetwork())


def test_smokers_marginals(smokers):
    assert smokers.prob(A("cancer(carl)"), engine="polytree") == pytest.approx(0.3525, abs=1e-12)
    ev = [(A("cancer(alice)"), True)]
    assert smokers.prob(A("cancer(carl)"), ev, engine="polytree") == pytest.approx(0.495, abs=1e-12)
    ev.append((A("cancer(bob)"), True))
    assert smokers.prob(A("cancer(carl)"), ev, engine="polytree") == pytest.approx(0.6, abs=1e-12)


def test_exact_mode(smokers):
    eng = PolytreeEngine(smokers.bn, exact=True)
    ev = {"X[cancer(alice)]": True, "X[cancer(bob)]": True}
    assert eng.marginal("X[cancer(carl)]", ev)[True] == F(3, 5)


def test_single_leaf():
    bn = BayesianNetwork()
    bn.add(_root("x", F(1, 3)))
    assert marginal(bn, "x", exact=True) == {True: F(1, 3), False: F(2, 3)}


def test_beliefs_normalised(smokers):
    eng = PolytreeEngine(smokers.bn)
    for nid in smokers.bn.nodes:
        assert abs(sum(eng.marginal(nid, {"X[cancer(bob)]": False}).values()) - 1) <= 1e-12


def test_zero_evidence():
    bn = BayesianNetwork()
    bn.add(_root("x", F(1)))
    with pytest.raises(ZeroEvidence):
        marginal(bn, "x", {"x": False})
    with pytest.raises(ZeroEvidence):
        marginal(bn, "x", {"x": False}, exact=True)


def test_evidence_prob_across_components():
    bn = BayesianNetwork()
    bn.add(_root("x", F(1, 2)))
    bn.add(_root("y", F(1, 4)))
    eng = PolytreeEngine(bn, exact=True)
    assert eng.evidence_prob({"x": True, "y": False}) == F(3, 8)


def test_value_sets_as_evidence():
    bn = BayesianNetwork()
    bn.add(Node("c", "atom", ["r", "g", "b"], [], _arr([F(1, 2), F(1, 4), F(1, 4)])))
    got = marginal(bn, "c", {"c": {"g", "b"}}, exact=True)
    assert got == {"r": 0, "g": F(1, 2), "b": F(1, 2)}
    with pytest.raises(ValueError):
        marginal(bn, "c", {"c": "y"})


def _brute_conditional(bn, ev):
    """Brute-force marginals under evidence by clamping the evidence rows."""
    clamped = BayesianNetwork()
    for nid, n in bn.nodes.items():
        t = n.table.copy()
        if nid in ev:
            for j, v in enumerate(n.domain):
                if v != ev[nid]:
                    t[..., j] = F(0)
        clamped.add(Node(nid, n.role, n.domain, n.parents, t))
    m = brute_marginals(clamped)
    z = sum(next(iter(m.values())).values())
    if z == 0:
        return None
    return {k: {v: p / z for v, p in d.items()} for k, d in m.items()}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.booleans())
def test_matches_enumeration(seed, exact):
    rng = random.Random(seed)
    bn = random_polytree_bn(rng)
    ids = list(bn.nodes)
    ev = {}
    for nid in rng.sample(ids, rng.randint(0, min(2, len(ids)))):
        ev[nid] = rng.choice(bn.nodes[nid].domain)
    want = _brute_conditional(bn, ev)
    eng = PolytreeEngine(bn, exact=exact)
    if want is None:
        with pytest.raises(ZeroEvidence):
            for nid in ids:
                eng.marginal(nid, ev)
        return
    for nid in ids:
        got = eng.marginal(nid, ev)
        for v, p in want[nid].items():
            if exact:
                assert got[v] == p
            else:
                assert abs(got[v] - float(p)) <= 1e-9

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtregress.generate import random_model
from dtregress.generate import GenParams
from dtregress.oracle import all_states, tree_table
from dtregress.trees import (Leaf, MissingAssignment, Node, VarRef, count_leaves, count_nodes,
                             evaluate, graft, leaves, map_leaves, merge, node, reduce,
                             semantic_eq, variables)

from conftest import X, Xp, enumerate_assignments

REFS = [X("a"), X("b"), Xp("a"), X("c")]
SIZES = {X("a"): 2, X("b"): 3, Xp("a"): 2, X("c"): 2}


@st.composite
def trees(draw, depth=4):
    """Random trees that may repeat tests along a path (unnormalised input)."""
    if depth == 0 or draw(st.booleans()):
        return Leaf(draw(st.integers(0, 5)))
    ref = draw(st.sampled_from(REFS))
    return Node(ref, tuple(draw(trees(depth=depth - 1)) for _ in range(SIZES[ref])))


contexts = st.dictionaries(st.sampled_from(REFS), st.integers(0, 1), max_size=3)


def paths_repeat(tree, seen=()):
    if isinstance(tree, Leaf):
        return False
    if tree.var in seen:
        return True
    return any(paths_repeat(c, seen + (tree.var,)) for c in tree.children)


def all_full():
    return enumerate_assignments(REFS, SIZES)


def test_evaluate_leaf_and_one_level():
    assert evaluate(Leaf(7.0), {}) == 7.0
    t = Node(X("Y"), (Leaf(10), Leaf(0)))
    assert evaluate(t, {X("Y"): 0}) == 10
    assert evaluate(t, {X("Y"): 1}) == 0


def test_evaluate_missing_assignment():
    t = Node(X("Y"), (Leaf(1), Leaf(0)))
    with pytest.raises(MissingAssignment):
        evaluate(t, {X("Z"): 0})


def test_evaluate_matches_flat_expansion_of_reward():
    m = random_model(GenParams(n_vars=5, reward_vars=3, seed=11))
    table = tree_table(m.reward, m)
    for i, row in enumerate(all_states(m)):
        s = {X(v.name): int(x) for v, x in zip(m.variables, row)}
        assert evaluate(m.reward, s) == table[i]


def test_reduce_examples():
    t = Node(X("X"), (Leaf(1), Leaf(2)))
    assert reduce(t, {X("X"): 0}) == Leaf(1)
    u = Node(X("X"), (Node(X("Y"), (Leaf(1), Leaf(2))), Leaf(3)))
    assert reduce(u, {}) == u
    dup = Node(X("X"), (Node(X("X"), (Leaf(1), Leaf(2))), Leaf(3)))
    assert reduce(dup) == Node(X("X"), (Leaf(1), Leaf(3)))


def test_primed_and_unprimed_are_distinct_tests():
    t = Node(X("a"), (Node(Xp("a"), (Leaf(1), Leaf(2))), Leaf(3)))
    assert reduce(t) == t
    assert variables(t) == [X("a"), Xp("a")]


def test_node_collapses_identical_leaves():
    assert node(X("a"), [Leaf(4), Leaf(4)]) == Leaf(4)
    assert isinstance(node(X("a"), [Leaf(4), Leaf(5)]), Node)


@settings(max_examples=200, deadline=None)
@given(trees(), contexts)
def test_reduce_preserves_function_under_context(t, ctx):
    r = reduce(t, ctx)
    assert not paths_repeat(r)
    assert not set(variables(r)) & set(ctx)
    for s in all_full():
        if all(s[k] == v for k, v in ctx.items()):
            assert evaluate(r, s) == evaluate(t, s)


@settings(max_examples=200, deadline=None)
@given(st.lists(trees(), min_size=1, max_size=3))
def test_merge_combines_pointwise(ts):
    m = merge(ts, tuple)
    assert not paths_repeat(m)
    for s in all_full():
        assert evaluate(m, s) == tuple(evaluate(t, s) for t in ts)


@settings(max_examples=100, deadline=None)
@given(st.lists(trees(), min_size=1, max_size=3))
def test_merge_leaf_contexts_partition_the_space(ts):
    m = merge(ts, tuple)
    refs = sorted({r for t in ts for r in variables(t)})
    sizes = {r: SIZES[r] for r in refs}
    hits = {}
    for s in enumerate_assignments(refs, sizes):
        matching = [i for i, (c, _) in enumerate(leaves(m))
                    if all(s[k] == v for k, v in c.items())]
        hits[tuple(s.items())] = matching
    assert all(len(v) == 1 for v in hits.values())


def test_merge_disjoint_tests_compose():
    y = Node(X("Y"), (Leaf(1), Leaf(2)))
    w = Node(X("W"), (Leaf(3), Leaf(4)))
    m = merge([y, w], tuple)
    assert m.var == X("Y")
    assert all(c.var == X("W") for c in m.children)
    assert [p for _, p in leaves(m)] == [(1, 3), (1, 4), (2, 3), (2, 4)]


@settings(max_examples=100, deadline=None)
@given(trees())
def test_merge_is_idempotent(t):
    assert semantic_eq(merge([t, t], lambda ps: ps[0]), t)


@settings(max_examples=100, deadline=None)
@given(trees(), trees())
def test_semantic_eq_agrees_with_enumeration(a, b):
    expected = all(evaluate(a, s) == evaluate(b, s) for s in all_full())
    assert semantic_eq(a, b) == expected


def test_semantic_eq_basics():
    t = Node(X("a"), (Node(X("c"), (Leaf(1.0), Leaf(2.0))), Leaf(3.0)))
    assert semantic_eq(t, reduce(t, {}))
    assert not semantic_eq(Leaf(1.0), Leaf(2.0), 1e-9)
    assert semantic_eq(Leaf(1.0), Leaf(1.0 + 1e-12), 1e-9)


def test_semantic_eq_ignores_variable_order():
    ab = Node(X("a"), (Node(X("c"), (Leaf(1), Leaf(2))), Node(X("c"), (Leaf(3), Leaf(4)))))
    ba = Node(X("c"), (Node(X("a"), (Leaf(1), Leaf(3))), Node(X("a"), (Leaf(2), Leaf(4)))))
    assert ab != ba
    assert semantic_eq(ab, ba)


def test_semantic_eq_on_distributions():
    a = Node(X("a"), (Leaf((0.5, 0.5)), Leaf((1.0, 0.0))))
    b = Node(X("a"), (Leaf((0.5, 0.5)), Leaf((0.9, 0.1))))
    assert not semantic_eq(a, b, 0.05)
    assert semantic_eq(a, b, 0.1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(trees(), contexts)
def test_inputs_are_never_mutated(t, ctx):
    before = repr(t)
    reduce(t, ctx)
    merge([t, t], tuple)
    map_leaves(t, lambda p: p + 1)
    graft(t, lambda c, p: Leaf(p), ctx)
    assert repr(t) == before


def test_graft_reduces_by_branch():
    t = Node(X("a"), (Leaf(0), Leaf(1)))
    sub = Node(X("a"), (Leaf("x"), Leaf("y")))
    g = graft(t, lambda c, p: sub)
    assert [p for _, p in leaves(g)] == ["x", "y"]


def test_counts():
    t = Node(X("a"), (Node(X("c"), (Leaf(1), Leaf(2))), Leaf(3)))
    assert count_leaves(t) == 3
    assert count_nodes(t) == 2


def test_leaves_yield_branch_contexts():
    t = Node(X("a"), (Node(X("c"), (Leaf(1), Leaf(2))), Leaf(3)))
    assert list(leaves(t)) == [({X("a"): 0, X("c"): 0}, 1), ({X("a"): 0, X("c"): 1}, 2),
                               ({X("a"): 1}, 3)]


def test_variables_first_occurrence_order():
    t = Node(X("b"), (Node(X("a"), (Leaf(1), Leaf(2))), Node(X("c"), (Leaf(1), Leaf(2))),
                      Node(X("a"), (Leaf(1), Leaf(2)))))
    assert variables(t) == [X("b"), X("a"), X("c")]


def test_every_assignment_reaches_one_leaf():
    t = Node(X("b"), (Leaf(0), Node(X("a"), (Leaf(1), Leaf(2))), Leaf(3)))
    for vals in itertools.product(range(3), range(2)):
        s = {X("b"): vals[0], X("a"): vals[1]}
        assert evaluate(t, s) in {0, 1, 2, 3}

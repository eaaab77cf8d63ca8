import numpy as np
import pytest

from dtregress.fileformat import parse_tree
from dtregress.oracle import FlatModel, all_states, tree_table
from dtregress.regression import (CorrelatedAction, Factor, FactorSet, OrderingViolation,
                                  ScopeError, branch_probability, eliminate, finalize, needed,
                                  q_tree, regress, regress_uncorrelated, simplify,
                                  value_tree_order)
from dtregress.trees import Leaf, leaves, map_leaves, semantic_eq, variables

from conftest import X, Xp, model_and_value

ALL = ["independent", "correlated", "deterministic", "joint_reward", "joint_when_false",
       "reversed", "shared_parent", "mediated", "diamond"]


def labels(pq):
    return [(ctx, fs) for ctx, fs in leaves(pq)]


def flat_q_check(model, value, tol=1e-10):
    """Every action's Q-tree matches the flat backup state by state."""
    flat = FlatModel(model)
    q = flat.q(tree_table(value, model))
    for i, a in enumerate(model.actions):
        qt = q_tree(value, a, model.reward, model.discount)
        np.testing.assert_allclose(tree_table(qt, model), q[i], atol=tol, rtol=0)


def test_eliminate_sums_out_or_keeps():
    fs = FactorSet([Factor(("X", "Y"), [[0.72, 0.18], [0.1, 0.0]])])
    kept = eliminate(fs, "X", keep_joint=True)
    assert kept == fs
    out = eliminate(fs, "X", keep_joint=False)
    assert out.recorded == {"Y"}
    np.testing.assert_allclose(out.marginal("Y"), [0.82, 0.18])


def test_eliminate_last_variable_drops_factor():
    fs = FactorSet([Factor(("X",), [0.3, 0.7]), Factor(("Y",), [1.0, 0.0])])
    assert eliminate(fs, "X", keep_joint=False).recorded == {"Y"}


def test_factor_scopes_are_disjoint():
    with pytest.raises(ValueError):
        FactorSet([Factor(("X",), [0.5, 0.5]), Factor(("X", "Y"), np.full((2, 2), 0.25))])


def test_sum_out_matches_chain_rule(load):
    # Y' after X' is summed out, with X true: 0.9 * 0.8 + 0.1 * P(Y' | X' false, Y)
    pq = regress(load("correlated").reward, load("correlated").actions[0])
    by_ctx = {tuple(sorted((r.name, v) for r, v in c.items())): fs for c, fs in labels(pq)}
    y_true = by_ctx[(("W", 0), ("X", 0), ("Y", 0))].marginal("Y")
    y_false = by_ctx[(("W", 0), ("X", 0), ("Y", 1))].marginal("Y")
    np.testing.assert_allclose(y_true, [0.9 * 0.8 + 0.1 * 1.0, 0.9 * 0.2])
    np.testing.assert_allclose(y_false, [0.9 * 0.8, 0.9 * 0.2 + 0.1])


def test_deterministic_parent_skips_the_fallback_test(load):
    det = regress(load("deterministic").reward, load("deterministic").actions[0])
    cor = regress(load("correlated").reward, load("correlated").actions[0])
    # under X true, only the noisy model needs to look at Y
    assert any(X("Y") in c and c[X("X")] == 0 for c, _ in labels(cor))
    assert not any(X("Y") in c and c[X("X")] == 0 for c, _ in labels(det))


def test_merged_fallback_appears_under_both_parent_values(load):
    m = load("correlated")
    pq = regress(m.reward, m.actions[0])
    for xv in (0, 1):
        assert any(c.get(X("X")) == xv and X("Y") in c for c, _ in labels(pq))


def test_joint_kept_when_child_depends_on_parent_everywhere(load):
    m = load("joint_reward")
    for ctx, fs in labels(regress(m.reward, m.actions[0])):
        if fs.recorded == {"Y"}:
            np.testing.assert_allclose(fs.marginal("Y"), [0.0, 1.0])
        else:
            assert [f.scope for f in fs.factors] == [("W", "Y")]


def test_joint_kept_only_where_child_tests_parent(load):
    m = load("joint_when_false")
    for ctx, fs in labels(regress(m.reward, m.actions[0])):
        scopes = [f.scope for f in fs.factors]
        if ctx.get(X("W")) == 0:
            assert scopes == [("W",), ("Y",)]
        elif ctx.get(X("W")) == 1:
            assert scopes == [("W", "Y")]


def test_parent_recorded_while_regressing_child(load):
    m = load("reversed")
    pq = regress(m.reward, m.actions[0])
    assert value_tree_order(m.reward) == [X("Y"), X("W")]
    for _, fs in labels(pq):
        assert fs.recorded == {"W", "Y"}
        assert abs(fs.joint()[1].sum() - 1.0) < 1e-12


def test_zero_probability_branch_is_not_regressed(load):
    m = load("independent")
    for ctx, fs in labels(regress_uncorrelated(m.reward, m.actions[0])):
        if fs.marginal("Y")[0] == 0.0:
            assert "W" not in fs.recorded


def test_regress_uncorrelated_rejects_arcs(load):
    m = load("correlated")
    with pytest.raises(CorrelatedAction):
        regress_uncorrelated(m.reward, m.actions[0])


def test_needed_depends_on_topology(load):
    # V' was just introduced while regressing Y'; W' is still unrecorded
    label = FactorSet([Factor(("V", "Y"), np.full((2, 2), 0.25))])
    shared = load("shared_parent")
    mediated = load("mediated")
    assert needed("V", label, {}, {}, "Y", shared.reward, shared.actions[0])
    assert not needed("V", label, {}, {}, "Y", mediated.reward, mediated.actions[0])


def test_needed_when_on_a_live_branch(load):
    m = load("reversed")
    label = FactorSet([Factor(("W", "Y"), np.full((2, 2), 0.25))])
    assert needed("W", label, {}, {}, "Y", m.reward, m.actions[0])


def test_branch_probability():
    fs = FactorSet([Factor(("W", "Y"), [[0.5, 0.1], [0.3, 0.1]])])
    assert branch_probability(fs, {Xp("Y"): 0}) == pytest.approx(0.8)
    assert branch_probability(fs, {Xp("Y"): 0, Xp("W"): 1}) == pytest.approx(0.3)
    assert branch_probability(fs, {}) == pytest.approx(1.0)


def test_branch_probability_scope():
    fs = FactorSet([Factor(("Y",), [0.0, 1.0])])
    assert branch_probability(fs, {Xp("Y"): 0, Xp("W"): 0}) == 0.0
    with pytest.raises(ScopeError):
        branch_probability(fs, {Xp("Y"): 1, Xp("W"): 0})


def test_simplify_without_post_tests_returns_factor(load):
    m = load("correlated")
    a = m.actions[0]
    out = simplify(a.cpts["X"].tree, FactorSet(), {}, "X", a, m.reward)
    assert [fs.recorded for _, fs in leaves(out)] == [{"X"}, {"X"}]


def test_simplify_with_recorded_parent_uses_its_marginal(load):
    m = load("correlated")
    a = m.actions[0]
    label = FactorSet([Factor(("X",), [1.0, 0.0])])
    out = simplify(a.cpts["Y"].tree, label, {}, "Y", a, m.reward)
    for _, fs in leaves(out):
        np.testing.assert_allclose(fs.marginal("Y"), [0.8, 0.2])


def test_finalize_with_zero_value_is_reward(load):
    m = load("joint_reward")
    zero = Leaf(0.0)
    for a in m.actions:
        q = finalize(regress(zero, a), zero, m.reward, m.discount)
        assert semantic_eq(q, m.reward)


def test_finalize_with_zero_discount_is_reward(load):
    m = load("shared_parent")
    q = finalize(regress(m.reward, m.actions[0]), m.reward, m.reward, 0.0)
    assert semantic_eq(q, map_leaves(m.reward, float))


def test_finalize_rejects_unrecorded_branch():
    pq = Leaf(FactorSet([Factor(("Y",), [0.5, 0.5])]))
    value = parse_tree("(test Y (t (test W (t (leaf 1)) (f (leaf 0)))) (f (leaf 0)))")
    with pytest.raises(ScopeError):
        finalize(pq, value, Leaf(0.0), 0.9)


@pytest.mark.parametrize("name", ALL)
def test_bundled_models_match_flat_backup(load, name):
    m = load(name)
    flat_q_check(m, m.reward)


@pytest.mark.parametrize("seed", range(40))
def test_random_models_match_flat_backup(seed):
    m, v = model_and_value(seed, n_vars=(2, 6), arcs=(0, 4))
    flat_q_check(m, v)


@pytest.mark.parametrize("seed", range(40))
def test_general_and_uncorrelated_paths_agree(seed):
    m, v = model_and_value(1000 + seed, arcs=(0, 0))
    for a in m.actions:
        x = finalize(regress(v, a), v, m.reward, m.discount)
        y = finalize(regress_uncorrelated(v, a), v, m.reward, m.discount)
        assert semantic_eq(x, y, 1e-12)


def test_labels_are_distributions(load):
    for name in ALL:
        m = load(name)
        for a in m.actions:
            for _, fs in labels(regress(m.reward, a)):
                assert abs(fs.joint()[1].sum() - 1.0) < 1e-12
                assert (fs.joint()[1] >= 0).all()


def test_q_tree_only_tests_pre_action_variables(load):
    for name in ALL:
        m = load(name)
        for a in m.actions:
            q = q_tree(m.reward, a, m.reward, m.discount)
            assert not any(r.post for r in variables(q))


def test_bad_elimination_order_is_detected(load):
    m = load("diamond")
    a = m.actions[0]
    with pytest.raises(OrderingViolation):
        regress(m.reward, a, order=["Y", "X", "Z"])


def test_bad_elimination_order_double_counts(load):
    m = load("diamond")
    a = m.actions[0]
    flat = FlatModel(m).q(tree_table(m.reward, m))[0]
    good = finalize(regress(m.reward, a, eager=True), m.reward, m.reward, m.discount)
    bad = finalize(regress(m.reward, a, order=["Y", "X", "Z"], check_order=False, eager=True),
                   m.reward, m.reward, m.discount)
    np.testing.assert_allclose(tree_table(good, m), flat, atol=1e-12)
    assert np.max(np.abs(tree_table(bad, m) - flat)) > 1e-3

"""Structured dynamic programming on decision trees.

Value iteration, successive approximation and modified policy iteration,
all expressed through Q-tree construction plus tree merging.  Nothing here
enumerates the state space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import MdpModel
from .regression import q_tree
from .trees import Leaf, Tree, leaves, map_leaves, merge, semantic_eq, variables


class UnknownAction(KeyError):
    pass


def vi_threshold(epsilon: float, discount: float) -> float:
    """Bellman-error bound that makes the greedy policy epsilon-optimal."""
    if discount == 0.0:
        return math.inf
    return epsilon * (1.0 - discount) / (2.0 * discount)


def eval_threshold(epsilon: float, discount: float) -> float:
    if discount == 0.0:
        return math.inf
    return epsilon * (1.0 - discount) / discount


def sup_norm_diff(a: Tree, b: Tree) -> float:
    diff = merge([a, b], lambda ps: abs(ps[0] - ps[1]))
    return max(p for _, p in leaves(diff))


def q_trees(model: MdpModel, value: Tree, actions=None) -> dict[str, Tree]:
    names = model.action_names if actions is None else actions
    return {a: q_tree(value, model.action(a), model.reward, model.discount) for a in names}


def max_merge(qs: dict[str, Tree]) -> tuple[Tree, Tree]:
    """Pointwise maximum of Q-trees and the maximizing action.

    Ties go to the action listed first in ``qs``.
    """
    names = list(qs)

    def best(values):
        i = max(range(len(values)), key=lambda j: (values[j], -j))
        return (values[i], names[i])

    both = merge([qs[a] for a in names], best)
    return map_leaves(both, lambda p: p[0]), map_leaves(both, lambda p: p[1])


@dataclass
class VIResult:
    value: Tree
    policy: Tree
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)


def value_iteration(model: MdpModel, epsilon: float = 1e-4, max_iters: int = 1000) -> VIResult:
    value = model.reward
    threshold = vi_threshold(epsilon, model.discount)
    residuals = []
    policy = None
    for i in range(1, max_iters + 1):
        new, policy = max_merge(q_trees(model, value))
        residuals.append(sup_norm_diff(new, value))
        value = new
        if residuals[-1] <= threshold:
            return VIResult(value, policy, i, True, residuals)
    return VIResult(value, policy, max_iters, False, residuals)


def _check_policy(model: MdpModel, policy: Tree) -> list[str]:
    used = []
    for _, a in leaves(policy):
        if a not in model.action_names:
            raise UnknownAction(a)
        if a not in used:
            used.append(a)
    return used


def policy_backup(model: MdpModel, policy: Tree, value: Tree, used=None) -> Tree:
    """One sweep of successive approximation: each region takes its action's Q."""
    used = used or _check_policy(model, policy)
    qs = q_trees(model, value, used)
    index = {a: i + 1 for i, a in enumerate(used)}
    return merge([policy] + [qs[a] for a in used], lambda ps: ps[index[ps[0]]])


def successive_approximation(model: MdpModel, policy: Tree, epsilon: float = 1e-4,
                             max_iters: int = 1000, start: Tree | None = None) -> Tree:
    used = _check_policy(model, policy)
    value = model.reward if start is None else start
    threshold = eval_threshold(epsilon, model.discount)
    for _ in range(max_iters):
        new = policy_backup(model, policy, value, used)
        done = sup_norm_diff(new, value) <= threshold
        value = new
        if done:
            break
    return value


@dataclass
class MPIResult:
    value: Tree
    policy: Tree
    iterations: int
    converged: bool
    policies: list = field(default_factory=list)


def modified_policy_iteration(model: MdpModel, epsilon: float = 1e-4, eval_steps: int = 5,
                              max_iters: int = 1000) -> MPIResult:
    """Greedy improvement alternating with ``eval_steps`` partial evaluation sweeps.

    Stops once the Bellman error is below the value-iteration threshold and,
    when ``eval_steps > 0``, the greedy policy did not change.
    """
    threshold = vi_threshold(epsilon, model.discount)
    value = model.reward
    previous = None
    policies = []
    for i in range(1, max_iters + 1):
        greedy, policy = max_merge(q_trees(model, value))
        policies.append(policy)
        err = sup_norm_diff(greedy, value)
        stable = eval_steps == 0 or (previous is not None and semantic_eq(policy, previous))
        value = greedy
        if err <= threshold and stable:
            return MPIResult(value, policy, i, True, policies)
        previous = policy
        used = _check_policy(model, policy)
        for _ in range(eval_steps):
            value = policy_backup(model, policy, value, used)
    return MPIResult(value, policy, max_iters, False, policies)


def pre_slice_only(tree: Tree) -> bool:
    return all(not r.post for r in variables(tree))

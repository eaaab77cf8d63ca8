"""Seeded random models for testing and benchmarking."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .fileformat import serialize_model
from .model import CPT, ActionNetwork, MdpModel, Variable
from .trees import Leaf, Tree, VarRef, node

BINARY = ("t", "f")
# probabilities on a 0.1 grid, endpoints included so deterministic effects occur
GRID = [i / 10 for i in range(11)]


@dataclass(frozen=True)
class GenParams:
    n_vars: int = 6
    n_actions: int = 3
    max_parents: int = 3
    max_intra_arcs: int = 2
    reward_vars: int = 2
    seed: int = 0
    discount: float = 0.9
    max_depth: int = 3
    persist: float = 0.5  # chance that an action leaves a variable alone

    def __post_init__(self):
        if min(self.n_vars, self.n_actions, self.max_parents, self.reward_vars) < 1:
            raise ValueError("n_vars, n_actions, max_parents and reward_vars must be positive")
        if self.max_intra_arcs < 0:
            raise ValueError("max_intra_arcs must be non-negative")
        if self.reward_vars > self.n_vars:
            raise ValueError("reward_vars exceeds n_vars")
        if not 0.0 <= self.persist < 1.0:
            raise ValueError("persist must lie in [0, 1)")


def _dist(rng: random.Random) -> tuple[float, float]:
    i = rng.randrange(len(GRID))
    return (GRID[i], GRID[-1 - i])


def random_tree(rng: random.Random, refs: list[VarRef], leaf, max_depth: int,
                sizes=None, stop: float = 0.3) -> Tree:
    """Random tree testing a subset of ``refs``; ``leaf()`` draws payloads."""

    def rec(avail, depth):
        if not avail or depth >= max_depth or (depth > 0 and rng.random() < stop):
            return Leaf(leaf())
        ref = avail[rng.randrange(len(avail))]
        rest = [r for r in avail if r != ref]
        n = sizes[ref.name] if sizes else 2
        return node(ref, [rec(rest, depth + 1) for _ in range(n)])

    return rec(list(refs), 0)


def _random_action(rng: random.Random, name: str, names: list[str], p: GenParams) -> ActionNetwork:
    affected = [x for x in names if rng.random() >= p.persist] or [rng.choice(names)]
    order = names[:]
    rng.shuffle(order)
    pairs = [(order[i], order[j]) for i in range(len(order)) for j in range(i + 1, len(order))
             if order[j] in affected]
    n_arcs = rng.randint(0, min(p.max_intra_arcs, len(pairs)))
    arcs = rng.sample(pairs, n_arcs)
    cpts = {}
    for x in names:
        if x not in affected:
            cpts[x] = persistence_cpt(x)
            continue
        intra = sorted(par for par, child in arcs if child == x)
        others = [n for n in names if n != x]
        k = rng.randint(0, max(0, min(p.max_parents - 1, len(others))))
        pre_parents = [VarRef(x, False)] + [VarRef(n, False) for n in sorted(rng.sample(others, k))]
        post_parents = [VarRef(n, True) for n in intra]
        # intra-slice parents go first so they are likely to be tested
        tree = random_tree(rng, post_parents + pre_parents, lambda: _dist(rng),
                           p.max_depth + len(post_parents), stop=0.25)
        cpts[x] = CPT(frozenset(pre_parents + post_parents), tree)
    return ActionNetwork(name, cpts)


def random_model(p: GenParams) -> MdpModel:
    rng = random.Random(p.seed)
    names = [f"v{i}" for i in range(p.n_vars)]
    variables = tuple(Variable(n, BINARY) for n in names)
    reward_refs = [VarRef(n, False) for n in sorted(rng.sample(names, p.reward_vars))]
    reward = random_tree(rng, reward_refs, lambda: float(rng.randint(0, 10)),
                         p.reward_vars, stop=0.2)
    actions = tuple(_random_action(rng, f"a{i}", names, p) for i in range(p.n_actions))
    return MdpModel(variables, actions, reward, p.discount)


def random_document(p: GenParams) -> str:
    return serialize_model(random_model(p))


def random_value_tree(model: MdpModel, rng: random.Random, max_depth: int = 4) -> Tree:
    refs = [VarRef(v.name, False) for v in model.variables]
    sizes = {v.name: v.size for v in model.variables}
    return random_tree(rng, refs, lambda: round(rng.uniform(-10, 10), 3), max_depth, sizes)


def persistence_cpt(name: str) -> CPT:
    """X' copies X."""
    ref = VarRef(name, False)
    return CPT(frozenset([ref]), node(ref, [Leaf((1.0, 0.0)), Leaf((0.0, 1.0))]))


def k_of_n_model(n: int, k: int = 3, n_actions: int = 2, seed: int = 0,
                 discount: float = 0.9) -> MdpModel:
    """Reward over the first ``k`` variables; actions only touch those ``k``.

    The remaining ``n - k`` variables persist unchanged under every action, so
    they should never appear in a structured value function.
    """
    rng = random.Random(seed)
    names = [f"v{i}" for i in range(n)]
    core = names[:k]
    variables = tuple(Variable(x, BINARY) for x in names)
    reward = random_tree(rng, [VarRef(x, False) for x in core],
                         lambda: float(rng.randint(0, 10)), k, stop=0.0)
    actions = []
    for a in range(n_actions):
        cpts = {}
        for i, x in enumerate(names):
            if x not in core:
                cpts[x] = persistence_cpt(x)
                continue
            pre_parents = [VarRef(y, False) for y in core]
            # intra-slice arcs only from earlier to later core variables
            post_parents = [VarRef(y, True) for y in core[:i] if rng.random() < 0.5]
            tree = random_tree(rng, post_parents + pre_parents, lambda: _dist(rng), 3, stop=0.2)
            cpts[x] = CPT(frozenset(pre_parents + post_parents), tree)
        actions.append(ActionNetwork(f"a{a}", cpts))
    return MdpModel(variables, tuple(actions), reward, discount)

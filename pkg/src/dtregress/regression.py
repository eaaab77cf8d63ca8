"""Decision-theoretic regression of tree-structured value functions through actions.

``regress`` builds a partial Q-tree whose leaves are :class:`FactorSet`
labels: independent clusters of post-action variables, each carrying its
exact joint distribution given the leaf's pre-action context.  Correlated
effects (intra-slice arcs) are handled by replacing post-action tests in a
CPT tree with the parent's own CPT, then either summing the parent out or
keeping it in a joint cluster when it is still *needed*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce as _fold
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import ActionNetwork, network_graph, post_action_ordering, blocked
from .trees import (Leaf, Node, Tree, VarRef, graft, leaves, map_leaves,
                    map_leaves_ctx, merge, node, node_contexts, reduce, variables)


class CorrelatedAction(ValueError):
    pass


class OrderingViolation(RuntimeError):
    pass


class ScopeError(KeyError):
    pass


def _broadcast(table: np.ndarray, scope: Sequence[str], target: Sequence[str]) -> np.ndarray:
    """View ``table`` (over ``scope``) so it broadcasts against ``target``."""
    present = [v for v in target if v in scope]
    t = np.transpose(table, [scope.index(v) for v in present])
    dims = iter(t.shape)
    return t.reshape([next(dims) if v in scope else 1 for v in target])


def _union(scopes: Iterable[Sequence[str]]) -> tuple[str, ...]:
    out: dict = {}
    for s in scopes:
        out.update(dict.fromkeys(s))
    return tuple(out)


def _product(parts: Sequence[tuple[Sequence[str], np.ndarray]], scope=None):
    scope = tuple(scope) if scope is not None else _union(s for s, _ in parts)
    tables = [_broadcast(t, s, scope) for s, t in parts]
    return scope, _fold(np.multiply, tables)


def _sum_out(scope: Sequence[str], table: np.ndarray, var: str):
    i = list(scope).index(var)
    return tuple(v for v in scope if v != var), table.sum(axis=i)


class Factor:
    """Joint distribution over a cluster of post-action variables."""

    __slots__ = ("scope", "table")

    def __init__(self, scope: Sequence[str], table):
        scope = tuple(scope)
        table = np.asarray(table, dtype=float)
        if table.ndim != len(scope):
            raise ValueError(f"table rank {table.ndim} does not match scope {scope}")
        order = sorted(range(len(scope)), key=lambda i: scope[i])
        self.scope = tuple(scope[i] for i in order)
        self.table = np.transpose(table, order)

    def marginal(self, name: str) -> np.ndarray:
        i = self.scope.index(name)
        axes = tuple(j for j in range(len(self.scope)) if j != i)
        return self.table.sum(axis=axes) if axes else self.table

    def prob(self, assignment: Mapping[str, int]) -> float:
        index = tuple(assignment.get(v, slice(None)) for v in self.scope)
        return float(np.sum(self.table[index]))

    def __eq__(self, other):
        return (isinstance(other, Factor) and self.scope == other.scope
                and self.table.shape == other.table.shape
                and bool(np.array_equal(self.table, other.table)))

    __hash__ = None

    def __repr__(self):
        return f"Factor({self.scope}, {self.table.tolist()})"


class FactorSet:
    """Leaf label of a partial Q-tree: factors with pairwise disjoint scopes."""

    __slots__ = ("factors", "_owner", "_joint")

    def __init__(self, factors: Iterable[Factor] = ()):
        self.factors = tuple(sorted(factors, key=lambda f: f.scope))
        self._joint = None
        self._owner = {}
        for f in self.factors:
            for v in f.scope:
                if v in self._owner:
                    raise ValueError(f"variable {v} appears in two factors")
                self._owner[v] = f

    @property
    def recorded(self) -> frozenset[str]:
        return frozenset(self._owner)

    def factor_of(self, name: str) -> Factor:
        try:
            return self._owner[name]
        except KeyError:
            raise ScopeError(name) from None

    def marginal(self, name: str) -> np.ndarray:
        return self.factor_of(name).marginal(name)

    def partial_prob(self, assignment: Mapping[str, int]) -> float:
        """Probability of the recorded part of ``assignment``; other variables are ignored."""
        p = 1.0
        for f in self.factors:
            if any(v in assignment for v in f.scope):
                p *= f.prob(assignment)
        return p

    def replace(self, old: Iterable[Factor], new: Iterable[Factor]) -> "FactorSet":
        drop = {id(f) for f in old}
        return FactorSet([f for f in self.factors if id(f) not in drop] + list(new))

    def joint(self):
        """Product of all factors over the sorted recorded scope."""
        if self._joint is None:
            scope = tuple(sorted(self._owner))
            if not self.factors:
                self._joint = scope, np.ones(())
            else:
                # scopes are disjoint, so the joint is an outer product
                table = _fold(np.multiply.outer, [f.table for f in self.factors])
                flat = [v for f in self.factors for v in f.scope]
                self._joint = scope, np.transpose(table, np.argsort(flat, kind="stable"))
        return self._joint

    def distance(self, other) -> float:
        if not isinstance(other, FactorSet) or self.recorded != other.recorded:
            return math.inf
        return float(np.max(np.abs(self.joint()[1] - other.joint()[1]), initial=0.0))

    def __eq__(self, other):
        return isinstance(other, FactorSet) and self.factors == other.factors

    __hash__ = None

    def __repr__(self):
        return "FactorSet(" + ", ".join(map(repr, self.factors)) + ")"


def branch_probability(fset: FactorSet, c: Mapping[VarRef, int]) -> float:
    """Probability that the post-action state satisfies the value-tree branch ``c``.

    A branch mentioning a variable that was never regressed at this leaf must
    already have probability zero through its recorded variables.
    """
    assignment = {ref.name: v for ref, v in c.items()}
    p = fset.partial_prob(assignment)
    missing = [n for n in assignment if n not in fset.recorded]
    if missing and p > 0.0:
        raise ScopeError(f"branch needs unrecorded variables {missing}")
    return p


def eliminate(fset: FactorSet, target: str, keep_joint: bool) -> FactorSet:
    """Sum ``target`` out of its cluster, or keep the joint when ``keep_joint``."""
    f = fset.factor_of(target)
    if keep_joint:
        return fset
    scope, table = _sum_out(f.scope, f.table, target)
    return fset.replace([f], [Factor(scope, table)] if scope else [])


class _Pot:
    """Intermediate potential at a leaf of a partially replaced CPT tree."""

    __slots__ = ("scope", "table")

    def __init__(self, scope, table):
        self.scope = tuple(scope)
        self.table = table

    def __eq__(self, other):
        return (isinstance(other, _Pot) and self.scope == other.scope
                and self.table.shape == other.table.shape
                and bool(np.array_equal(self.table, other.table)))

    __hash__ = None


@dataclass
class _Plan:
    """Per-(value tree, action) data reused across every simplify call."""
    action: ActionNetwork
    value_tree: Tree
    sizes: dict
    order: list
    rank: dict
    descendants: dict
    graph: dict
    value_vars: list
    blocked_cache: dict
    masks: dict
    live_cache: dict

    @classmethod
    def build(cls, value_tree: Tree, action: ActionNetwork) -> "_Plan":
        sizes = {}
        for n, cpt in action.cpts.items():
            sizes[n] = len(next(leaves(cpt.tree))[1])
        order = post_action_ordering(action)
        children: dict = {n: set() for n in action.cpts}
        for p, c in action.intra_arcs():
            children[p].add(c)
        desc = {}
        for n in action.cpts:
            seen, stack = set(), list(children[n])
            while stack:
                m = stack.pop()
                if m not in seen:
                    seen.add(m)
                    stack.extend(children[m])
            desc[n] = seen
        return cls(action, value_tree, sizes, order, {n: i for i, n in enumerate(order)},
                   desc, network_graph(action), [r.name for r in variables(value_tree)],
                   {}, {}, {})

    def reaches(self, fset: FactorSet, name: str) -> bool:
        """Whether some branch through a test of ``name`` has positive probability."""
        scope, joint = fset.joint()
        key = (name, scope, joint.shape)
        mask = self.masks.get(key)
        if mask is None:
            mask = self.masks[key] = _reach_mask(self.value_tree, VarRef(name, False),
                                                 scope, joint.shape)
        return bool((joint[mask] > 0.0).any())

    def live(self, fset: FactorSet) -> frozenset:
        """Value-tree variables lying on a positive-probability branch under ``fset``."""
        hit = self.live_cache.get(id(fset))
        if hit is None or hit[0] is not fset:
            hit = (fset, frozenset(n for n in self.value_vars if self.reaches(fset, n)))
            self.live_cache[id(fset)] = hit
        return hit[1]

    def is_blocked(self, src: str, dst: str, evidence: frozenset) -> bool:
        key = (src, dst, evidence)
        hit = self.blocked_cache.get(key)
        if hit is None:
            hit = blocked(self.action, VarRef(src, True), VarRef(dst, True), evidence, self.graph)
            self.blocked_cache[key] = hit
        return hit


def needed(y: str, label: FactorSet, k: Mapping[VarRef, int], k2: Mapping[VarRef, int],
           x: str, value_tree: Tree, action: ActionNetwork, *, plan: _Plan | None = None) -> bool:
    """Whether the joint of post-action ``y`` with ``x`` must be kept at this point.

    ``y`` is needed when it lies on a value-tree branch of positive
    probability under ``label``, or when it is d-connected, given ``x`` and the
    variables of both contexts, to some value-tree variable on a positive
    branch whose distribution is not yet recorded.
    """
    plan = plan or _Plan.build(value_tree, action)
    live = plan.live(label)
    if y in live:
        return True
    evidence = {VarRef(x, True)} | set(k) | set(k2)
    evidence.discard(VarRef(y, True))
    evidence = frozenset(evidence)
    recorded = label.recorded
    for z in plan.value_vars:
        if z in (x, y) or z in recorded:
            continue
        if VarRef(z, True) in evidence:
            continue
        if z in live and not plan.is_blocked(y, z, evidence):
            return True
    return False


def _stack(y: str, pots: Sequence, weights: Sequence[float], size: int) -> _Pot:
    """Potential with a leading ``y`` axis whose slice ``v`` is ``weights[v] * pots[v]``.

    A potential that already carries ``y`` contributes its own ``y = v`` slice
    unweighted, since its table already includes ``y``'s probability.
    """
    live = [p for p in pots if p is not None]
    inner = _union(tuple(v for v in p.scope if v != y) for p in live)
    dims = {}
    for p in live:
        dims.update(zip(p.scope, p.table.shape))
    inner_shape = tuple(dims[v] for v in inner)
    table = np.zeros((size,) + inner_shape)
    for v, (p, w) in enumerate(zip(pots, weights)):
        if p is None or w == 0.0:
            continue
        t, sc = p.table, p.scope
        if y in sc:
            t = np.take(t, v, axis=sc.index(y))
            sc = tuple(s for s in sc if s != y)
            w = 1.0
        table[v] = np.broadcast_to(_broadcast(t, sc, inner), inner_shape) * w
    return _Pot((y,) + inner, table)


def _extend(pot: _Pot, names: Sequence[str], dists: Sequence) -> _Pot:
    """Multiply in independent distributions over new variables ``names``."""
    parts = [(pot.scope, pot.table)] + [((n,), np.asarray(d, dtype=float))
                                        for n, d in zip(names, dists)]
    return _Pot(*_product(parts))


def simplify(cpt: Tree, label: FactorSet, k: Mapping[VarRef, int], x: str,
             action: ActionNetwork, value_tree: Tree, *, plan: _Plan | None = None,
             order: Sequence[str] | None = None, check_order: bool = True,
             eager: bool = False) -> Tree:
    """Regress ``x'`` at one partial Q-tree leaf (label ``label``, context ``k``).

    Returns a tree over pre-action variables whose leaves extend ``label``
    with ``x'`` and any retained post-action variables.  Post-action tests are
    replaced in post-action order (children before parents); variables that
    turn out not to be needed are summed out once every replacement is done.

    ``order`` overrides the elimination order and ``check_order`` toggles the
    guard against replacing a variable before one of its intra-slice
    descendants.  ``eager`` sums unneeded variables out as soon as they are
    replaced; it is only safe when the order is respected.
    """
    if any(r.post for r in k):
        raise ValueError("context k must assign pre-action variables only")
    plan = plan or _Plan.build(value_tree, action)
    rank = plan.rank if order is None else {n: i for i, n in enumerate(order)}
    frag = reduce(cpt, k)
    frag = map_leaves(frag, lambda d: _Pot((x,), np.asarray(d, dtype=float)))

    for _ in range(10 * len(plan.order) + 10):
        present = {r.name for r in variables(frag) if r.post}
        if not present:
            break
        y = min(present, key=lambda n: (rank.get(n, len(rank) + plan.rank[n]), plan.rank[n]))
        if check_order:
            bad = present & plan.descendants[y]
            if bad:
                raise OrderingViolation(
                    f"replacing {y}' while its descendant(s) {sorted(bad)} remain")
        frag = _replace(frag, y, label, k, x, plan, eager)
    else:
        raise RuntimeError("post-action replacement did not terminate")

    def finish(ctx, pot):
        return _absorb(pot, label, {**k, **ctx}, x, plan)

    return map_leaves_ctx(frag, finish, k)


def _replace(frag: Tree, y: str, label: FactorSet, k, x: str, plan: _Plan, eager: bool) -> Tree:
    """Remove every test of post-action ``y`` from the fragment."""
    yref = VarRef(y, True)
    size = plan.sizes[y]
    recorded = label.recorded

    def introduced(pot):
        return {v for v in pot.scope if v not in recorded and v != x and v != y}

    def pad_and_stack(c, pots, slots, weights):
        # siblings must carry the same introduced variables, each with its own CPT
        union = set().union(*(introduced(p) for p in pots))
        trees = []
        for p, v in zip(pots, slots):
            missing = sorted(union - introduced(p), key=plan.rank.get)
            if not missing:
                trees.append(Leaf(p))
                continue
            cv = {**c, yref: v}
            cpts = [reduce(plan.action.cpts[z].tree, cv) for z in missing]
            trees.append(reduce(merge(cpts, lambda ds, p=p, m=missing: _extend(p, m, ds)), cv))

        def combine(ps):
            full = [None] * size
            for v, p in zip(slots, ps):
                full[v] = p
            return _stack(y, full, weights, size)

        return merge(trees, combine)

    def merged_children(children, ctx, weights):
        subs, slots = [], []
        for v, child in enumerate(children):
            if weights[v] > 0.0:
                subs.append(reduce(child, {**ctx, yref: v}))
                slots.append(v)
        grouped = merge(subs, tuple)
        return graft(grouped, lambda c, pots: pad_and_stack(c, pots, slots, weights), ctx)

    def sum_if_unneeded(ctx, pot):
        if y not in pot.scope or y in recorded:
            return pot
        k2 = {r: v for r, v in ctx.items() if r not in k}
        if needed(y, label, k, k2, x, plan.value_tree, plan.action, plan=plan):
            return pot
        return _Pot(*_sum_out(pot.scope, pot.table, y))

    def rec(t, ctx):
        if isinstance(t, Leaf):
            return t
        if t.var != yref:
            kids = []
            for v, child in enumerate(t.children):
                ctx[t.var] = v
                kids.append(rec(child, ctx))
            del ctx[t.var]
            return node(t.var, kids)
        if y in recorded:
            weights = [1.0 if p > 0.0 else 0.0 for p in label.marginal(y)]
            return reduce(merged_children(t.children, ctx, weights), ctx)
        if all(y in p.scope for _, p in leaves(t)):
            return reduce(merged_children(t.children, ctx, [1.0] * size), ctx)
        children = t.children

        def at_leaf(c2, dist):
            out = merged_children(children, c2, dist)
            return map_leaves_ctx(out, sum_if_unneeded, c2) if eager else out

        return graft(reduce(plan.action.cpts[y].tree, ctx), at_leaf, ctx)

    return rec(frag, dict(k))


def _absorb(pot: _Pot, label: FactorSet, context, x: str, plan: _Plan) -> FactorSet:
    """Fold a finished potential into the label and drop helpers no longer needed."""
    touched = []
    for v in pot.scope:
        if v in label.recorded:
            f = label.factor_of(v)
            if all(f is not g for g in touched):
                touched.append(f)
    scope, table = _product([(f.scope, f.table) for f in touched] + [(pot.scope, pot.table)])
    new = label.replace(touched, [Factor(scope, table)])
    pre_ctx = {r: v for r, v in context.items() if not r.post}
    for h in scope:
        if h == x or (h in label.recorded and h in plan.value_vars):
            continue
        if not needed(h, new, pre_ctx, {}, x, plan.value_tree, plan.action, plan=plan):
            new = eliminate(new, h, keep_joint=False)
    return new


def value_tree_order(value_tree: Tree) -> list[VarRef]:
    """Depth-first, left-to-right order of first occurrence."""
    return variables(value_tree)


def _reach_mask(value_tree: Tree, xref: VarRef, scope: tuple, shape: tuple) -> np.ndarray:
    """Assignments to ``scope`` consistent with some branch that reaches a test of ``xref``."""
    axis = {name: i for i, name in enumerate(scope)}

    def rec(t):
        if isinstance(t, Leaf):
            return np.zeros(shape, dtype=bool)
        if t.var == xref:
            return np.ones(shape, dtype=bool)
        i = axis.get(t.var.name)
        if i is None:
            return np.logical_or.reduce([rec(c) for c in t.children])
        out = np.empty(shape, dtype=bool)
        for v, child in enumerate(t.children):
            idx = (slice(None),) * i + (v,)
            out[idx] = rec(child)[idx]
        return out

    return rec(value_tree)


def _regress(value_tree: Tree, action: ActionNetwork, step) -> Tree:
    q: Tree = Leaf(FactorSet())
    for xref in value_tree_order(value_tree):
        x = xref.name
        masks: dict = {}

        def at_leaf(k, fset):
            if x in fset.recorded:
                return Leaf(fset)
            scope, joint = fset.joint()
            key = (scope, joint.shape)
            if key not in masks:
                masks[key] = _reach_mask(value_tree, xref, scope, joint.shape)
            if not (joint[masks[key]] > 0.0).any():
                return Leaf(fset)
            return step(x, fset, k)

        q = graft(q, at_leaf)
    return q


def regress_uncorrelated(value_tree: Tree, action: ActionNetwork) -> Tree:
    """Partial Q-tree for an action with no intra-slice arcs."""
    if action.has_correlations():
        raise CorrelatedAction(f"action {action.name!r} has intra-slice arcs")

    def step(x, fset, k):
        cpt = reduce(action.cpts[x].tree, k)
        return map_leaves(cpt, lambda d: FactorSet(
            fset.factors + (Factor((x,), np.asarray(d, dtype=float)),)))

    return _regress(value_tree, action, step)


def regress(value_tree: Tree, action: ActionNetwork, *, order: Sequence[str] | None = None,
            check_order: bool = True, eager: bool = False) -> Tree:
    """Partial Q-tree for any action, correlated effects included.

    ``order``, ``check_order`` and ``eager`` are forwarded to :func:`simplify`;
    they exist so tests can force a bad elimination order.
    """
    plan = _Plan.build(value_tree, action)

    def step(x, fset, k):
        return simplify(action.cpts[x].tree, fset, k, x, action, value_tree, plan=plan,
                        order=order, check_order=check_order, eager=eager)

    return _regress(value_tree, action, step)


def _value_table(value_tree: Tree, scope: tuple, shape: tuple) -> np.ndarray:
    """Value tree as a table over ``scope``; nan where an unlisted variable decides."""
    axis = {name: i for i, name in enumerate(scope)}

    def rec(t):
        if isinstance(t, Leaf):
            return np.full(shape, float(t.payload))
        i = axis.get(t.var.name)
        if i is None:
            return np.full(shape, np.nan)
        out = np.empty(shape)
        for v, child in enumerate(t.children):
            idx = (slice(None),) * i + (v,)
            out[idx] = rec(child)[idx]
        return out

    return rec(value_tree)


def expected_future_value(fset: FactorSet, value_tree: Tree, cache: dict | None = None) -> float:
    """Sum over value-tree branches of branch probability times branch value."""
    scope, joint = fset.joint()
    key = (scope, joint.shape)
    cache = {} if cache is None else cache
    table = cache.get(key)
    if table is None:
        table = cache[key] = _value_table(value_tree, scope, joint.shape)
    live = joint > 0.0
    if np.isnan(table[live]).any():
        raise ScopeError("a branch with positive probability tests an unrecorded variable")
    return float(np.sum(joint * np.where(live, table, 0.0)))


def finalize(pq: Tree, value_tree: Tree, reward_tree: Tree, discount: float) -> Tree:
    """Q-tree: reward plus discounted expected value under each leaf's factors."""
    cache: dict = {}
    future = map_leaves(pq, lambda fset: expected_future_value(fset, value_tree, cache))
    return merge([reward_tree, future], lambda ps: ps[0] + discount * ps[1])


def q_tree(value_tree: Tree, action: ActionNetwork, reward_tree: Tree, discount: float) -> Tree:
    if action.has_correlations():
        pq = regress(value_tree, action)
    else:
        pq = regress_uncorrelated(value_tree, action)
    return finalize(pq, value_tree, reward_tree, discount)

"""Decision trees with generic leaf payloads.

Trees are immutable values.  A tree is either a :class:`Leaf` carrying a
payload or a :class:`Node` that tests one variable and has one child per
value of that variable, in declared domain order.  Variables are referred to
by :class:`VarRef`, which distinguishes the pre-action copy ``X`` from the
post-action copy ``X'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping, NamedTuple, Sequence


class MissingAssignment(KeyError):
    pass


class VarRef(NamedTuple):
    name: str
    post: bool = False

    def __str__(self) -> str:
        return self.name + ("'" if self.post else "")

    @property
    def pre(self) -> "VarRef":
        return VarRef(self.name, False)

    @property
    def primed(self) -> "VarRef":
        return VarRef(self.name, True)


def pre(name: str) -> VarRef:
    return VarRef(name, False)


def post(name: str) -> VarRef:
    return VarRef(name, True)


# A context maps variables to value indices (positions in the domain).
Context = Mapping[VarRef, int]


@dataclass(frozen=True, eq=False)
class Leaf:
    payload: Any

    def __eq__(self, other):
        return isinstance(other, Leaf) and _payload_eq(self.payload, other.payload)

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class Node:
    var: VarRef
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError(f"node testing {self.var} needs >= 2 children")

    def __eq__(self, other):
        return (isinstance(other, Node) and self.var == other.var
                and self.children == other.children)

    __hash__ = object.__hash__


Tree = Leaf | Node


def _payload_eq(a, b) -> bool:
    if a is b:
        return True
    try:
        r = a == b
    except Exception:
        return False
    if isinstance(r, bool):
        return r
    # numpy-like elementwise comparison
    try:
        return bool(r.all())
    except AttributeError:
        return bool(r)


def node(var: VarRef, children: Sequence[Tree]) -> Tree:
    """Build a node, collapsing it when every child is the same leaf."""
    children = tuple(children)
    first = children[0]
    if isinstance(first, Leaf) and all(c == first for c in children[1:]):
        return first
    return Node(var, children)


def evaluate(tree: Tree, assignment: Context):
    while isinstance(tree, Node):
        try:
            value = assignment[tree.var]
        except KeyError:
            raise MissingAssignment(str(tree.var)) from None
        tree = tree.children[value]
    return tree.payload


def _descend(tree: Tree, context: Context) -> Tree:
    while isinstance(tree, Node) and tree.var in context:
        tree = tree.children[context[tree.var]]
    return tree


def reduce(tree: Tree, context: Context | None = None) -> Tree:
    """Drop every test fixed by ``context`` and every repeated test on a path."""
    ctx = dict(context or {})

    def rec(t: Tree) -> Tree:
        t = _descend(t, ctx)
        if isinstance(t, Leaf):
            return t
        kids = []
        for v, child in enumerate(t.children):
            ctx[t.var] = v
            kids.append(rec(child))
        del ctx[t.var]
        return node(t.var, kids)

    return rec(tree)


def map_leaves(tree: Tree, fn: Callable[[Any], Any]) -> Tree:
    if isinstance(tree, Leaf):
        return Leaf(fn(tree.payload))
    return node(tree.var, [map_leaves(c, fn) for c in tree.children])


def map_leaves_ctx(tree: Tree, fn: Callable[[dict, Any], Any], context: Context | None = None) -> Tree:
    """Like :func:`map_leaves`, but ``fn`` also receives the branch context."""
    ctx = dict(context or {})

    def rec(t):
        t = _descend(t, ctx)
        if isinstance(t, Leaf):
            return Leaf(fn(dict(ctx), t.payload))
        kids = []
        for v, child in enumerate(t.children):
            ctx[t.var] = v
            kids.append(rec(child))
        del ctx[t.var]
        return node(t.var, kids)

    return rec(tree)


def merge(trees: Sequence[Tree], combine: Callable[[list], Any]) -> Tree:
    """Merge trees into one whose branches make every distinction of each input.

    Trees are grafted in order: tests of earlier trees sit above tests of
    later ones.  Each leaf of the result carries ``combine`` applied to the
    list of input payloads reached under that leaf's branch.
    """
    trees = list(trees)
    if not trees:
        raise ValueError("merge needs at least one tree")
    ctx: dict = {}

    def rec(ts: list) -> Tree:
        ts = [_descend(t, ctx) for t in ts]
        split = next((t for t in ts if isinstance(t, Node)), None)
        if split is None:
            return Leaf(combine([t.payload for t in ts]))
        var = split.var
        kids = []
        for v in range(len(split.children)):
            ctx[var] = v
            kids.append(rec(ts))
        del ctx[var]
        return node(var, kids)

    return rec(trees)


def graft(tree: Tree, fn: Callable[[dict, Any], Tree], context: Context | None = None) -> Tree:
    """Replace each leaf by ``fn(branch_context, payload)``, reduced by that branch."""
    ctx = dict(context or {})

    def rec(t):
        t = _descend(t, ctx)
        if isinstance(t, Leaf):
            return reduce(fn(dict(ctx), t.payload), ctx)
        kids = []
        for v, child in enumerate(t.children):
            ctx[t.var] = v
            kids.append(rec(child))
        del ctx[t.var]
        return node(t.var, kids)

    return rec(tree)


def leaves(tree: Tree, context: Context | None = None) -> Iterator[tuple[dict, Any]]:
    """Yield ``(branch_context, payload)`` for every leaf, left to right."""
    ctx = dict(context or {})

    def rec(t):
        if isinstance(t, Leaf):
            yield dict(ctx), t.payload
            return
        for v, child in enumerate(t.children):
            ctx[t.var] = v
            yield from rec(child)
        del ctx[t.var]

    return rec(tree)


def node_contexts(tree: Tree) -> Iterator[tuple[dict, VarRef]]:
    """Yield ``(context, var)`` for every internal node: the path leading to it."""
    ctx: dict = {}

    def rec(t):
        if isinstance(t, Leaf):
            return
        yield dict(ctx), t.var
        for v, child in enumerate(t.children):
            ctx[t.var] = v
            yield from rec(child)
        del ctx[t.var]

    return rec(tree)


def variables(tree: Tree) -> list[VarRef]:
    """Tested variables in depth-first, left-to-right order of first occurrence."""
    seen: dict = {}

    def rec(t):
        if isinstance(t, Node):
            seen.setdefault(t.var, len(t.children))
            for c in t.children:
                rec(c)

    rec(tree)
    return list(seen)


def domain_sizes(tree: Tree) -> dict[VarRef, int]:
    sizes: dict = {}

    def rec(t):
        if isinstance(t, Node):
            sizes.setdefault(t.var, len(t.children))
            for c in t.children:
                rec(c)

    rec(tree)
    return sizes


def count_leaves(tree: Tree) -> int:
    if isinstance(tree, Leaf):
        return 1
    return sum(count_leaves(c) for c in tree.children)


def count_nodes(tree: Tree) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + sum(count_nodes(c) for c in tree.children)


def payload_distance(a, b) -> float:
    """Absolute difference for numbers, max elementwise difference for vectors.

    Payloads that expose a ``distance`` method use it; anything else is 0
    when equal and infinite otherwise.
    """
    if hasattr(a, "distance"):
        return a.distance(b)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return abs(a - b)
    if isinstance(a, (tuple, list)) and isinstance(b, (tuple, list)):
        if len(a) != len(b):
            return math.inf
        return max((payload_distance(x, y) for x, y in zip(a, b)), default=0.0)
    return 0.0 if _payload_eq(a, b) else math.inf


def max_distance(a: Tree, b: Tree, distance=payload_distance) -> float:
    """Largest leaf-payload distance over the common refinement of two trees."""
    worst = merge([a, b], lambda ps: distance(ps[0], ps[1]))
    return max(p for _, p in leaves(worst))


def semantic_eq(a: Tree, b: Tree, tol: float = 0.0, distance=payload_distance) -> bool:
    """True when both trees agree within ``tol`` on every full assignment.

    The check walks the common refinement of the two trees, so it visits every
    assignment of the tested variables (grouped into cells on which both
    trees are constant) and is insensitive to variable ordering.
    """
    return max_distance(a, b, distance) <= tol

"""Factored MDPs whose actions are two-slice networks with tree-structured CPTs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .trees import Leaf, Node, Tree, VarRef, leaves, variables

NORMALIZATION_TOL = 1e-9


class CyclicNetwork(ValueError):
    pass


class UnknownVariable(KeyError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    domain: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.domain)


@dataclass(frozen=True)
class CPT:
    """Tree(X', a): leaves are probability tuples over the variable's domain."""
    parents: frozenset[VarRef]
    tree: Tree


@dataclass(frozen=True)
class ActionNetwork:
    name: str
    cpts: Mapping[str, CPT]  # keyed by variable name, in declaration order

    def parents(self, name: str) -> frozenset[VarRef]:
        return self.cpts[name].parents

    def post_parents(self, name: str) -> list[str]:
        return [p.name for p in self.cpts[name].parents if p.post]

    def intra_arcs(self) -> list[tuple[str, str]]:
        """(parent, child) pairs of post-action variables."""
        return [(p, child) for child in self.cpts for p in sorted(self.post_parents(child))]

    def has_correlations(self) -> bool:
        return any(p.post for cpt in self.cpts.values() for p in cpt.parents)


@dataclass(frozen=True)
class MdpModel:
    variables: tuple[Variable, ...]
    actions: tuple[ActionNetwork, ...]
    reward: Tree
    discount: float
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {v.name: v for v in self.variables})

    def variable(self, name: str) -> Variable:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownVariable(name) from None

    def action(self, name: str) -> ActionNetwork:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(f"unknown action {name!r}")

    @property
    def action_names(self) -> list[str]:
        return [a.name for a in self.actions]

    @property
    def n_states(self) -> int:
        n = 1
        for v in self.variables:
            n *= v.size
        return n


def _intra_children(action: ActionNetwork) -> dict[str, list[str]]:
    children: dict[str, list[str]] = {n: [] for n in action.cpts}
    for parent, child in action.intra_arcs():
        children.setdefault(parent, []).append(child)
    return children


def post_action_ordering(action: ActionNetwork) -> list[str]:
    """Order post-action variables so that intra-slice children precede parents.

    Ties go to the earlier-declared variable.
    """
    children = _intra_children(action)
    names = list(action.cpts)
    placed: set[str] = set()
    order: list[str] = []
    while len(order) < len(names):
        for n in names:
            if n not in placed and all(c in placed for c in children.get(n, ())):
                order.append(n)
                placed.add(n)
                break
        else:
            raise CyclicNetwork(f"intra-slice cycle in action {action.name!r}")
    return order


def topological_order(action: ActionNetwork) -> list[str]:
    """Parents before children: the reverse of the post-action ordering."""
    return post_action_ordering(action)[::-1]


def validate(model: MdpModel) -> list[str]:
    """Return human-readable diagnostics; an empty list means the model is valid."""
    out: list[str] = []
    names = [v.name for v in model.variables]
    if len(set(names)) != len(names):
        out.append("duplicate variable names")
    for v in model.variables:
        if len(v.domain) < 2:
            out.append(f"variable {v.name}: domain needs at least 2 values")
        if len(set(v.domain)) != len(v.domain):
            out.append(f"variable {v.name}: duplicate domain values")
    declared = set(names)
    sizes = {v.name: v.size for v in model.variables}

    if not (0.0 <= model.discount < 1.0):
        out.append(f"discount {model.discount} outside [0, 1)")

    for ref in variables(model.reward):
        if ref.post:
            out.append(f"reward tests post-action variable {ref}")
        elif ref.name not in declared:
            out.append(f"reward tests undeclared variable {ref.name}")
    out.extend(_check_tree_arity(model.reward, sizes, "reward"))
    for _, payload in leaves(model.reward):
        if not isinstance(payload, (int, float)):
            out.append(f"reward leaf {payload!r} is not a number")

    if len({a.name for a in model.actions}) != len(model.actions):
        out.append("duplicate action names")
    for action in model.actions:
        where = f"action {action.name}"
        for n in names:
            if n not in action.cpts:
                out.append(f"{where}: no CPT for variable {n}")
        for n, cpt in action.cpts.items():
            if n not in declared:
                out.append(f"{where}: CPT for undeclared variable {n}")
                continue
            for p in cpt.parents:
                if p.name not in declared:
                    out.append(f"{where}, {n}': undeclared parent {p}")
                if p.post and p.name == n:
                    out.append(f"{where}, {n}': variable is its own parent")
            for ref in variables(cpt.tree):
                if ref not in cpt.parents:
                    out.append(f"{where}, {n}': tests {ref}, which is not a declared parent")
            out.extend(_check_tree_arity(cpt.tree, sizes, f"{where}, {n}'"))
            for ctx, dist in leaves(cpt.tree):
                label = f"{where}, {n}': leaf {_ctx_str(ctx)}"
                if not isinstance(dist, tuple) or len(dist) != sizes[n]:
                    out.append(f"{label}: expected {sizes[n]} probabilities")
                    continue
                if any(p < 0 for p in dist):
                    out.append(f"{label}: negative probability")
                if abs(sum(dist) - 1.0) > NORMALIZATION_TOL:
                    out.append(f"{label}: unnormalized leaf {dist}")
        try:
            post_action_ordering(action)
        except CyclicNetwork:
            out.append(f"{where}: intra-slice cycle")
    return out


def _check_tree_arity(tree: Tree, sizes: Mapping[str, int], where: str) -> list[str]:
    out = []

    def rec(t):
        if isinstance(t, Node):
            want = sizes.get(t.var.name)
            if want is not None and len(t.children) != want:
                out.append(f"{where}: node {t.var} has {len(t.children)} children, domain has {want}")
            for c in t.children:
                rec(c)

    rec(tree)
    return out


def _ctx_str(ctx) -> str:
    return "{" + ", ".join(f"{k}={v}" for k, v in ctx.items()) + "}"


def network_graph(action: ActionNetwork) -> dict[VarRef, set[VarRef]]:
    """Parent sets of every node in the two-slice graph (pre-slice nodes are roots)."""
    parents: dict[VarRef, set[VarRef]] = {}
    for n, cpt in action.cpts.items():
        parents[VarRef(n, True)] = set(cpt.parents)
        parents.setdefault(VarRef(n, False), set())
        for p in cpt.parents:
            parents.setdefault(p, set())
    return parents


def reachable(action: ActionNetwork, src: VarRef, evidence: Iterable[VarRef] = (),
              graph=None) -> set[VarRef]:
    """Nodes outside ``evidence`` that are d-connected to ``src`` given ``evidence``.

    Reachability search over (node, direction) pairs; ``graph`` may be passed
    to reuse a precomputed :func:`network_graph`.
    """
    parents = graph if graph is not None else network_graph(action)
    evidence = set(evidence)
    for ref in evidence | {src}:
        if ref not in parents:
            raise UnknownVariable(str(ref))
    if src in evidence:
        return set()
    children: dict[VarRef, set[VarRef]] = {n: set() for n in parents}
    for n, ps in parents.items():
        for p in ps:
            children[p].add(n)

    # nodes with a descendant in evidence (including themselves)
    anc_of_ev: set[VarRef] = set()
    stack = list(evidence)
    while stack:
        n = stack.pop()
        if n not in anc_of_ev:
            anc_of_ev.add(n)
            stack.extend(parents[n])

    # "up" = arrived from a child, "down" = arrived from a parent
    todo = deque([(src, "up")])
    seen = set()
    found = set()
    while todo:
        n, d = todo.popleft()
        if (n, d) in seen:
            continue
        seen.add((n, d))
        if n not in evidence:
            found.add(n)
        if d == "up" and n not in evidence:
            todo.extend((p, "up") for p in parents[n])
            todo.extend((c, "down") for c in children[n])
        elif d == "down":
            if n not in evidence:
                todo.extend((c, "down") for c in children[n])
            if n in anc_of_ev:
                todo.extend((p, "up") for p in parents[n])
    found.discard(src)
    return found


def blocked(action: ActionNetwork, src: VarRef, dst: VarRef,
            evidence: Iterable[VarRef] = (), graph=None) -> bool:
    """d-separation of ``src`` and ``dst`` given ``evidence`` in the action's network."""
    parents = graph if graph is not None else network_graph(action)
    if dst not in parents:
        raise UnknownVariable(str(dst))
    evidence = set(evidence)
    if src == dst and src not in evidence:
        if src not in parents:
            raise UnknownVariable(str(src))
        return False
    if src in evidence or dst in evidence:
        for ref in evidence | {src}:
            if ref not in parents:
                raise UnknownVariable(str(ref))
        return True
    return dst not in reachable(action, src, evidence, parents)

"""Flat ground truth: enumerate states and solve the MDP in tabular form.

Everything here works on explicit state indices and never calls the
regression code, so it can serve as an independent check on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import sparse

from . import kernels
from .model import ActionNetwork, MdpModel, topological_order
from .trees import Leaf, Tree, VarRef, evaluate, leaves
from .solver import eval_threshold, vi_threshold

DEFAULT_MAX_STATES = 2 ** 20


class StateSpaceTooLarge(ValueError):
    pass


def _leaf_ids(tree: Tree, columns: dict, n: int):
    """Vectorised descent: leaf number reached by each row, and the leaf payloads."""
    ids = np.empty(n, dtype=np.int64)
    payloads = []

    def rec(t, rows):
        if isinstance(t, Leaf):
            ids[rows] = len(payloads)
            payloads.append(t.payload)
            return
        col = columns[t.var][rows]
        for v, child in enumerate(t.children):
            rec(child, rows[col == v])

    rec(tree, np.arange(n))
    return ids, payloads


def evaluate_batch(tree: Tree, columns: dict, n: int) -> np.ndarray:
    """Evaluate ``tree`` on ``n`` assignments given as per-variable columns."""
    ids, payloads = _leaf_ids(tree, columns, n)
    return np.asarray(payloads, dtype=float)[ids]


def _sizes(action: ActionNetwork) -> dict[str, int]:
    return {n: len(next(leaves(c.tree))[1]) for n, c in action.cpts.items()}


def check_size(model: MdpModel, max_states: int = DEFAULT_MAX_STATES) -> int:
    n = model.n_states
    if n > max_states:
        raise StateSpaceTooLarge(f"{n} states exceeds the oracle bound {max_states}")
    return n


def all_states(model: MdpModel) -> np.ndarray:
    """(S, n) value indices; state index = C-order ravel over declared variables."""
    radices = [v.size for v in model.variables]
    return np.array(np.unravel_index(np.arange(model.n_states), radices)).T.reshape(-1, len(radices))


def state_index(model: MdpModel, assignment: dict[str, int]) -> int:
    return int(np.ravel_multi_index([assignment[v.name] for v in model.variables],
                                    [v.size for v in model.variables]))


def state_dict(model: MdpModel, index: int) -> dict[str, int]:
    values = np.unravel_index(index, [v.size for v in model.variables])
    return {v.name: int(x) for v, x in zip(model.variables, values)}


def tree_table(tree: Tree, model: MdpModel) -> np.ndarray:
    """Expand a tree over pre-action variables into a per-state array."""
    states = all_states(model)
    cols = {VarRef(v.name, False): states[:, i] for i, v in enumerate(model.variables)}
    return evaluate_batch(tree, cols, len(states))


def flat_transition(action: ActionNetwork, state: dict[str, int]) -> dict[tuple, float]:
    """Successor distribution of one state, by the chain rule in topological order.

    Successors are tuples of value indices in the action's variable order.
    """
    names = list(action.cpts)
    topo = topological_order(action)
    out: dict[tuple, float] = {}

    def rec(i, succ, p):
        if i == len(topo):
            key = tuple(succ[n] for n in names)
            out[key] = out.get(key, 0.0) + p
            return
        x = topo[i]
        assignment = {VarRef(k, False): v for k, v in state.items()}
        assignment.update({VarRef(k, True): v for k, v in succ.items()})
        dist = evaluate(action.cpts[x].tree, assignment)
        for v, q in enumerate(dist):
            if q > 0.0:
                succ[x] = v
                rec(i + 1, succ, p * q)
                del succ[x]

    rec(0, {}, 1.0)
    return out


def transition_matrix(model: MdpModel, action: ActionNetwork) -> sparse.csr_matrix:
    """Pr(t | s, a) for every state pair, built by vectorised chain-rule expansion."""
    states = all_states(model)
    pos = {v.name: i for i, v in enumerate(model.variables)}
    n_states, n_vars = states.shape
    src = np.arange(n_states)
    succ = np.full((n_states, n_vars), -1, dtype=np.int64)
    prob = np.ones(n_states)
    for x in topological_order(action):
        cols = {VarRef(name, False): states[src, i] for name, i in pos.items()}
        cols.update({VarRef(name, True): succ[:, i] for name, i in pos.items()})
        ids, payloads = _leaf_ids(action.cpts[x].tree, cols, len(src))
        dist = np.asarray(payloads, dtype=float)[ids]
        rows = []
        for v in range(dist.shape[1]):
            keep = dist[:, v] > 0.0
            s2 = succ[keep].copy()
            s2[:, pos[x]] = v
            rows.append((src[keep], s2, prob[keep] * dist[keep, v]))
        src = np.concatenate([r[0] for r in rows])
        succ = np.concatenate([r[1] for r in rows])
        prob = np.concatenate([r[2] for r in rows])
    dest = np.ravel_multi_index(succ.T, [v.size for v in model.variables])
    return sparse.csr_matrix((prob, (src, dest)), shape=(n_states, n_states))


class FlatModel:
    """Explicit reward vector and transition matrices of a model."""

    def __init__(self, model: MdpModel, max_states: int = DEFAULT_MAX_STATES):
        check_size(model, max_states)
        self.model = model
        self.reward = tree_table(model.reward, model)
        self.matrices = []
        for a in model.actions:
            m = transition_matrix(model, a)
            m.sort_indices()
            self.matrices.append(m)

    @property
    def n_states(self) -> int:
        return len(self.reward)

    def q(self, value: np.ndarray) -> np.ndarray:
        """(A, S) array of Q-values against ``value``."""
        beta = self.model.discount
        value = np.ascontiguousarray(value, dtype=float)
        return np.array([
            kernels.q_backup(m.indptr.astype(np.int64), m.indices.astype(np.int64),
                             m.data, self.reward, value, beta)
            for m in self.matrices])


def flat_q(model: MdpModel, value: np.ndarray, flat: FlatModel | None = None) -> np.ndarray:
    return (flat or FlatModel(model)).q(value)


@dataclass
class FlatVI:
    value: np.ndarray
    policy: np.ndarray  # action indices
    iterations: int
    converged: bool
    last_q: np.ndarray  # Q-values of the final backup
    residuals: list = field(default_factory=list)


def flat_value_iteration(model: MdpModel, epsilon: float = 1e-4, max_iters: int = 1000,
                         max_states: int = DEFAULT_MAX_STATES,
                         flat: FlatModel | None = None) -> FlatVI:
    flat = flat or FlatModel(model, max_states)
    threshold = vi_threshold(epsilon, model.discount)
    value = flat.reward.copy()
    residuals = []
    q = None
    for i in range(1, max_iters + 1):
        q = flat.q(value)
        new = q.max(axis=0)
        residuals.append(float(np.max(np.abs(new - value))))
        value = new
        if residuals[-1] <= threshold:
            return FlatVI(value, q.argmax(axis=0), i, True, q, residuals)
    return FlatVI(value, q.argmax(axis=0), max_iters, False, q, residuals)


def flat_policy_value(model: MdpModel, policy: np.ndarray, epsilon: float = 1e-10,
                      max_iters: int = 100000, flat: FlatModel | None = None) -> np.ndarray:
    """Iterate the fixed-policy backup until the change drops below the bound."""
    flat = flat or FlatModel(model)
    policy = np.asarray(policy)
    threshold = eval_threshold(epsilon, model.discount)
    states = np.arange(flat.n_states)
    value = flat.reward.copy()
    for _ in range(max_iters):
        new = flat.q(value)[policy, states]
        done = np.max(np.abs(new - value)) <= threshold
        value = new
        if done:
            break
    return value


def policy_table(policy: Tree, model: MdpModel) -> np.ndarray:
    names = model.action_names
    states = all_states(model)
    cols = {VarRef(v.name, False): states[:, i] for i, v in enumerate(model.variables)}
    ids, payloads = _leaf_ids(policy, cols, len(states))
    return np.array([names.index(p) for p in payloads], dtype=np.int64)[ids]


@dataclass
class ComparisonReport:
    max_gap: float
    worst_state: dict
    policy_agreement: np.ndarray  # per state: structured action is optimal up to ties
    passed: bool
    n_states: int
    iterations: int

    def summary(self) -> str:
        agree = int(self.policy_agreement.sum())
        return (f"states: {self.n_states}\n"
                f"max value gap: {self.max_gap:.3e}\n"
                f"worst state: {self.worst_state}\n"
                f"policy agreement (up to ties): {agree}/{self.n_states}\n"
                f"oracle iterations: {self.iterations}\n"
                f"result: {'PASS' if self.passed else 'FAIL'}")


def compare(value: Tree, policy: Tree | None, model: MdpModel, epsilon: float = 1e-4,
            tol: float = 1e-4, policy_tol: float = 1e-6, flat_result: FlatVI | None = None,
            max_states: int = DEFAULT_MAX_STATES) -> ComparisonReport:
    """Check structured results against flat value iteration at every state."""
    check_size(model, max_states)
    ref = flat_result or flat_value_iteration(model, epsilon, max_states=max_states)
    table = tree_table(value, model)
    gaps = np.abs(table - ref.value)
    worst = int(np.argmax(gaps))
    if policy is not None:
        chosen = policy_table(policy, model)
        q = ref.last_q
        agreement = q[chosen, np.arange(len(chosen))] >= q.max(axis=0) - policy_tol
    else:
        agreement = np.ones(len(table), dtype=bool)
    passed = bool(gaps[worst] <= tol and agreement.all())
    return ComparisonReport(float(gaps[worst]), state_dict(model, worst), agreement,
                            passed, len(table), ref.iterations)


class TwoSliceJoint:
    """Joint over every (pre, post) node of an action under a uniform pre-action prior.

    Marginals over node subsets are memoised, each derived from a cached
    superset by summing out one node.
    """

    def __init__(self, action: ActionNetwork):
        sizes = _sizes(action)
        names = list(action.cpts)
        self.nodes = [VarRef(n, False) for n in names] + [VarRef(n, True) for n in names]
        self.radices = [sizes[n] for n in names] * 2
        grid = np.array(list(product(*[range(r) for r in self.radices])), dtype=np.int64)
        cols = {ref: grid[:, i] for i, ref in enumerate(self.nodes)}
        joint = np.full(len(grid), 1.0 / np.prod([sizes[n] for n in names]))
        for i, n in enumerate(names):
            dist = evaluate_batch(action.cpts[n].tree, cols, len(grid))
            joint *= dist[np.arange(len(grid)), grid[:, len(names) + i]]
        self.table = joint.reshape(self.radices)
        self.index = {ref: i for i, ref in enumerate(self.nodes)}
        self._marginals = {tuple(range(len(self.nodes))): self.table}

    def marginal(self, keep: tuple) -> np.ndarray:
        """Marginal over the sorted node indices ``keep``."""
        hit = self._marginals.get(keep)
        if hit is None:
            missing = next(i for i in range(len(self.nodes)) if i not in keep)
            parent = tuple(sorted(keep + (missing,)))
            hit = self.marginal(parent).sum(axis=parent.index(missing))
            self._marginals[keep] = hit
        return hit

    def ci_gap(self, a: VarRef, b: VarRef, evidence=()) -> float:
        ia, ib = self.index[a], self.index[b]
        ev = [self.index[e] for e in evidence]
        keep = tuple(sorted(set(ev) | {ia, ib}))
        m = self.marginal(keep)
        m = np.transpose(m, [keep.index(i) for i in ev + [ia, ib]])
        table = np.ascontiguousarray(m).reshape(-1, self.radices[ia], self.radices[ib])
        return kernels.ci_gap(table)


_joint_cache: dict = {}


def two_slice_joint(action: ActionNetwork) -> TwoSliceJoint:
    hit = _joint_cache.get(id(action))
    if hit is not None and hit[0] is action:
        return hit[1]
    if len(_joint_cache) > 16:
        _joint_cache.clear()
    joint = TwoSliceJoint(action)
    _joint_cache[id(action)] = (action, joint)
    return joint


def brute_force_ci(action: ActionNetwork, a: VarRef, b: VarRef, evidence=(),
                   tol: float = 1e-9) -> bool:
    """Pr(A, B | e) == Pr(A | e) Pr(B | e) for every e with Pr(e) > 0."""
    if a == b:
        return False
    evidence = list(evidence)
    if a in evidence or b in evidence:
        return True
    return two_slice_joint(action).ci_gap(a, b, evidence) <= tol

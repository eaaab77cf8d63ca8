"""Text formats for trees and model documents.

Tree grammar::

    tree := "(" "leaf" payload ")"
          | "(" "test" varname["'"] ("(" value tree ")")+ ")"

Model document::

    discount 0.9
    var X { t f }
    reward <tree>
    action a {
      cpt X' [parents: X Y'] <tree>
    }

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from typing import Mapping

from .model import CPT, ActionNetwork, MdpModel, Variable, validate
from .trees import Leaf, Node, Tree, VarRef, leaves, variables


class ModelSyntaxError(SyntaxError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.lineno = line
        self.offset = col


class ValidationError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


_TOKEN = re.compile(r"\s+|#[^\n]*|(?P<tok>[(){}\[\]]|[^\s(){}\[\]#]+)")


class _Tokens:
    def __init__(self, text: str):
        self.items: list[tuple[str, int, int]] = []
        line, start = 1, 0
        for m in _TOKEN.finditer(text):
            tok = m.group("tok")
            if tok is not None:
                self.items.append((tok, line, m.start() - start + 1))
            chunk = m.group(0)
            if "\n" in chunk:
                line += chunk.count("\n")
                start = m.start() + chunk.rfind("\n") + 1
        self.pos = 0

    def peek(self):
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    def where(self):
        if self.pos < len(self.items):
            return self.items[self.pos][1:]
        return (self.items[-1][1], self.items[-1][2]) if self.items else (1, 1)

    def next(self, what="token"):
        if self.pos >= len(self.items):
            raise ModelSyntaxError(f"unexpected end of input, expected {what}", *self.where())
        tok = self.items[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, tok):
        got = self.peek()
        if got != tok:
            raise ModelSyntaxError(f"expected {tok!r}, found {got!r}", *self.where())
        self.pos += 1

    def fail(self, msg):
        raise ModelSyntaxError(msg, *self.where())


def _number(tok: str):
    try:
        return float(tok)
    except ValueError:
        return None


def parse_ref(tok: str) -> VarRef:
    return VarRef(tok[:-1], True) if tok.endswith("'") else VarRef(tok, False)


def _parse_tree(ts: _Tokens, domains: Mapping[str, tuple] | None) -> Tree:
    ts.expect("(")
    kind = ts.next("'leaf' or 'test'")
    if kind == "leaf":
        items = []
        while ts.peek() not in (")", None):
            items.append(ts.next())
        ts.expect(")")
        if not items:
            ts.fail("empty leaf")
        nums = [_number(t) for t in items]
        if all(n is not None for n in nums):
            return Leaf(nums[0] if len(nums) == 1 else tuple(nums))
        if len(items) == 1:
            return Leaf(items[0])
        ts.fail(f"bad leaf payload {' '.join(items)!r}")
    if kind != "test":
        ts.pos -= 1
        ts.fail(f"expected 'leaf' or 'test', found {kind!r}")
    line_col = ts.where()
    ref = parse_ref(ts.next("variable name"))
    branches = {}
    while ts.peek() == "(":
        ts.expect("(")
        value = ts.next("value name")
        if value in branches:
            ts.fail(f"value {value!r} repeated under {ref}")
        branches[value] = _parse_tree(ts, domains)
        ts.expect(")")
    ts.expect(")")
    if domains is None:
        order = list(branches)
    else:
        if ref.name not in domains:
            raise ModelSyntaxError(f"undeclared variable {ref.name!r}", *line_col)
        order = list(domains[ref.name])
        if set(order) != set(branches):
            raise ModelSyntaxError(
                f"test of {ref} must have one branch per value {order}, got {list(branches)}",
                *line_col)
    if len(order) < 2:
        raise ModelSyntaxError(f"test of {ref} needs at least two branches", *line_col)
    return Node(ref, tuple(branches[v] for v in order))


def parse_tree(text: str, domains: Mapping[str, tuple] | None = None) -> Tree:
    """Parse one tree.  Without ``domains`` branch order is taken from the text."""
    ts = _Tokens(text)
    tree = _parse_tree(ts, domains)
    if ts.peek() is not None:
        ts.fail(f"trailing input {ts.peek()!r}")
    return tree


def _fmt_payload(p) -> str:
    if isinstance(p, tuple):
        return " ".join(repr(float(x)) for x in p)
    if isinstance(p, float):
        return repr(p)
    if isinstance(p, int):
        return repr(float(p))
    return str(p)


def serialize_tree(tree: Tree, domains: Mapping[str, tuple] | None = None) -> str:
    if isinstance(tree, Leaf):
        return f"(leaf {_fmt_payload(tree.payload)})"
    names = domains[tree.var.name] if domains else [str(i) for i in range(len(tree.children))]
    inner = " ".join(f"({v} {serialize_tree(c, domains)})" for v, c in zip(names, tree.children))
    return f"(test {tree.var} {inner})"


def domains_of(model: MdpModel) -> dict[str, tuple]:
    return {v.name: v.domain for v in model.variables}


def parse_model(text: str) -> MdpModel:
    """Parse a model document; raises :class:`ModelSyntaxError` or :class:`ValidationError`."""
    ts = _Tokens(text)
    discount = None
    domains: dict[str, tuple] = {}
    reward = None
    actions: list[ActionNetwork] = []
    while ts.peek() is not None:
        word = ts.next()
        if word == "discount":
            if discount is not None:
                ts.fail("discount given twice")
            value = _number(ts.next("discount value"))
            if value is None:
                ts.pos -= 1
                ts.fail("discount must be a number")
            discount = value
        elif word == "var":
            name = ts.next("variable name")
            if not re.fullmatch(r"[A-Za-z_][\w.-]*", name):
                ts.pos -= 1
                ts.fail(f"bad variable name {name!r}")
            if name in domains:
                ts.pos -= 1
                ts.fail(f"variable {name!r} declared twice")
            ts.expect("{")
            values = []
            while ts.peek() not in ("}", None):
                values.append(ts.next())
            ts.expect("}")
            domains[name] = tuple(values)
        elif word == "reward":
            if reward is not None:
                ts.fail("reward given twice")
            reward = _parse_tree(ts, domains)
        elif word == "action":
            actions.append(_parse_action(ts, domains))
        else:
            ts.pos -= 1
            ts.fail(f"unknown section {word!r}")
    if discount is None:
        raise ModelSyntaxError("missing 'discount' section", *ts.where())
    if reward is None:
        raise ModelSyntaxError("missing 'reward' section", *ts.where())
    try:
        model = MdpModel(tuple(Variable(n, d) for n, d in domains.items()), tuple(actions),
                         reward, discount)
    except ValueError as e:
        raise ValidationError([str(e)]) from None
    diagnostics = validate(model)
    if diagnostics:
        raise ValidationError(diagnostics)
    return model


def _parse_action(ts: _Tokens, domains) -> ActionNetwork:
    name = ts.next("action name")
    ts.expect("{")
    cpts: dict[str, CPT] = {}
    while ts.peek() == "cpt":
        ts.next()
        ref = parse_ref(ts.next("post-action variable"))
        if not ref.post:
            ts.pos -= 1
            ts.fail(f"cpt target must be primed, got {ref.name!r}")
        if ref.name not in domains:
            ts.pos -= 1
            ts.fail(f"undeclared variable {ref.name!r}")
        if ref.name in cpts:
            ts.pos -= 1
            ts.fail(f"second cpt for {ref}")
        parents = None
        if ts.peek() == "[":
            ts.next()
            ts.expect("parents:")
            parents = set()
            while ts.peek() not in ("]", None):
                p = parse_ref(ts.next())
                if p.name not in domains:
                    ts.pos -= 1
                    ts.fail(f"undeclared parent {p}")
                parents.add(p)
            ts.expect("]")
        tree = _parse_tree(ts, domains)
        tree = _as_distributions(tree)
        if parents is None:
            parents = set(variables(tree))
        cpts[ref.name] = CPT(frozenset(parents), tree)
    ts.expect("}")
    ordered = {n: cpts[n] for n in domains if n in cpts}
    ordered.update(cpts)
    return ActionNetwork(name, ordered)


def _as_distributions(tree: Tree) -> Tree:
    if isinstance(tree, Leaf):
        p = tree.payload
        return Leaf(p if isinstance(p, tuple) else (p,))
    return Node(tree.var, tuple(_as_distributions(c) for c in tree.children))


def _ref_key(domains):
    order = {n: i for i, n in enumerate(domains)}
    return lambda r: (r.post, order.get(r.name, len(order)), r.name)


def serialize_model(model: MdpModel) -> str:
    d = domains_of(model)
    lines = [f"discount {model.discount!r}"]
    for v in model.variables:
        lines.append(f"var {v.name} {{ {' '.join(v.domain)} }}")
    lines.append(f"reward {serialize_tree(model.reward, d)}")
    key = _ref_key(d)
    for a in model.actions:
        lines.append(f"action {a.name} {{")
        for n, cpt in a.cpts.items():
            parents = " ".join(str(p) for p in sorted(cpt.parents, key=key))
            lines.append(f"  cpt {n}' [parents: {parents}] {serialize_tree(cpt.tree, d)}")
        lines.append("}")
    return "\n".join(lines) + "\n"


def load_model(path) -> MdpModel:
    with open(path) as f:
        return parse_model(f.read())

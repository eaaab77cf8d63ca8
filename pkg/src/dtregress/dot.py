"""Graphviz DOT rendering of decision trees."""

from __future__ import annotations

from typing import Mapping

from .trees import Leaf, Tree


def _label(payload) -> str:
    if isinstance(payload, float | int):
        return f"{payload:.6g}"
    if isinstance(payload, tuple):
        return ", ".join(f"{x:.6g}" for x in payload)
    factors = getattr(payload, "factors", None)
    if factors is not None:
        parts = []
        for f in factors:
            cells = ", ".join(f"{x:.6g}" for x in f.table.ravel())
            parts.append(f"Pr({','.join(n + chr(39) for n in f.scope)}) = [{cells}]")
        return "\\n".join(parts) or "{}"
    return str(payload)


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\\\\n", "\\n") + '"'


def export_dot(tree: Tree, domains: Mapping[str, tuple] | None = None, name: str = "tree") -> str:
    lines = [f"digraph {_quote(name)} {{"]
    counter = [0]

    def rec(t) -> str:
        ident = f"n{counter[0]}"
        counter[0] += 1
        if isinstance(t, Leaf):
            lines.append(f"  {ident} [shape=box, label={_quote(_label(t.payload))}];")
            return ident
        lines.append(f"  {ident} [shape=ellipse, label={_quote(str(t.var))}];")
        values = domains.get(t.var.name) if domains else None
        for v, child in enumerate(t.children):
            cid = rec(child)
            edge = values[v] if values else str(v)
            lines.append(f"  {ident} -> {cid} [label={_quote(edge)}];")
        return ident

    rec(tree)
    lines.append("}")
    return "\n".join(lines) + "\n"

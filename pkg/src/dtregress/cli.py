"""Command-line front end.

Exit codes: 0 success, 1 parse/validation failure, 2 comparison failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .dot import export_dot
from .fileformat import (ModelSyntaxError, ValidationError, domains_of, load_model,
                         parse_tree, serialize_tree)
from .generate import GenParams, random_document
from .oracle import compare, flat_value_iteration, state_dict
from .regression import finalize, regress, regress_uncorrelated
from .solver import modified_policy_iteration, value_iteration
from .trees import leaves, variables

EX_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dtregress", description="Structured solver for factored MDPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="parse and validate a model file")
    s.add_argument("file")

    s = sub.add_parser("regress", help="print the Q-tree of one action")
    s.add_argument("file")
    s.add_argument("--action", required=True)
    s.add_argument("--value", help="file holding the value tree (default: the reward tree)")

    s = sub.add_parser("solve", help="solve a model")
    s.add_argument("file")
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--max-iters", type=int, default=1000)
    s.add_argument("--mpi", action="store_true", help="modified policy iteration")
    s.add_argument("--eval-steps", type=int, default=5)
    s.add_argument("--dot", metavar="DIR", help="write value.dot and policy.dot here")
    s.add_argument("--flat", action="store_true", help="run the flat oracle instead")

    s = sub.add_parser("compare", help="check the structured solution against the oracle")
    s.add_argument("file")
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--tol", type=float, default=1e-4)

    s = sub.add_parser("gen", help="emit a random model document")
    s.add_argument("--vars", type=int, default=6)
    s.add_argument("--actions", type=int, default=3)
    s.add_argument("--intra-arcs", type=int, default=2)
    s.add_argument("--max-parents", type=int, default=3)
    s.add_argument("--reward-vars", type=int, default=2)
    s.add_argument("--discount", type=float, default=0.9)
    s.add_argument("--persist", type=float, default=0.5,
                   help="chance that an action leaves a variable unchanged")
    s.add_argument("--seed", type=int, default=0)
    return p


def _cmd_validate(args, model):
    print("ok")
    return 0


def _cmd_regress(args, model):
    try:
        action = model.action(args.action)
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EX_USAGE
    d = domains_of(model)
    if args.value:
        with open(args.value) as f:
            value = parse_tree(f.read(), d)
        bad = validate_value_tree(value, d)
        if bad:
            print(f"error: {bad}", file=sys.stderr)
            return 1
    else:
        value = model.reward
    pq = regress(value, action) if action.has_correlations() else regress_uncorrelated(value, action)
    print(serialize_tree(finalize(pq, value, model.reward, model.discount), d))
    return 0


def validate_value_tree(tree, domains) -> str | None:
    for ref in variables(tree):
        if ref.post:
            return f"value tree tests post-action variable {ref}"
    for _, p in leaves(tree):
        if not isinstance(p, float):
            return f"value leaf {p!r} is not a number"
    return None


def _cmd_solve(args, model):
    d = domains_of(model)
    if args.flat:
        res = flat_value_iteration(model, args.epsilon, args.max_iters)
        names = model.action_names
        for s, (v, a) in enumerate(zip(res.value, res.policy)):
            st = " ".join(f"{k}={d[k][x]}" for k, x in state_dict(model, s).items())
            print(f"{st}\t{v:.6g}\t{names[a]}")
        print(f"iterations: {res.iterations}")
        print(f"converged: {str(res.converged).lower()}")
        return 0
    if args.mpi:
        res = modified_policy_iteration(model, args.epsilon, args.eval_steps, args.max_iters)
    else:
        res = value_iteration(model, args.epsilon, args.max_iters)
    print(f"value: {serialize_tree(res.value, d)}")
    print(f"policy: {serialize_tree(res.policy, d)}")
    print(f"iterations: {res.iterations}")
    print(f"converged: {str(res.converged).lower()}")
    if args.dot:
        os.makedirs(args.dot, exist_ok=True)
        with open(os.path.join(args.dot, "value.dot"), "w") as f:
            f.write(export_dot(res.value, d, "value"))
        with open(os.path.join(args.dot, "policy.dot"), "w") as f:
            f.write(export_dot(res.policy, d, "policy"))
    return 0


def _cmd_compare(args, model):
    res = value_iteration(model, args.epsilon)
    report = compare(res.value, res.policy, model, args.epsilon, args.tol)
    print(report.summary())
    return 0 if report.passed else 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "gen":
        try:
            params = GenParams(n_vars=args.vars, n_actions=args.actions,
                               max_intra_arcs=args.intra_arcs, max_parents=args.max_parents,
                               reward_vars=args.reward_vars, seed=args.seed,
                               discount=args.discount, persist=args.persist)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EX_USAGE
        sys.stdout.write(random_document(params))
        return 0
    try:
        model = load_model(args.file)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ModelSyntaxError as e:
        print(f"syntax error: {e}", file=sys.stderr)
        return 1
    except ValidationError as e:
        for diag in e.diagnostics:
            print(f"invalid: {diag}", file=sys.stderr)
        return 1
    commands = {"validate": _cmd_validate, "regress": _cmd_regress,
                "solve": _cmd_solve, "compare": _cmd_compare}
    try:
        return commands[args.command](args, model)
    except (ModelSyntaxError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def run_cli(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())

"""Time the compiled oracle kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py --n 12 --repeat 20
"""

import argparse
import timeit

import numpy as np

from dtregress import _pykernels
from dtregress.generate import GenParams, random_model
from dtregress.oracle import FlatModel, two_slice_joint
from dtregress.trees import VarRef

try:
    from dtregress import _ckernels
except ImportError:
    _ckernels = None


def q_backup_case(n_vars: int, seed: int):
    m = random_model(GenParams(n_vars=n_vars, n_actions=1, max_intra_arcs=2, seed=seed,
                               persist=0.3))
    flat = FlatModel(m)
    t = flat.matrices[0]
    value = np.random.default_rng(seed).normal(size=flat.n_states)
    args = (t.indptr.astype(np.int64), t.indices.astype(np.int64), t.data, flat.reward,
            value, m.discount)
    return f"q_backup  {flat.n_states} states, {t.nnz} transitions", args


def ci_gap_case(n_vars: int, seed: int):
    m = random_model(GenParams(n_vars=n_vars, n_actions=1, max_intra_arcs=4, seed=seed))
    a = m.actions[0]
    joint = two_slice_joint(a)
    names = list(a.cpts)
    # condition on every pre-action node: many evidence rows
    ev = [joint.index[VarRef(n, False)] for n in names]
    ia, ib = joint.index[VarRef(names[0], True)], joint.index[VarRef(names[-1], True)]
    keep = tuple(sorted(ev + [ia, ib]))
    table = np.transpose(joint.marginal(keep), [keep.index(i) for i in ev + [ia, ib]])
    table = np.ascontiguousarray(table).reshape(-1, 2, 2)
    return f"ci_gap    {table.shape[0]} evidence rows", (table,)


def bench(label, fn_name, args, repeat):
    py = getattr(_pykernels, fn_name)
    t_py = min(timeit.repeat(lambda: py(*args), number=1, repeat=repeat))
    line = f"{label:<48} python {t_py * 1e3:9.3f} ms"
    if _ckernels is not None:
        c = getattr(_ckernels, fn_name)
        np.testing.assert_allclose(c(*args), py(*args), rtol=1e-10, atol=1e-12)
        t_c = min(timeit.repeat(lambda: c(*args), number=1, repeat=repeat))
        line += f"   cython {t_c * 1e3:9.3f} ms   x{t_py / t_c:6.1f}"
    print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[8, 10, 12])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; timing the fallback only")
    for n in args.n:
        label, a = q_backup_case(n, args.seed)
        bench(label, "q_backup", a, args.repeat)
    for n in (4, 5, 6):
        label, a = ci_gap_case(n, args.seed)
        bench(label, "ci_gap", a, args.repeat)


if __name__ == "__main__":
    main()

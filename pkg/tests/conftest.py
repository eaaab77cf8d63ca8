import random
from pathlib import Path

import numpy as np
import pytest

from dtregress.fileformat import load_model
from dtregress.generate import GenParams, random_model, random_value_tree
from dtregress.trees import VarRef

MODELS = Path(__file__).resolve().parent.parent / "models"


def model_path(name: str) -> Path:
    return MODELS / f"{name}.mdp"


@pytest.fixture
def load():
    return lambda name: load_model(model_path(name))


def X(name):
    return VarRef(name, False)


def Xp(name):
    return VarRef(name, True)


def sampled_model(seed: int, n_vars=(2, 7), n_actions=(1, 3), arcs=(0, 3), **kw):
    """Seeded model with sizes drawn from the given inclusive ranges."""
    rng = random.Random(seed)
    p = GenParams(n_vars=rng.randint(*n_vars), n_actions=rng.randint(*n_actions),
                  max_intra_arcs=rng.randint(*arcs), seed=seed, **kw)
    return random_model(p), rng


def model_and_value(seed: int, **kw):
    m, rng = sampled_model(seed, **kw)
    return m, random_value_tree(m, rng, max_depth=rng.randint(1, 5))


def enumerate_assignments(refs, sizes):
    """Every full assignment of ``refs`` as a dict."""
    refs = list(refs)
    for idx in np.ndindex(*[sizes[r] for r in refs]):
        yield dict(zip(refs, (int(i) for i in idx)))

"""Decision-theoretic regression and structured dynamic programming for factored MDPs."""

from .model import ActionNetwork, CPT, MdpModel, Variable, blocked, post_action_ordering, validate
from .regression import (FactorSet, Factor, branch_probability, eliminate, finalize, needed,
                         regress, regress_uncorrelated, simplify)
from .solver import (max_merge, modified_policy_iteration, successive_approximation,
                     value_iteration)
from .trees import Leaf, Node, VarRef, evaluate, merge, reduce, semantic_eq

__version__ = "0.1.0"

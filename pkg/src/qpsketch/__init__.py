"""Linear sketches for q->p operator norms of matrices."""
from .numerics import Exponent, dual_exponent, vector_norm
from .oracles import (NormBracket, best_norm, lowrank_norm_two_to_p, net_norm,
                      norm_infty_to_p_exact, norm_one_to_p, norm_q_to_infty, operator_norm)
from .sketch import (EstimateResult, SketchFamilyDescriptor, SketchState, apply, estimate,
                     merge, plan, update)

__all__ = [
    "Exponent", "dual_exponent", "vector_norm",
    "NormBracket", "best_norm", "lowrank_norm_two_to_p", "net_norm",
    "norm_infty_to_p_exact", "norm_one_to_p", "norm_q_to_infty", "operator_norm",
    "EstimateResult", "SketchFamilyDescriptor", "SketchState", "apply", "estimate",
    "merge", "plan", "update",
]

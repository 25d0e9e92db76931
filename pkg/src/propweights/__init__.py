"""Online capacitated bipartite matching with learned proportional weights."""

from .instance import AllocationState, Instance, InstanceError, MatchResult, load_instance, save_instance, total_supply
from .online import ArrivalStream, Mode, Policy, learn_then_apply, run_ipw, run_pw, run_ranking, run_waterfill
from .optimum import CutCertificate, brute_force_opt, max_matching, min_vertex_cut, opt_value
from .weights import (
    ConvergenceError,
    WeightVector,
    compute_weights,
    evaluate_offline,
    proportional_shares,
    scaled_subinstance,
)

__version__ = "0.1.0"

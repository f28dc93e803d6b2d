"""Proximal causal inference with discrete proxies: graphs, simulators,
estimators and a replication harness."""

from .dgp import DgpSpec, Dataset, JointTable, default_spec, do_distribution, exact_joint, \
    highdim_spec, observed_joint, sample, true_ate
from .estimators import EstimateReport, ProbModel, backdoor_g, cond_matrix, condition_number, fit, \
    proximal_g, regression_ate, relative_bias
from .graph import CausalGraph, RoleLabeling, check_equivalence_class, check_miao_conditions, \
    d_separated, is_backdoor_admissible, surrogate_parents

__version__ = "0.1.0"

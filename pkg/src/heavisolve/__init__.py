"""Heaviside composite optimization toolkit.

Exact mixed-binary encodings and a progressive integer programming solver
for problems that maximize nonnegative-weighted sums of Heaviside indicators
of piecewise-affine functions under rows of the same form, with builders for
constrained treatment learning and multi-class classification.
"""
from .pwa import (AffineFn, Box, DcPwa, MaxAffine, MinAffine, heaviside_closed,
                  heaviside_open, lower_bound_on_box, negate,
                  upper_bound_on_box)
from .hscop import (Atom, ConstraintRow, Evaluation, HscopObjective,
                    HscopProblem, IndexSets, LinearHeavisideTerm, Point,
                    ProductHeavisideTerm, evaluate, index_sets,
                    phi_lower_bound, problem_from_json, problem_to_json)
from .milp import (FEASIBLE_TIME_LIMIT, INFEASIBLE, NO_INCUMBENT, OPTIMAL,
                   UNBOUNDED, MilpModel, MilpNumericalError, MilpSolution,
                   Tolerances, solve_enumeration, solve_lp, solve_milp)
from .encode import (BigMConstants, EncodingMap, build_full_mip,
                     build_restricted_mip, extract_solution, incumbent_hint)
from .progressive import (PipConfig, PipResult, PipState, choose_epsilons,
                          initial_point, pip_step, run_pip)
from .treatment import (Dataset, PolicyParams, TreatmentSpec,
                        build_treatment_hscop, estimate_propensities,
                        gini_ipw, policy_assign, score_functions, welfare_ipw)
from .classify import (LabeledDataset, NpSpec, TreeShape,
                       build_np_classification, build_standard_classification,
                       build_tree_hscop, enumerate_label_tuples,
                       sweep_label_tuples, tree_predict)
from .synthdata import SynthConfig, generate

__version__ = "0.1.0"

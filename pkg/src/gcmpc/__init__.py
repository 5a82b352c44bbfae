"""Guaranteed-cost robust MPC for uncertain discrete-time linear systems.

The package synthesizes state feedback with a certified worst-case
quadratic cost under norm-bounded multiplicative uncertainty, tightens
pointwise constraints so the certificate survives them, and plans over
the residual degrees of freedom with an embedded interior-point solver
for quadratic objectives over sum-of-norms constraint rows.  An
enumeration-based min-max controller over the uncertainty vertices is
included as the exactness and timing baseline.
"""

from .conic import (ConeAtom, ConeProgram, ConeRow, ConeSolution, canonicalize,
                    dump_canonical, kkt_residuals, solve_cone)
from .controller import (GcmpcController, PlanResult, PlanSolveError,
                         RobustInfeasible, build_controller)
from .ermpc import (ErmpcController, MinMaxInfeasible, MinMaxSolution,
                    MinMaxStructure, ScenarioTree, TreeTooLarge,
                    build_scenario_tree, nominal_mpc, solve_minmax)
from .model import (CostWeights, NominalSystem, StageConstraints, Trajectory,
                    UncertainSystem, UncertaintyStructure, check_membership,
                    eval_cost, step_nominal, step_uncertain)
from .problemfile import (ProblemDefinition, ProblemFormatError,
                          build_from_problem, load_problem, parse_problem)
from .riccati import (EpsilonInterval, GccCheck, GccInfeasible,
                      GccNoConvergence, GccSolution, LqrSolution,
                      NoFeasibleEpsilon, gcc_epsilon_interval,
                      gcc_riccati_map, gcc_select_epsilon, gcc_solve_infinite,
                      lqr_backward, verify_gcc)
from .sim import (BenchReport, SimConfig, SimTrace, bench_to_csv, benchmark,
                  check_cost_bound, run_closed_loop, run_plan_rollout,
                  sample_contraction, sample_disturbance, trace_to_csv)
from .tightening import (RobustConstraintSystem, StageBlock, TighteningTables,
                         TubeGain, UncontrollablePair,
                         assemble_robust_constraints, build_tables, c_table,
                         deadbeat_gain, phi, rho_sequence)

__version__ = "0.1.0"

__all__ = [
    "ConeAtom", "ConeProgram", "ConeRow", "ConeSolution", "canonicalize",
    "dump_canonical", "kkt_residuals", "solve_cone",
    "GcmpcController", "PlanResult", "PlanSolveError", "RobustInfeasible",
    "build_controller",
    "ErmpcController", "MinMaxInfeasible", "MinMaxSolution", "MinMaxStructure",
    "ScenarioTree", "TreeTooLarge", "build_scenario_tree", "nominal_mpc",
    "solve_minmax",
    "CostWeights", "NominalSystem", "StageConstraints", "Trajectory",
    "UncertainSystem", "UncertaintyStructure", "check_membership", "eval_cost",
    "step_nominal", "step_uncertain",
    "ProblemDefinition", "ProblemFormatError", "build_from_problem",
    "load_problem", "parse_problem",
    "EpsilonInterval", "GccCheck", "GccInfeasible", "GccNoConvergence",
    "GccSolution", "LqrSolution", "NoFeasibleEpsilon", "gcc_epsilon_interval",
    "gcc_riccati_map", "gcc_select_epsilon", "gcc_solve_infinite",
    "lqr_backward", "verify_gcc",
    "BenchReport", "SimConfig", "SimTrace", "bench_to_csv", "benchmark",
    "check_cost_bound", "run_closed_loop", "run_plan_rollout",
    "sample_contraction", "sample_disturbance", "trace_to_csv",
    "RobustConstraintSystem", "StageBlock", "TighteningTables", "TubeGain",
    "UncontrollablePair", "assemble_robust_constraints", "build_tables",
    "c_table", "deadbeat_gain", "phi", "rho_sequence",
    "__version__",
]

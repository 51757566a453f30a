"""Optimal-transport (bisimulation) distances between finite Markov chains.

Estimates the discounted transport distance between two chains from
sampled transitions alone, via a stochastic primal-dual solver over
occupancy couplings, validated against an exact dynamic-programming
oracle on small instances.
"""

from .backend import BACKEND_NAME, USING_COMPILED
from .chains import (
    ChainFormatError,
    CostMatrix,
    MarkovChain,
    OccupancyTable,
    TransitionPair,
    TransitionSampler,
    cost_from_rewards,
    exact_occupancy,
    ingest_transitions,
    load_chain,
    make_block_lift,
    make_random_walk,
    sample_transition,
    save_chain,
    write_transition_dump,
)
from .coupling import (
    ConditionalKernel,
    ConstraintResiduals,
    DualVariables,
    OccupancyCoupling,
    check_prop1_equivalence,
    distance_of,
    dual_certificate,
    induced_conditionals,
    joint_initial,
    lagrangian,
    residuals,
)
from .oracle import OracleResult, bicausal_value_iteration, oracle_occupancy, solve_inner_ot
from .rounding import (
    TransitionCoupling,
    induced_occupancy,
    round_occupancy,
    round_symmetric,
    round_to_coupling,
    transition_coupling_of,
)
from .solver import (
    IterateDiagnostics,
    Rates,
    SolverConfig,
    SolverRun,
    SolverState,
    default_samplers,
    run,
    theory_rates,
)

__version__ = "0.1.0"

"""Optimal decentralized non-smooth optimization over time-varying networks.

Modules
-------
problem       objectives, subgradient oracles and saddle functions
network       time-varying gossip matrices and chi certification
solver        the optimal primal-dual method and its duality-gap certificate
hard_instance lower-bound instances on the rotating star
span_oracle   black-box span automaton for the communication lower bound
baselines     centralized subgradient descent and D-SubGD
harness       configs, runs, sweeps and CSV records
"""

from .problem import ProblemInstance, SubgradientOracle, eval_p, l1_distance_instance
from .network import TimeVaryingNetwork, certify_chi, make_network, rotating_star
from .solver import (RunRecord, Schedule, choose_budget, make_schedule, solve_convex,
                     solve_strongly_convex)
from .hard_instance import build_cvx, build_sc

__version__ = "0.1.0"

__all__ = [
    "ProblemInstance", "SubgradientOracle", "eval_p", "l1_distance_instance",
    "TimeVaryingNetwork", "certify_chi", "make_network", "rotating_star",
    "RunRecord", "Schedule", "choose_budget", "make_schedule", "solve_convex",
    "solve_strongly_convex", "build_cvx", "build_sc",
]

"""Cost-aware placement of job data across cloud storage tiers."""
from .baselines import (PolicyOutcome, act_greedy, brute_force, economic_policy,
                        performance_policy)
from .errors import (DanglingReference, InfeasibleScenario, PlacementInfeasible, SchemaError,
                     SearchSpaceTooLarge, TierplaceError, ValidationError)
from .lyapunov import DriftBounds, QueueState, Traffic, lyapunov_value, drift_bound_rhs
from .model import (FREQUENCY_PRESETS, CostModel, DataSet, EnvironmentParams, JobProfile,
                    PlacementPlan, StorageType, job_cost, job_money, job_time, total_cost)
from .planner import PlannerConfig, lnodp_step, near_optimal_planning
from .scenario import load_scenario, parse_scenario, scenario_hash, serialize_scenario
from .simulator import POLICIES, Scenario, SimulationTrace, compare, run, static_plan

__version__ = "0.1.0"

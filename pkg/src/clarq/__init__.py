"""Optimal closed-loop ARQ (CLARQ) scheduling in the finite-blocklength regime."""
from __future__ import annotations

__version__ = "0.1.0"

from .apc import ApcConfig, ApcResult, ApcSchedule, ApcStage, solve_apc
from .baseline import (OneShotSplit, equal_error_split, naive_clarq_policy, naive_schedule, one_shot_cubic,
                       solve_one_shot, static_harq_reliability)
from .dp import (DpPolicy, StructureReport, extract_schedule, load_policy, optimal_schedule, save_policy,
                 solve_policy, verify_structure)
from .errors import FblValidityWarning, InfeasibleError
from .fading import FadingModel, McAggregate, draw_channel_pair, run_campaign
from .fbl import (ChannelSpec, FblParams, FrameBudget, combined_arq_error, harq2_error_rate, min_blocklength,
                  packet_error_rate, q_function, q_inverse)
from .lut import Lut, LutSpec, build_lut, load_lut, resolution_experiment, save_lut
from .protocol import FrameOutcome, SimConfig, SimResult, build_plan, run_frames
from .scenarios import SCENARIOS, Scenario, get_scenario
from .schedule import Schedule, ScheduleStats, energy_stats, loop_error, loop_reliability

__all__ = [
    "ApcConfig", "ApcResult", "ApcSchedule", "ApcStage", "ChannelSpec", "DpPolicy", "FadingModel", "FblParams",
    "FblValidityWarning", "FrameBudget", "FrameOutcome", "InfeasibleError", "Lut", "LutSpec", "McAggregate",
    "OneShotSplit", "SCENARIOS", "Scenario", "Schedule", "ScheduleStats", "SimConfig", "SimResult",
    "StructureReport", "build_lut", "build_plan", "combined_arq_error", "draw_channel_pair", "energy_stats",
    "equal_error_split", "extract_schedule", "get_scenario", "harq2_error_rate", "load_lut", "load_policy",
    "loop_error", "loop_reliability", "min_blocklength", "naive_clarq_policy", "naive_schedule",
    "one_shot_cubic", "optimal_schedule", "packet_error_rate", "q_function", "q_inverse",
    "resolution_experiment", "run_campaign", "run_frames", "save_lut", "save_policy", "solve_apc",
    "solve_one_shot", "solve_policy", "static_harq_reliability", "verify_structure",
]

from .metrics import (compute_ape, uniform_baseline_ape, belief_position,
                      episode_ape)
from .navigation import (SUCCESS_RADIUS, MAX_STEPS, EpisodeRecord,
                         NavigationReport, Controller, RandomController,
                         ExpertController, NonLearningController,
                         LearnedController, run_episode, evaluate_navigation,
                         sample_episode_specs, shortest_to_success)
from .report import (LocalizationReport, bootstrap_ci, export_localization,
                     export_navigation, read_report_csv, export_episode_records,
                     LOC_COLUMNS, NAV_COLUMNS)

__all__ = [
    "compute_ape", "uniform_baseline_ape", "belief_position", "episode_ape",
    "SUCCESS_RADIUS", "MAX_STEPS", "EpisodeRecord", "NavigationReport",
    "Controller", "RandomController", "ExpertController",
    "NonLearningController", "LearnedController", "run_episode",
    "evaluate_navigation", "sample_episode_specs", "shortest_to_success",
    "LocalizationReport", "bootstrap_ci", "export_localization",
    "export_navigation", "read_report_csv", "export_episode_records",
    "LOC_COLUMNS", "NAV_COLUMNS",
]

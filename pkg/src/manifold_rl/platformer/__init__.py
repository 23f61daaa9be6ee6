"""Desk-scale side-scrolling platformer: level generator and environment."""
from .env import (
    ACTIONS, ABSENT, FEATURE_NAMES, FEATURE_RANGES, MODES, N_ACTIONS, N_FEATURES,
    EnvConfig, Platformer, RewardSchedule, StepAfterDone, WorldState, action_index,
    action_name, write_event_log,
)
from .level import LevelConfig, LevelError, LevelSpec, flat_level, generate_level, is_traversable

__all__ = [
    "ACTIONS", "ABSENT", "FEATURE_NAMES", "FEATURE_RANGES", "MODES", "N_ACTIONS",
    "N_FEATURES", "EnvConfig", "Platformer", "RewardSchedule", "StepAfterDone",
    "WorldState", "action_index", "action_name", "write_event_log", "LevelConfig",
    "LevelError", "LevelSpec", "flat_level", "generate_level", "is_traversable",
]

"""Goal-conditioned RL with continuous value iteration over KNN value models,
hindsight/imaginary replay augmentation, and benchmark environments."""

from .agent import CviAgent, CviParams, q_fit, v_iteration, v_update_target
from .augment import (AugmenterSpec, her_augment, her_equivalent_count, ier_augment)
from .core import (Environment, ReplayBuffer, SpaceSpec, Trajectory, Transition,
                   goal_reward, sample_uniform)
from .envs import (ArmEnv, ArmEnvConfig, PointEnv, PointEnvConfig,
                   arm_achieved_goal, arm_sample_goal, arm_step,
                   point_analytic_value, point_optimal_steps, point_step)
from .knn import KnnModel, fit

__all__ = [
    "ArmEnv", "ArmEnvConfig", "AugmenterSpec", "CviAgent", "CviParams",
    "Environment", "KnnModel", "PointEnv", "PointEnvConfig", "ReplayBuffer",
    "SpaceSpec", "Trajectory", "Transition", "arm_achieved_goal",
    "arm_sample_goal", "arm_step", "fit", "goal_reward", "her_augment",
    "her_equivalent_count", "ier_augment", "point_analytic_value",
    "point_optimal_steps", "point_step", "q_fit", "sample_uniform",
    "v_iteration", "v_update_target",
]

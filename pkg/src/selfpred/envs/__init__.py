"""Environments, featurizers and scripted behaviour policies."""

from .classic import MountainCar, PointMass, make_load_unload, mountain_car_grid
from .distractors import DistractorWrapper, wrap_distractors
from .features import OutOfBoundsWarning, RBFGrid, RollingWindow, WindowStack, one_hot, rbf_featurize
from .keydoor import KeyDoorWorld, make_grid_keydoor
from .policies import ScriptedPolicy
from .pomdp import FinitePOMDP, POMDPEnv, StepAfterDone, Trajectory, dumps, loads, random_finite_pomdp

__all__ = [
    "DistractorWrapper", "FinitePOMDP", "KeyDoorWorld", "MountainCar", "OutOfBoundsWarning",
    "POMDPEnv", "PointMass", "RBFGrid", "RollingWindow", "ScriptedPolicy", "StepAfterDone",
    "Trajectory", "WindowStack", "dumps", "loads", "make_grid_keydoor", "make_load_unload",
    "mountain_car_grid", "one_hot", "random_finite_pomdp", "rbf_featurize", "wrap_distractors",
]

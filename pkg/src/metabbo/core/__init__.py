"""Bi-level engine: environment, features, policy, trainers."""

from metabbo.core.env import DEEnv, Trajectory, episode, fixed_design_run, meta_objective
from metabbo.core.features import extract_features, reward
from metabbo.core.policy import MetaPolicy, policy_forward
from metabbo.core.signal import UniversalSignal, wrap_signal
from metabbo.core.trainers import NEConfig, RLConfig, Snapshot, train_ne, train_rl

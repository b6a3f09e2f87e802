"""Federated dueling double DQN link reconfiguration for simulated O-RAN factory cells."""

from .drl import DrlHyper, Layout
from .env import EnvConfig, Environment, RewardWeights, decode_action, encode_action
from .estimator import FedDRLLinkAdapter, LinkStateEncoder
from .federate import FederateConfig, GlobalModel, ReplayConfig, RunMode, Trainer, aggregate
from .harness import RunConfig, compare, load_config, run_experiment, summarize
from .phy import load_mcs_table
from .replay import PerBuffer, SumTree

__version__ = "0.1.0"

__all__ = [
    "DrlHyper", "Layout", "EnvConfig", "Environment", "RewardWeights", "decode_action",
    "encode_action", "FedDRLLinkAdapter", "LinkStateEncoder", "FederateConfig", "GlobalModel",
    "ReplayConfig", "RunMode", "Trainer", "aggregate", "RunConfig", "compare", "load_config",
    "run_experiment", "summarize", "load_mcs_table", "PerBuffer", "SumTree",
]

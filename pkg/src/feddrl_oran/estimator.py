"""scikit-learn style wrappers around the simulator and the trained policy.

``LinkStateEncoder`` turns raw per-link KPIs into the normalized observation
vector, and ``FedDRLLinkAdapter`` trains agents on the simulator in ``fit``
and maps observations to (MCS, power) actions in ``predict``. Chained in a
``Pipeline`` they take raw KPI rows straight to reconfiguration decisions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import drl
from .channel import ChannelConfig
from .drl import DrlHyper
from .env import (
    NUM_ACTIONS,
    NUM_MCS,
    NUM_POWER,
    STATE_DIM,
    EnvConfig,
    PhyConfig,
    RewardWeights,
    StateNorms,
    build_state,
    decode_action,
    encode_action,
)
from .federate import FederateConfig, ReplayConfig, RunMode, Trainer
from .phy import PowerSet, load_mcs_table
from .topology import TopologyConfig

KPI_COLUMNS = ("sinr_db", "throughput_bps", "success", "rx_power_dbm", "mcs", "power_index")


class LinkStateEncoder(TransformerMixin, BaseEstimator):
    """Raw KPI rows -> observation vectors in [-1, 1].

    Input columns, in order: SINR (dB), delivered throughput (bit/s), success
    bit, received power (dBm), MCS index (1..29), power index (1..6).
    """

    def __init__(self, sinr_range=(-20.0, 40.0), power_range=(-120.0, 0.0), prbs_max=8,
                 step_duration=1e-3):
        self.sinr_range = sinr_range
        self.power_range = power_range
        self.prbs_max = prbs_max
        self.step_duration = step_duration

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[1] != len(KPI_COLUMNS):
            raise ValueError(f"expected {len(KPI_COLUMNS)} KPI columns {KPI_COLUMNS}, got {X.shape[1]}")
        base = StateNorms.for_system(load_mcs_table(), PhyConfig(max_prbs=self.prbs_max),
                                     PowerSet(), self.step_duration)
        self.norms_ = StateNorms(tuple(self.sinr_range), tuple(self.power_range),
                                 base.throughput_cap, base.efficiency_cap)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "norms_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, encoder was fitted with {self.n_features_in_}")
        m = X[:, 4].astype(int)
        k = X[:, 5].astype(int)
        if np.any((m < 1) | (m > NUM_MCS)) or np.any((k < 1) | (k > NUM_POWER)):
            raise ValueError("mcs must lie in 1..29 and power_index in 1..6")
        actions = (m - 1) * NUM_POWER + (k - 1)
        return build_state(X[:, 0], X[:, 1], X[:, 2], X[:, 3], actions, self.norms_)


class FedDRLLinkAdapter(BaseEstimator):
    """Train D3QN agents on the simulated factory cell and act greedily afterwards.

    ``fit`` ignores ``X``: experience comes from the simulator. After fitting,
    ``predict`` maps observation rows to action indices in 0..173 using the
    global model (FedDRL) or agent ``policy_agent`` (IDRL).
    """

    def __init__(self, mode="feddrl", n_transmitters=12, n_aps=4, n_rounds=60, steps_per_round=500,
                 learning_rate=0.001, gamma=0.995, momentum=0.9, batch_size=32, train_every=50,
                 target_period=200, reward_weights=None, shadowing_sigma=8.0,
                 policy_agent=0, random_state=0):
        self.mode = mode
        self.n_transmitters = n_transmitters
        self.n_aps = n_aps
        self.n_rounds = n_rounds
        self.steps_per_round = steps_per_round
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.momentum = momentum
        self.batch_size = batch_size
        self.train_every = train_every
        self.target_period = target_period
        self.reward_weights = reward_weights
        self.shadowing_sigma = shadowing_sigma
        self.policy_agent = policy_agent
        self.random_state = random_state

    def _configs(self):
        rw = self.reward_weights
        if rw is None:
            rw = RewardWeights()
        elif isinstance(rw, dict):
            rw = RewardWeights(**rw)
        env_cfg = EnvConfig(
            topology=TopologyConfig(aps_per_ec=self.n_aps, transmitters=self.n_transmitters),
            channel=ChannelConfig(shadowing_sigma=self.shadowing_sigma),
            reward=rw,
        )
        hyper = DrlHyper(learning_rate=self.learning_rate, gamma=self.gamma, momentum=self.momentum,
                         batch_size=self.batch_size, train_every=self.train_every,
                         target_period=self.target_period)
        fed = FederateConfig(rounds=self.n_rounds, steps_per_round=self.steps_per_round)
        return env_cfg, hyper, fed

    def fit(self, X=None, y=None):
        if X is not None:
            X = check_array(X, dtype=float)
            if X.shape[1] != STATE_DIM:
                raise ValueError(f"observations must have {STATE_DIM} columns, got {X.shape[1]}")
        mode = RunMode.parse(self.mode)
        env_cfg, hyper, fed = self._configs()
        trainer = Trainer(env_cfg, hyper, ReplayConfig(), fed, mode, int(self.random_state))
        self.reports_ = trainer.run()
        self.mode_ = mode
        if mode is RunMode.FEDDRL:
            self.params_ = trainer.global_model.params.copy()
        else:
            self.params_ = trainer.agents[self.policy_agent].params.copy()
        self.agent_params_ = [ag.params.copy() for ag in trainer.agents]
        self.n_features_in_ = STATE_DIM
        self._rng = np.random.default_rng(self.random_state)
        return self

    def _check(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != STATE_DIM:
            raise ValueError(f"X has {X.shape[1]} features, expected {STATE_DIM}")
        return X

    def decision_function(self, X):
        """Q-values, shape (n_samples, 174)."""
        X = self._check(X)
        return drl.forward(self.params_, X)

    def predict(self, X):
        X = self._check(X)
        if self.mode_ is RunMode.RA:
            return self._rng.integers(NUM_ACTIONS, size=len(X))
        return np.argmax(drl.forward(self.params_, X), axis=1)

    def predict_mcs_power(self, X):
        """Greedy actions as ``(mcs index, transmit power in dBm)`` arrays."""
        m, k = decode_action(self.predict(X))
        return m, PowerSet().dbm(k)

    def score(self, X=None, y=None, final_k: int = 10):
        """Mean cumulative global reward over the last ``final_k`` training rounds."""
        check_is_fitted(self, "reports_")
        return float(np.mean([r.cum_reward for r in self.reports_[-final_k:]]))


__all__ = ["LinkStateEncoder", "FedDRLLinkAdapter", "KPI_COLUMNS", "encode_action"]

"""Round-based training loop: federated D3QN agents and the two baselines."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import drl
from .drl import DEFAULT_LAYOUT, DrlHyper, Layout
from .env import NUM_ACTIONS, STATE_DIM, EnvConfig, Environment, StepOutcome
from .replay import PerBuffer, annealed_beta

log = logging.getLogger(__name__)


class RunMode(str, enum.Enum):
    FEDDRL = "feddrl"
    IDRL = "idrl"
    RA = "ra"

    @classmethod
    def parse(cls, value) -> RunMode:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected one of "
                             f"{[m.value for m in cls]}") from None


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = 4000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    eps: float = 1e-3

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 <= self.beta_start <= 1 or not 0 <= self.beta_end <= 1:
            raise ValueError("beta_start and beta_end must lie in [0, 1]")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


@dataclass(frozen=True)
class FederateConfig:
    rounds: int = 60
    steps_per_round: int = 500
    weighting: str = "uniform"  # or "samples"
    checkpoint_dir: str = ""

    def __post_init__(self):
        if self.rounds < 1 or self.steps_per_round < 1:
            raise ValueError("rounds and steps_per_round must be >= 1")
        if self.weighting not in ("uniform", "samples"):
            raise ValueError(f"weighting must be 'uniform' or 'samples', got {self.weighting!r}")


@dataclass
class GlobalModel:
    params: np.ndarray
    momentum: np.ndarray
    round: int = 0


@dataclass
class RoundReport:
    round: int
    step_span: str
    system_throughput: float  # bits/s, mean over steps of the sum over transmitters
    cum_reward: float
    avg_energy: float  # mJ per step per transmitter
    avg_efficiency: float  # bits/mJ
    c1: int
    c3: int
    c2: int = 0
    c4: int = 0
    gradient_updates: list = field(default_factory=list)
    target_syncs: list = field(default_factory=list)

    def csv_row(self) -> list:
        return [self.round, self.step_span, repr(self.system_throughput), repr(self.cum_reward),
                repr(self.avg_energy), repr(self.avg_efficiency), self.c1, self.c3]


class Agent:
    """One xApp: its online/target nets, momentum, exploration state and replay."""

    def __init__(self, seed_seq: np.random.SeedSequence, hyper: DrlHyper, replay: ReplayConfig,
                 layout: Layout = DEFAULT_LAYOUT):
        init_ss, act_ss, replay_ss = seed_seq.spawn(3)
        self.hyper = hyper
        self.layout = layout
        self.params = drl.init_params(np.random.default_rng(init_ss), layout)
        self.momentum = np.zeros_like(self.params)
        self.target = drl.sync_target(self.params)
        self.epsilon = hyper.epsilon_start
        self.updates = 0
        self.sync_points: list = []
        self.act_rng = np.random.default_rng(act_ss)
        self.replay_rng = np.random.default_rng(replay_ss)
        self.buffer = PerBuffer(replay.capacity, STATE_DIM, replay.alpha, replay.beta_start, replay.eps)
        self.samples_seen = 0

    def act(self, state: np.ndarray) -> int:
        q = drl.forward(self.params, state, self.layout)
        a = drl.select_action(q, self.epsilon, self.act_rng)
        self.epsilon = drl.decay_epsilon(self.epsilon, self.hyper)
        return a

    def act_random(self) -> int:
        return int(self.act_rng.integers(NUM_ACTIONS))

    def greedy(self, states) -> np.ndarray:
        return np.argmax(drl.forward(self.params, states, self.layout), axis=-1)

    def remember(self, state, action, reward, next_state) -> None:
        self.buffer.push(state, action, reward, next_state)
        self.samples_seen += 1

    def learn(self) -> float | None:
        h = self.hyper
        if len(self.buffer) < h.batch_size:
            return None
        batch = self.buffer.sample(h.batch_size, self.replay_rng)
        y = drl.td_targets(batch.rewards, batch.next_states, self.params, self.target, h.gamma,
                           self.layout)
        loss, grad, td = drl.loss_and_grad(batch.states, batch.actions, y, self.params,
                                           batch.weights, self.layout)
        self.params, self.momentum = drl.mgd_update(self.params, self.momentum, grad,
                                                    h.momentum, h.learning_rate)
        self.buffer.update_priorities(batch.ids, td)
        self.updates += 1
        if drl.target_sync_due(self.updates, h.target_period):
            self.target = drl.sync_target(self.params)
            self.sync_points.append(self.updates)
        return loss

    def load_global(self, model: GlobalModel, include_target: bool = False) -> None:
        self.params = model.params.copy()
        self.momentum = model.momentum.copy()
        if include_target:
            self.target = model.params.copy()


def aggregate(params_list: Sequence[np.ndarray], momentum_list: Sequence[np.ndarray],
              weights: Sequence[float] | None = None, round_index: int = 0) -> GlobalModel:
    """Element-wise (weighted) mean of the agents' parameters and momenta.

    The mean is taken as ``x_0 + mean(x_i - x_0)`` so that averaging identical
    vectors returns them bit for bit.
    """
    if len(params_list) == 0 or len(params_list) != len(momentum_list):
        raise ValueError("need one params and one momentum vector per agent, at least one agent")
    shape = np.shape(params_list[0])
    for v in list(params_list) + list(momentum_list):
        if np.shape(v) != shape:
            raise ValueError(f"shape mismatch: {np.shape(v)} vs {shape}")

    def _mean(vectors):
        stack = np.asarray(vectors, dtype=float)
        base = stack[0]
        dev = stack - base
        if weights is None:
            return base + dev.sum(axis=0) / len(stack)
        w = np.asarray(weights, dtype=float)
        return base + (w[:, None] * dev).sum(axis=0) / w.sum()

    return GlobalModel(_mean(params_list), _mean(momentum_list), round_index)


def broadcast(model: GlobalModel, agents: Sequence[Agent], env: Environment | None = None) -> None:
    for agent in agents:
        agent.load_global(model)
    if env is not None:
        env.record_broadcast()


def run_round(env: Environment, agents: Sequence[Agent], hyper: DrlHyper, mode: RunMode,
              steps: int, round_index: int = 1, step_offset: int = 0,
              total_steps: int | None = None, replay: ReplayConfig | None = None) -> RoundReport:
    """Run ``steps`` environment steps with periodic local learning."""
    mode = RunMode.parse(mode)
    replay = replay or ReplayConfig()
    total_steps = total_steps or steps
    learning = mode is not RunMode.RA
    n = len(agents)
    states = env.reset_states()
    updates_before = [a.updates for a in agents]
    syncs_before = [len(a.sync_points) for a in agents]

    thr_sum = 0.0
    reward_sum = 0.0
    energy_sum = 0.0
    eff_sum = 0.0
    c1 = c2 = c3 = c4 = 0
    for t in range(1, steps + 1):
        if learning:
            actions = np.array([ag.act(states[i]) for i, ag in enumerate(agents)])
        else:
            actions = np.array([ag.act_random() for ag in agents])
        out: StepOutcome
        out, next_states, _ = env.step(actions)
        r = out.global_reward

        if learning:
            beta = annealed_beta(step_offset + t, total_steps, replay.beta_start, replay.beta_end)
            for i, ag in enumerate(agents):
                ag.remember(states[i], actions[i], r, next_states[i])
                ag.buffer.beta = beta
            if t % hyper.train_every == 0:
                for ag in agents:
                    ag.learn()
        states = next_states

        thr_sum += float(out.throughput.sum())
        reward_sum += r
        energy_sum += float(out.energy.sum())
        eff_sum += float(out.efficiency.sum())
        c1 += out.constraints.c1
        c2 += out.constraints.c2
        c3 += out.constraints.c3
        c4 += out.constraints.c4

    return RoundReport(
        round=round_index,
        step_span=f"{step_offset + 1}-{step_offset + steps}",
        system_throughput=thr_sum / steps,
        cum_reward=reward_sum,
        avg_energy=energy_sum / (steps * n),
        avg_efficiency=eff_sum / (steps * n),
        c1=c1, c2=c2, c3=c3, c4=c4,
        gradient_updates=[a.updates - b for a, b in zip(agents, updates_before)],
        target_syncs=[s for a, b in zip(agents, syncs_before) for s in a.sync_points[b:]],
    )


class Trainer:
    """Owns one (mode, seed) run: environment, agents and the global model."""

    def __init__(self, env_cfg: EnvConfig, hyper: DrlHyper, replay: ReplayConfig,
                 fed: FederateConfig, mode, seed: int, record_trace: bool = False,
                 init_model: GlobalModel | None = None):
        self.mode = RunMode.parse(mode)
        self.hyper = hyper
        self.replay = replay
        self.fed = fed
        self.seed = seed
        self.env = Environment(env_cfg, seed=seed, record_trace=record_trace)
        agent_seqs = np.random.SeedSequence([seed, 2]).spawn(self.env.num_agents)
        self.agents = [Agent(ss, hyper, replay) for ss in agent_seqs]
        self.global_model = None
        if self.mode is RunMode.FEDDRL:
            # the global model starts from agent 0's draw, so a one-agent
            # federation and a one-agent independent run share their init
            if init_model is None:
                init_model = GlobalModel(self.agents[0].params.copy(),
                                         np.zeros_like(self.agents[0].params), 0)
            self.global_model = init_model
            for ag in self.agents:
                ag.load_global(init_model, include_target=True)
        elif init_model is not None:
            for ag in self.agents:
                ag.load_global(init_model, include_target=True)
        self.reports: list = []

    def run(self) -> list:
        fed = self.fed
        total = fed.rounds * fed.steps_per_round
        for r in range(1, fed.rounds + 1):
            if self.mode is RunMode.FEDDRL:
                broadcast(self.global_model, self.agents, self.env)
            report = run_round(self.env, self.agents, self.hyper, self.mode, fed.steps_per_round,
                               round_index=r, step_offset=(r - 1) * fed.steps_per_round,
                               total_steps=total, replay=self.replay)
            if self.mode is RunMode.FEDDRL:
                weights = None
                if fed.weighting == "samples":
                    weights = [ag.samples_seen for ag in self.agents]
                self.global_model = aggregate([ag.params for ag in self.agents],
                                              [ag.momentum for ag in self.agents], weights, r)
                self._checkpoint(r)
            self.reports.append(report)
            log.info("%s seed=%d round %d/%d thr=%.4g reward=%.4g energy=%.4g", self.mode.value,
                     self.seed, r, fed.rounds, report.system_throughput, report.cum_reward,
                     report.avg_energy)
        return self.reports

    def _checkpoint(self, r: int) -> None:
        if not self.fed.checkpoint_dir:
            return
        out = Path(self.fed.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        drl.save_checkpoint(out / f"global_seed{self.seed}_round{r:03d}.ckpt",
                            {"params": self.global_model.params,
                             "momentum": self.global_model.momentum},
                            meta={"round": r, "seed": self.seed, "mode": self.mode.value})


def load_global_model(path) -> GlobalModel:
    vectors, layout, meta = drl.load_checkpoint(path)
    if layout != DEFAULT_LAYOUT:
        raise ValueError(f"{path}: checkpoint layout does not match the network")
    return GlobalModel(vectors["params"], vectors["momentum"], int(meta.get("round", 0)))


def run_training(env_cfg: EnvConfig, hyper: DrlHyper, replay: ReplayConfig, fed: FederateConfig,
                 mode, seed: int, record_trace: bool = False) -> list:
    return Trainer(env_cfg, hyper, replay, fed, mode, seed, record_trace).run()

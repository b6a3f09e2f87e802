"""Multi-agent link-reconfiguration environment.

Each step every transmitter applies a joint (MCS, power) action; the
environment draws fresh channels, scores every link and hands back the
next observations, which describe the step that just finished.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import IO, Iterable, Sequence

import numpy as np

from .channel import ChannelConfig, db_to_lin, lin_to_db, path_loss_db
from .phy import (
    NUM_MCS,
    POWER_LEVELS_DBM,
    PRB_BANDWIDTH_HZ,
    McsTable,
    PowerSet,
    load_mcs_table,
    step_energy,
)
from .topology import Topology, TopologyConfig, advance_mobility, build_topology

NUM_POWER = len(POWER_LEVELS_DBM)
NUM_ACTIONS = NUM_MCS * NUM_POWER
STATE_DIM = 6


def encode_action(m: int, k: int) -> int:
    if not (1 <= m <= NUM_MCS and 1 <= k <= NUM_POWER):
        raise ValueError(f"action (m={m}, k={k}) out of range")
    return (m - 1) * NUM_POWER + (k - 1)


def decode_action(a) -> tuple:
    """Inverse of :func:`encode_action`; vectorises over arrays."""
    arr = np.asarray(a)
    if np.any((arr < 0) | (arr >= NUM_ACTIONS)):
        raise ValueError(f"action index out of range 0..{NUM_ACTIONS - 1}: {a}")
    m, k = np.divmod(arr, NUM_POWER)
    if arr.ndim == 0:
        return int(m) + 1, int(k) + 1
    return m + 1, k + 1


@dataclass(frozen=True)
class PhyConfig:
    prbs: int = 4
    prb_bandwidth: float = PRB_BANDWIDTH_HZ
    max_prbs: int = 8

    def __post_init__(self):
        if not 1 <= self.prbs <= self.max_prbs:
            raise ValueError(f"need 1 <= prbs <= max_prbs, got {self.prbs}, {self.max_prbs}")
        if not self.prb_bandwidth > 0:
            raise ValueError("prb_bandwidth must be > 0")


@dataclass(frozen=True)
class RewardWeights:
    alpha1: float = 0.5
    alpha2: float = 0.5
    tau1: float = 0.2
    tau2: float = 0.2
    tau3: float = 0.2
    C: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "tau1", "tau2", "tau3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")


@dataclass(frozen=True)
class ConstraintThresholds:
    t_min: float = 1e5  # bits/s
    p_max: float = POWER_LEVELS_DBM[-1]
    psi_min: float = -6.7
    zeta_max: int = 8

    def __post_init__(self):
        if self.t_min < 0:
            raise ValueError("t_min must be >= 0")
        if self.p_max != POWER_LEVELS_DBM[-1]:
            raise ValueError(f"p_max must equal the top power level {POWER_LEVELS_DBM[-1]} dBm")
        if self.zeta_max < 1:
            raise ValueError("zeta_max must be >= 1")


@dataclass(frozen=True)
class StateNorms:
    """Affine maps that bring raw KPIs into [-1, 1] and the reward caps."""

    sinr_range: tuple = (-20.0, 40.0)
    power_range: tuple = (-120.0, 0.0)
    throughput_cap: float = 1.0  # bits/s
    efficiency_cap: float = 1.0  # bits/mJ

    @classmethod
    def for_system(cls, table: McsTable, phy: PhyConfig, power: PowerSet, tau: float) -> StateNorms:
        t_cap = phy.max_prbs * phy.prb_bandwidth * float(table.se(NUM_MCS))
        gamma_cap = t_cap * tau / float(step_energy(power.p_min, tau))
        return cls(throughput_cap=t_cap, efficiency_cap=gamma_cap)


def _affine(x, lo, hi):
    return np.clip(2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def build_state(sinr, thr, success, rx_power, prev_action, norms: StateNorms) -> np.ndarray:
    """Observation vector(s) from the previous step's KPIs and action.

    Layout: [sinr, throughput, success, received power, mcs, power index];
    every entry except ``success`` is scaled into [-1, 1].
    """
    m, k = decode_action(prev_action)
    return np.stack(
        [
            _affine(sinr, *norms.sinr_range),
            np.clip(np.asarray(thr, dtype=float) / norms.throughput_cap, -1.0, 1.0),
            np.asarray(success, dtype=float),
            _affine(rx_power, *norms.power_range),
            (np.asarray(m, dtype=float) - 1) / (NUM_MCS - 1) * 2 - 1,
            (np.asarray(k, dtype=float) - 1) / (NUM_POWER - 1) * 2 - 1,
        ],
        axis=-1,
    )


def zero_state(n: int | None = None) -> np.ndarray:
    return np.zeros(STATE_DIM) if n is None else np.zeros((n, STATE_DIM))


def local_reward(success, thr_hat, eff_hat, attempted_thr_hat, w: RewardWeights):
    """Per-transmitter reward on normalized throughput and efficiency.

    Failures are charged on the throughput the action would have delivered,
    so an over-aggressive MCS costs more than a conservative one.
    """
    success = np.asarray(success)
    win = w.alpha1 * np.asarray(thr_hat) + w.alpha2 * np.asarray(eff_hat) + w.tau1 * success
    lose = -w.alpha1 * np.asarray(attempted_thr_hat) - w.tau2 * w.C - w.tau3 * w.C
    out = np.where(success == 1, win, lose)
    return float(out) if out.ndim == 0 else out


def global_reward(locals_: Sequence[float]) -> float:
    vals = np.asarray(locals_, dtype=float)
    if vals.size == 0:
        raise ValueError("global reward needs at least one local reward")
    return float(vals.sum() / vals.size)


@dataclass
class ConstraintReport:
    c1: int = 0
    c2: int = 0
    c3: int = 0
    c4: int = 0

    def __iadd__(self, other: ConstraintReport) -> ConstraintReport:
        self.c1 += other.c1
        self.c2 += other.c2
        self.c3 += other.c3
        self.c4 += other.c4
        return self


def constraint_report(thr, p_dbm, sinr, prbs, th: ConstraintThresholds) -> ConstraintReport:
    return ConstraintReport(
        c1=int(np.sum(np.asarray(thr) < th.t_min)),
        c2=int(np.sum(np.asarray(p_dbm) > th.p_max)),
        c3=int(np.sum(np.asarray(sinr) < th.psi_min)),
        c4=int(np.sum(np.asarray(prbs) > th.zeta_max)),
    )


@dataclass
class StepOutcome:
    mcs: np.ndarray
    power_dbm: np.ndarray
    sinr: np.ndarray  # dB
    rx_power: np.ndarray  # dBm
    success: np.ndarray  # {0, 1}
    throughput: np.ndarray  # bits/s, delivered
    attempted_throughput: np.ndarray  # bits/s
    efficiency: np.ndarray  # bits/mJ
    energy: np.ndarray  # mJ
    local_reward: np.ndarray
    global_reward: float
    constraints: ConstraintReport


# ---- signaling trace -----------------------------------------------------

UPLINK_CHAIN = (("OFH", "o-ru", "o-du", "measurement-report"),
                ("F1", "o-du", "o-cu", "measurement-report"),
                ("E2", "o-cu", "nrt-ric", "kpi-aggregate"))
DOWNLINK_CHAIN = (("E2", "nrt-ric", "o-cu", "reconfig-decision"),
                  ("F1", "o-cu", "o-du", "reconfig-command"),
                  ("OFH", "o-du", "o-ru", "reconfig-command"))


@dataclass(frozen=True)
class SignalRecord:
    step: int
    direction: str  # UL | DL
    interface: str  # OFH | F1 | E2 | A1
    src: str
    dst: str
    payload: str
    transmitter: int | None = None


@dataclass
class SignalingTrace:
    records: list = field(default_factory=list)

    def extend(self, recs: Iterable[SignalRecord]) -> None:
        self.records.extend(recs)

    def __len__(self) -> int:
        return len(self.records)

    def write_ndjson(self, fh: IO[str]) -> None:
        for rec in self.records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def _node(kind: str, topo: Topology, n: int) -> str:
    ap = int(topo.association[n])
    if kind == "o-ru":
        return f"o-ru-{ap}"
    return f"{kind}-{int(topo.ec_of_ap[ap])}"


def step_signaling(step: int, topo: Topology) -> list:
    """UL KPI collection then the DL reconfiguration path, for every transmitter."""
    n_tx = topo.num_transmitters
    recs = []
    for chain, direction in ((UPLINK_CHAIN, "UL"), (DOWNLINK_CHAIN, "DL")):
        for iface, src, dst, payload in chain:
            for n in range(n_tx):
                recs.append(SignalRecord(step, direction, iface, _node(src, topo, n),
                                         _node(dst, topo, n), payload, n))
    return recs


def broadcast_signaling(step: int, topo: Topology) -> list:
    return [SignalRecord(step, "DL", "A1", "non-rt-ric", _node("nrt-ric", topo, n),
                         "model-broadcast", n) for n in range(topo.num_transmitters)]


def check_trace_order(records: Sequence[SignalRecord]) -> bool:
    """True when every step lists UL before decisions before DL commands."""
    rank = {"measurement-report": 0, "kpi-aggregate": 0, "reconfig-decision": 1,
            "reconfig-command": 2}
    chain_pos = {("UL", "OFH"): 0, ("UL", "F1"): 1, ("UL", "E2"): 2,
                 ("DL", "E2"): 3, ("DL", "F1"): 4, ("DL", "OFH"): 5}
    last_rank: dict = {}
    last_hop: dict = {}
    for rec in records:
        if rec.interface == "A1":
            continue
        r = rank[rec.payload]
        if r < last_rank.get(rec.step, 0):
            return False
        last_rank[rec.step] = r
        key = (rec.step, rec.transmitter)
        pos = chain_pos[(rec.direction, rec.interface)]
        if pos != last_hop.get(key, -1) + 1:
            return False
        last_hop[key] = pos
    return True


# ---- environment ----------------------------------------------------------


@dataclass(frozen=True)
class EnvConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    constraints: ConstraintThresholds = field(default_factory=ConstraintThresholds)


class Environment:
    """Owns the topology, the per-transmitter channel streams and the step clock."""

    def __init__(self, cfg: EnvConfig, seed: int | None = None, table: McsTable | None = None,
                 record_trace: bool = False):
        self.cfg = cfg
        seed = cfg.topology.rng_seed if seed is None else seed
        self.topology_cfg = replace(cfg.topology, rng_seed=seed)
        self.topology = build_topology(self.topology_cfg)
        n = self.topology.num_transmitters
        self.channel_rngs = [np.random.default_rng(s)
                             for s in np.random.SeedSequence([seed, 1]).spawn(n)]
        self.table = table if table is not None else load_mcs_table()
        self.power = PowerSet()
        self.tau = cfg.topology.step_duration
        self.norms = StateNorms.for_system(self.table, cfg.phy, self.power, self.tau)
        self.trace = SignalingTrace() if record_trace else None
        self.t = 0
        self._interference_weights = self._overlap_matrix()

    @property
    def num_agents(self) -> int:
        return self.topology.num_transmitters

    def _overlap_matrix(self) -> np.ndarray:
        """Fraction of transmitter n's PRBs that collide with transmitter j's.

        Transmitters under one AP get disjoint consecutive PRB blocks (OFDMA);
        collisions only happen across APs at the same PRB offset range.
        """
        topo = self.topology
        prbs = self.cfg.phy.prbs
        n = topo.num_transmitters
        offset = np.zeros(n, dtype=int)
        for ap in range(topo.num_aps):
            members = topo.transmitters_of(ap)
            offset[members] = np.arange(len(members)) * prbs
        lo = offset[:, None]
        hi = (offset + prbs)[:, None]
        inter = np.clip(np.minimum(hi, hi.T) - np.maximum(lo, lo.T), 0, None)
        w = inter / prbs
        same_ap = topo.association[:, None] == topo.association[None, :]
        w[same_ap] = 0.0
        return w

    def reset_states(self) -> np.ndarray:
        return zero_state(self.num_agents)

    def _sample_rx(self, p_dbm: np.ndarray) -> np.ndarray:
        """(N, U) received power in dBm of every transmitter at every AP."""
        topo = self.topology
        ch = self.cfg.channel
        pl = path_loss_db(topo.distances(), ch)
        n, u = pl.shape
        shadow = np.zeros((n, u))
        fade_db = np.zeros((n, u))
        for j, rng in enumerate(self.channel_rngs):
            if ch.shadowing_sigma > 0:
                shadow[j] = rng.normal(0.0, ch.shadowing_sigma, size=u)
            if ch.fading == "rayleigh":
                fade_db[j] = lin_to_db(np.maximum(rng.exponential(1.0, size=u), np.finfo(float).tiny))
        return p_dbm[:, None] + pl + shadow + fade_db

    def step(self, joint_actions) -> tuple:
        actions = np.asarray(joint_actions, dtype=int)
        n = self.num_agents
        if actions.shape != (n,):
            raise ValueError(f"expected {n} actions, got shape {actions.shape}")
        m, k = decode_action(actions)
        p_dbm = self.power.dbm(k)
        topo = self.topology
        phy = self.cfg.phy

        rx = self._sample_rx(p_dbm)
        serving = topo.association
        signal = rx[np.arange(n), serving]
        noise = self.cfg.channel.noise_power
        if self.cfg.channel.interference_mode == "overlap":
            # interference from transmitter j measured at n's serving AP
            interf = (self._interference_weights * db_to_lin(rx[:, serving].T)).sum(axis=1)
        else:
            interf = np.zeros(n)
        sinr = np.where(interf > 0, signal - lin_to_db(db_to_lin(noise) + interf), signal - noise)

        success = (sinr >= self.table.threshold(m)).astype(int)
        attempted = phy.prbs * phy.prb_bandwidth * self.table.se(m)
        thr = success * attempted
        energy = step_energy(p_dbm, self.tau)
        eff = thr * self.tau / energy

        norms = self.norms
        rewards = local_reward(success, thr / norms.throughput_cap, eff / norms.efficiency_cap,
                               attempted / norms.throughput_cap, self.cfg.reward)
        outcome = StepOutcome(
            mcs=m, power_dbm=p_dbm, sinr=sinr, rx_power=signal, success=success,
            throughput=thr, attempted_throughput=attempted, efficiency=eff, energy=energy,
            local_reward=rewards, global_reward=global_reward(rewards),
            constraints=constraint_report(thr, p_dbm, sinr, np.full(n, phy.prbs),
                                          self.cfg.constraints),
        )
        records = []
        if self.trace is not None:
            records = step_signaling(self.t, topo)
            self.trace.extend(records)
        self.topology = advance_mobility(topo, self.topology_cfg)
        next_states = build_state(sinr, thr, success, signal, actions, norms)
        self.t += 1
        return outcome, next_states, records

    def record_broadcast(self) -> list:
        recs = broadcast_signaling(self.t, self.topology)
        if self.trace is not None:
            self.trace.extend(recs)
        return recs


def env_step(env: Environment, joint_actions) -> tuple:
    return env.step(joint_actions)

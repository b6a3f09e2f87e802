import io
import json
import math

import numpy as np
import pytest

from feddrl_oran.channel import ChannelConfig, path_loss_db
from feddrl_oran.env import (
    NUM_ACTIONS,
    ConstraintThresholds,
    EnvConfig,
    Environment,
    PhyConfig,
    RewardWeights,
    StateNorms,
    build_state,
    check_trace_order,
    constraint_report,
    decode_action,
    encode_action,
    global_reward,
    local_reward,
    zero_state,
)
from feddrl_oran.phy import PowerSet
from feddrl_oran.topology import TopologyConfig

W = RewardWeights()


def test_action_examples_and_bijection():
    assert encode_action(1, 1) == 0
    assert encode_action(29, 6) == 173
    seen = set()
    for m in range(1, 30):
        for k in range(1, 7):
            a = encode_action(m, k)
            assert decode_action(a) == (m, k)
            seen.add(a)
    assert seen == set(range(NUM_ACTIONS))
    m, k = decode_action(np.arange(NUM_ACTIONS))
    assert np.array_equal((m - 1) * 6 + (k - 1), np.arange(NUM_ACTIONS))


@pytest.mark.parametrize("m,k", [(0, 1), (30, 1), (1, 0), (1, 7)])
def test_encode_rejects_out_of_range(m, k):
    with pytest.raises(ValueError):
        encode_action(m, k)


@pytest.mark.parametrize("a", [-1, 174])
def test_decode_rejects_out_of_range(a):
    with pytest.raises(ValueError):
        decode_action(a)


def test_state_examples(table):
    norms = StateNorms.for_system(table, PhyConfig(), PowerSet(), 1e-3)
    assert np.array_equal(zero_state(), np.zeros(6))
    s = build_state(10.0, 0.0, 1, -60.0, encode_action(15, 1), norms)
    assert s[0] == 0.0
    assert s[2] == 1.0
    assert s[3] == 0.0
    assert s[4] == 0.0
    assert s[5] == -1.0
    assert norms.throughput_cap == pytest.approx(8 * 180e3 * float(table.se(29)))


def test_state_features_bounded(table, rng):
    norms = StateNorms.for_system(table, PhyConfig(), PowerSet(), 1e-3)
    n = 1000
    s = build_state(rng.uniform(-80, 80, n), rng.uniform(0, 1e8, n), rng.integers(0, 2, n),
                    rng.uniform(-200, 50, n), rng.integers(0, 174, n), norms)
    assert np.all(np.abs(s) <= 1.0)
    assert set(np.unique(s[:, 2])) <= {0.0, 1.0}


def test_reward_hand_cases():
    assert local_reward(0, 0.0, 0.0, 0.5, W) == pytest.approx(-0.65, abs=1e-12)
    assert local_reward(1, 0.5, 0.5, 0.5, W) == pytest.approx(0.70, abs=1e-12)
    w0 = RewardWeights(tau1=0.0)
    assert local_reward(1, 0.0, 0.0, 0.0, w0) == 0.0


def test_global_reward_examples(rng):
    assert global_reward([1, 1, 1]) == 1.0
    assert global_reward([0.7, -0.65]) == pytest.approx(0.025, abs=1e-12)
    x = rng.normal(size=17)
    assert global_reward(x) == pytest.approx(global_reward(rng.permutation(x)), abs=1e-12)
    assert global_reward(x) == pytest.approx(math.fsum(x) / len(x), abs=1e-12)
    with pytest.raises(ValueError):
        global_reward([])


@pytest.mark.parametrize("kwargs", [{"alpha1": 1.5}, {"tau2": -0.1}, {"C": 0.0}])
def test_reward_weight_validation(kwargs):
    with pytest.raises(ValueError):
        RewardWeights(**kwargs)


def test_constraint_examples():
    th = ConstraintThresholds(t_min=1.0)
    assert constraint_report([0.0], [0.0], [0.0], [4], th).c1 == 1
    assert constraint_report([5.0], [9.0], [-10.0], [4], th).c3 == 1
    assert constraint_report([5.0], [9.0], [-10.0], [4], th).c2 == 0
    with pytest.raises(ValueError):
        ConstraintThresholds(p_max=10.0)


def _quiet_env(n=12, radius=5.0, seed=0, **topo):
    cfg = EnvConfig(
        topology=TopologyConfig(transmitters=n, coverage_radius=radius, speed=0.0, **topo),
        channel=ChannelConfig(shadowing_sigma=0.0, fading="none", interference_mode="noise_limited"),
    )
    return Environment(cfg, seed=seed)


def test_close_range_lowest_mcs_all_succeed():
    env = _quiet_env()
    out, _, _ = env.step(np.full(12, encode_action(1, 6)))
    assert np.all(out.success == 1)


def test_noise_limited_matches_link_budget():
    env = _quiet_env(radius=80.0)
    actions = np.arange(12) * 7 % 174
    out, _, _ = env.step(actions)
    _, k = decode_action(actions)
    p = np.array([-8.4, -2.3, 0.0, 4.0, 7.0, 9.0])[k - 1]
    d = np.linalg.norm(env.topology.tx_positions
                       - env.topology.ap_positions[env.topology.association], axis=1)
    expect = p + path_loss_db(d, ChannelConfig()) + 110.0
    assert np.allclose(out.sinr, expect, atol=1e-9)


def test_step_deterministic_and_global_is_mean():
    cfg = EnvConfig()
    a = Environment(cfg, seed=3)
    b = Environment(cfg, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        acts = rng.integers(0, 174, 12)
        oa, sa, _ = a.step(acts)
        ob, sb, _ = b.step(acts)
        assert np.array_equal(oa.sinr, ob.sinr) and oa.global_reward == ob.global_reward
        assert np.array_equal(sa, sb)
        assert abs(oa.global_reward - math.fsum(oa.local_reward) / 12) <= 1e-12
        assert oa.constraints.c2 == 0 and oa.constraints.c4 == 0
        assert np.all(oa.throughput >= 0) and np.all(oa.energy > 0)


def test_action_count_mismatch():
    env = Environment(EnvConfig(), seed=0)
    with pytest.raises(ValueError):
        env.step(np.zeros(11, dtype=int))


def test_zero_transmitters_rejected():
    with pytest.raises(ValueError):
        Environment(EnvConfig(topology=TopologyConfig(transmitters=0)))


def test_interference_lowers_sinr():
    cfg = EnvConfig(channel=ChannelConfig(shadowing_sigma=0.0, fading="none"))
    quiet = EnvConfig(channel=ChannelConfig(shadowing_sigma=0.0, fading="none",
                                            interference_mode="noise_limited"))
    acts = np.full(12, encode_action(10, 6))
    o1, _, _ = Environment(cfg, seed=1).step(acts)
    o2, _, _ = Environment(quiet, seed=1).step(acts)
    assert np.all(o1.sinr < o2.sinr)


def test_overlap_only_across_aps():
    env = Environment(EnvConfig(), seed=0)
    w = env._interference_weights
    topo = env.topology
    same = topo.association[:, None] == topo.association[None, :]
    assert np.all(w[same] == 0)
    # three transmitters per AP at PRB offsets 0, 4, 8 collide only with the same offset elsewhere
    assert np.all(w.sum(axis=1) == 3)


def test_next_state_reflects_outcome():
    env = Environment(EnvConfig(), seed=2)
    acts = np.arange(12)
    out, nxt, _ = env.step(acts)
    assert np.array_equal(nxt[:, 2], out.success.astype(float))
    assert np.allclose(nxt, build_state(out.sinr, out.throughput, out.success, out.rx_power, acts,
                                        env.norms))


def test_signaling_trace_order_and_export():
    cfg = EnvConfig()
    env = Environment(cfg, seed=0, record_trace=True)
    rng = np.random.default_rng(1)
    env.record_broadcast()
    for _ in range(3):
        _, _, recs = env.step(rng.integers(0, 174, 12))
        assert len(recs) == 6 * 12
        ul = [r.interface for r in recs if r.direction == "UL"]
        dl = [r.interface for r in recs if r.direction == "DL"]
        assert ul == ["OFH"] * 12 + ["F1"] * 12 + ["E2"] * 12
        assert dl == ["E2"] * 12 + ["F1"] * 12 + ["OFH"] * 12
    assert check_trace_order(env.trace.records)
    assert sum(r.interface == "A1" for r in env.trace.records) == 12
    buf = io.StringIO()
    env.trace.write_ndjson(buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 12 + 3 * 72
    assert json.loads(lines[-1])["interface"] == "OFH"


def test_check_trace_order_detects_swap():
    env = Environment(EnvConfig(), seed=0, record_trace=True)
    _, _, recs = env.step(np.zeros(12, dtype=int))
    bad = recs[36:] + recs[:36]
    assert not check_trace_order(bad)

"""One test per acceptance criterion; each records a PASS/FAIL line.

Criteria 1-4 train every mode on three seeds at desk scale (12 transmitters,
4 APs, 20 rounds of 300 steps) and take roughly a minute and a half.
The lines are printed in the pytest terminal summary, or directly when the
module is executed as a script.
"""

from __future__ import annotations

import math
import sys

import numpy as np
import pytest
from scipy.stats import chisquare, spearmanr

from feddrl_oran import drl
from feddrl_oran.channel import ChannelConfig, path_loss_db
from feddrl_oran.drl import DEFAULT_LAYOUT, DrlHyper, Layout
from feddrl_oran.env import (
    NUM_ACTIONS,
    EnvConfig,
    Environment,
    RewardWeights,
    decode_action,
    encode_action,
    global_reward,
    local_reward,
)
from feddrl_oran.federate import FederateConfig, ReplayConfig, Trainer, aggregate
from feddrl_oran.harness import RunConfig, RunSettings, load_runs, run_experiment
from feddrl_oran.replay import PerBuffer, SumTree
from feddrl_oran.topology import TopologyConfig

RESULTS: dict = {}

SEEDS = (1, 2, 3)
N_DESK = 12
FINAL_K = 10

# tolerances
THROUGHPUT_GAIN_OVER_RA = 1.25
ORDERING_MIN_SEEDS = 2
ENERGY_RATIO_VS_RA = 0.85
EFFICIENCY_RATIO_VS_RA = 1.3
SPEARMAN_MIN = 0.5
DUELING_TOL = 1e-10
GRAD_REL_TOL = 1e-4
GRAD_POINTS = 10
MGD_TOL = 1e-12
FEDAVG_TOL = 1e-12
PER_RATIO_TOL = 0.10
PER_DRAWS = 100_000
CHI2_P_MIN = 0.01
SUMTREE_OPS = 10_000
SUMTREE_TOL = 1e-9
REWARD_TOL = 1e-12


def record(number: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} ({detail})"


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = RunConfig(
        topology=TopologyConfig(aps_per_ec=4, transmitters=N_DESK),
        federate=FederateConfig(rounds=20, steps_per_round=300),
        run=RunSettings(modes=("feddrl", "idrl", "ra"), seeds=SEEDS, final_k=FINAL_K),
    )
    summary = run_experiment(cfg, out)
    return summary, load_runs(out)


def _final_mean(rows, col):
    return float(np.mean([float(r[col]) for r in rows[-FINAL_K:]]))


def test_criterion_01_throughput_ordering(desk_runs):
    summary, runs = desk_runs
    col = "system_throughput_bps"
    ordered = sum(
        _final_mean(runs[("feddrl", N_DESK, s)], col) >= _final_mean(runs[("idrl", N_DESK, s)], col)
        >= _final_mean(runs[("ra", N_DESK, s)], col)
        for s in SEEDS
    )
    fed = summary.get("feddrl", N_DESK, "system_throughput").mean
    idrl = summary.get("idrl", N_DESK, "system_throughput").mean
    ra = summary.get("ra", N_DESK, "system_throughput").mean
    ok = ordered >= ORDERING_MIN_SEEDS and fed >= THROUGHPUT_GAIN_OVER_RA * ra
    record(1, "throughput FedDRL >= IDRL >= RA and FedDRL >= 1.25x RA", ok,
           f"ordered in {ordered}/3 seeds; FedDRL {fed:.4g}, IDRL {idrl:.4g}, RA {ra:.4g} bit/s, "
           f"FedDRL/RA {fed / ra:.3f}")
    assert ok


def test_criterion_02_energy(desk_runs):
    summary, _ = desk_runs
    fed = summary.get("feddrl", N_DESK, "avg_energy").mean
    idrl = summary.get("idrl", N_DESK, "avg_energy").mean
    ra = summary.get("ra", N_DESK, "avg_energy").mean
    ok = fed <= idrl and fed <= ENERGY_RATIO_VS_RA * ra
    record(2, "energy FedDRL <= IDRL and <= 0.85x RA", ok,
           f"FedDRL {fed:.4g}, IDRL {idrl:.4g}, RA {ra:.4g} mJ, FedDRL/RA {fed / ra:.3f}")
    assert ok


def test_criterion_03_efficiency(desk_runs):
    summary, _ = desk_runs
    fed = summary.get("feddrl", N_DESK, "avg_efficiency").normalized
    idrl = summary.get("idrl", N_DESK, "avg_efficiency").normalized
    ra = summary.get("ra", N_DESK, "avg_efficiency").normalized
    ok = fed > idrl and fed > EFFICIENCY_RATIO_VS_RA * ra
    record(3, "normalized efficiency FedDRL > IDRL and > 1.3x RA", ok,
           f"normalized FedDRL {fed:.3f}, IDRL {idrl:.3f}, RA {ra:.3f}")
    assert ok


def test_criterion_04_learning_signal(desk_runs):
    _, runs = desk_runs
    curves = np.array([[float(r["cum_reward"]) for r in runs[("feddrl", N_DESK, s)]] for s in SEEDS])
    curve = curves.mean(axis=0)
    rho = spearmanr(np.arange(1, len(curve) + 1), curve).statistic
    ok = rho > SPEARMAN_MIN
    record(4, "FedDRL reward curve Spearman rho > 0.5", ok,
           f"rho {rho:.3f}; first round {curve[0]:.2f}, last round {curve[-1]:.2f}")
    assert ok


def test_criterion_05_dueling_identity():
    rng = np.random.default_rng(5)
    p = drl.init_params(rng)
    s = rng.uniform(-1, 1, (100, 6))
    v, _ = drl.value_and_advantage(p, s)
    q = drl.forward(p, s)
    worst = float(np.abs((q - v[:, None]).mean(axis=1)).max())
    shifted = p.copy()
    DEFAULT_LAYOUT.unpack(shifted)["ba"][...] += 1.75
    same_argmax = np.array_equal(np.argmax(q, axis=1), np.argmax(drl.forward(shifted, s), axis=1))
    ok = worst <= DUELING_TOL and same_argmax
    record(5, "dueling identity and advantage-shift argmax", ok,
           f"max |mean(Q-V)| {worst:.2e}, argmax stable {same_argmax}")
    assert ok


def test_criterion_06_gradient_check():
    lay = Layout.dueling(hidden=(8, 8))
    worst = 0.0
    for point in range(GRAD_POINTS):
        rng = np.random.default_rng(600 + point)
        p = drl.init_params(rng, lay) + rng.normal(0, 0.05, lay.size)
        s = rng.uniform(-1, 1, (6, 6))
        a = rng.integers(0, NUM_ACTIONS, 6)
        y = rng.normal(size=6)
        w = rng.uniform(0.2, 1.0, 6)
        _, g, _ = drl.loss_and_grad(s, a, y, p, w, lay)
        fd = np.empty_like(p)
        for i in range(lay.size):
            e = np.zeros_like(p)
            e[i] = 1e-5
            fd[i] = (drl.loss_and_grad(s, a, y, p + e, w, lay)[0]
                     - drl.loss_and_grad(s, a, y, p - e, w, lay)[0]) / 2e-5
        worst = max(worst, float(np.linalg.norm(g - fd) / (np.linalg.norm(g) + np.linalg.norm(fd))))
    ok = worst < GRAD_REL_TOL
    record(6, "analytic gradient vs central differences", ok,
           f"worst relative error {worst:.2e} over {GRAD_POINTS} points")
    assert ok


def test_criterion_07_mgd_recurrence():
    rng = np.random.default_rng(7)
    theta0, g = rng.normal(size=(2, DEFAULT_LAYOUT.size))
    eta, lr = 0.9, 0.001
    t1, w1 = drl.mgd_update(theta0, np.zeros_like(g), g, eta, lr)
    t2, w2 = drl.mgd_update(t1, w1, g, eta, lr)
    err_w = float(np.abs(w2 - (1 + eta) * g).max())
    err_t = float(np.abs(t2 - (theta0 - lr * (2 + eta) * g)).max())
    ok = err_w <= MGD_TOL and err_t <= MGD_TOL
    record(7, "two-step momentum unroll", ok, f"omega err {err_w:.1e}, theta err {err_t:.1e}")
    assert ok


def test_criterion_08_fedavg(tmp_path):
    from feddrl_oran.harness import write_reports_csv

    rng = np.random.default_rng(8)
    v = rng.normal(size=DEFAULT_LAYOUT.size)
    idem = aggregate([v.copy()] * 5, [v.copy()] * 5)
    idempotent = np.array_equal(idem.params, v) and np.array_equal(idem.momentum, v)
    half = np.array_equal(aggregate([np.zeros(4), np.full(4, 2.0)], [np.zeros(4)] * 2).params, np.ones(4))
    xs = [rng.normal(size=500) for _ in range(7)]
    oracle = np.array([math.fsum(c) / len(xs) for c in zip(*xs)])
    err = float(np.abs(aggregate(xs, xs).params - oracle).max())

    env = EnvConfig(topology=TopologyConfig(aps_per_ec=1, transmitters=1))
    fed = FederateConfig(rounds=3, steps_per_round=200)
    paths = []
    for mode in ("feddrl", "idrl"):
        reports = Trainer(env, DrlHyper(train_every=10), ReplayConfig(), fed, mode, seed=8).run()
        paths.append(tmp_path / f"{mode}.csv")
        write_reports_csv(paths[-1], reports)
    same_csv = paths[0].read_bytes() == paths[1].read_bytes()
    ok = idempotent and half and err <= FEDAVG_TOL and same_csv
    record(8, "FedAvg idempotence, {0,2}->1, oracle agreement, 1-agent FedDRL == IDRL", ok,
           f"bitwise {idempotent}, mean(0,2)==1 {half}, oracle err {err:.1e}, identical CSVs {same_csv}")
    assert ok


def _draw_counts(buf, draws, rng):
    counts = np.zeros(len(buf), dtype=int)
    for _ in range(draws):
        counts[buf.sample(1, rng).ids[0] % buf.capacity] += 1
    return counts


def test_criterion_09_per():
    rng = np.random.default_rng(9)
    buf = PerBuffer(capacity=10, alpha=1.0)
    for i in range(10):
        buf.push(np.zeros(6), i, 0.0, np.zeros(6))
    buf.update_priorities(np.arange(10), [9.0] + [1.0] * 9)
    counts = _draw_counts(buf, PER_DRAWS, rng)
    ratio = counts[0] / counts[1:].mean()
    ratio_ok = abs(ratio - 9.0) / 9.0 <= PER_RATIO_TOL

    flat = PerBuffer(capacity=50, alpha=0.0)
    for i in range(50):
        flat.push(np.zeros(6), i, 0.0, np.zeros(6))
    flat.update_priorities(np.arange(50), rng.exponential(size=50))
    p_val = chisquare(_draw_counts(flat, PER_DRAWS, rng)).pvalue

    tree = SumTree(777)
    leaves = np.zeros(777)
    worst = 0.0
    for _ in range(SUMTREE_OPS):
        i = int(rng.integers(777))
        val = float(rng.exponential()) if rng.random() < 0.8 else 0.0
        tree.update(i, val)
        leaves[i] = val
        worst = max(worst, abs(tree.total - leaves.sum()))
    ok = ratio_ok and p_val > CHI2_P_MIN and worst <= SUMTREE_TOL
    record(9, "PER ratio, alpha=0 uniformity, sum-tree root", ok,
           f"ratio {ratio:.3f}, chi2 p {p_val:.3f}, root err {worst:.1e}")
    assert ok


def test_criterion_10_environment():
    bij = all(decode_action(encode_action(m, k)) == (m, k) for m in range(1, 30) for k in range(1, 7))
    bij = bij and sorted(encode_action(m, k) for m in range(1, 30) for k in range(1, 7)) == list(range(174))
    env = Environment(EnvConfig(), seed=10)
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(50):
        out, _, _ = env.step(rng.integers(0, NUM_ACTIONS, env.num_agents))
        worst = max(worst, abs(out.global_reward - math.fsum(out.local_reward) / env.num_agents))
    w = RewardWeights()
    fail_case = local_reward(0, 0.0, 0.0, 0.5, w)
    win_case = local_reward(1, 0.5, 0.5, 0.5, w)
    hand = abs(fail_case + 0.65) <= REWARD_TOL and abs(win_case - 0.70) <= REWARD_TOL
    hand = hand and abs(global_reward([0.7, -0.65]) - 0.025) <= REWARD_TOL
    pl = path_loss_db(10.0, ChannelConfig()) == -60.0 and path_loss_db(100.0, ChannelConfig()) == -90.0
    ok = bij and worst <= REWARD_TOL and hand and pl
    record(10, "action bijection, global mean, reward hand cases, path loss", ok,
           f"bijection {bij}, global err {worst:.1e}, hand cases {fail_case:.2f}/{win_case:.2f}, "
           f"path loss exact {pl}")
    assert ok


def test_criterion_11_determinism(tmp_path):
    cfg = RunConfig(
        topology=TopologyConfig(aps_per_ec=4, transmitters=N_DESK),
        federate=FederateConfig(rounds=3, steps_per_round=300),
        run=RunSettings(seeds=(11,)),
    )
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = len(files) == 3 and same
    record(11, "repeated runs give byte-identical CSVs", ok, f"{len(files)} CSV pairs compared")
    assert ok


def test_criterion_12_schedule():
    env = EnvConfig(topology=TopologyConfig(aps_per_ec=1, transmitters=2))
    tr = Trainer(env, DrlHyper(), ReplayConfig(), FederateConfig(rounds=41, steps_per_round=500),
                 "feddrl", seed=12)
    reports = tr.run()
    per_round = {tuple(r.gradient_updates) for r in reports}
    syncs = [a.sync_points for a in tr.agents]
    ok = per_round == {(10, 10)} and all(s == [200, 400] for s in syncs)
    record(12, "10 updates per round, target syncs at 200 and 400", ok,
           f"updates per round {sorted(per_round)}, sync points {syncs[0]}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

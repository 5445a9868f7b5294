"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
verdict lines inline; they are also printed in the terminal summary).
"""

import json

import numpy as np
import pytest
from scipy import stats

from irs_sim import qnetwork as qn
from irs_sim.agent import AgentConfig, Trainer, evaluate, select_action
from irs_sim.channel import ArrayGeometry, ChannelConfig
from irs_sim.cli import EXIT_OK, main
from irs_sim.codebook import Codebook, InteractionVector, apply, build_codebook
from irs_sim.rate import RateConfig, achievable_rate, oracle_search
from irs_sim.scenario import ScenarioConfig, generate_scenario

from conftest import record_criterion
from oracles import (
    freq_channel_triple_loop,
    max_relative_gradient_error,
    min_preactivation_margin,
    random_rays,
)

SEED = 7


def desk_scenario_config(num_paths: int) -> ScenarioConfig:
    return ScenarioConfig(
        num_positions=16,
        geometry=ArrayGeometry(dims=(1, 8, 4)),
        channel=ChannelConfig(num_subcarriers=16, num_taps=4, num_paths=num_paths),
        num_active=4,
        noise_variance=0.01,
        train_fraction=0.7,
        subcarriers_used=16,
    )


def run_desk_training(num_paths: int):
    config = desk_scenario_config(num_paths)
    scenario = generate_scenario(config, rng_seed=SEED)
    codebook = build_codebook(config.geometry, 32, 3)
    rate_config = RateConfig(snr=1.0, reward_mode="ideal")
    trainer = Trainer(
        scenario,
        codebook,
        rate_config,
        AgentConfig(target_index_mode="taken_action", learning_rate=0.2, gamma=0.0),
        hidden_sizes=(64, 64),
        buffer_capacity=2048,
        batch_size=128,
        target_sync_period=100,
        rng_seed=SEED,
    )
    logs = trainer.train(5000)
    return scenario, codebook, rate_config, trainer, logs


@pytest.fixture(scope="module")
def convergence_l1():
    return run_desk_training(num_paths=1)


@pytest.fixture(scope="module")
def convergence_l15():
    return run_desk_training(num_paths=15)


@pytest.fixture(scope="module")
def ideal_small_run():
    config = ScenarioConfig(
        num_positions=4,
        geometry=ArrayGeometry(dims=(1, 8, 1)),
        channel=ChannelConfig(num_subcarriers=8, num_taps=2, num_paths=1),
        num_active=4,
        noise_variance=0.01,
        train_fraction=1.0,
        subcarriers_used=8,
    )
    scenario = generate_scenario(config, rng_seed=SEED)
    codebook = build_codebook(config.geometry, 8, 3)
    rate_config = RateConfig(snr=1.0, reward_mode="ideal")
    trainer = Trainer(
        scenario,
        codebook,
        rate_config,
        AgentConfig(target_index_mode="taken_action", learning_rate=0.2, gamma=0.0),
        hidden_sizes=(32,),
        buffer_capacity=512,
        batch_size=64,
        target_sync_period=100,
        rng_seed=SEED,
    )
    trainer.train(2000)
    return scenario, codebook, rate_config, trainer


CLI_CONFIG = """
[run]
seed = 5
episodes = 400
eval_period = 50

[geometry]
dims = [1, 4, 2]

[channel]
num_subcarriers = 4
num_taps = 2
num_paths = 1

[scenario]
num_positions = 8
num_active = 3
noise_variance = 0.01
subcarriers_used = 4

[codebook]
size = 8
phase_bits = 3

[rate]
snr = 1.0
rate_threshold = "auto"
reward_mode = "ideal"

[qnetwork]
hidden_sizes = [16]
target_sync_period = 50

[replay]
capacity = 256
batch_size = 32

[agent]
learning_rate = 0.05
target_index_mode = "taken_action"
"""


@pytest.fixture(scope="module")
def cli_run_pair(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_cli")
    config = root / "run.toml"
    config.write_text(CLI_CONFIG)
    out_a, out_b = root / "a", root / "b"
    assert main(["run", "--config", str(config), "--out", str(out_a)]) == EXIT_OK
    assert main(["run", "--config", str(config), "--out", str(out_b)]) == EXIT_OK
    return out_a, out_b


def test_criterion_01_hadamard_identity():
    ok = False
    try:
        rng = np.random.default_rng(SEED)
        sizes = (1, 4, 64)
        for trial in range(1000):
            num_m = sizes[trial % 3]
            h_tx = rng.standard_normal(num_m) + 1j * rng.standard_normal(num_m)
            h_rx = rng.standard_normal(num_m) + 1j * rng.standard_normal(num_m)
            psi = InteractionVector(rng.uniform(0, 2 * np.pi, num_m))
            full = h_rx @ np.diag(psi.entries) @ h_tx
            assert abs(full - apply(psi, h_rx * h_tx)) < 1e-10
        ok = True
    finally:
        record_criterion(1, "diagonal form equals Hadamard form on 1000 triples", ok)


def test_criterion_02_gradient_oracle():
    ok = False
    try:
        shapes = (
            ([5, 8, 3], 0),
            ([4, 6, 6, 2], 0),
            ([128, 128, 256, 256, 32], 2),  # desk-scale default
        )
        for sizes, seed in shapes:
            params = qn.init(sizes, rng_seed=seed)
            rng = np.random.default_rng(seed + 1000)
            states = rng.standard_normal((2, sizes[0]))
            targets = rng.standard_normal((2, sizes[-1]))
            assert min_preactivation_margin(params, states) > 3e-4
            worst = max_relative_gradient_error(params, states, targets, step=1e-5)
            assert worst < 1e-4, f"shape {sizes}: worst relative error {worst}"
        ok = True
    finally:
        record_criterion(2, "backprop matches central differences on 3 shapes", ok)


def test_criterion_03_channel_oracle():
    ok = False
    try:
        rng = np.random.default_rng(SEED)
        dim_pool = [(1, 1, 1), (1, 2, 1), (2, 2, 1), (1, 3, 2), (2, 1, 2), (1, 4, 1)]
        for trial in range(100):
            geometry = ArrayGeometry(dims=dim_pool[trial % len(dim_pool)])
            config = ChannelConfig(
                num_subcarriers=int(rng.integers(1, 7)),
                num_taps=int(rng.integers(1, 5)),
                symbol_period=float(rng.uniform(0.5, 1.5)),
                path_loss=float(rng.uniform(0.5, 3.0)),
                num_paths=int(rng.integers(1, 4)),
            )
            rays = random_rays(rng, config)
            from irs_sim.channel import freq_channel

            fast = freq_channel(rays, geometry, config)
            slow = freq_channel_triple_loop(rays, geometry, config)
            assert np.abs(fast - slow).max() / max(np.abs(slow).max(), 1e-300) < 1e-12

        # flat fading: one zero-delay ray gives identical subcarrier vectors
        from irs_sim.channel import RayPath, freq_channel

        geometry = ArrayGeometry(dims=(1, 4, 2))
        config = ChannelConfig(num_subcarriers=16, num_taps=4)
        ray = RayPath(azimuth=1.1, elevation=0.4, complex_gain=0.8 - 0.3j, delay=0.0)
        h = freq_channel([ray], geometry, config)
        for k in range(1, 16):
            assert np.abs(h[k] - h[0]).max() < 1e-12
        ok = True
    finally:
        record_criterion(3, "vectorized channel equals triple-loop oracle", ok)


def test_criterion_04_oracle_dominance_and_exactness():
    ok = False
    try:
        # dominance on every position of a generated world
        config = ScenarioConfig(
            num_positions=6,
            geometry=ArrayGeometry(dims=(1, 4, 2)),
            channel=ChannelConfig(num_subcarriers=4, num_taps=3, num_paths=2),
            num_active=3,
        )
        scenario = generate_scenario(config, rng_seed=SEED)
        codebook = build_codebook(config.geometry, 16, 3)
        rate_config = RateConfig(snr=1.0)
        for rec in scenario.positions:
            best, best_rate = oracle_search(rec.channels, codebook, rate_config)
            for vec in codebook.vectors:
                assert achievable_rate(rec.channels, vec, rate_config) <= best_rate + 1e-12

        # exactness: with the conjugate beam present on a flat rank-one
        # channel, the sweep must select it
        flat_cfg = ScenarioConfig(
            num_positions=4,
            geometry=ArrayGeometry(dims=(1, 4, 2)),
            channel=ChannelConfig(num_subcarriers=4, num_taps=1, num_paths=1),
            num_active=3,
        )
        flat = generate_scenario(flat_cfg, rng_seed=SEED)
        rng = np.random.default_rng(SEED)
        for rec in flat.positions:
            conjugate = InteractionVector(-np.angle(rec.channels.h_combined[0]))
            others = [InteractionVector(rng.uniform(0, 2 * np.pi, 8)) for _ in range(15)]
            probe = Codebook(vectors=[conjugate] + others, phase_bits=8)
            best, _ = oracle_search(rec.channels, probe, rate_config)
            assert best == 0
        ok = True
    finally:
        record_criterion(4, "oracle dominates every beam and finds the conjugate beam", ok)


def test_criterion_05_desk_scale_convergence(convergence_l1, convergence_l15):
    ok = False
    try:
        for crit_paths, threshold, bundle in (
            (1, 0.95, convergence_l1),
            (15, 0.85, convergence_l15),
        ):
            scenario, codebook, rate_config, trainer, logs = bundle
            assert len(logs) == 5000
            mean_rate, plogs = evaluate(
                trainer.qnet, scenario, scenario.train_indices, codebook, rate_config, 1
            )
            oracle_mean = float(np.mean([log.oracle_rate for log in plogs]))
            ratio = mean_rate / oracle_mean
            assert ratio >= threshold, f"L={crit_paths}: ratio {ratio:.4f} < {threshold}"
        ok = True
    finally:
        record_criterion(5, "greedy policy reaches 0.95 (L=1) / 0.85 (L=15) of oracle", ok)


def test_criterion_06_ideal_reward_optimality(ideal_small_run):
    ok = False
    try:
        scenario, codebook, rate_config, trainer = ideal_small_run
        _, plogs = evaluate(
            trainer.qnet, scenario, scenario.train_indices, codebook, rate_config, 1
        )
        hits = sum(
            1
            for position, log in zip(scenario.train_indices, plogs)
            if log.action == trainer.oracle[int(position)][0]
        )
        fraction = hits / len(plogs)
        assert fraction >= 0.95, f"exact-beam fraction {fraction:.2f} < 0.95"
        ok = True
    finally:
        record_criterion(6, "ideal-reward run selects the exact oracle beam", ok)


def test_criterion_07_topk_refinement(ideal_small_run, tmp_path):
    ok = False
    try:
        scenario, codebook, rate_config, trainer = ideal_small_run
        untrained = qn.init(trainer.qnet.layer_sizes, rng_seed=123)
        # exercise the checkpoint path for both networks
        for tag, net in (("trained", trainer.qnet), ("untrained", untrained)):
            path = tmp_path / f"{tag}.qnet"
            qn.save_params(net, path)
            params = qn.load_params(path)
            _, logs1 = evaluate(params, scenario, range(4), codebook, rate_config, 1)
            _, logs3 = evaluate(params, scenario, range(4), codebook, rate_config, 3)
            _, logs_full = evaluate(
                params, scenario, range(4), codebook, rate_config, codebook.size
            )
            for one, three, full in zip(logs1, logs3, logs_full):
                assert three.rate >= one.rate - 1e-12
                assert abs(full.rate - full.oracle_rate) <= 1e-9 * full.oracle_rate
        ok = True
    finally:
        record_criterion(7, "top-k refinement is monotone and exhaustive at k=|codebook|", ok)


def test_criterion_08_exploration_uniformity():
    ok = False
    try:
        qnet = qn.init([2, 16], rng_seed=0)
        rng = np.random.default_rng(2024)
        actions = []
        for _ in range(10_000):
            action, explored = select_action(qnet, np.zeros(2), 1.0, 16, rng)
            assert explored
            actions.append(action)
        counts = np.bincount(actions, minlength=16)
        _, p_value = stats.chisquare(counts)
        assert p_value > 0.01, f"chi-square p-value {p_value}"
        ok = True
    finally:
        record_criterion(8, "fully exploratory policy is uniform (chi-square)", ok)


def test_criterion_09_training_overhead_accounting(convergence_l1, cli_run_pair):
    ok = False
    try:
        _, codebook, _, _, logs = convergence_l1
        assert len(logs) == 5000  # exactly one reflected beam per episode
        assert all(isinstance(log.action, int) and 0 <= log.action < codebook.size for log in logs)

        out_a, _ = cli_run_pair
        manifest = json.loads((out_a / "manifest.json").read_text())
        overhead = manifest["beam_overhead"]
        assert overhead["beams_per_training_episode"] == 1
        assert overhead["training_beams_total"] == manifest["episodes_run"] == manifest["episodes"]
        assert overhead["exhaustive_beams_per_position"] == 8
        assert overhead["overhead_ratio"] == pytest.approx(1 / 8)
        ok = True
    finally:
        record_criterion(9, "one beam per training episode, ratio in the manifest", ok)


def test_criterion_10_end_to_end_determinism(cli_run_pair):
    ok = False
    try:
        out_a, out_b = cli_run_pair
        csv_a = (out_a / "learning_curve.csv").read_bytes()
        csv_b = (out_b / "learning_curve.csv").read_bytes()
        assert csv_a == csv_b and len(csv_a) > 0
        ok = True
    finally:
        record_criterion(10, "identical config and seed give byte-identical CSV", ok)


def test_criterion_11_epsilon_schedule(convergence_l1):
    ok = False
    try:
        # reference decay schedule from the desk-scale run: first decay value and
        # monotonicity
        _, _, _, _, logs = convergence_l1
        epsilons = [log.epsilon for log in logs]
        assert all(b <= a for a, b in zip(epsilons, epsilons[1:]))
        distinct = sorted(set(epsilons), reverse=True)
        assert distinct[0] == 0.99
        assert abs(distinct[1] - 0.98505) <= 1e-12

        # same decay rate on a per-iteration clock so the floor is reached
        config = ScenarioConfig(
            num_positions=4,
            geometry=ArrayGeometry(dims=(1, 4, 1)),
            channel=ChannelConfig(num_subcarriers=2, num_taps=1, num_paths=1),
            num_active=2,
            train_fraction=1.0,
        )
        scenario = generate_scenario(config, rng_seed=SEED)
        codebook = build_codebook(config.geometry, 4, 3)
        rate_config = RateConfig(snr=1.0, reward_mode="ideal")
        trainer = Trainer(
            scenario,
            codebook,
            rate_config,
            AgentConfig(
                epsilon_start=0.99,
                epsilon_floor=0.1,
                epsilon_factor=0.995,
                epsilon_period=1,
                target_index_mode="taken_action",
                learning_rate=0.05,
                gamma=0.0,
            ),
            hidden_sizes=(8,),
            buffer_capacity=64,
            batch_size=16,
            target_sync_period=50,
            rng_seed=SEED,
        )
        clamp_logs = trainer.train(490)
        clamp_eps = [log.epsilon for log in clamp_logs]
        assert abs(sorted(set(clamp_eps), reverse=True)[1] - 0.98505) <= 1e-12
        assert all(b <= a for a, b in zip(clamp_eps, clamp_eps[1:]))
        assert min(clamp_eps) == 0.1
        assert trainer.epsilon == 0.1  # clamped, further decays are no-ops
        assert clamp_eps[-1] == 0.1
        ok = True
    finally:
        record_criterion(11, "epsilon decays 0.99 -> 0.98505 ... and clamps at 0.10", ok)

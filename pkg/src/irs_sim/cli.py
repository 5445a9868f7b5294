"""Command-line front end: run training, evaluate checkpoints, oracle sweeps.

One TOML config file describes one experiment end to end. The ``run`` command
trains for a fixed episode budget and writes a learning-curve CSV, a network
checkpoint, the codebook, the scenario and a manifest that fully reproduces
the run. ``eval`` scores a checkpoint against a scenario with top-k beam
refinement, and ``oracle`` sweeps the codebook exhaustively to produce the
per-position upper bound and the derived reward threshold.

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import qnetwork as qn
from .agent import AgentConfig, Trainer, evaluate
from .channel import ArrayGeometry, ChannelConfig
from .codebook import Codebook, build_codebook, load_codebook, save_codebook
from .qnetwork import DivergenceError
from .rate import RateConfig, achievable_rate, oracle_search
from .scenario import (
    Scenario,
    ScenarioConfig,
    ScenarioFormatError,
    encode_state,
    generate_scenario,
    load_scenario,
    min_max_rate,
    sample_and_noise,
    save_scenario,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

THREADS_ENV_VAR = "IRS_SIM_THREADS"

CSV_HEADER = (
    "episode,epsilon,train_rate,oracle_rate,reward,loss,eval_mean_rate,eval_oracle_mean_rate"
)


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Union of all module configs plus the run-level knobs."""

    seed: int
    episodes: int
    out_dir: str
    eval_period: int
    target_ratio: float | None
    ratio_window: int
    scenario_path: str | None
    scenario: ScenarioConfig
    codebook_size: int
    phase_bits: int
    rate_snr: float
    rate_threshold: float | str
    reward_mode: str
    hidden_sizes: tuple[int, ...]
    target_sync_period: int
    resume_checkpoint: str | None
    buffer_capacity: int
    batch_size: int
    agent: AgentConfig
    raw: dict


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _require(section: dict, section_name: str, key: str):
    if key not in section:
        raise ConfigError(f"missing required key '{key}' in [{section_name}]")
    return section[key]


def load_run_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Raises:
        ConfigError: On unreadable files, schema violations, or cross-module
            inconsistencies (for example a declared network input dimension
            that does not match the encoded state length).
    """
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc

    try:
        run = _section(doc, "run")
        geometry_tab = _section(doc, "geometry")
        channel_tab = _section(doc, "channel")
        scenario_tab = _section(doc, "scenario")
        codebook_tab = _section(doc, "codebook")
        rate_tab = _section(doc, "rate")
        qnet_tab = _section(doc, "qnetwork")
        replay_tab = _section(doc, "replay")
        agent_tab = _section(doc, "agent")

        geometry = ArrayGeometry(
            dims=tuple(_require(geometry_tab, "geometry", "dims")),
            spacing=float(geometry_tab.get("spacing", 0.5)),
        )
        channel = ChannelConfig(
            num_subcarriers=int(_require(channel_tab, "channel", "num_subcarriers")),
            num_taps=int(channel_tab.get("num_taps", 4)),
            symbol_period=float(channel_tab.get("symbol_period", 1.0)),
            path_loss=float(channel_tab.get("path_loss", 1.0)),
            num_paths=int(channel_tab.get("num_paths", 1)),
        )
        scenario_cfg = ScenarioConfig(
            num_positions=int(_require(scenario_tab, "scenario", "num_positions")),
            geometry=geometry,
            channel=channel,
            num_active=int(_require(scenario_tab, "scenario", "num_active")),
            noise_variance=float(scenario_tab.get("noise_variance", 0.0)),
            train_fraction=float(scenario_tab.get("train_fraction", 0.7)),
            subcarriers_used=(
                int(scenario_tab["subcarriers_used"])
                if "subcarriers_used" in scenario_tab
                else None
            ),
        )

        codebook_size = int(_require(codebook_tab, "codebook", "size"))
        phase_bits = int(codebook_tab.get("phase_bits", 3))

        rate_threshold = rate_tab.get("rate_threshold", "auto")
        if not (rate_threshold == "auto" or isinstance(rate_threshold, (int, float))):
            raise ConfigError("rate_threshold must be a number or 'auto'")
        reward_mode = str(rate_tab.get("reward_mode", "threshold"))
        rate_snr = float(_require(rate_tab, "rate", "snr"))

        hidden_sizes = tuple(int(n) for n in qnet_tab.get("hidden_sizes", [128, 256, 256]))
        if any(n < 1 for n in hidden_sizes):
            raise ConfigError("hidden_sizes must be positive")
        target_sync_period = int(qnet_tab.get("target_sync_period", 100))
        if target_sync_period < 0:
            raise ConfigError("target_sync_period must be >= 0 (0 disables the target network)")

        state_dim = scenario_cfg.state_dim
        if "input_dim" in qnet_tab and int(qnet_tab["input_dim"]) != state_dim:
            raise ConfigError(
                f"qnetwork input_dim {qnet_tab['input_dim']} != encoded state length "
                f"{state_dim} (= 2 * subcarriers_used * num_active)"
            )
        if "output_dim" in qnet_tab and int(qnet_tab["output_dim"]) != codebook_size:
            raise ConfigError(
                f"qnetwork output_dim {qnet_tab['output_dim']} != codebook size {codebook_size}"
            )

        buffer_capacity = int(replay_tab.get("capacity", 8192))
        batch_size = int(replay_tab.get("batch_size", 512))
        if batch_size < 1 or buffer_capacity < 1:
            raise ConfigError("replay capacity and batch_size must be >= 1")
        if batch_size > buffer_capacity:
            raise ConfigError("replay batch_size cannot exceed capacity")

        agent_cfg = AgentConfig(
            epsilon_start=float(agent_tab.get("epsilon_start", 0.99)),
            epsilon_floor=float(agent_tab.get("epsilon_floor", 0.1)),
            epsilon_factor=float(agent_tab.get("epsilon_factor", 0.995)),
            epsilon_period=int(agent_tab.get("epsilon_period", 40)),
            gamma=float(agent_tab.get("gamma", 0.0)),
            learning_rate=float(agent_tab.get("learning_rate", 1e-3)),
            target_index_mode=str(agent_tab.get("target_index_mode", "next_argmax")),
            k_b=int(agent_tab.get("k_b", 1)),
        )

        episodes = int(_require(run, "run", "episodes"))
        if episodes < 1:
            raise ConfigError("episodes must be >= 1")
        eval_period = int(run.get("eval_period", 50))
        if eval_period < 1:
            raise ConfigError("eval_period must be >= 1")
        target_ratio = run.get("target_ratio")
        if target_ratio is not None and not isinstance(target_ratio, (int, float)):
            raise ConfigError("target_ratio must be a number")
        ratio_window = int(run.get("ratio_window", 100))
        if ratio_window < 1:
            raise ConfigError("ratio_window must be >= 1")

        config = RunConfig(
            seed=int(run.get("seed", 0)),
            episodes=episodes,
            out_dir=str(run.get("out_dir", ".")),
            eval_period=eval_period,
            target_ratio=None if target_ratio is None else float(target_ratio),
            ratio_window=ratio_window,
            scenario_path=(
                str(scenario_tab["load_path"]) if "load_path" in scenario_tab else None
            ),
            scenario=scenario_cfg,
            codebook_size=codebook_size,
            phase_bits=phase_bits,
            rate_snr=rate_snr,
            rate_threshold=rate_threshold,
            reward_mode=reward_mode,
            hidden_sizes=hidden_sizes,
            target_sync_period=target_sync_period,
            resume_checkpoint=(str(qnet_tab["resume"]) if "resume" in qnet_tab else None),
            buffer_capacity=buffer_capacity,
            batch_size=batch_size,
            agent=agent_cfg,
            raw=doc,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return config


def _sweep_workers() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        cap = int(raw) if raw else 1
    except ValueError:
        cap = 1
    return max(1, cap)


def _map_positions(fn, indices):
    """Apply fn over position indices, optionally threaded, order-preserving."""
    workers = _sweep_workers()
    if workers <= 1 or len(indices) <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices))


def _build_world(config: RunConfig) -> tuple[Scenario, Codebook, RateConfig]:
    """Generate or load the scenario, build the codebook, resolve the threshold."""
    if config.scenario_path is not None:
        scenario = load_scenario(config.scenario_path)
    else:
        scenario = generate_scenario(config.scenario, config.seed)
    codebook = build_codebook(config.scenario.geometry, config.codebook_size, config.phase_bits)
    if scenario.positions[0].channels.num_elements != codebook.num_elements:
        raise ConfigError(
            f"scenario element count {scenario.positions[0].channels.num_elements} "
            f"!= codebook element count {codebook.num_elements}"
        )
    base = RateConfig(snr=config.rate_snr, reward_mode=config.reward_mode)
    if config.rate_threshold == "auto":
        threshold = min_max_rate(scenario, codebook, base)
    else:
        threshold = float(config.rate_threshold)
    rate_config = RateConfig(
        snr=config.rate_snr, rate_threshold=threshold, reward_mode=config.reward_mode
    )
    return scenario, codebook, rate_config


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_run(config: RunConfig, out_dir: Path) -> int:
    """Train for the configured episode budget and write all run outputs.

    Training ends at the episode budget, or earlier when the configured
    moving-average rate ratio target is reached.
    """
    scenario, codebook, rate_config = _build_world(config)
    initial_params = (
        qn.load_params(config.resume_checkpoint) if config.resume_checkpoint else None
    )
    trainer = Trainer(
        scenario,
        codebook,
        rate_config,
        config.agent,
        hidden_sizes=config.hidden_sizes,
        buffer_capacity=config.buffer_capacity,
        batch_size=config.batch_size,
        target_sync_period=config.target_sync_period,
        rng_seed=config.seed,
        initial_params=initial_params,
    )

    rows = [CSV_HEADER]
    eval_split = scenario.test_indices if scenario.test_indices.size else None
    last_eval = (None, None)
    ratio_window: deque[float] = deque(maxlen=config.ratio_window)
    episodes_run = 0
    for t in range(1, config.episodes + 1):
        log = trainer.run_episode(t)
        episodes_run = t
        reached_target = False
        if config.target_ratio is not None:
            ratio_window.append(log.rate / log.oracle_rate if log.oracle_rate > 0 else 1.0)
            reached_target = (
                len(ratio_window) == config.ratio_window
                and float(np.mean(ratio_window)) >= config.target_ratio
            )
        last_episode = t == config.episodes or reached_target
        eval_mean = eval_oracle = None
        if eval_split is not None and (t % config.eval_period == 0 or last_episode):
            eval_mean, eval_logs = evaluate(
                trainer.qnet, scenario, eval_split, codebook, rate_config, config.agent.k_b
            )
            eval_oracle = float(np.mean([e.oracle_rate for e in eval_logs]))
            last_eval = (eval_mean, eval_oracle)
        rows.append(
            ",".join(
                [
                    _fmt(log.episode),
                    _fmt(log.epsilon),
                    _fmt(log.rate),
                    _fmt(log.oracle_rate),
                    _fmt(log.reward),
                    _fmt(log.loss),
                    _fmt(eval_mean),
                    _fmt(eval_oracle),
                ]
            )
        )
        if reached_target:
            break

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "learning_curve.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    qn.save_params(trainer.qnet, out_dir / "checkpoint.qnet")
    save_codebook(codebook, out_dir / "codebook.json")
    save_scenario(scenario, out_dir / "scenario.irs")

    manifest = {
        "version": f"irs-sim-{__version__}",
        "seed": config.seed,
        "episodes": config.episodes,
        "episodes_run": episodes_run,
        "config": config.raw,
        "rate_threshold": rate_config.rate_threshold,
        "beam_overhead": {
            "training_episodes": episodes_run,
            "beams_per_training_episode": 1,
            "training_beams_total": episodes_run,
            "exhaustive_beams_per_position": codebook.size,
            "overhead_ratio": 1.0 / codebook.size,
        },
        "train_iterations": trainer.train_iterations,
        "final_epsilon": trainer.epsilon,
        "final_eval_mean_rate": last_eval[0],
        "final_eval_oracle_mean_rate": last_eval[1],
        "outputs": {
            "learning_curve": "learning_curve.csv",
            "checkpoint": "checkpoint.qnet",
            "codebook": "codebook.json",
            "scenario": "scenario.irs",
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return EXIT_OK


def cmd_eval(
    checkpoint_path,
    scenario_path,
    k_b: int,
    config: RunConfig,
    out_dir: Path,
    codebook_path=None,
) -> int:
    """Score a checkpoint on every scenario position with top-k refinement."""
    params = qn.load_params(checkpoint_path)
    scenario = load_scenario(scenario_path)
    if codebook_path is not None:
        codebook = load_codebook(codebook_path)
    else:
        codebook = build_codebook(
            config.scenario.geometry, config.codebook_size, config.phase_bits
        )
    expected_input = 2 * scenario.subcarriers_used * scenario.config.num_active
    if params.input_dim != expected_input:
        raise ConfigError(
            f"checkpoint input dim {params.input_dim} != scenario state length {expected_input}"
        )
    if params.output_dim != codebook.size:
        raise ConfigError(
            f"checkpoint output dim {params.output_dim} != codebook size {codebook.size}"
        )
    if not 1 <= k_b <= codebook.size:
        raise ConfigError(f"k_b must be in [1, {codebook.size}], got {k_b}")

    base = RateConfig(snr=config.rate_snr, reward_mode=config.reward_mode)
    train_set = set(scenario.train_indices.tolist())

    def score(position: int) -> dict:
        rec = scenario.positions[position]
        sampled = sample_and_noise(rec.channels, rec.active_indices, 0.0, 0)
        state = encode_state(sampled, scenario.subcarriers_used, scenario.normalization_constant)
        candidates = qn.predict_topk(params, state, k_b)
        rates = [
            achievable_rate(rec.channels, codebook.vectors[int(a)], base) for a in candidates
        ]
        best = int(np.argmax(rates))
        oracle_idx, oracle_rate = oracle_search(rec.channels, codebook, base)
        return {
            "position": int(position),
            "split": "train" if position in train_set else "test",
            "predicted_beams": [int(a) for a in candidates],
            "refined_beam": int(candidates[best]),
            "achieved_rate": float(rates[best]),
            "oracle_beam": int(oracle_idx),
            "oracle_rate": float(oracle_rate),
            "ratio": float(rates[best] / oracle_rate) if oracle_rate else 1.0,
        }

    records = _map_positions(score, list(range(scenario.num_positions)))
    report = {
        "k_b": k_b,
        "mean_achieved_rate": float(np.mean([r["achieved_rate"] for r in records])),
        "mean_oracle_rate": float(np.mean([r["oracle_rate"] for r in records])),
        "positions": records,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return EXIT_OK


def cmd_oracle(scenario_path, config: RunConfig, out_dir: Path) -> int:
    """Exhaustive per-position sweep plus the derived reward threshold."""
    scenario = load_scenario(scenario_path)
    codebook = build_codebook(config.scenario.geometry, config.codebook_size, config.phase_bits)
    if scenario.positions[0].channels.num_elements != codebook.num_elements:
        raise ConfigError("scenario and codebook element counts differ")
    base = RateConfig(snr=config.rate_snr, reward_mode=config.reward_mode)
    if scenario.train_indices.size == 0:
        raise ConfigError("training split is empty; min-max rate threshold undefined")

    def sweep(position: int) -> dict:
        best, rate = oracle_search(scenario.positions[position].channels, codebook, base)
        return {"position": int(position), "best_beam": best, "oracle_rate": rate}

    records = _map_positions(sweep, list(range(scenario.num_positions)))
    threshold = min(
        records[int(i)]["oracle_rate"] for i in scenario.train_indices
    )
    report = {
        "rate_threshold": threshold,
        "codebook_size": codebook.size,
        "positions": records,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "oracle.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irs-sim",
        description="Reflection-beam learning simulator for a self-configuring surface",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train for the configured episode budget")
    run_p.add_argument("--config", required=True, help="TOML run configuration")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="output directory (default: config out_dir)")

    eval_p = sub.add_parser("eval", help="score a checkpoint against a scenario")
    eval_p.add_argument("--config", required=True, help="TOML run configuration")
    eval_p.add_argument("--checkpoint", required=True, help="network checkpoint file")
    eval_p.add_argument("--scenario", required=True, help="scenario file")
    eval_p.add_argument("--codebook", default=None, help="codebook JSON (default: rebuild)")
    eval_p.add_argument("--k-b", type=int, default=1, help="beams to rate-test per position")
    eval_p.add_argument("--out", default=None)

    oracle_p = sub.add_parser("oracle", help="exhaustive upper-bound sweep")
    oracle_p.add_argument("--config", required=True, help="TOML run configuration")
    oracle_p.add_argument("--scenario", required=True, help="scenario file")
    oracle_p.add_argument("--out", default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_run_config(args.config)
        if getattr(args, "seed", None) is not None:
            config = replace(config, seed=args.seed)
        out_dir = Path(args.out if args.out is not None else config.out_dir)

        if args.command == "run":
            return cmd_run(config, out_dir)
        if args.command == "eval":
            return cmd_eval(
                args.checkpoint, args.scenario, args.k_b, config, out_dir, args.codebook
            )
        return cmd_oracle(args.scenario, config, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ScenarioFormatError, OSError) as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Q-learning agent for the reflecting surface.

One learning episode spans one coherence block: the surface observes a noisy
sampled channel, picks a reflection beam (epsilon-greedy), receives the rate
feedback from the receiver, clips it to a binary reward, stores the
transition, and trains the Q-network on a replay minibatch. The exploration
rate decays multiplicatively on a training-iteration clock. Evaluation is
greedy and can refine the prediction by rate-testing the top-k beams.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qnetwork as qn
from .codebook import Codebook
from .rate import RateConfig, achievable_rate, oracle_search, quantize_reward
from .replay import Experience, ReplayBuffer
from .scenario import Scenario, encode_state, sample_and_noise

TARGET_INDEX_MODES = ("next_argmax", "taken_action")


@dataclass(frozen=True)
class AgentConfig:
    """Learning-loop hyperparameters.

    Attributes:
        epsilon_start: Initial exploration probability.
        epsilon_floor: Lower clamp of the exploration probability.
        epsilon_factor: Multiplicative decay applied every decay period.
        epsilon_period: Training iterations between decays.
        gamma: Discount on the bootstrap term.
        learning_rate: SGD step size.
        target_index_mode: Which output entry the target update lands on;
            "next_argmax" uses the argmax action of the next state,
            "taken_action" uses the action that earned the reward.
        k_b: Number of predicted beams rate-tested during evaluation.
    """

    epsilon_start: float = 0.99
    epsilon_floor: float = 0.1
    epsilon_factor: float = 0.995
    epsilon_period: int = 40
    gamma: float = 0.0
    learning_rate: float = 1e-3
    target_index_mode: str = "next_argmax"
    k_b: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon_floor <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_floor <= epsilon_start <= 1")
        if not 0.0 < self.epsilon_factor < 1.0:
            raise ValueError("epsilon_factor must be in (0, 1)")
        if self.epsilon_period < 1:
            raise ValueError("epsilon_period must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.target_index_mode not in TARGET_INDEX_MODES:
            raise ValueError(f"target_index_mode must be one of {TARGET_INDEX_MODES}")
        if self.k_b < 1:
            raise ValueError("k_b must be >= 1")


@dataclass
class EpisodeLog:
    """Trace record of one episode (or one evaluation position)."""

    episode: int
    action: int
    explored: bool
    rate: float
    reward: int
    oracle_rate: float
    epsilon: float
    loss: float | None = None


def select_action(
    qnet: qn.QNetworkParams, state, epsilon: float, codebook_size: int, rng_seed
) -> tuple[int, bool]:
    """Epsilon-greedy beam choice.

    With probability ``epsilon`` a uniformly random beam index is returned
    (explored=True); otherwise the argmax of the Q-values (explored=False).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    if rng.uniform() < epsilon:
        return int(rng.integers(codebook_size)), True
    return int(qn.predict_topk(qnet, state, 1)[0]), False


def build_targets(
    qnet: qn.QNetworkParams,
    target_net: qn.QNetworkParams,
    states: np.ndarray,
    next_states: np.ndarray,
    actions: np.ndarray,
    rewards: np.ndarray,
    gamma: float,
    mode: str,
) -> np.ndarray:
    """Batched target vectors for a minibatch of transitions.

    Every target starts as the online prediction for the state, so untouched
    entries contribute zero loss gradient. Exactly one entry per row is
    replaced by reward + gamma * max_a Q(next_state, a | target_net): in
    "next_argmax" mode that entry is the argmax action of the next state
    (evaluated on the target network), in "taken_action" mode it is the
    action actually taken.
    """
    if mode not in TARGET_INDEX_MODES:
        raise ValueError(f"mode must be one of {TARGET_INDEX_MODES}")
    preds = qn.forward(qnet, np.atleast_2d(states))
    bootstrap = qn.forward(target_net, np.atleast_2d(next_states))
    if mode == "next_argmax":
        idx = bootstrap.argmax(axis=1)
    else:
        idx = np.asarray(actions, dtype=np.int64)
    targets = preds.copy()
    targets[np.arange(targets.shape[0]), idx] = (
        np.asarray(rewards, dtype=np.float64) + gamma * bootstrap.max(axis=1)
    )
    return targets


def build_target(
    qnet: qn.QNetworkParams,
    target_net: qn.QNetworkParams,
    state,
    next_state,
    action_taken: int,
    reward: int,
    gamma: float,
    mode: str,
) -> np.ndarray:
    """Target vector for a single transition; see :func:`build_targets`."""
    return build_targets(
        qnet,
        target_net,
        np.asarray(state)[None, :],
        np.asarray(next_state)[None, :],
        np.array([action_taken]),
        np.array([reward]),
        gamma,
        mode,
    )[0]


class Trainer:
    """Runs the learning loop over a fixed scenario, one episode per block.

    The receiver position is redrawn uniformly from the training split every
    episode, and the pilot noise is redrawn even when the position repeats.
    The per-position oracle sweep is precomputed once since channels are
    static. A target-sync period of 0 disables the second network and
    evaluates bootstrap values on the online parameters.
    """

    def __init__(
        self,
        scenario: Scenario,
        codebook: Codebook,
        rate_config: RateConfig,
        agent_config: AgentConfig,
        *,
        hidden_sizes: Sequence[int] = (128, 256, 256),
        buffer_capacity: int = 8192,
        batch_size: int = 512,
        target_sync_period: int = 100,
        rng_seed: int = 0,
        initial_params: qn.QNetworkParams | None = None,
    ) -> None:
        if scenario.train_indices.size == 0:
            raise ValueError("scenario has no training positions")
        if batch_size > buffer_capacity:
            raise ValueError("batch_size cannot exceed buffer_capacity")
        if target_sync_period < 0:
            raise ValueError("target_sync_period must be >= 0 (0 disables the target network)")
        self.scenario = scenario
        self.codebook = codebook
        self.rate_config = rate_config
        self.config = agent_config
        self.batch_size = batch_size
        self.target_sync_period = target_sync_period

        input_dim = 2 * scenario.subcarriers_used * scenario.config.num_active
        layer_sizes = (input_dim, *hidden_sizes, codebook.size)
        master = np.random.SeedSequence(rng_seed)
        net_seq, loop_seq = master.spawn(2)
        if initial_params is not None:
            if initial_params.input_dim != input_dim or initial_params.output_dim != codebook.size:
                raise ValueError(
                    f"initial parameters expect dims ({initial_params.input_dim}, "
                    f"{initial_params.output_dim}), scenario/codebook need "
                    f"({input_dim}, {codebook.size})"
                )
            self.qnet = qn.sync_target(initial_params)
        else:
            self.qnet = qn.init(layer_sizes, int(net_seq.generate_state(1, np.uint64)[0]))
        self.target_net = qn.sync_target(self.qnet) if target_sync_period else None
        self.buffer = ReplayBuffer(buffer_capacity)
        self._rng = np.random.default_rng(loop_seq)

        self.epsilon = agent_config.epsilon_start
        self.train_iterations = 0
        self.oracle = [
            oracle_search(rec.channels, codebook, rate_config) for rec in scenario.positions
        ]

        # Initial pilot estimate before the first episode.
        self._position = self._draw_position()
        self._state = self._observe(self._position)

    def _draw_position(self) -> int:
        train = self.scenario.train_indices
        return int(train[self._rng.integers(train.size)])

    def _observe(self, position: int) -> np.ndarray:
        rec = self.scenario.positions[position]
        sampled = sample_and_noise(
            rec.channels, rec.active_indices, self.scenario.config.noise_variance, self._rng
        )
        return encode_state(sampled, self.scenario.subcarriers_used, self.scenario.normalization_constant)

    def _bootstrap_net(self) -> qn.QNetworkParams:
        return self.target_net if self.target_net is not None else self.qnet

    def run_episode(self, episode: int) -> EpisodeLog:
        """One full interaction-and-learning episode.

        Exactly one experience is stored and at most one training step runs;
        the next state becomes the current state for the following episode.
        """
        cfg = self.config
        position, state = self._position, self._state
        epsilon_used = self.epsilon

        action, explored = select_action(
            self.qnet, state, epsilon_used, self.codebook.size, self._rng
        )
        channels = self.scenario.positions[position].channels
        rate = achievable_rate(channels, self.codebook.vectors[action], self.rate_config)
        oracle_rate = self.oracle[position][1]
        reward = quantize_reward(rate, oracle_rate, self.rate_config)

        next_position = self._draw_position()
        next_state = self._observe(next_position)
        self.buffer.push(Experience(state, action, reward, next_state))

        loss = None
        if len(self.buffer) >= self.batch_size:
            batch = self.buffer.sample(self.batch_size, self._rng)
            states = np.stack([e.state for e in batch])
            next_states = np.stack([e.next_state for e in batch])
            actions = np.array([e.action for e in batch], dtype=np.int64)
            rewards = np.array([e.reward for e in batch], dtype=np.float64)
            targets = build_targets(
                self.qnet,
                self._bootstrap_net(),
                states,
                next_states,
                actions,
                rewards,
                cfg.gamma,
                cfg.target_index_mode,
            )
            loss = qn.train_step(self.qnet, states, targets, cfg.learning_rate)
            self.train_iterations += 1
            if self.train_iterations % cfg.epsilon_period == 0:
                self.epsilon = max(cfg.epsilon_floor, self.epsilon * cfg.epsilon_factor)
            if self.target_sync_period and self.train_iterations % self.target_sync_period == 0:
                self.target_net = qn.sync_target(self.qnet)

        self._position, self._state = next_position, next_state
        return EpisodeLog(
            episode=episode,
            action=action,
            explored=explored,
            rate=rate,
            reward=reward,
            oracle_rate=oracle_rate,
            epsilon=epsilon_used,
            loss=loss,
        )

    def train(
        self,
        episodes: int,
        target_ratio: float | None = None,
        ratio_window: int = 100,
    ) -> list[EpisodeLog]:
        """Run up to ``episodes`` consecutive episodes and return their logs.

        When ``target_ratio`` is set, training also terminates as soon as the
        moving average of rate / oracle-rate over the last ``ratio_window``
        episodes reaches it, whichever comes first.
        """
        if target_ratio is not None and ratio_window < 1:
            raise ValueError("ratio_window must be >= 1")
        logs = []
        window: deque[float] = deque(maxlen=ratio_window)
        for t in range(1, episodes + 1):
            log = self.run_episode(t)
            logs.append(log)
            if target_ratio is not None:
                window.append(log.rate / log.oracle_rate if log.oracle_rate > 0 else 1.0)
                if len(window) == ratio_window and float(np.mean(window)) >= target_ratio:
                    break
        return logs


def evaluate(
    qnet: qn.QNetworkParams,
    scenario: Scenario,
    position_indices: Sequence[int],
    codebook: Codebook,
    rate_config: RateConfig,
    k_b: int = 1,
) -> tuple[float, list[EpisodeLog]]:
    """Greedy evaluation over a set of positions.

    States are the noiseless sampled channels, so the result is
    deterministic. For k_b > 1 the k_b highest-ranked predicted beams are
    each rate-tested on the true channels and the best one is kept.

    Returns:
        (mean achieved rate, per-position logs). Log entries carry the
        position index in the episode field and epsilon 0.
    """
    logs = []
    for position in position_indices:
        rec = scenario.positions[int(position)]
        sampled = sample_and_noise(rec.channels, rec.active_indices, 0.0, 0)
        state = encode_state(sampled, scenario.subcarriers_used, scenario.normalization_constant)
        candidates = qn.predict_topk(qnet, state, k_b)
        rates = [
            achievable_rate(rec.channels, codebook.vectors[int(a)], rate_config)
            for a in candidates
        ]
        best = int(np.argmax(rates))
        oracle_idx, oracle_rate = oracle_search(rec.channels, codebook, rate_config)
        logs.append(
            EpisodeLog(
                episode=int(position),
                action=int(candidates[best]),
                explored=False,
                rate=float(rates[best]),
                reward=quantize_reward(float(rates[best]), oracle_rate, rate_config),
                oracle_rate=oracle_rate,
                epsilon=0.0,
            )
        )
    mean_rate = float(np.mean([log.rate for log in logs])) if logs else 0.0
    return mean_rate, logs

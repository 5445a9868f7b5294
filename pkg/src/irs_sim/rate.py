"""Achievable rate, reward quantization and the exhaustive-search upper bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .codebook import Codebook, InteractionVector

REWARD_GOOD = 1
REWARD_BAD = -1

REWARD_MODES = ("threshold", "ideal")

# Relative tolerance for "rate equals the oracle rate" in ideal reward mode;
# rate recomputation is not bit-exact across evaluation orders.
IDEAL_REL_TOL = 1e-9


@dataclass(frozen=True)
class RateConfig:
    """Rate evaluation and reward settings.

    Attributes:
        snr: Linear signal-to-noise power ratio applied to the squared beam
            gain. Supplied directly; a plausible mapping from physical
            quantities is total transmit power / (subcarriers * noise power).
        rate_threshold: Reward threshold in bits/s/Hz for threshold mode.
        reward_mode: "threshold" rewards rates strictly above the threshold,
            "ideal" rewards only rates equal to the exhaustive-search optimum.
    """

    snr: float
    rate_threshold: float = 0.0
    reward_mode: str = "threshold"

    def __post_init__(self) -> None:
        if not self.snr > 0.0:
            raise ValueError("snr must be positive")
        if not math.isfinite(self.rate_threshold):
            raise ValueError("rate_threshold must be finite")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")


def achievable_rate(channels: ChannelSet, psi: InteractionVector, config: RateConfig) -> float:
    """Subcarrier-averaged achievable rate of one beam in bits/s/Hz.

    Averages log2(1 + snr * |gain_k|^2) over subcarriers, where gain_k is the
    inner product of the combined channel on subcarrier k with the beam.
    """
    if channels.num_elements != len(psi):
        raise ValueError(
            f"dimension mismatch: channel has {channels.num_elements} elements, "
            f"beam has {len(psi)}"
        )
    gains = channels.h_combined @ psi.entries
    return float(np.mean(np.log2(1.0 + config.snr * np.abs(gains) ** 2)))


def oracle_search(channels: ChannelSet, codebook, config: RateConfig) -> tuple[int, float]:
    """Exhaustive sweep over the codebook.

    Accepts a :class:`Codebook` or any non-empty sequence of interaction
    vectors.

    Returns:
        (best_index, best_rate) with ties broken by the lowest index.
    """
    vectors = codebook.vectors if isinstance(codebook, Codebook) else list(codebook)
    if not vectors:
        raise ValueError("codebook must be non-empty")
    rates = np.array([achievable_rate(channels, v, config) for v in vectors])
    best = int(np.argmax(rates))
    return best, float(rates[best])


def quantize_reward(rate: float, oracle_rate: float, config: RateConfig) -> int:
    """Clip the rate feedback to a binary reward.

    Threshold mode returns +1 only for rates strictly above the threshold.
    Ideal mode returns +1 only when the rate matches the oracle rate within
    a small relative tolerance.
    """
    if config.reward_mode == "threshold":
        return REWARD_GOOD if rate > config.rate_threshold else REWARD_BAD
    return REWARD_GOOD if math.isclose(rate, oracle_rate, rel_tol=IDEAL_REL_TOL) else REWARD_BAD

"""Desk-scale simulator of a self-configuring reflecting surface.

The surface observes noisy channel samples at a few active elements and
learns, with a deep Q-network, to pick reflection beams from a quantized
codebook that approach the exhaustive-search rate upper bound.
"""

__version__ = "0.1.0"

from .agent import AgentConfig, EpisodeLog, Trainer, build_target, evaluate, select_action
from .channel import (
    ArrayGeometry,
    ChannelConfig,
    ChannelSet,
    RayPath,
    SampledChannel,
    array_response,
    freq_channel,
    generate_rays,
    sample_and_noise,
)
from .codebook import Codebook, InteractionVector, apply, build_codebook
from .qnetwork import (
    DivergenceError,
    QNetworkParams,
    forward,
    init,
    load_params,
    predict_topk,
    save_params,
    sync_target,
    train_step,
)
from .rate import RateConfig, achievable_rate, oracle_search, quantize_reward
from .replay import Experience, InsufficientSamplesError, ReplayBuffer
from .scenario import (
    RunningMax,
    Scenario,
    ScenarioConfig,
    ScenarioFormatError,
    compute_normalization,
    encode_state,
    generate_scenario,
    load_scenario,
    min_max_rate,
    save_scenario,
)

__all__ = [
    "AgentConfig",
    "ArrayGeometry",
    "ChannelConfig",
    "ChannelSet",
    "Codebook",
    "DivergenceError",
    "EpisodeLog",
    "Experience",
    "InsufficientSamplesError",
    "InteractionVector",
    "QNetworkParams",
    "RateConfig",
    "RayPath",
    "ReplayBuffer",
    "RunningMax",
    "SampledChannel",
    "Scenario",
    "ScenarioConfig",
    "ScenarioFormatError",
    "Trainer",
    "achievable_rate",
    "apply",
    "array_response",
    "build_codebook",
    "build_target",
    "compute_normalization",
    "encode_state",
    "evaluate",
    "forward",
    "freq_channel",
    "generate_rays",
    "generate_scenario",
    "init",
    "load_params",
    "load_scenario",
    "min_max_rate",
    "oracle_search",
    "predict_topk",
    "quantize_reward",
    "sample_and_noise",
    "save_params",
    "save_scenario",
    "select_action",
    "sync_target",
    "train_step",
]

"""Experiment world: receiver positions, channels, state encoding, dataset files.

A scenario holds one channel realization per candidate receiver position, a
train/test split, and the input normalization constant computed over the
training positions. The transmitter is fixed, so its link is generated once
and shared by every position; the receiver link is drawn independently per
position. Scenarios round-trip bit-exactly through a binary file plus a JSON
sidecar, which is also the ingestion path for externally generated channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import (
    ArrayGeometry,
    ChannelConfig,
    ChannelSet,
    SampledChannel,
    freq_channel,
    generate_rays,
    sample_and_noise,
)
from .codebook import Codebook
from .rate import RateConfig, oracle_search

SCENARIO_MAGIC = b"IRS1"
DEFAULT_MAX_INPUT_SUBCARRIERS = 64


class ScenarioFormatError(ValueError):
    """Malformed scenario file or dimension mismatch against its header."""


@dataclass(frozen=True)
class ScenarioConfig:
    """World-generation parameters.

    Attributes:
        num_positions: Number of candidate receiver positions.
        geometry: Surface element grid.
        channel: Channel synthesis parameters shared by both links.
        num_active: Number of active sensing elements.
        noise_variance: Pilot estimation noise variance per complex entry.
        train_fraction: Fraction of positions assigned to the training split.
        subcarriers_used: Number of leading subcarriers fed to the network;
            defaults to min(num_subcarriers, 64).
    """

    num_positions: int
    geometry: ArrayGeometry
    channel: ChannelConfig
    num_active: int
    noise_variance: float = 0.0
    train_fraction: float = 0.7
    subcarriers_used: int | None = None

    def __post_init__(self) -> None:
        if self.num_positions < 1:
            raise ValueError("num_positions must be >= 1")
        if not 1 <= self.num_active <= self.geometry.num_elements:
            raise ValueError(
                f"num_active must be in [1, {self.geometry.num_elements}], got {self.num_active}"
            )
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be non-negative")
        if not 0.0 <= self.train_fraction <= 1.0:
            raise ValueError("train_fraction must be in [0, 1]")
        if self.subcarriers_used is not None and not (
            1 <= self.subcarriers_used <= self.channel.num_subcarriers
        ):
            raise ValueError("subcarriers_used must be in [1, num_subcarriers]")

    @property
    def resolved_subcarriers(self) -> int:
        if self.subcarriers_used is not None:
            return self.subcarriers_used
        return min(self.channel.num_subcarriers, DEFAULT_MAX_INPUT_SUBCARRIERS)

    @property
    def state_dim(self) -> int:
        return 2 * self.resolved_subcarriers * self.num_active


@dataclass(eq=False)
class PositionRecord:
    """Channels of one receiver position plus its active-element selection."""

    channels: ChannelSet
    active_indices: np.ndarray


@dataclass(eq=False)
class Scenario:
    """Generated or loaded experiment world."""

    config: ScenarioConfig
    positions: list[PositionRecord]
    train_indices: np.ndarray
    test_indices: np.ndarray
    normalization_constant: float
    subcarriers_used: int
    seed: int

    @property
    def num_positions(self) -> int:
        return len(self.positions)


def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, np.uint64)[0])


def compute_normalization(samples: Iterable[SampledChannel], subcarriers_used: int) -> float:
    """Normalization constant over the encoded training inputs.

    The constant is the maximum of |real part| and |imaginary part| over all
    combined sample entries of the leading ``subcarriers_used`` subcarriers.

    Raises:
        ValueError: If the inputs are empty or all-zero (the constant would
            be zero).
    """
    peak = 0.0
    for sc in samples:
        block = sc.samples[:subcarriers_used]
        if block.size:
            peak = max(peak, float(np.abs(block.real).max()), float(np.abs(block.imag).max()))
    if peak <= 0.0:
        raise ValueError("training inputs are empty or all-zero; normalization undefined")
    return peak


class RunningMax:
    """Online substitute for the per-dataset normalization constant.

    Standalone operation has no pre-collected dataset to take a maximum over,
    so the constant is tracked as a running maximum of the observations seen
    so far.
    """

    def __init__(self) -> None:
        self._peak = 0.0

    def update(self, sampled: SampledChannel, subcarriers_used: int | None = None) -> float:
        block = sampled.samples if subcarriers_used is None else sampled.samples[:subcarriers_used]
        if block.size:
            self._peak = max(
                self._peak, float(np.abs(block.real).max()), float(np.abs(block.imag).max())
            )
        return self._peak

    @property
    def value(self) -> float:
        if self._peak <= 0.0:
            raise ValueError("no non-zero observation seen yet; constant undefined")
        return self._peak


def encode_state(
    sampled: SampledChannel, subcarriers_used: int, normalization_constant: float
) -> np.ndarray:
    """Flatten a sampled observation into the network input vector.

    The leading ``subcarriers_used`` sample rows are stacked subcarrier-major
    and each complex entry is split into an interleaved (real, imaginary)
    pair, then everything is divided by the normalization constant. Output
    length is 2 * subcarriers_used * num_active.
    """
    if normalization_constant <= 0.0:
        raise ValueError("normalization_constant must be positive")
    if not 1 <= subcarriers_used <= sampled.samples.shape[0]:
        raise ValueError(
            f"subcarriers_used must be in [1, {sampled.samples.shape[0]}], got {subcarriers_used}"
        )
    flat = sampled.samples[:subcarriers_used].ravel()
    out = np.empty(2 * flat.size, dtype=np.float64)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    out /= normalization_constant
    return out


def generate_scenario(config: ScenarioConfig, rng_seed: int) -> Scenario:
    """Build a synthetic world from a master seed.

    The transmitter link and the active-element set are drawn once; each
    position then gets an independent receiver link from a per-position child
    seed. The split assigns the first floor(train_fraction * n) positions to
    training. The result is fully determined by the config and the seed.
    """
    master = np.random.SeedSequence(rng_seed)
    tx_seq, active_seq, positions_seq = master.spawn(3)

    tx_rays = generate_rays(config.channel, _seed_int(tx_seq))
    h_tx = freq_channel(tx_rays, config.geometry, config.channel)

    active_rng = np.random.default_rng(active_seq)
    active = np.sort(
        active_rng.choice(config.geometry.num_elements, size=config.num_active, replace=False)
    ).astype(np.int64)

    positions = []
    for child in positions_seq.spawn(config.num_positions):
        rx_rays = generate_rays(config.channel, _seed_int(child))
        h_rx = freq_channel(rx_rays, config.geometry, config.channel)
        positions.append(
            PositionRecord(channels=ChannelSet.from_links(h_tx, h_rx), active_indices=active.copy())
        )

    num_train = int(np.floor(config.train_fraction * config.num_positions))
    train_indices = np.arange(num_train, dtype=np.int64)
    test_indices = np.arange(num_train, config.num_positions, dtype=np.int64)

    subcarriers_used = config.resolved_subcarriers
    noiseless = (
        sample_and_noise(positions[i].channels, positions[i].active_indices, 0.0, 0)
        for i in train_indices
    )
    constant = compute_normalization(noiseless, subcarriers_used)

    return Scenario(
        config=config,
        positions=positions,
        train_indices=train_indices,
        test_indices=test_indices,
        normalization_constant=constant,
        subcarriers_used=subcarriers_used,
        seed=int(rng_seed),
    )


def min_max_rate(scenario: Scenario, codebook: Codebook, rate_config: RateConfig) -> float:
    """Minimum over training positions of the per-position oracle rate.

    This is the natural reward threshold: the best beam of the worst training
    position.
    """
    if scenario.train_indices.size == 0:
        raise ValueError("training split is empty; min-max rate undefined")
    return min(
        oracle_search(scenario.positions[i].channels, codebook, rate_config)[1]
        for i in scenario.train_indices
    )


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_scenario(scenario: Scenario, path) -> None:
    """Write the binary channel file and its JSON sidecar.

    Binary layout: magic "IRS1"; little-endian int64 header
    (num_positions, K, M, num_active, L); then per position the active
    indices (int64) followed by the transmitter and receiver links as K*M
    complex values each (interleaved float64 real, imaginary), subcarrier-
    major. Split, seeds and grid metadata go to ``<path>.json``.
    """
    cfg = scenario.config
    num_k = cfg.channel.num_subcarriers
    num_m = cfg.geometry.num_elements
    with open(path, "wb") as fh:
        fh.write(SCENARIO_MAGIC)
        header = np.asarray(
            [scenario.num_positions, num_k, num_m, cfg.num_active, cfg.channel.num_paths],
            dtype="<i8",
        )
        fh.write(header.tobytes())
        for rec in scenario.positions:
            fh.write(np.ascontiguousarray(rec.active_indices, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(rec.channels.h_tx, dtype="<c16").tobytes())
            fh.write(np.ascontiguousarray(rec.channels.h_rx, dtype="<c16").tobytes())

    sidecar = {
        "grid": {"num_positions": scenario.num_positions},
        "seed": scenario.seed,
        "geometry": {"dims": list(cfg.geometry.dims), "spacing": cfg.geometry.spacing},
        "channel": {
            "num_subcarriers": cfg.channel.num_subcarriers,
            "num_taps": cfg.channel.num_taps,
            "symbol_period": cfg.channel.symbol_period,
            "path_loss": cfg.channel.path_loss,
            "num_paths": cfg.channel.num_paths,
        },
        "num_active": cfg.num_active,
        "noise_variance": cfg.noise_variance,
        "train_fraction": cfg.train_fraction,
        "train_indices": scenario.train_indices.tolist(),
        "test_indices": scenario.test_indices.tolist(),
        "normalization_constant": scenario.normalization_constant,
        "subcarriers_used": scenario.subcarriers_used,
    }
    _sidecar_path(path).write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_scenario(path) -> Scenario:
    """Read a scenario written by :func:`save_scenario`.

    Raises:
        ScenarioFormatError: On a bad magic, an inconsistent header, or data
            whose size does not match the declared dimensions.
        OSError: If the file or its sidecar cannot be read.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != SCENARIO_MAGIC:
        raise ScenarioFormatError(f"bad magic {raw[:4]!r}, expected {SCENARIO_MAGIC!r}")
    if len(raw) < 4 + 5 * 8:
        raise ScenarioFormatError("truncated header")
    num_pos, num_k, num_m, num_active, num_paths = (
        int(v) for v in np.frombuffer(raw, dtype="<i8", count=5, offset=4)
    )
    if min(num_pos, num_k, num_m, num_active, num_paths) < 1 or num_active > num_m:
        raise ScenarioFormatError(
            f"invalid header (positions={num_pos}, K={num_k}, M={num_m}, "
            f"active={num_active}, paths={num_paths})"
        )
    per_position = 8 * num_active + 2 * 16 * num_k * num_m
    expected = 4 + 5 * 8 + num_pos * per_position
    if len(raw) != expected:
        raise ScenarioFormatError(
            f"file size {len(raw)} does not match header dimensions (expected {expected})"
        )

    try:
        sidecar = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"malformed sidecar JSON: {exc}") from exc

    geometry = ArrayGeometry(
        dims=tuple(sidecar["geometry"]["dims"]), spacing=float(sidecar["geometry"]["spacing"])
    )
    channel_cfg = ChannelConfig(
        num_subcarriers=int(sidecar["channel"]["num_subcarriers"]),
        num_taps=int(sidecar["channel"]["num_taps"]),
        symbol_period=float(sidecar["channel"]["symbol_period"]),
        path_loss=float(sidecar["channel"]["path_loss"]),
        num_paths=int(sidecar["channel"]["num_paths"]),
    )
    if geometry.num_elements != num_m:
        raise ScenarioFormatError(
            f"sidecar geometry {geometry.dims} has {geometry.num_elements} elements, header says {num_m}"
        )
    if channel_cfg.num_subcarriers != num_k or channel_cfg.num_paths != num_paths:
        raise ScenarioFormatError("sidecar channel parameters disagree with header")
    config = ScenarioConfig(
        num_positions=num_pos,
        geometry=geometry,
        channel=channel_cfg,
        num_active=num_active,
        noise_variance=float(sidecar["noise_variance"]),
        train_fraction=float(sidecar["train_fraction"]),
        subcarriers_used=int(sidecar["subcarriers_used"]),
    )

    offset = 4 + 5 * 8
    positions = []
    for _ in range(num_pos):
        active = np.frombuffer(raw, dtype="<i8", count=num_active, offset=offset).copy()
        offset += 8 * num_active
        if np.any(active < 0) or np.any(active >= num_m) or np.any(np.diff(active) <= 0):
            raise ScenarioFormatError(f"invalid active indices {active.tolist()}")
        h_tx = (
            np.frombuffer(raw, dtype="<c16", count=num_k * num_m, offset=offset)
            .reshape(num_k, num_m)
            .copy()
        )
        offset += 16 * num_k * num_m
        h_rx = (
            np.frombuffer(raw, dtype="<c16", count=num_k * num_m, offset=offset)
            .reshape(num_k, num_m)
            .copy()
        )
        offset += 16 * num_k * num_m
        positions.append(
            PositionRecord(channels=ChannelSet.from_links(h_tx, h_rx), active_indices=active)
        )

    train_indices = np.asarray(sidecar["train_indices"], dtype=np.int64)
    test_indices = np.asarray(sidecar["test_indices"], dtype=np.int64)
    all_indices = np.sort(np.concatenate([train_indices, test_indices]))
    if not np.array_equal(all_indices, np.arange(num_pos)):
        raise ScenarioFormatError("train/test indices do not partition the positions")

    return Scenario(
        config=config,
        positions=positions,
        train_indices=train_indices,
        test_indices=test_indices,
        normalization_constant=float(sidecar["normalization_constant"]),
        subcarriers_used=int(sidecar["subcarriers_used"]),
        seed=int(sidecar["seed"]),
    )

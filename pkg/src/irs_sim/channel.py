"""Wideband geometric channel generation for a reflecting-surface array.

Channels are synthesized from a small set of plane-wave rays, each described
by azimuth/elevation angles, a complex gain and a delay. The rays are combined
into per-subcarrier frequency-domain vectors through a truncated delay-tap
expansion, then restricted to the active sensing elements and corrupted with
receive noise. All randomness is driven by explicit seeds so that channel
realizations are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class RayPath:
    """One plane-wave propagation path.

    Attributes:
        azimuth: Angle of arrival in radians, in [0, 2*pi).
        elevation: Angle of arrival in radians, in [0, 2*pi).
        complex_gain: Dimensionless complex path coefficient.
        delay: Propagation delay in seconds, finite and non-negative.
    """

    azimuth: float
    elevation: float
    complex_gain: complex
    delay: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.azimuth < TWO_PI:
            raise ValueError(f"azimuth must lie in [0, 2*pi), got {self.azimuth}")
        if not 0.0 <= self.elevation < TWO_PI:
            raise ValueError(f"elevation must lie in [0, 2*pi), got {self.elevation}")
        if not (np.isfinite(self.delay) and self.delay >= 0.0):
            raise ValueError(f"delay must be finite and non-negative, got {self.delay}")


@dataclass(frozen=True)
class ArrayGeometry:
    """Rectangular grid of surface elements.

    Attributes:
        dims: Element counts per axis (m_x, m_y, m_z).
        spacing: Element spacing in wavelengths.
    """

    dims: tuple[int, int, int]
    spacing: float = 0.5

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or any(int(n) != n or n < 1 for n in self.dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if not self.spacing > 0.0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def num_elements(self) -> int:
        mx, my, mz = self.dims
        return mx * my * mz


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of the frequency-domain channel synthesis.

    Attributes:
        num_subcarriers: Number of OFDM subcarriers K.
        num_taps: Number of delay taps D kept in the expansion.
        symbol_period: Tap spacing in seconds.
        path_loss: Positive per-link large-scale loss divided out of the
            element-count normalization.
        num_paths: Number of rays L per link.
    """

    num_subcarriers: int
    num_taps: int
    symbol_period: float = 1.0
    path_loss: float = 1.0
    num_paths: int = 1

    def __post_init__(self) -> None:
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        if not self.symbol_period > 0.0:
            raise ValueError("symbol_period must be positive")
        if not self.path_loss > 0.0:
            raise ValueError("path_loss must be positive")
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")


@dataclass(eq=False)
class ChannelSet:
    """Per-subcarrier channels for both links of one receiver position.

    ``h_tx`` and ``h_rx`` are (K, M) complex arrays holding the
    transmitter-to-surface and surface-to-receiver channel vectors, one row
    per subcarrier. ``h_combined`` is their entry-wise product, which is the
    quantity the reflection beam acts on.
    """

    h_tx: np.ndarray
    h_rx: np.ndarray
    h_combined: np.ndarray

    @classmethod
    def from_links(cls, h_tx: np.ndarray, h_rx: np.ndarray) -> "ChannelSet":
        h_tx = np.asarray(h_tx, dtype=np.complex128)
        h_rx = np.asarray(h_rx, dtype=np.complex128)
        if h_tx.ndim != 2 or h_tx.shape != h_rx.shape:
            raise ValueError(
                f"link channels must share shape (K, M), got {h_tx.shape} and {h_rx.shape}"
            )
        return cls(h_tx=h_tx, h_rx=h_rx, h_combined=h_tx * h_rx)

    @property
    def num_subcarriers(self) -> int:
        return self.h_tx.shape[0]

    @property
    def num_elements(self) -> int:
        return self.h_tx.shape[1]


@dataclass(eq=False)
class SampledChannel:
    """Noisy channel observation restricted to the active elements.

    ``samples`` holds the (K, m_active) combined observation, the entry-wise
    product of the per-link noisy estimates ``tx_samples`` and ``rx_samples``
    obtained from the two pilot receptions.
    """

    active_indices: np.ndarray
    samples: np.ndarray
    tx_samples: np.ndarray
    rx_samples: np.ndarray


def element_grid(geometry: ArrayGeometry) -> np.ndarray:
    """Integer (x, y, z) coordinates of all elements, row-major over (x, y, z)."""
    mx, my, mz = geometry.dims
    x, y, z = np.meshgrid(np.arange(mx), np.arange(my), np.arange(mz), indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


def array_response(geometry: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Uniform planar array steering vector toward one direction.

    Entry m is exp(j * 2*pi * spacing * (x*sin(az)*cos(el) + y*sin(az)*sin(el)
    + z*cos(az))) for the element at grid coordinates (x, y, z); elements are
    ordered row-major over (x, y, z).

    Args:
        geometry: Element grid and spacing.
        azimuth: Direction angle in radians.
        elevation: Direction angle in radians.

    Returns:
        Complex vector of length ``geometry.num_elements`` with unit-modulus
        entries.
    """
    coords = element_grid(geometry)
    direction = np.array(
        [
            np.sin(azimuth) * np.cos(elevation),
            np.sin(azimuth) * np.sin(elevation),
            np.cos(azimuth),
        ]
    )
    phase = TWO_PI * geometry.spacing * (coords @ direction)
    return np.exp(1j * phase)


def generate_rays(config: ChannelConfig, rng_seed) -> list[RayPath]:
    """Draw a random set of rays for one link.

    Angles are uniform over [0, 2*pi), complex gains are circularly-symmetric
    Gaussian with unit variance, and delays are uniform over
    [0, (num_taps - 1) * symbol_period]. The draw is deterministic for a
    fixed seed. This is a synthetic stand-in for ray-traced path data; use
    the scenario file ingestion path to supply externally generated channels
    instead.

    Args:
        config: Channel parameters (number of rays, tap count, tap spacing).
        rng_seed: Integer seed or ``numpy.random.Generator``.

    Returns:
        List of ``config.num_paths`` rays.
    """
    rng = np.random.default_rng(rng_seed)
    n = config.num_paths
    azimuths = rng.uniform(0.0, TWO_PI, n)
    elevations = rng.uniform(0.0, TWO_PI, n)
    gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    max_delay = (config.num_taps - 1) * config.symbol_period
    delays = rng.uniform(0.0, max_delay, n) if max_delay > 0.0 else np.zeros(n)
    return [
        RayPath(float(a), float(e), complex(g), float(d))
        for a, e, g, d in zip(azimuths, elevations, gains, delays)
    ]


def freq_channel(
    rays: Sequence[RayPath],
    geometry: ArrayGeometry,
    config: ChannelConfig,
    pulse_shape: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Frequency-domain channel vectors on every subcarrier.

    Each ray contributes its steering vector weighted by the complex gain and
    the pulse shape evaluated at the tap-time offsets; taps are mapped to
    subcarriers with the DFT phase exp(-j*2*pi*k*d/K). The result is scaled
    by sqrt(M / path_loss).

    Args:
        rays: Plane-wave paths of the link.
        geometry: Element grid and spacing.
        config: Subcarrier count, tap count, tap spacing and path loss.
        pulse_shape: Pulse amplitude as a function of time offset in seconds.
            Defaults to the band-limited sinc pulse matched to the tap
            spacing, which is exact for zero-delay rays.

    Returns:
        Complex array of shape (num_subcarriers, num_elements).
    """
    if pulse_shape is None:
        period = config.symbol_period
        pulse_shape = lambda tau: np.sinc(tau / period)  # noqa: E731

    num_elements = geometry.num_elements
    num_k, num_d = config.num_subcarriers, config.num_taps
    responses = np.stack([array_response(geometry, r.azimuth, r.elevation) for r in rays])
    gains = np.array([r.complex_gain for r in rays])
    delays = np.array([r.delay for r in rays])

    tap_times = np.arange(num_d) * config.symbol_period
    pulse = np.asarray(pulse_shape(tap_times[:, None] - delays[None, :]))  # (D, L)
    taps = (pulse * gains[None, :]) @ responses  # (D, M)
    dft = np.exp(-1j * TWO_PI * np.outer(np.arange(num_k), np.arange(num_d)) / num_k)
    return np.sqrt(num_elements / config.path_loss) * (dft @ taps)


def sample_and_noise(
    channels: ChannelSet,
    active_indices,
    noise_variance: float,
    rng_seed,
) -> SampledChannel:
    """Observe the channel at the active elements through noisy pilots.

    Both link channels are restricted to the active rows, independent complex
    Gaussian noise of total variance ``noise_variance`` is added to each link
    separately, and the combined observation is the entry-wise product of the
    two noisy estimates. Noise therefore enters before the product.

    Args:
        channels: Full channels of one receiver position.
        active_indices: Strictly increasing element indices in [0, M).
        noise_variance: Per-entry complex noise variance, >= 0.
        rng_seed: Integer seed or ``numpy.random.Generator``.

    Returns:
        The noisy sampled observation.
    """
    active = np.asarray(active_indices, dtype=np.int64)
    if active.ndim != 1 or active.size < 1:
        raise ValueError("active_indices must be a non-empty 1-D index sequence")
    if np.any(np.diff(active) <= 0):
        raise ValueError("active_indices must be strictly increasing")
    if active[0] < 0 or active[-1] >= channels.num_elements:
        raise ValueError("active_indices out of range")
    if noise_variance < 0.0:
        raise ValueError("noise_variance must be non-negative")

    rng = np.random.default_rng(rng_seed)
    tx = channels.h_tx[:, active]
    rx = channels.h_rx[:, active]
    scale = np.sqrt(noise_variance / 2.0)
    tx_noisy = tx + scale * (rng.standard_normal(tx.shape) + 1j * rng.standard_normal(tx.shape))
    rx_noisy = rx + scale * (rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape))
    return SampledChannel(
        active_indices=active,
        samples=tx_noisy * rx_noisy,
        tx_samples=tx_noisy,
        rx_samples=rx_noisy,
    )

"""Reflection-beam codebook: quantized steering vectors and their application.

The surface can only apply per-element phase shifts drawn from a finite
codebook, so beams are conjugate steering vectors toward a deterministic grid
of directions, with every phase rounded to the hardware's quantized levels.
Beam ordering is fixed by the grid so that action indices stay stable across
runs and checkpoints.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import TWO_PI, ArrayGeometry, element_grid


@dataclass(eq=False)
class InteractionVector:
    """Unit-modulus phase-shift vector, one phase per surface element."""

    phases: np.ndarray

    def __post_init__(self) -> None:
        phases = np.asarray(self.phases, dtype=np.float64)
        if phases.ndim != 1 or phases.size < 1:
            raise ValueError("phases must be a non-empty 1-D sequence")
        self.phases = np.mod(phases, TWO_PI)

    @property
    def entries(self) -> np.ndarray:
        """Complex entries exp(j * phase), all of modulus one."""
        return np.exp(1j * self.phases)

    def __len__(self) -> int:
        return self.phases.size


@dataclass(eq=False)
class Codebook:
    """Ordered, immutable set of candidate interaction vectors."""

    vectors: list[InteractionVector]
    phase_bits: int

    def __post_init__(self) -> None:
        if len(self.vectors) < 2:
            raise ValueError("codebook needs at least 2 vectors")
        if self.phase_bits < 1:
            raise ValueError("phase_bits must be >= 1")
        lengths = {len(v) for v in self.vectors}
        if len(lengths) != 1:
            raise ValueError("all codebook vectors must have equal length")

    @property
    def size(self) -> int:
        return len(self.vectors)

    @property
    def num_elements(self) -> int:
        return len(self.vectors[0])

    def to_json(self) -> str:
        doc = {
            "phase_bits": self.phase_bits,
            "vectors": [v.phases.tolist() for v in self.vectors],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        doc = json.loads(text)
        return cls(
            vectors=[InteractionVector(np.array(p)) for p in doc["vectors"]],
            phase_bits=int(doc["phase_bits"]),
        )


def save_codebook(codebook: Codebook, path) -> None:
    Path(path).write_text(codebook.to_json() + "\n", encoding="utf-8")


def load_codebook(path) -> Codebook:
    return Codebook.from_json(Path(path).read_text(encoding="utf-8"))


def _grid_factorization(size: int, axis_counts: list[int]) -> list[int]:
    """Split the beam count into per-axis grid sizes.

    Picks the ordered factorization of ``size`` whose log grid sizes are
    closest to proportional to the element counts, with a lexicographic
    tie-break so the choice is stable.
    """
    n = len(axis_counts)
    if n == 1:
        return [size]
    divisors = [d for d in range(1, size + 1) if size % d == 0]
    combos = []
    if n == 2:
        combos = [(d, size // d) for d in divisors]
    else:
        for d1 in divisors:
            rest = size // d1
            combos.extend((d1, d2, rest // d2) for d2 in range(1, rest + 1) if rest % d2 == 0)
    share = (size / float(np.prod(axis_counts))) ** (1.0 / n)
    targets = [np.log(c * share) for c in axis_counts]
    best = min(combos, key=lambda c: (sum((np.log(g) - t) ** 2 for g, t in zip(c, targets)), c))
    return list(best)


def quantize_phases(phases: np.ndarray, phase_bits: int) -> np.ndarray:
    """Round phases to the nearest of 2**phase_bits uniform levels in [0, 2*pi).

    Uses round-half-up on the level index so the mapping has no bias toward
    even levels.
    """
    levels = 2 ** phase_bits
    step = TWO_PI / levels
    q = np.floor(np.mod(phases, TWO_PI) / step + 0.5).astype(np.int64) % levels
    return q * step


def build_codebook(geometry: ArrayGeometry, size: int, phase_bits: int) -> Codebook:
    """Construct the quantized steering-beam codebook.

    Beams are conjugate steering vectors toward directions gridded uniformly
    in per-axis direction cosines over [-1, 1), with the grid spread across
    the axes that have more than one element. Every phase is rounded to the
    quantized hardware levels. For a single-element surface the steering
    construction is degenerate and the codebook enumerates the quantized
    phases directly, in increasing order.

    Args:
        geometry: Element grid and spacing.
        size: Requested number of beams, >= 2.
        phase_bits: Phase-shifter resolution, >= 1.

    Returns:
        Codebook of ``size`` pairwise-distinct beams in grid order.

    Raises:
        ValueError: If the requested size exceeds the number of distinct
            quantized steering vectors (duplicates after quantization).
    """
    if size < 2:
        raise ValueError("codebook size must be >= 2")
    if phase_bits < 1:
        raise ValueError("phase_bits must be >= 1")

    levels = 2 ** phase_bits
    step = TWO_PI / levels

    if geometry.num_elements == 1:
        if size > levels:
            raise ValueError(
                f"size {size} exceeds the {levels} distinct quantized vectors "
                "of a single-element surface"
            )
        vectors = [InteractionVector(np.array([q * step])) for q in range(size)]
        return Codebook(vectors=vectors, phase_bits=phase_bits)

    coords = element_grid(geometry)
    active_axes = [axis for axis, count in enumerate(geometry.dims) if count > 1]
    grid_sizes = _grid_factorization(size, [geometry.dims[a] for a in active_axes])

    vectors = []
    seen = set()
    for combo in itertools.product(*(range(g) for g in grid_sizes)):
        direction = np.zeros(3)
        for axis, g, g_count in zip(active_axes, combo, grid_sizes):
            direction[axis] = -1.0 + 2.0 * g / g_count
        steering_phase = TWO_PI * geometry.spacing * (coords @ direction)
        quantized = quantize_phases(-steering_phase, phase_bits)
        key = tuple(np.round(quantized / step).astype(np.int64) % levels)
        if key in seen:
            raise ValueError(
                f"size {size} exceeds the number of distinct quantized steering "
                f"vectors for {geometry.dims} at {phase_bits} phase bits"
            )
        seen.add(key)
        vectors.append(InteractionVector(quantized))
    return Codebook(vectors=vectors, phase_bits=phase_bits)


def apply(psi: InteractionVector, combined_channel) -> complex:
    """Effective scalar gain of one beam on one combined channel vector.

    Returns the plain (non-conjugated) inner product of the combined channel
    with the beam entries.
    """
    combined = np.asarray(combined_channel, dtype=np.complex128)
    if combined.shape != psi.phases.shape:
        raise ValueError(
            f"length mismatch: channel {combined.shape} vs beam {psi.phases.shape}"
        )
    return complex(np.dot(combined, psi.entries))

"""Voxel-grid genomes: validity checking, mutation, text serialization."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

logger = logging.getLogger(__name__)


class VoxelType(IntEnum):
    """Material of one grid cell; integer codes are the canonical encoding."""

    EMPTY = 0
    RIGID = 1
    SOFT = 2
    H_ACTUATOR = 3
    V_ACTUATOR = 4


ACTUATOR_TYPES = (VoxelType.H_ACTUATOR, VoxelType.V_ACTUATOR)

#: (col, row) offsets defining voxel adjacency (4-neighborhood).
NEIGHBOR_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class MorphGenome:
    """A width x height grid of voxel types, stored row-major (top row first)."""

    width: int
    height: int
    cells: tuple[VoxelType, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("genome dimensions must be positive")
        if len(self.cells) != self.width * self.height:
            raise ValueError(
                f"cell count {len(self.cells)} does not match "
                f"{self.width}x{self.height} grid"
            )
        object.__setattr__(self, "cells", tuple(VoxelType(c) for c in self.cells))

    def cell(self, col: int, row: int) -> VoxelType:
        return self.cells[row * self.width + col]

    def grid(self) -> np.ndarray:
        """Cells as a (height, width) int array."""
        return np.array(self.cells, dtype=np.int64).reshape(self.height, self.width)

    def occupied(self) -> list[tuple[int, int]]:
        """(col, row) of non-empty cells in row-major order."""
        return [
            (c, r)
            for r in range(self.height)
            for c in range(self.width)
            if self.cell(c, r) != VoxelType.EMPTY
        ]

    def actuators(self) -> list[tuple[tuple[int, int], VoxelType]]:
        """((col, row), type) of actuator cells in row-major order.

        This ordering is the canonical actuator indexing used everywhere
        (action vectors, policy output rows, inheritance slot matching).
        """
        return [
            ((c, r), self.cell(c, r))
            for r in range(self.height)
            for c in range(self.width)
            if self.cell(c, r) in ACTUATOR_TYPES
        ]


@dataclass(frozen=True)
class MutationConfig:
    per_cell_rate: float = 0.1
    max_retries: int = 50

    def __post_init__(self):
        if not 0.0 <= self.per_cell_rate <= 1.0:
            raise ValueError("per_cell_rate must be in [0, 1]")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")


def validate(genome: MorphGenome) -> tuple[bool, str]:
    """Check the three structural invariants, in order.

    Returns (True, "ok") or (False, reason) where reason names the first
    violated invariant: "empty genome", "disconnected", or "no actuator".
    """
    occupied = genome.occupied()
    if not occupied:
        return False, "empty genome"
    # flood fill over the 4-neighborhood from the first occupied cell
    occupied_set = set(occupied)
    seen = {occupied[0]}
    frontier = [occupied[0]]
    while frontier:
        c, r = frontier.pop()
        for dc, dr in NEIGHBOR_OFFSETS:
            nxt = (c + dc, r + dr)
            if nxt in occupied_set and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if len(seen) != len(occupied_set):
        return False, "disconnected"
    if not any(genome.cell(c, r) in ACTUATOR_TYPES for c, r in occupied):
        return False, "no actuator"
    return True, "ok"


def mutate(
    parent: MorphGenome, cfg: MutationConfig, rng: np.random.Generator
) -> MorphGenome:
    """Per-cell resampling mutation; always returns a valid genome.

    Each cell is independently replaced with a uniform random type with
    probability ``cfg.per_cell_rate``. Invalid results are redrawn up to
    ``cfg.max_retries`` times, after which the parent is returned unchanged.
    """
    n = len(parent.cells)
    for _ in range(cfg.max_retries):
        hit = rng.random(n) < cfg.per_cell_rate
        draws = rng.integers(0, len(VoxelType), size=n)
        cells = tuple(
            VoxelType(int(draws[i])) if hit[i] else parent.cells[i] for i in range(n)
        )
        child = MorphGenome(parent.width, parent.height, cells)
        ok, _ = validate(child)
        if ok:
            return child
    logger.debug("mutation retries exhausted; returning parent unchanged")
    return parent


def random_genome(
    rng: np.random.Generator,
    width: int,
    height: int,
    max_tries: int = 1000,
) -> MorphGenome:
    """Uniform random valid genome on a fixed grid (rejection sampling)."""
    for _ in range(max_tries):
        cells = tuple(
            VoxelType(int(v))
            for v in rng.integers(0, len(VoxelType), size=width * height)
        )
        genome = MorphGenome(width, height, cells)
        ok, _ = validate(genome)
        if ok:
            return genome
    # Degenerate fallback: a solid actuator block is always valid.
    return MorphGenome(
        width, height, (VoxelType.H_ACTUATOR,) * (width * height)
    )


def serialize(genome: MorphGenome) -> str:
    """Text form: header "W H" then H lines of W digits 0-4."""
    lines = [f"{genome.width} {genome.height}"]
    for r in range(genome.height):
        lines.append(
            "".join(str(int(genome.cell(c, r))) for c in range(genome.width))
        )
    return "\n".join(lines)


def deserialize(text: str) -> MorphGenome:
    """Parse the text form; rejects bad codes, bad dimensions, invalid genomes."""
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if not lines:
        raise ValueError("empty genome text")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"bad header {lines[0]!r}: expected 'W H'")
    try:
        width, height = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError(f"bad header {lines[0]!r}: expected 'W H'") from None
    rows = lines[1:]
    if len(rows) != height or any(len(row) != width for row in rows):
        raise ValueError(
            f"dimension mismatch: expected {height} rows of {width} digits"
        )
    cells = []
    for row in rows:
        for ch in row:
            if ch not in "01234":
                raise ValueError(f"invalid voxel code {ch!r}")
            cells.append(VoxelType(int(ch)))
    genome = MorphGenome(width, height, tuple(cells))
    ok, reason = validate(genome)
    if not ok:
        raise ValueError(f"invalid genome: {reason}")
    return genome

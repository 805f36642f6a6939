"""Procedural heightfield terrains.

Four generators (flat, slope, boxes, noise) scaled by a difficulty in
[0, 1]: slope inclination reaches 23 degrees, box and noise heights reach
0.1 m at full difficulty.  Fields are immutable after generation and safe to
share across environments; lookup is bilinear within a cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_SLOPE_DEG = 23.0
MAX_BOX_HEIGHT = 0.1
MAX_NOISE_HEIGHT = 0.1

TERRAIN_KINDS = ("flat", "slope", "boxes", "noise")


class TerrainError(ValueError):
    pass


@dataclass
class HeightField:
    """Grid of terrain heights on a regular xy lattice.

    ``heights[i, j]`` is the height at x = origin[0] + i * resolution,
    y = origin[1] + j * resolution.  ``difficulty`` and ``kind`` label each
    cell of the (rows x cols) sub-terrain tiling.
    """

    heights: np.ndarray                  # (H, W)
    resolution: float                    # m per grid step
    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 4.0               # side length of one sub-terrain cell
    cell_difficulty: np.ndarray = field(default=None)   # (rows, cols) ints
    cell_kind: np.ndarray = field(default=None)         # (rows, cols) strings

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        if self.resolution <= 0:
            raise TerrainError("resolution must be positive")
        if not np.all(np.isfinite(self.heights)):
            raise TerrainError("non-finite heights")
        if self.cell_difficulty is None:
            self.cell_difficulty = np.zeros((1, 1), dtype=int)
        if self.cell_kind is None:
            self.cell_kind = np.full((1, 1), "flat", dtype=object)

    @property
    def extent(self) -> tuple[float, float]:
        h, w = self.heights.shape
        return ((h - 1) * self.resolution, (w - 1) * self.resolution)

    def height_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Bilinear height lookup; coordinates clamp to the field border."""
        gx = (np.asarray(x, dtype=float) - self.origin[0]) / self.resolution
        gy = (np.asarray(y, dtype=float) - self.origin[1]) / self.resolution
        h, w = self.heights.shape
        gx = np.clip(gx, 0.0, h - 1 - 1e-9)
        gy = np.clip(gy, 0.0, w - 1 - 1e-9)
        i0 = gx.astype(int)
        j0 = gy.astype(int)
        fx = gx - i0
        fy = gy - j0
        z00 = self.heights[i0, j0]
        z10 = self.heights[i0 + 1, j0]
        z01 = self.heights[i0, j0 + 1]
        z11 = self.heights[i0 + 1, j0 + 1]
        return (
            z00 * (1 - fx) * (1 - fy)
            + z10 * fx * (1 - fy)
            + z01 * (1 - fx) * fy
            + z11 * fx * fy
        )

    def cell_origin(self, row: int, col: int) -> tuple[float, float]:
        """World xy of the centre of sub-terrain cell (row, col)."""
        return (
            self.origin[0] + (row + 0.5) * self.cell_size,
            self.origin[1] + (col + 0.5) * self.cell_size,
        )

    def to_csv(self, path) -> None:
        """Plain CSV grid export for plotting."""
        header = (
            f"# resolution_m: {self.resolution}\n"
            f"# origin: {self.origin[0]},{self.origin[1]}"
        )
        np.savetxt(path, self.heights, delimiter=",", header=header, comments="")


def _rng_for(kind: str, difficulty: float, seed: int) -> np.random.Generator:
    # key the stream on all three arguments so equal inputs are bit-for-bit
    # reproducible and different inputs decorrelate
    kind_id = TERRAIN_KINDS.index(kind)
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFF,
                               spawn_key=(kind_id, int(round(difficulty * 1e6))))
    )


def generate_terrain(
    kind: str,
    difficulty: float,
    seed: int = 0,
    size: float = 4.0,
    resolution: float = 0.05,
) -> HeightField:
    """One square sub-terrain cell of the requested kind."""
    if kind not in TERRAIN_KINDS:
        raise TerrainError(f"unknown terrain kind {kind!r}; options: {TERRAIN_KINDS}")
    if not 0.0 <= difficulty <= 1.0:
        raise TerrainError("difficulty must lie in [0, 1]")
    n = int(round(size / resolution)) + 1
    rng = _rng_for(kind, difficulty, seed)
    xs = np.arange(n) * resolution

    if kind == "flat":
        z = np.zeros((n, n))
    elif kind == "slope":
        slope = np.tan(np.radians(difficulty * MAX_SLOPE_DEG))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        z = sign * slope * np.repeat(xs[:, None], n, axis=1)
        z -= z[n // 2, n // 2]  # spawn point at zero height
    elif kind == "boxes":
        box_cells = max(1, int(round(0.5 / resolution)))  # ~0.5 m boxes
        nb = int(np.ceil(n / box_cells))
        levels = rng.uniform(0.0, difficulty * MAX_BOX_HEIGHT, size=(nb, nb))
        z = np.repeat(np.repeat(levels, box_cells, axis=0), box_cells, axis=1)[:n, :n]
    else:  # noise
        amp = difficulty * MAX_NOISE_HEIGHT
        z = rng.uniform(-amp, amp, size=(n, n))

    field_ = HeightField(
        heights=z,
        resolution=resolution,
        origin=(0.0, 0.0),
        cell_size=size,
        cell_difficulty=np.zeros((1, 1), dtype=int),
        cell_kind=np.full((1, 1), kind, dtype=object),
    )
    return field_


def terrain_arena(
    kinds=("slope", "boxes", "noise"),
    levels: int = 5,
    seed: int = 0,
    cell_size: float = 4.0,
    resolution: float = 0.05,
) -> HeightField:
    """Tile sub-terrains into one field: rows = difficulty level, cols = kind.

    Difficulty for row r is (r + 0.5) / levels so even level 0 is not flat.
    """
    cells_per_side = int(round(cell_size / resolution))
    rows, cols = levels, len(kinds)
    H = rows * cells_per_side + 1
    W = cols * cells_per_side + 1
    z = np.zeros((H, W))
    diff = np.zeros((rows, cols), dtype=int)
    kind_labels = np.empty((rows, cols), dtype=object)
    for r in range(rows):
        d = (r + 0.5) / levels
        for c, kind in enumerate(kinds):
            cell = generate_terrain(kind, d, seed=seed * 7919 + r * 131 + c,
                                    size=cell_size, resolution=resolution)
            z[r * cells_per_side:(r + 1) * cells_per_side + 1,
              c * cells_per_side:(c + 1) * cells_per_side + 1] = cell.heights
            diff[r, c] = r
            kind_labels[r, c] = kind
    return HeightField(
        heights=z,
        resolution=resolution,
        origin=(0.0, 0.0),
        cell_size=cell_size,
        cell_difficulty=diff,
        cell_kind=kind_labels,
    )


def flat_arena(size: float = 8.0, resolution: float = 0.1) -> HeightField:
    n = int(round(size / resolution)) + 1
    return HeightField(
        heights=np.zeros((n, n)),
        resolution=resolution,
        origin=(-size / 2, -size / 2),
        cell_size=size,
    )

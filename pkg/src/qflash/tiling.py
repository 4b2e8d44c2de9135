from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TileConfig:
    """Query block rows ``block_rows`` (B_r) and key/value block rows ``block_cols`` (B_c).

    Blocks larger than the sequence are allowed; the last block of a
    dimension may be partial and is processed at its true extent.
    """

    block_rows: int = 64
    block_cols: int = 64

    def __post_init__(self):
        if self.block_rows < 1 or self.block_cols < 1:
            raise ValueError("block sizes must be >= 1")

    def row_tiles(self, n: int) -> int:
        return math.ceil(n / self.block_rows)

    def col_tiles(self, n: int) -> int:
        return math.ceil(n / self.block_cols)

    def row_slices(self, n: int):
        return [slice(i, min(i + self.block_rows, n)) for i in range(0, n, self.block_rows)]

    def col_slices(self, n: int):
        return [slice(j, min(j + self.block_cols, n)) for j in range(0, n, self.block_cols)]

    @classmethod
    def untiled(cls, n: int) -> "TileConfig":
        return cls(n, n)

    @classmethod
    def for_col_tiles(cls, n: int, tiles: int, block_rows: int = 64) -> "TileConfig":
        """Smallest ``block_cols`` giving at most ``tiles`` column tiles over ``n`` keys."""
        if not 1 <= tiles <= n:
            raise ValueError(f"cannot split {n} keys into {tiles} tiles")
        return cls(block_rows, math.ceil(n / tiles))

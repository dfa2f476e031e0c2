"""
Model for periodic partial-ofm computation patterns
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatternMask:
	"""Periodic boolean stencil; True cells are computed in step one (I_s)"""

	id: str
	tile: np.ndarray

	def __post_init__(self):
		tile = np.asarray(self.tile, dtype=bool)
		if tile.ndim != 2 or tile.size == 0:
			raise ValueError(f"pattern tile must be a non-empty 2-D matrix, got shape {tile.shape}")
		if not tile.any():
			raise ValueError(f"pattern '{self.id}' computes no cell")
		object.__setattr__(self, 'tile', tile)

	@property
	def alpha(self) -> float:
		"""Fraction of tile cells computed before prediction"""
		return float(self.tile.sum()) / self.tile.size

	def __eq__(self, other):
		if not isinstance(other, PatternMask):
			return NotImplemented
		return self.id == other.id and np.array_equal(self.tile, other.tile)

	def __hash__(self):
		return hash((self.id, self.tile.tobytes()))

"""
Computation patterns splitting an ofm into pre-computed (I_s) and predicted (I_t) positions
"""
from typing import Dict, Tuple

import numpy as np

from src.models.pattern import PatternMask
from src.models.tensor import Tensor


def _diagonal_tile(classes) -> np.ndarray:
	rows, cols = np.indices((5, 5))
	return np.isin((rows + cols) % 5, list(classes))


# A and C are period-5 diagonal stripes; C is the complement of A
PATTERNS: Dict[str, PatternMask] = {
	'A': PatternMask('A', _diagonal_tile((0, 2, 4))),
	'B': PatternMask('B', np.array([[1, 0], [0, 1]], dtype=bool)),
	'C': PatternMask('C', _diagonal_tile((1, 3))),
	'D': PatternMask('D', np.array([[1, 0], [0, 0]], dtype=bool)),
}


def get_pattern(pattern_id: str) -> PatternMask:
	"""Look up a pattern by its id ("A" | "B" | "C" | "D")"""
	key = str(pattern_id).strip().upper()
	if key not in PATTERNS:
		raise ValueError(f"unknown pattern '{pattern_id}', expected one of {sorted(PATTERNS)}")
	return PATTERNS[key]


def spatial_mask(mask: PatternMask, h_o: int, w_o: int) -> np.ndarray:
	"""Boolean [h_o x w_o] map, True where the position belongs to I_s.

	The tile wraps modulo its size, so any extent is accepted.
	"""
	if h_o < 1 or w_o < 1:
		raise ValueError(f"ofm extents must be >= 1, got {h_o}x{w_o}")
	tile_h, tile_w = mask.tile.shape
	rows = np.arange(h_o) % tile_h
	cols = np.arange(w_o) % tile_w
	return mask.tile[np.ix_(rows, cols)]


def index_sets(mask: PatternMask, w_o: int, h_o: int) -> Tuple[np.ndarray, np.ndarray]:
	"""Split flat spatial indices (row * w_o + col) into (I_s, I_t).

	The split is spatial; every channel uses the same one.
	"""
	flat = spatial_mask(mask, h_o, w_o).reshape(-1)
	return np.flatnonzero(flat), np.flatnonzero(~flat)


def effective_alpha(mask: PatternMask, h_o: int, w_o: int) -> float:
	return float(spatial_mask(mask, h_o, w_o).mean())


def best_case_savings(mask: PatternMask, h_o: int, w_o: int) -> float:
	"""Share of ofm activations a perfect predictor could skip"""
	return 1.0 - effective_alpha(mask, h_o, w_o)


def apply_mask(ofm: Tensor, indices: np.ndarray) -> Tensor:
	"""Keep the spatial positions listed in ``indices`` and zero the rest"""
	if ofm.rank < 2:
		raise ValueError(f"apply_mask needs a spatial ofm, got shape {ofm.shape}")
	h_o, w_o = ofm.shape[-2], ofm.shape[-1]
	indices = np.asarray(indices, dtype=np.int64).reshape(-1)
	if indices.size and (indices.min() < 0 or indices.max() >= h_o * w_o):
		raise ValueError(
			f"index set out of range for ofm shape {ofm.shape}: "
			f"[{indices.min()}, {indices.max()}] not within [0, {h_o * w_o - 1}]"
		)
	keep = np.zeros(h_o * w_o, dtype=bool)
	keep[indices] = True
	return Tensor(np.where(keep.reshape(h_o, w_o), ofm.data, np.float32(0.0)))

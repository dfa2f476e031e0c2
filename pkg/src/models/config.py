"""
Run configuration model
"""
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


def default_grid() -> List[float]:
	"""0, 0.02, ..., 0.5"""
	return [round(float(v), 4) for v in np.arange(0, 26) * 0.02]


@dataclass
class RunConfig:
	"""Experiment settings; per-layer entries override the global ones"""

	model_spec: Optional[str] = None
	pattern: str = 'B'
	patterns: Dict[str, str] = field(default_factory=dict)
	sigma: float = 0.0
	sigmas: Dict[str, float] = field(default_factory=dict)
	grid: List[float] = field(default_factory=default_grid)
	error_budget: Optional[float] = None
	mac_budget: Optional[float] = None
	seed: int = 0
	epochs: int = 10
	zap_epochs: int = 5
	batch_size: int = 32
	lr: float = 0.05
	zap_lr: float = 1e-3
	bn_momentum: Optional[float] = 0.1
	workers: int = field(default_factory=lambda: os.cpu_count() or 1)
	calibration_batches: int = 10
	bin_width: float = 0.1

	def pattern_for(self, layer: str) -> str:
		return self.patterns.get(layer, self.pattern)

	def sigma_for(self, layer: str) -> float:
		return self.sigmas.get(layer, self.sigma)

	def layer_sigmas(self, layers: List[str]) -> Dict[str, float]:
		return {layer: self.sigma_for(layer) for layer in layers}

"""
Models for zero-activation predictors and their per-layer outcomes
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models.pattern import PatternMask

PREDICTOR_KERNEL = 3
COMPUTE_ALL = float('-inf')


@dataclass
class BatchNormParams:
	gamma: np.ndarray
	beta: np.ndarray
	running_mean: np.ndarray
	running_var: np.ndarray
	eps: float = 1e-5

	@classmethod
	def identity(cls, channels: int) -> 'BatchNormParams':
		return cls(
			gamma=np.ones(channels, dtype=np.float32),
			beta=np.zeros(channels, dtype=np.float32),
			running_mean=np.zeros(channels, dtype=np.float32),
			running_var=np.ones(channels, dtype=np.float32),
		)

	def copy(self) -> 'BatchNormParams':
		return BatchNormParams(self.gamma.copy(), self.beta.copy(), self.running_mean.copy(),
							   self.running_var.copy(), self.eps)

	def arrays(self) -> Dict[str, np.ndarray]:
		return {
			'gamma': self.gamma, 'beta': self.beta,
			'running_mean': self.running_mean, 'running_var': self.running_var,
		}


@dataclass
class ZapUnit:
	"""Per-layer predictor: two depthwise 3x3 banks, each followed by BN.

	sigma is the confidence threshold; it is a run setting and not stored
	with the weights.
	"""

	pattern: PatternMask
	dw1: np.ndarray
	bn1: BatchNormParams
	dw2: np.ndarray
	bn2: BatchNormParams
	sigma: float = 0.0
	enabled: bool = True

	def __post_init__(self):
		for label, bank in (('dw1', self.dw1), ('dw2', self.dw2)):
			if bank.ndim != 4 or bank.shape[:3] != (PREDICTOR_KERNEL, PREDICTOR_KERNEL, 1):
				raise ValueError(f"ZAP {label} must be [3 x 3 x 1 x c_o], got {bank.shape}")
		if self.dw1.shape != self.dw2.shape:
			raise ValueError(f"ZAP filter banks disagree: {self.dw1.shape} vs {self.dw2.shape}")

	@property
	def channels(self) -> int:
		return self.dw1.shape[3]

	@property
	def kernel(self) -> int:
		return self.dw1.shape[0]

	def parameter_count(self) -> int:
		"""2 * K^2 * c_o filter weights"""
		return int(self.dw1.size + self.dw2.size)

	def with_sigma(self, sigma: float, enabled: bool = True) -> 'ZapUnit':
		return replace(self, sigma=float(sigma), enabled=enabled)

	def trainable(self) -> Dict[str, np.ndarray]:
		return {
			'dw1': self.dw1, 'bn1.gamma': self.bn1.gamma, 'bn1.beta': self.bn1.beta,
			'dw2': self.dw2, 'bn2.gamma': self.bn2.gamma, 'bn2.beta': self.bn2.beta,
		}

	def copy(self) -> 'ZapUnit':
		return ZapUnit(self.pattern, self.dw1.copy(), self.bn1.copy(), self.dw2.copy(), self.bn2.copy(),
					   self.sigma, self.enabled)


@dataclass
class PredictionOutcome:
	"""What one predicted convolution computed and skipped.

	``predicted_mask`` is M^sigma over the ofm (True = compute) and only
	meaningful at I_t; ``computed`` and ``skipped`` count I_t elements.
	"""

	predicted_mask: np.ndarray
	target_mask: np.ndarray
	computed: int
	skipped: int
	raw_map: Optional[np.ndarray] = None
	mispredictions: List[Tuple[Tuple[int, ...], float]] = field(default_factory=list)

	def __post_init__(self):
		if self.computed + self.skipped != int(self.target_mask.sum()):
			raise ValueError(
				f"computed ({self.computed}) + skipped ({self.skipped}) != |I_t| ({int(self.target_mask.sum())})"
			)

	@property
	def skipped_mask(self) -> np.ndarray:
		return self.target_mask & ~self.predicted_mask

	@property
	def total_target(self) -> int:
		return self.computed + self.skipped


@dataclass
class MispredictionHistogram:
	"""Shares of ofm elements that were non-zero but predicted zero, per value bin.

	Bin k covers [k * bin_width, (k + 1) * bin_width); shares are normalized by
	the ofm element count.
	"""

	bin_width: float
	shares: np.ndarray
	counts: np.ndarray
	elements: int

	@property
	def edges(self) -> np.ndarray:
		return np.arange(len(self.shares) + 1) * self.bin_width

	@property
	def mass(self) -> float:
		return float(self.shares.sum())

	@property
	def mispredicted(self) -> int:
		return int(self.counts.sum())


@dataclass
class LayerCapture:
	"""Snapshot of one host layer: its ifm, true post-ReLU ofm and X_o[I_s]

	``target_mask`` is the spatial I_t map [H_o x W_o].
	"""

	layer: str
	ifm: np.ndarray
	ofm: np.ndarray
	partial: np.ndarray
	target_mask: np.ndarray

	def __len__(self):
		return self.ofm.shape[0]

	@property
	def targets(self) -> np.ndarray:
		"""M_ideal: 1.0 where the true activation is non-zero"""
		return (self.ofm > 0).astype(np.float32)


@dataclass
class PredictorQuality:
	"""Zero/non-zero classification quality of a predictor on I_t"""

	sigma: float
	true_positive_rate: float
	true_negative_rate: float
	accuracy: float
	majority_rate: float
	support: int

	@property
	def balanced_accuracy(self) -> float:
		return 0.5 * (self.true_positive_rate + self.true_negative_rate)

"""
Models for tensors, convolution parameters and MAC accounting
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np


@dataclass
class Tensor:
	"""Dense rank-1..4 float32 array.

	Rank-3 tensors are laid out channels x height x width, rank-4 tensors
	carry a leading batch axis.
	"""

	data: np.ndarray

	def __post_init__(self):
		data = np.asarray(self.data, dtype=np.float32)
		if not 1 <= data.ndim <= 4:
			raise ValueError(f"Tensor rank must be 1..4, got shape {data.shape}")
		self.data = np.ascontiguousarray(data)
		if any(extent < 1 for extent in self.data.shape):
			raise ValueError(f"Tensor extents must be >= 1, got shape {self.data.shape}")

	@classmethod
	def zeros(cls, shape: Sequence[int]) -> 'Tensor':
		return cls(np.zeros(tuple(shape), dtype=np.float32))

	@classmethod
	def from_flat(cls, shape: Sequence[int], values: Sequence[float]) -> 'Tensor':
		"""Build a tensor from a flat row-major value list"""
		shape = tuple(int(s) for s in shape)
		values = np.asarray(values, dtype=np.float32)
		if int(np.prod(shape)) != values.size:
			raise ValueError(f"product of shape {shape} != {values.size} values")
		return cls(values.reshape(shape))

	@property
	def shape(self) -> Tuple[int, ...]:
		return tuple(self.data.shape)

	@property
	def rank(self) -> int:
		return self.data.ndim

	def flat(self) -> np.ndarray:
		return self.data.reshape(-1)

	def copy(self) -> 'Tensor':
		return Tensor(self.data.copy())


@dataclass
class ConvParams:
	"""Convolution weights [k x k x c_i x c_o], bias [c_o], stride and padding"""

	weights: Tensor
	bias: Optional[Tensor] = None
	stride: int = 1
	padding: int = 0

	def __post_init__(self):
		shape = self.weights.shape
		if len(shape) != 4:
			raise ValueError(f"conv weights must be rank 4 [k, k, c_i, c_o], got {shape}")
		if shape[0] != shape[1]:
			raise ValueError(f"conv filters must be square, got {shape[0]}x{shape[1]}")
		if self.stride < 1:
			raise ValueError(f"stride must be positive, got {self.stride}")
		if self.padding < 0:
			raise ValueError(f"padding must be non-negative, got {self.padding}")
		if self.bias is None:
			self.bias = Tensor.zeros((shape[3],))
		elif self.bias.shape != (shape[3],):
			raise ValueError(f"bias shape {self.bias.shape} does not match c_o={shape[3]}")

	@property
	def kernel(self) -> int:
		return self.weights.shape[0]

	@property
	def in_channels(self) -> int:
		return self.weights.shape[2]

	@property
	def out_channels(self) -> int:
		return self.weights.shape[3]

	def macs_per_output(self) -> int:
		"""k^2 * c_i multiply-accumulates per ofm element"""
		return self.kernel * self.kernel * self.in_channels

	def parameter_count(self) -> int:
		return self.kernel * self.kernel * self.in_channels * self.out_channels + self.out_channels


@dataclass
class MacCounter:
	"""Per-tag multiply-accumulate accumulators"""

	counts: Dict[str, int] = field(default_factory=dict)

	def add(self, tag: str, macs: int) -> None:
		macs = int(macs)
		if macs < 0:
			raise ValueError(f"MAC increment must be non-negative, got {macs} for '{tag}'")
		self.counts[tag] = self.counts.get(tag, 0) + macs

	def get(self, tag: str) -> int:
		return self.counts.get(tag, 0)

	def total(self, prefix: Optional[str] = None, suffixes: Optional[Sequence[str]] = None) -> int:
		"""Sum of all tags, optionally restricted by tag prefix and/or suffixes"""
		total = 0
		for tag, value in self.counts.items():
			if prefix is not None and not tag.startswith(prefix):
				continue
			if suffixes is not None and not tag.endswith(tuple(suffixes)):
				continue
			total += value
		return total

	def merge(self, other: 'MacCounter') -> 'MacCounter':
		for tag, value in other.counts.items():
			self.add(tag, value)
		return self

	def snapshot(self) -> Dict[str, int]:
		return dict(sorted(self.counts.items()))

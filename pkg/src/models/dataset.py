"""
Model for small labeled image sets
"""
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np


@dataclass
class TinyImageSet:
	"""u8 images [n x c x h x w] with u8 labels [n]"""

	images: np.ndarray
	labels: np.ndarray
	classes: int

	def __post_init__(self):
		self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
		self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8).reshape(-1)
		if self.images.ndim != 4:
			raise ValueError(f"images must be [n x c x h x w], got shape {self.images.shape}")
		if self.images.shape[0] < 1:
			raise ValueError("an image set needs at least one image")
		if self.labels.size != self.images.shape[0]:
			raise ValueError(f"{self.labels.size} labels for {self.images.shape[0]} images")
		if not 1 <= self.classes <= 255:
			raise ValueError(f"class count must be 1..255, got {self.classes}")
		if self.labels.max() >= self.classes:
			raise ValueError(f"label {int(self.labels.max())} out of range for {self.classes} classes")

	def __len__(self):
		return self.images.shape[0]

	@property
	def image_shape(self) -> Tuple[int, int, int]:
		return tuple(self.images.shape[1:])

	def as_float(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
		"""Images scaled to [0, 1] and centered by subtracting 0.5"""
		return self.images[start:stop].astype(np.float32) / np.float32(255.0) - np.float32(0.5)

	def subset(self, count: int) -> 'TinyImageSet':
		return TinyImageSet(self.images[:count], self.labels[:count], self.classes)

	def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
		"""Yield (float images, labels); shuffled when ``rng`` is given"""
		if batch_size < 1:
			raise ValueError(f"batch size must be positive, got {batch_size}")
		order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
		for start in range(0, len(self), batch_size):
			index = order[start:start + batch_size]
			yield self.images[index].astype(np.float32) / np.float32(255.0) - np.float32(0.5), self.labels[index]

	def class_histogram(self) -> np.ndarray:
		return np.bincount(self.labels, minlength=self.classes)

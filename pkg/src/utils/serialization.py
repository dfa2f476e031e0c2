"""
Binary formats for weight containers (.zapw) and image sets (.tis).

All integers are little-endian.

Weight container::

    b"ZAPW" | u32 version | u32 count | count x entry
    entry = u32 name_length | utf-8 name | u8 dtype (0 = float32) | u8 rank
            | rank x u32 extent | product(extents) x float32

Image set::

    b"ZTIS" | u32 version | u32 n | u32 c | u32 h | u32 w | u32 classes
            | n*c*h*w x u8 pixel | n x u8 label
"""
import logging
import os
import struct
from typing import Dict

import numpy as np

from src.models.dataset import TinyImageSet

logger = logging.getLogger(__name__)

CONTAINER_MAGIC = b'ZAPW'
DATASET_MAGIC = b'ZTIS'
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0


class ContainerFormatError(ValueError):
	"""Malformed container or dataset bytes; ``offset`` is where decoding stopped"""

	def __init__(self, message: str, offset: int):
		super().__init__(f"{message} (at byte offset {offset})")
		self.offset = offset


class _Reader:
	def __init__(self, data: bytes):
		self.data = data
		self.offset = 0

	def take(self, size: int, what: str) -> bytes:
		if self.offset + size > len(self.data):
			raise ContainerFormatError(
				f"truncated {what}: need {size} bytes, {len(self.data) - self.offset} left", self.offset
			)
		chunk = self.data[self.offset:self.offset + size]
		self.offset += size
		return chunk

	def u32(self, what: str) -> int:
		return struct.unpack('<I', self.take(4, what))[0]

	def u8(self, what: str) -> int:
		return self.take(1, what)[0]


def encode_container(tensors: Dict[str, np.ndarray]) -> bytes:
	parts = [CONTAINER_MAGIC, struct.pack('<II', FORMAT_VERSION, len(tensors))]
	for name, value in tensors.items():
		value = np.asarray(value)
		if value.ndim > 255:
			raise ValueError(f"tensor '{name}' rank {value.ndim} does not fit the container")
		encoded = name.encode('utf-8')
		parts.append(struct.pack('<I', len(encoded)))
		parts.append(encoded)
		parts.append(struct.pack('<BB', DTYPE_FLOAT32, value.ndim))
		parts.append(struct.pack(f'<{value.ndim}I', *value.shape))
		parts.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
	return b''.join(parts)


def decode_container(data: bytes) -> Dict[str, np.ndarray]:
	reader = _Reader(data)
	magic = reader.take(4, 'magic')
	if magic != CONTAINER_MAGIC:
		raise ContainerFormatError(f"bad magic {magic!r}, expected {CONTAINER_MAGIC!r}", 0)
	version = reader.u32('version')
	if version != FORMAT_VERSION:
		raise ContainerFormatError(f"unsupported container version {version}", 4)
	count = reader.u32('entry count')
	tensors: Dict[str, np.ndarray] = {}
	for _ in range(count):
		start = reader.offset
		name_length = reader.u32('name length')
		try:
			name = reader.take(name_length, 'name').decode('utf-8')
		except UnicodeDecodeError:
			raise ContainerFormatError("entry name is not valid utf-8", start + 4)
		if name in tensors:
			raise ContainerFormatError(f"duplicate entry '{name}'", start)
		dtype_offset = reader.offset
		dtype = reader.u8('dtype')
		if dtype != DTYPE_FLOAT32:
			raise ContainerFormatError(f"unknown dtype code {dtype} for '{name}'", dtype_offset)
		rank = reader.u8('rank')
		shape = tuple(reader.u32(f"extent of '{name}'") for _ in range(rank))
		size = int(np.prod(shape)) if shape else 1
		payload = reader.take(size * 4, f"payload of '{name}'")
		tensors[name] = np.frombuffer(payload, dtype='<f4').astype(np.float32).reshape(shape)
	if reader.offset != len(data):
		raise ContainerFormatError(f"{len(data) - reader.offset} trailing bytes", reader.offset)
	return tensors


def save_container(path: str, tensors: Dict[str, np.ndarray]) -> None:
	directory = os.path.dirname(path)
	if directory:
		os.makedirs(directory, exist_ok=True)
	with open(path, 'wb') as f:
		f.write(encode_container(tensors))
	logger.debug(f"Wrote {len(tensors)} tensors to {path}")


def load_container(path: str) -> Dict[str, np.ndarray]:
	if not os.path.isfile(path):
		raise ValueError(f"weight container not found: {path}")
	with open(path, 'rb') as f:
		return decode_container(f.read())


def encode_dataset(dataset: TinyImageSet) -> bytes:
	n, c, h, w = dataset.images.shape
	header = DATASET_MAGIC + struct.pack('<6I', FORMAT_VERSION, n, c, h, w, dataset.classes)
	return header + dataset.images.tobytes() + dataset.labels.tobytes()


def decode_dataset(data: bytes) -> TinyImageSet:
	reader = _Reader(data)
	magic = reader.take(4, 'magic')
	if magic != DATASET_MAGIC:
		raise ContainerFormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}", 0)
	version = reader.u32('version')
	if version != FORMAT_VERSION:
		raise ContainerFormatError(f"unsupported dataset version {version}", 4)
	n, c, h, w, classes = (reader.u32(field) for field in ('n', 'c', 'h', 'w', 'classes'))
	pixels = np.frombuffer(reader.take(n * c * h * w, 'pixels'), dtype=np.uint8).reshape(n, c, h, w)
	label_offset = reader.offset
	labels = np.frombuffer(reader.take(n, 'labels'), dtype=np.uint8)
	if reader.offset != len(data):
		raise ContainerFormatError(f"{len(data) - reader.offset} trailing bytes", reader.offset)
	try:
		return TinyImageSet(pixels.copy(), labels.copy(), classes)
	except ValueError as e:
		raise ContainerFormatError(str(e), label_offset)


def save_dataset(path: str, dataset: TinyImageSet) -> None:
	directory = os.path.dirname(path)
	if directory:
		os.makedirs(directory, exist_ok=True)
	with open(path, 'wb') as f:
		f.write(encode_dataset(dataset))
	logger.debug(f"Wrote {len(dataset)} images to {path}")


def load_dataset(path: str) -> TinyImageSet:
	if not os.path.isfile(path):
		raise ValueError(f"dataset not found: {path}")
	with open(path, 'rb') as f:
		return decode_dataset(f.read())

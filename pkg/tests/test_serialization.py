#!/usr/bin/env python3
"""
Unit tests for the weight container and image set formats
"""
import os
import sys
import unittest
import tempfile

import numpy as np

# Add the project root directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.models.dataset import TinyImageSet
from src.utils.serialization import (
	ContainerFormatError,
	decode_container,
	decode_dataset,
	encode_container,
	encode_dataset,
	load_container,
	load_dataset,
	save_container,
	save_dataset
)

# One tensor "w" of shape [2] holding [1.0, -2.0]
CONTAINER_FIXTURE = bytes.fromhex(
	'5a415057' '01000000' '01000000'
	'01000000' '77' '00' '01' '02000000' '0000803f' '000000c0'
)

# One 1x1x2 image with pixels [10, 255], label 1 of 2 classes
DATASET_FIXTURE = bytes.fromhex(
	'5a544953' '01000000' '01000000' '01000000' '01000000' '02000000' '02000000'
	'0aff' '01'
)


class TestWeightContainer(unittest.TestCase):
	"""Test cases for the .zapw format"""

	def setUp(self):
		"""Set up test environment"""
		self.temp_dir = tempfile.TemporaryDirectory()
		self.test_dir = self.temp_dir.name
		rng = np.random.default_rng(0)
		self.tensors = {
			'conv2.weight': rng.normal(size=(3, 3, 4, 8)).astype(np.float32),
			'conv2.bias': rng.normal(size=8).astype(np.float32),
			'zap.conv2.bn1.running_var': np.ones(8, dtype=np.float32),
			'scalar': np.float32(1.5),
		}

	def tearDown(self):
		"""Clean up test environment"""
		self.temp_dir.cleanup()

	def test_fixture_decodes(self):
		tensors = decode_container(CONTAINER_FIXTURE)
		self.assertEqual(list(tensors), ['w'])
		self.assertEqual(tensors['w'].tolist(), [1.0, -2.0])
		self.assertEqual(encode_container({'w': np.array([1.0, -2.0])}), CONTAINER_FIXTURE)

	def test_save_load_save_is_byte_identical(self):
		path = os.path.join(self.test_dir, 'nested', 'model.zapw')
		save_container(path, self.tensors)
		loaded = load_container(path)
		self.assertEqual(list(loaded), list(self.tensors))
		for name, value in self.tensors.items():
			np.testing.assert_array_equal(loaded[name], value)
		again = os.path.join(self.test_dir, 'again.zapw')
		save_container(again, loaded)
		with open(path, 'rb') as first, open(again, 'rb') as second:
			self.assertEqual(first.read(), second.read())

	def test_bad_magic(self):
		with self.assertRaises(ContainerFormatError) as context:
			decode_container(b'ZAPX' + CONTAINER_FIXTURE[4:])
		self.assertEqual(context.exception.offset, 0)

	def test_truncation_reports_offset(self):
		with self.assertRaises(ContainerFormatError) as context:
			decode_container(CONTAINER_FIXTURE[:-1])
		self.assertEqual(context.exception.offset, 23)
		self.assertIn('payload', str(context.exception))

	def test_trailing_bytes(self):
		with self.assertRaises(ContainerFormatError) as context:
			decode_container(CONTAINER_FIXTURE + b'\x00')
		self.assertEqual(context.exception.offset, len(CONTAINER_FIXTURE))

	def test_unknown_dtype_and_version(self):
		corrupted = bytearray(CONTAINER_FIXTURE)
		corrupted[17] = 7
		with self.assertRaises(ContainerFormatError) as context:
			decode_container(bytes(corrupted))
		self.assertEqual(context.exception.offset, 17)
		with self.assertRaises(ContainerFormatError):
			decode_container(CONTAINER_FIXTURE[:4] + b'\x02\x00\x00\x00' + CONTAINER_FIXTURE[8:])

	def test_duplicate_names(self):
		entry = CONTAINER_FIXTURE[12:]
		data = CONTAINER_FIXTURE[:8] + b'\x02\x00\x00\x00' + entry + entry
		with self.assertRaises(ContainerFormatError):
			decode_container(data)

	def test_is_a_value_error(self):
		self.assertTrue(issubclass(ContainerFormatError, ValueError))
		with self.assertRaises(ValueError):
			load_container(os.path.join(self.test_dir, 'missing.zapw'))


class TestImageSetFormat(unittest.TestCase):
	"""Test cases for the .tis format"""

	def setUp(self):
		"""Set up test environment"""
		self.temp_dir = tempfile.TemporaryDirectory()
		self.test_dir = self.temp_dir.name

	def tearDown(self):
		"""Clean up test environment"""
		self.temp_dir.cleanup()

	def test_fixture_decodes(self):
		dataset = decode_dataset(DATASET_FIXTURE)
		self.assertEqual(dataset.images.tolist(), [[[[10, 255]]]])
		self.assertEqual(dataset.labels.tolist(), [1])
		self.assertEqual(dataset.classes, 2)
		self.assertEqual(encode_dataset(dataset), DATASET_FIXTURE)

	def test_round_trip(self):
		rng = np.random.default_rng(1)
		dataset = TinyImageSet(rng.integers(0, 256, size=(5, 3, 4, 4)), rng.integers(0, 3, size=5), 3)
		path = os.path.join(self.test_dir, 'train.tis')
		save_dataset(path, dataset)
		loaded = load_dataset(path)
		np.testing.assert_array_equal(loaded.images, dataset.images)
		np.testing.assert_array_equal(loaded.labels, dataset.labels)
		self.assertEqual(encode_dataset(loaded), encode_dataset(dataset))

	def test_rejections(self):
		with self.assertRaises(ContainerFormatError):
			decode_dataset(b'ZTIX' + DATASET_FIXTURE[4:])
		with self.assertRaises(ContainerFormatError):
			decode_dataset(DATASET_FIXTURE[:-2])
		with self.assertRaises(ContainerFormatError) as context:
			decode_dataset(DATASET_FIXTURE[:-1] + b'\x05')
		self.assertEqual(context.exception.offset, len(DATASET_FIXTURE) - 1)
		with self.assertRaises(ValueError):
			load_dataset(os.path.join(self.test_dir, 'missing.tis'))


class TestTinyImageSet(unittest.TestCase):
	"""Test cases for the TinyImageSet model"""

	def test_validation(self):
		with self.assertRaises(ValueError):
			TinyImageSet(np.zeros((0, 1, 2, 2)), np.zeros(0), 2)
		with self.assertRaises(ValueError):
			TinyImageSet(np.zeros((2, 1, 2, 2)), np.zeros(3), 2)
		with self.assertRaises(ValueError):
			TinyImageSet(np.zeros((1, 1, 2, 2)), np.array([2]), 2)
		with self.assertRaises(ValueError):
			TinyImageSet(np.zeros((1, 2, 2)), np.array([0]), 2)

	def test_float_view_and_batches(self):
		dataset = TinyImageSet(np.full((5, 1, 2, 2), 255), np.arange(5) % 2, 2)
		self.assertEqual(dataset.image_shape, (1, 2, 2))
		np.testing.assert_array_equal(dataset.as_float(0, 2), np.full((2, 1, 2, 2), 0.5, dtype=np.float32))
		sizes = [len(labels) for _, labels in dataset.batches(2)]
		self.assertEqual(sizes, [2, 2, 1])
		shuffled = np.concatenate([labels for _, labels in dataset.batches(2, np.random.default_rng(0))])
		self.assertEqual(sorted(shuffled.tolist()), sorted(dataset.labels.tolist()))
		self.assertEqual(dataset.class_histogram().tolist(), [3, 2])
		self.assertEqual(len(dataset.subset(3)), 3)


if __name__ == '__main__':
	unittest.main()

#!/usr/bin/env python3
"""
Unit tests for the forward kernels, checked against brute-force loop oracles
"""
import os
import sys
import unittest

import numpy as np

# Add the project root directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.models.tensor import ConvParams, MacCounter, Tensor
from src.utils import kernels

RANDOM_INSTANCES = 100


def conv_oracle(x, w, b, stride, padding):
	"""Direct evaluation of the convolution sum, one output at a time"""
	c_i, h, width = x.shape
	k, _, _, c_o = w.shape
	h_o = (h + 2 * padding - k) // stride + 1
	w_o = (width + 2 * padding - k) // stride + 1
	out = np.zeros((c_o, h_o, w_o))
	for z in range(c_o):
		for y in range(h_o):
			for xx in range(w_o):
				total = float(b[z])
				for i in range(k):
					for j in range(k):
						row, col = y * stride + i - padding, xx * stride + j - padding
						if 0 <= row < h and 0 <= col < width:
							for c in range(c_i):
								total += float(x[c, row, col]) * float(w[i, j, c, z])
				out[z, y, xx] = total
	return out


def dwconv_oracle(x, f):
	c, h, width = x.shape
	k = f.shape[0]
	pad = k // 2
	out = np.zeros((c, h, width))
	for ch in range(c):
		for y in range(h):
			for xx in range(width):
				total = 0.0
				for i in range(k):
					for j in range(k):
						row, col = y + i - pad, xx + j - pad
						if 0 <= row < h and 0 <= col < width:
							total += float(x[ch, row, col]) * float(f[i, j, 0, ch])
				out[ch, y, xx] = total
	return out


class TestConv2d(unittest.TestCase):
	"""Test cases for conv2d"""

	def test_scalar_product(self):
		params = ConvParams(Tensor(np.full((1, 1, 1, 1), 3.0)), Tensor(np.zeros(1)))
		out = kernels.conv2d(Tensor(np.full((1, 1, 1), 2.0)), params, MacCounter())
		self.assertEqual(out.data.tolist(), [[[6.0]]])

	def test_identity_stencil(self):
		weights = np.zeros((3, 3, 1, 1))
		weights[1, 1, 0, 0] = 1.0
		x = np.random.default_rng(0).normal(size=(1, 3, 3)).astype(np.float32)
		out = kernels.conv2d(Tensor(x), ConvParams(Tensor(weights), padding=1), MacCounter())
		np.testing.assert_array_equal(out.data, x)

	def test_random_instances_match_oracle(self):
		rng = np.random.default_rng(1)
		for _ in range(RANDOM_INSTANCES):
			c_i, c_o = rng.integers(1, 4), rng.integers(1, 4)
			k = int(rng.choice([1, 3]))
			stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
			h, w = rng.integers(k, 7), rng.integers(k, 7)
			x = rng.normal(size=(c_i, h, w)).astype(np.float32)
			weights = rng.normal(size=(k, k, c_i, c_o)).astype(np.float32)
			bias = rng.normal(size=c_o).astype(np.float32)
			params = ConvParams(Tensor(weights), Tensor(bias), stride, padding)
			out = kernels.conv2d(Tensor(x), params, MacCounter())
			np.testing.assert_allclose(out.data, conv_oracle(x, weights, bias, stride, padding), rtol=1e-5, atol=1e-5)

	def test_reference_shape_matches_oracle(self):
		rng = np.random.default_rng(2)
		x = rng.normal(size=(2, 5, 5)).astype(np.float32)
		weights = rng.normal(size=(3, 3, 2, 2)).astype(np.float32)
		out = kernels.conv2d(Tensor(x), ConvParams(Tensor(weights), padding=1), MacCounter())
		self.assertEqual(out.shape, (2, 5, 5))
		np.testing.assert_allclose(out.data, conv_oracle(x, weights, np.zeros(2), 1, 1), rtol=1e-5, atol=1e-5)

	def test_mac_identity(self):
		counter = MacCounter()
		params = ConvParams(Tensor.zeros((3, 3, 4, 6)), padding=1)
		out = kernels.conv2d(Tensor.zeros((2, 4, 7, 5)), params, counter, tag='conv2.conv')
		n, c_o, h_o, w_o = out.shape
		self.assertEqual(counter.get('conv2.conv'), n * w_o * h_o * c_o * 9 * 4)

	def test_channel_mismatch_names_both_shapes(self):
		params = ConvParams(Tensor.zeros((3, 3, 4, 2)), padding=1)
		with self.assertRaises(ValueError) as context:
			kernels.conv2d(Tensor.zeros((3, 5, 5)), params, MacCounter())
		self.assertIn('(1, 3, 5, 5)', str(context.exception))
		self.assertIn('(3, 3, 4, 2)', str(context.exception))

	def test_too_small_input_rejected(self):
		with self.assertRaises(ValueError):
			kernels.conv2d(Tensor.zeros((1, 2, 2)), ConvParams(Tensor.zeros((3, 3, 1, 1))), MacCounter())

	def test_position_subset_is_bit_identical(self):
		rng = np.random.default_rng(3)
		x = rng.normal(size=(2, 6, 8, 8)).astype(np.float32)
		weights = rng.normal(size=(3, 3, 6, 5)).astype(np.float32)
		bias = rng.normal(size=5).astype(np.float32)
		dense = kernels.conv2d_array(x, weights, bias, 1, 1)
		positions = rng.random((2, 8, 8)) < 0.4
		sparse = kernels.conv2d_array(x, weights, bias, 1, 1, positions=positions)
		selected = np.broadcast_to(positions[:, None], dense.shape)
		np.testing.assert_array_equal(sparse[selected], dense[selected])
		self.assertFalse(sparse[~selected].any())

	def test_deterministic(self):
		rng = np.random.default_rng(4)
		x = Tensor(rng.normal(size=(3, 6, 6)))
		params = ConvParams(Tensor(rng.normal(size=(3, 3, 3, 4))), padding=1)
		first = kernels.conv2d(x, params, MacCounter())
		second = kernels.conv2d(x, params, MacCounter())
		np.testing.assert_array_equal(first.data, second.data)


class TestDepthwiseConv(unittest.TestCase):
	"""Test cases for dwconv2d"""

	def test_corner_support(self):
		counter = MacCounter()
		out = kernels.dwconv2d(Tensor(np.ones((2, 2, 2))), Tensor(np.ones((3, 3, 1, 2))), counter)
		np.testing.assert_array_equal(out.data, np.full((2, 2, 2), 4.0))
		self.assertEqual(counter.total(), 8 * 9)

	def test_identity_stencil(self):
		filters = np.zeros((3, 3, 1, 3))
		filters[1, 1, 0, :] = 1.0
		x = np.random.default_rng(5).normal(size=(3, 4, 4)).astype(np.float32)
		out = kernels.dwconv2d(Tensor(x), Tensor(filters), MacCounter())
		np.testing.assert_array_equal(out.data, x)

	def test_random_instances_match_oracle(self):
		rng = np.random.default_rng(6)
		for _ in range(RANDOM_INSTANCES):
			c, h, w = rng.integers(1, 5), rng.integers(1, 7), rng.integers(1, 7)
			x = rng.normal(size=(c, h, w)).astype(np.float32)
			filters = rng.normal(size=(3, 3, 1, c)).astype(np.float32)
			out = kernels.dwconv2d(Tensor(x), Tensor(filters), MacCounter())
			np.testing.assert_allclose(out.data, dwconv_oracle(x, filters), rtol=1e-5, atol=1e-5)

	def test_charged_elements_override(self):
		counter = MacCounter()
		kernels.dwconv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((3, 3, 1, 2))), counter, charged_elements=10)
		self.assertEqual(counter.total(), 90)

	def test_channel_mismatch_rejected(self):
		with self.assertRaises(ValueError):
			kernels.dwconv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((3, 3, 1, 3))), MacCounter())


class TestBatchNorm(unittest.TestCase):
	"""Test cases for batch_norm"""

	def test_identity_parameters(self):
		x = np.random.default_rng(7).normal(size=(2, 3, 3)).astype(np.float32)
		one, zero = Tensor(np.ones(2)), Tensor(np.zeros(2))
		out = kernels.batch_norm(Tensor(x), one, zero, zero, one, eps=0.0)
		np.testing.assert_array_equal(out.data, x)

	def test_closed_form(self):
		out = kernels.batch_norm(Tensor([5.0]), Tensor([2.0]), Tensor([1.0]), Tensor([3.0]), Tensor([4.0]), eps=0.0)
		self.assertAlmostEqual(float(out.data[0]), 3.0, places=6)

	def test_training_uses_batch_statistics(self):
		rng = np.random.default_rng(8)
		x = rng.normal(2.0, 3.0, size=(4, 3, 5, 5)).astype(np.float32)
		gamma = rng.uniform(0.5, 2.0, size=3).astype(np.float32)
		beta = rng.normal(size=3).astype(np.float32)
		running_mean, running_var = Tensor(np.zeros(3)), Tensor(np.ones(3))
		out = kernels.batch_norm(Tensor(x), Tensor(gamma), Tensor(beta), running_mean, running_var,
								 training=True, momentum=0.1)
		x64 = x.astype(np.float64)
		mean = np.array([x64[:, c].sum() / x64[:, c].size for c in range(3)])
		var = np.array([((x64[:, c] - mean[c]) ** 2).sum() / x64[:, c].size for c in range(3)])
		expected = (x64 - mean[None, :, None, None]) / np.sqrt(var[None, :, None, None] + kernels.BN_EPS) \
			* gamma[None, :, None, None] + beta[None, :, None, None]
		np.testing.assert_allclose(out.data, expected, rtol=1e-4, atol=1e-4)
		count = x64[:, 0].size
		np.testing.assert_allclose(running_mean.data, 0.1 * mean, rtol=1e-4, atol=1e-6)
		np.testing.assert_allclose(running_var.data, 0.9 + 0.1 * var * count / (count - 1), rtol=1e-4)

	def test_non_positive_variance_rejected(self):
		one = Tensor(np.ones(1))
		with self.assertRaises(ValueError):
			kernels.batch_norm(Tensor([1.0]), one, one, one, Tensor([0.0]))

	def test_parameter_shape_checked(self):
		one = Tensor(np.ones(3))
		with self.assertRaises(ValueError):
			kernels.batch_norm(Tensor(np.ones((2, 4, 4))), one, one, one, one)

	def test_cumulative_running_average(self):
		running_mean, running_var = np.zeros(1), np.ones(1)
		for step, value in enumerate([1.0, 3.0, 5.0], start=1):
			kernels.update_running(running_mean, running_var, np.array([value]), np.array([0.0]), 1, None, step)
		self.assertAlmostEqual(float(running_mean[0]), 3.0)


class TestActivationsAndLinear(unittest.TestCase):
	"""Test cases for relu, maxpool2x2 and linear"""

	def test_relu(self):
		self.assertEqual(kernels.relu(Tensor([-1.0, 0.0, 0.5, 2.0])).data.tolist(), [0.0, 0.0, 0.5, 2.0])
		self.assertEqual(kernels.relu(Tensor([-1.0, 0.5, 2.0]), cap=1.0).data.tolist(), [0.0, 0.5, 1.0])
		self.assertFalse(kernels.relu(Tensor(-np.ones((2, 3)))).data.any())

	def test_maxpool(self):
		out = kernels.maxpool2x2(Tensor([[[1.0, 2.0], [3.0, 4.0]]]))
		self.assertEqual(out.data.tolist(), [[[4.0]]])

	def test_maxpool_random_matches_oracle(self):
		rng = np.random.default_rng(9)
		for _ in range(RANDOM_INSTANCES):
			c, h, w = rng.integers(1, 4), rng.integers(2, 8), rng.integers(2, 8)
			x = rng.normal(size=(c, h, w)).astype(np.float32)
			out = kernels.maxpool2x2(Tensor(x)).data
			for ch in range(c):
				for y in range(h // 2):
					for xx in range(w // 2):
						self.assertEqual(out[ch, y, xx], x[ch, 2 * y:2 * y + 2, 2 * xx:2 * xx + 2].max())

	def test_linear_identity(self):
		counter = MacCounter()
		out = kernels.linear(Tensor([1.0, -2.0, 3.0]), Tensor(np.eye(3)), None, counter)
		self.assertEqual(out.data.tolist(), [1.0, -2.0, 3.0])
		self.assertEqual(counter.total(), 9)

	def test_linear_random_matches_dot_product(self):
		rng = np.random.default_rng(10)
		for _ in range(RANDOM_INSTANCES):
			n, d_in, d_out = rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 6)
			x = rng.normal(size=(n, d_in)).astype(np.float32)
			weights = rng.normal(size=(d_in, d_out)).astype(np.float32)
			bias = rng.normal(size=d_out).astype(np.float32)
			out = kernels.linear(Tensor(x), Tensor(weights), Tensor(bias), MacCounter())
			expected = [[sum(float(x[r, i]) * float(weights[i, o]) for i in range(d_in)) + float(bias[o])
						 for o in range(d_out)] for r in range(n)]
			np.testing.assert_allclose(out.data, expected, rtol=1e-5, atol=1e-5)

	def test_linear_flattens_single_feature_map(self):
		rng = np.random.default_rng(11)
		x = rng.normal(size=(2, 3, 3)).astype(np.float32)
		weights = rng.normal(size=(18, 4)).astype(np.float32)
		counter = MacCounter()
		out = kernels.linear(Tensor(x), Tensor(weights), None, counter)
		self.assertEqual(out.shape, (4,))
		np.testing.assert_allclose(out.data, x.reshape(-1) @ weights, rtol=1e-5, atol=1e-5)
		self.assertEqual(counter.total(), 18 * 4)
		batched = kernels.linear(Tensor(x[None]), Tensor(weights), None, MacCounter())
		self.assertEqual(batched.shape, (1, 4))
		np.testing.assert_allclose(batched.data[0], out.data, rtol=1e-6)

	def test_linear_shape_mismatch(self):
		with self.assertRaises(ValueError):
			kernels.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))), None, MacCounter())


if __name__ == '__main__':
	unittest.main()

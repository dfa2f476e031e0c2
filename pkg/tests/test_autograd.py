#!/usr/bin/env python3
"""
Unit tests for the tape-based gradients, checked against central finite differences
"""
import os
import sys
import unittest

import numpy as np

# Add the project root directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.utils import autograd as ag

STEP = 1e-6


def projected(tape, node, weights):
	"""Scalar sum(node * weights) so every output element contributes"""
	return ag.sum_all(tape, ag.mul(tape, node, tape.constant(weights)))


class GradientCheck(unittest.TestCase):
	"""Compares analytic gradients with central differences in float64"""

	def check(self, build, params, rtol=1e-3, atol=1e-6):
		tape = ag.GradTape()
		nodes = {name: tape.parameter(name, value) for name, value in params.items()}
		grads = ag.backward(build(tape, nodes), tape)
		for name, value in params.items():
			numeric = np.zeros_like(value)
			for index in np.ndindex(value.shape):
				original = value[index]
				value[index] = original + STEP
				plus = self.evaluate(build, params)
				value[index] = original - STEP
				minus = self.evaluate(build, params)
				value[index] = original
				numeric[index] = (plus - minus) / (2 * STEP)
			self.assertEqual(grads[name].shape, value.shape)
			np.testing.assert_allclose(grads[name], numeric, rtol=rtol, atol=atol, err_msg=f"gradient of {name}")

	@staticmethod
	def evaluate(build, params):
		tape = ag.GradTape(enabled=False)
		nodes = {name: tape.parameter(name, value) for name, value in params.items()}
		return float(build(tape, nodes).value)


class TestBackward(GradientCheck):
	"""Test cases for backward and the elementary ops"""

	def test_square(self):
		tape = ag.GradTape()
		x = tape.parameter('x', np.array(3.0))
		grads = ag.backward(ag.square(tape, x), tape)
		self.assertAlmostEqual(float(grads['x']), 6.0)

	def test_unreachable_parameter_gets_zero(self):
		tape = ag.GradTape()
		x = tape.parameter('x', np.array(2.0))
		tape.parameter('unused', np.ones((2, 2)))
		grads = ag.backward(ag.square(tape, x), tape)
		np.testing.assert_array_equal(grads['unused'], np.zeros((2, 2)))

	def test_non_scalar_loss_rejected(self):
		tape = ag.GradTape()
		x = tape.parameter('x', np.ones(3))
		with self.assertRaises(ValueError):
			ag.backward(ag.square(tape, x), tape)

	def test_disabled_tape_rejected(self):
		tape = ag.GradTape(enabled=False)
		x = tape.parameter('x', np.array(1.0))
		with self.assertRaises(ValueError):
			ag.backward(ag.square(tape, x), tape)
		self.assertEqual(len(tape), 0)

	def test_duplicate_parameter_rejected(self):
		tape = ag.GradTape()
		tape.parameter('w', np.ones(1))
		with self.assertRaises(ValueError):
			tape.parameter('w', np.ones(1))

	def test_shared_node_accumulates(self):
		tape = ag.GradTape()
		x = tape.parameter('x', np.array(1.5))
		grads = ag.backward(ag.add(tape, ag.square(tape, x), ag.mul(tape, x, x)), tape)
		self.assertAlmostEqual(float(grads['x']), 6.0)

	def test_gate_blocks_gradient(self):
		mask = np.array([1.0, 0.0, 1.0])
		params = {'x': np.array([0.3, -0.2, 0.7])}
		self.check(lambda tape, p: ag.sum_all(tape, ag.square(tape, ag.gate(tape, p['x'], mask))), params)
		tape = ag.GradTape()
		x = tape.parameter('x', params['x'])
		grads = ag.backward(ag.sum_all(tape, ag.gate(tape, x, mask)), tape)
		np.testing.assert_array_equal(grads['x'], mask)


class TestLayerGradients(GradientCheck):
	"""Finite-difference checks for every layer op"""

	def setUp(self):
		self.rng = np.random.default_rng(11)

	def test_conv2d(self):
		for stride, padding in ((1, 1), (2, 0), (2, 1)):
			x = self.rng.normal(size=(2, 2, 5, 5))
			params = {
				'x': x,
				'w': self.rng.normal(size=(3, 3, 2, 3)),
				'b': self.rng.normal(size=3),
			}
			out_shape = ag.conv2d(ag.GradTape(False), ag.Node(x), ag.Node(params['w']), ag.Node(params['b']),
								  stride, padding).shape
			weights = self.rng.normal(size=out_shape)
			self.check(lambda tape, p: projected(tape, ag.conv2d(tape, p['x'], p['w'], p['b'], stride, padding), weights),
					   params)

	def test_dwconv2d(self):
		params = {'x': self.rng.normal(size=(2, 3, 4, 4)), 'f': self.rng.normal(size=(3, 3, 1, 3))}
		weights = self.rng.normal(size=(2, 3, 4, 4))
		self.check(lambda tape, p: projected(tape, ag.dwconv2d(tape, p['x'], p['f']), weights), params)

	def test_batch_norm_batch_statistics(self):
		params = {
			'x': self.rng.normal(1.0, 2.0, size=(3, 2, 3, 3)),
			'gamma': self.rng.uniform(0.5, 1.5, size=2),
			'beta': self.rng.normal(size=2),
		}
		weights = self.rng.normal(size=(3, 2, 3, 3))
		self.check(lambda tape, p: projected(tape, ag.batch_norm(tape, p['x'], p['gamma'], p['beta'])[0], weights),
				   params)

	def test_batch_norm_running_statistics(self):
		running = (np.array([0.2, -0.1]), np.array([1.5, 0.7]))
		params = {
			'x': self.rng.normal(size=(2, 2, 3, 3)),
			'gamma': self.rng.uniform(0.5, 1.5, size=2),
			'beta': self.rng.normal(size=2),
		}
		weights = self.rng.normal(size=(2, 2, 3, 3))
		self.check(
			lambda tape, p: projected(tape, ag.batch_norm(tape, p['x'], p['gamma'], p['beta'], running=running)[0], weights),
			params,
		)

	def test_relu_with_and_without_cap(self):
		params = {'x': self.rng.uniform(-2.0, 2.0, size=(2, 3, 3))}
		weights = self.rng.normal(size=(2, 3, 3))
		self.check(lambda tape, p: projected(tape, ag.relu(tape, p['x']), weights), params)
		self.check(lambda tape, p: projected(tape, ag.relu(tape, p['x'], 1.0), weights), params)

	def test_maxpool_and_flatten(self):
		params = {'x': self.rng.normal(size=(2, 2, 5, 4))}
		weights = self.rng.normal(size=(2, 2 * 2 * 2))
		self.check(lambda tape, p: projected(tape, ag.flatten(tape, ag.maxpool2x2(tape, p['x'])), weights), params)

	def test_linear(self):
		params = {
			'x': self.rng.normal(size=(3, 4)),
			'w': self.rng.normal(size=(4, 5)),
			'b': self.rng.normal(size=5),
		}
		weights = self.rng.normal(size=(3, 5))
		self.check(lambda tape, p: projected(tape, ag.linear(tape, p['x'], p['w'], p['b']), weights), params)


class TestLosses(GradientCheck):
	"""Test cases for mse_loss and cross_entropy_loss"""

	def setUp(self):
		self.rng = np.random.default_rng(12)

	def mse(self, pred, target, index_set=None):
		tape = ag.GradTape()
		return float(ag.mse_loss(tape, tape.parameter('pred', np.asarray(pred, dtype=np.float64)), target, index_set).value)

	def test_mse_values(self):
		self.assertEqual(self.mse([0.5, 0.25], [0.5, 0.25]), 0.0)
		self.assertAlmostEqual(self.mse([1.0, 0.0], [0.0, 0.0]), 0.5)

	def test_mse_restriction_matches_masked_copies(self):
		pred = self.rng.normal(size=(2, 3, 4, 4))
		target = self.rng.normal(size=(2, 3, 4, 4))
		index_set = self.rng.random((4, 4)) < 0.5
		restricted = self.mse(pred, target, index_set[None, None])
		selected = np.broadcast_to(index_set, pred.shape)
		masked_full = self.mse(np.where(selected, pred, 0.0), np.where(selected, target, 0.0))
		self.assertAlmostEqual(restricted * selected.sum() / pred.size, masked_full)

	def test_mse_gradient_closed_form(self):
		pred = self.rng.normal(size=6)
		target = self.rng.normal(size=6)
		tape = ag.GradTape()
		grads = ag.backward(ag.mse_loss(tape, tape.parameter('pred', pred), target), tape)
		np.testing.assert_allclose(grads['pred'], 2 * (pred - target) / 6)

	def test_mse_gradient_ignores_unselected_positions(self):
		index_set = np.array([[True, False], [False, True]])
		target = self.rng.normal(size=(1, 1, 2, 2))
		params = {'pred': self.rng.normal(size=(1, 1, 2, 2))}
		self.check(lambda tape, p: ag.mse_loss(tape, p['pred'], target, index_set), params)

	def test_mse_rejections(self):
		with self.assertRaises(ValueError):
			self.mse([1.0, 2.0], [1.0, 2.0], np.array([False, False]))
		with self.assertRaises(ValueError):
			self.mse([1.0, 2.0], [1.0, 2.0, 3.0])

	def test_cross_entropy_values(self):
		tape = ag.GradTape()
		uniform = ag.cross_entropy_loss(tape, tape.parameter('u', np.zeros((2, 5))), [1, 3])
		self.assertAlmostEqual(float(uniform.value), np.log(5))
		perfect = np.full((1, 4), -50.0)
		perfect[0, 2] = 50.0
		loss = ag.cross_entropy_loss(tape, tape.parameter('p', perfect), [2])
		self.assertLess(float(loss.value), 1e-6)

	def test_cross_entropy_gradient(self):
		labels = np.array([0, 2, 1])
		params = {'logits': self.rng.normal(size=(3, 4))}
		self.check(lambda tape, p: ag.cross_entropy_loss(tape, p['logits'], labels), params)

	def test_cross_entropy_shape_checked(self):
		tape = ag.GradTape()
		with self.assertRaises(ValueError):
			ag.cross_entropy_loss(tape, tape.parameter('x', np.zeros((2, 3))), [0, 1, 2])


if __name__ == '__main__':
	unittest.main()

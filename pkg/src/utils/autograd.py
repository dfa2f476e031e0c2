"""
Tape-based reverse-mode differentiation over NumPy arrays.

Ops record their output node together with a closure that maps the output
gradient to parent gradients. Nodes are recorded in creation order, which
is already a topological order, so ``backward`` walks the tape in reverse.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.utils import kernels

logger = logging.getLogger(__name__)


class Node:
	"""A value on the tape"""

	__slots__ = ('value', 'grad', 'parents', 'backward_fn', 'name')

	def __init__(self, value: np.ndarray, parents: Sequence['Node'] = (),
				 backward_fn: Optional[Callable] = None, name: Optional[str] = None):
		self.value = value
		self.grad = None
		self.parents = tuple(parents)
		self.backward_fn = backward_fn
		self.name = name

	@property
	def shape(self):
		return self.value.shape

	def __repr__(self):
		return f"Node(name={self.name!r}, shape={self.value.shape})"


class GradTape:
	"""Records ops for one forward pass.

	With ``enabled=False`` ops still compute values but nothing is kept,
	which is how forward-only passes (evaluation, BN recalibration) run.
	"""

	def __init__(self, enabled: bool = True):
		self.enabled = enabled
		self._nodes: List[Node] = []
		self._params: Dict[str, Node] = {}

	def parameter(self, name: str, value: np.ndarray) -> Node:
		if name in self._params:
			raise ValueError(f"parameter '{name}' already on the tape")
		node = Node(value, name=name)
		self._params[name] = node
		return node

	def constant(self, value: np.ndarray) -> Node:
		return Node(value)

	def record(self, value: np.ndarray, parents: Sequence[Node], backward_fn: Callable) -> Node:
		if not self.enabled:
			return Node(value)
		node = Node(value, parents, backward_fn)
		self._nodes.append(node)
		return node

	@property
	def parameters(self) -> Dict[str, Node]:
		return dict(self._params)

	def __len__(self):
		return len(self._nodes)


def backward(loss: Node, tape: GradTape) -> Dict[str, np.ndarray]:
	"""Gradients of a scalar loss for every parameter on the tape.

	Parameters the loss does not depend on get a zero gradient.
	"""
	if loss.value.size != 1:
		raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
	if not tape.enabled:
		raise ValueError("backward called on a tape that did not record")
	for node in tape._nodes:
		node.grad = None
	for param in tape._params.values():
		param.grad = None
	loss.grad = np.ones_like(loss.value)
	for node in reversed(tape._nodes):
		if node.grad is None or node.backward_fn is None:
			continue
		parent_grads = node.backward_fn(node.grad)
		for parent, grad in zip(node.parents, parent_grads):
			if grad is None:
				continue
			if grad.shape != parent.value.shape:
				raise ValueError(f"gradient shape {grad.shape} does not match value shape {parent.value.shape}")
			parent.grad = grad if parent.grad is None else parent.grad + grad
	return {
		name: (param.grad if param.grad is not None else np.zeros_like(param.value))
		for name, param in tape._params.items()
	}


def add(tape: GradTape, a: Node, b: Node) -> Node:
	return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def mul(tape: GradTape, a: Node, b: Node) -> Node:
	return tape.record(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def square(tape: GradTape, x: Node) -> Node:
	return tape.record(x.value * x.value, (x,), lambda g: (2 * x.value * g,))


def sum_all(tape: GradTape, x: Node) -> Node:
	return tape.record(np.asarray(x.value.sum()), (x,), lambda g: (np.broadcast_to(g, x.value.shape).copy(),))


def gate(tape: GradTape, x: Node, mask: np.ndarray) -> Node:
	"""x * mask with a constant 0/1 mask; the mask itself gets no gradient"""
	mask = mask.astype(x.value.dtype)
	return tape.record(x.value * mask, (x,), lambda g: (g * mask,))


def conv2d(tape: GradTape, x: Node, weights: Node, bias: Optional[Node], stride: int = 1, padding: int = 0) -> Node:
	kernel, _, c_i, c_o = weights.value.shape
	out = kernels.conv2d_array(x.value, weights.value, None if bias is None else bias.value, stride, padding)

	def backward_fn(g):
		n, c, h, w = x.value.shape
		cols = kernels.im2col(x.value, kernel, stride, padding)
		_, h_o, w_o, width = cols.shape
		g_rows = g.transpose(0, 2, 3, 1).reshape(-1, c_o)
		grad_w = (cols.reshape(-1, width).T @ g_rows).reshape(weights.value.shape)
		grad_cols = (g_rows @ weights.value.reshape(width, c_o).T).reshape(n, h_o, w_o, kernel, kernel, c)
		padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
		for i in range(kernel):
			for j in range(kernel):
				padded[:, :, i:i + stride * h_o:stride, j:j + stride * w_o:stride] += \
					grad_cols[:, :, :, i, j, :].transpose(0, 3, 1, 2)
		grad_x = padded[:, :, padding:padding + h, padding:padding + w]
		grad_b = None if bias is None else g.sum(axis=(0, 2, 3))
		return np.ascontiguousarray(grad_x), grad_w, grad_b

	parents = (x, weights) if bias is None else (x, weights, bias)
	return tape.record(out, parents, backward_fn)


def dwconv2d(tape: GradTape, x: Node, filters: Node) -> Node:
	kernel = filters.value.shape[0]
	pad = kernel // 2
	out = kernels.dwconv2d_array(x.value, filters.value)

	def backward_fn(g):
		n, c, h, w = x.value.shape
		padded = np.pad(x.value, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
		grad_padded = np.zeros_like(padded, dtype=g.dtype)
		grad_f = np.zeros_like(filters.value, dtype=g.dtype)
		for i in range(kernel):
			for j in range(kernel):
				grad_f[i, j, 0, :] = (padded[:, :, i:i + h, j:j + w] * g).sum(axis=(0, 2, 3))
				grad_padded[:, :, i:i + h, j:j + w] += g * filters.value[i, j, 0, :][None, :, None, None]
		return np.ascontiguousarray(grad_padded[:, :, pad:pad + h, pad:pad + w]), grad_f

	return tape.record(out, (x, filters), backward_fn)


def batch_norm(tape: GradTape, x: Node, gamma: Node, beta: Node, eps: float = kernels.BN_EPS,
			   running: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Tuple[Node, np.ndarray, np.ndarray, int]:
	"""Batch norm node.

	With ``running`` = (mean, var) the layer normalizes with those fixed
	statistics; otherwise it uses batch statistics. Returns the node and the
	batch mean, biased variance and per-channel element count.
	"""
	mean, var, count = kernels.batch_moments(x.value)
	use_mean, use_var = (mean, var) if running is None else running
	out = kernels.bn_affine(x.value, gamma.value, beta.value, use_mean, use_var, eps)
	axis = kernels.channel_axis(x.value.ndim)
	reduce_axes = tuple(a for a in range(x.value.ndim) if a != axis)
	bc = lambda v: kernels.broadcast_channels(v, x.value.ndim)
	inv_std = 1.0 / np.sqrt(use_var + eps)
	x_hat = (x.value - bc(use_mean)) * bc(inv_std)

	def backward_fn(g):
		grad_gamma = (g * x_hat).sum(axis=reduce_axes)
		grad_beta = g.sum(axis=reduce_axes)
		g_hat = g * bc(gamma.value)
		if running is not None:
			grad_x = g_hat * bc(inv_std)
		else:
			grad_x = bc(inv_std) * (
				g_hat - bc(g_hat.mean(axis=reduce_axes)) - x_hat * bc((g_hat * x_hat).mean(axis=reduce_axes))
			)
		return grad_x.astype(g.dtype), grad_gamma.astype(g.dtype), grad_beta.astype(g.dtype)

	return tape.record(out, (x, gamma, beta), backward_fn), mean, var, count


def relu(tape: GradTape, x: Node, cap: Optional[float] = None) -> Node:
	out = kernels.relu_array(x.value, cap)
	passing = x.value > 0
	if cap is not None:
		passing &= x.value < cap
	return tape.record(out, (x,), lambda g: (g * passing,))


def maxpool2x2(tape: GradTape, x: Node) -> Node:
	out, arg = kernels.maxpool2x2_array(x.value)

	def backward_fn(g):
		n, c, h, w = x.value.shape
		h_o, w_o = out.shape[2], out.shape[3]
		onehot = (np.arange(4) == arg[..., None]) * g[..., None]
		grad = onehot.reshape(n, c, h_o, w_o, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h_o, 2 * w_o)
		full = np.zeros_like(x.value, dtype=g.dtype)
		full[:, :, :2 * h_o, :2 * w_o] = grad
		return (full,)

	return tape.record(out, (x,), backward_fn)


def flatten(tape: GradTape, x: Node) -> Node:
	shape = x.value.shape
	return tape.record(x.value.reshape(shape[0], -1), (x,), lambda g: (g.reshape(shape),))


def linear(tape: GradTape, x: Node, weights: Node, bias: Optional[Node]) -> Node:
	out = kernels.linear_array(x.value, weights.value, None if bias is None else bias.value)

	def backward_fn(g):
		grad_x = g @ weights.value.T
		grad_w = x.value.T @ g
		if bias is None:
			return grad_x, grad_w
		return grad_x, grad_w, g.sum(axis=0)

	parents = (x, weights) if bias is None else (x, weights, bias)
	return tape.record(out, parents, backward_fn)


def mse_loss(tape: GradTape, pred: Node, target: np.ndarray, index_set: Optional[np.ndarray] = None) -> Node:
	"""Mean squared error over the selected positions.

	``index_set`` is a boolean mask broadcastable to ``pred``; it restricts
	the mean to the True positions (e.g. the predicted set I_t).
	"""
	target = np.asarray(target, dtype=pred.value.dtype)
	if target.shape != pred.value.shape:
		raise ValueError(f"mse_loss pred shape {pred.value.shape} does not match target shape {target.shape}")
	if index_set is None:
		selected = np.ones(pred.value.shape, dtype=bool)
	else:
		selected = np.broadcast_to(np.asarray(index_set, dtype=bool), pred.value.shape)
	count = int(selected.sum())
	if count == 0:
		raise ValueError("mse_loss index set selects no position")
	diff = np.where(selected, pred.value - target, 0).astype(pred.value.dtype)
	loss = np.asarray((diff * diff).sum() / count, dtype=pred.value.dtype)
	return tape.record(loss, (pred,), lambda g: (g * 2.0 * diff / count,))


def cross_entropy_loss(tape: GradTape, logits: Node, labels: np.ndarray) -> Node:
	"""Mean softmax cross-entropy of [N x C] logits against integer labels"""
	labels = np.asarray(labels, dtype=np.int64).reshape(-1)
	if logits.value.ndim != 2 or logits.value.shape[0] != labels.size:
		raise ValueError(f"cross_entropy logits shape {logits.value.shape} does not match {labels.size} labels")
	n = labels.size
	log_norm = logsumexp(logits.value, axis=1, keepdims=True)
	log_probs = logits.value - log_norm
	loss = np.asarray(-log_probs[np.arange(n), labels].mean(), dtype=logits.value.dtype)

	def backward_fn(g):
		grad = np.exp(log_probs)
		grad[np.arange(n), labels] -= 1.0
		return (g * grad / n,)

	return tape.record(loss, (logits,), backward_fn)

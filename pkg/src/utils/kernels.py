"""
Forward numerical kernels: convolution, depthwise convolution, batch norm,
activations, pooling and linear layers, with MAC accounting.

The ``*_array`` helpers work on raw NumPy arrays of any float dtype and are
shared with the autograd ops; the public functions take and return Tensor.
Sums run in a fixed order (kernel row, kernel column, then channel innermost)
so any subset of output positions reproduces the dense result bit for bit.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.models.tensor import ConvParams, MacCounter, Tensor

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
	"""Return a rank-4 view of a C x H x W or N x C x H x W array"""
	if x.ndim == 3:
		return x[None], True
	if x.ndim == 4:
		return x, False
	raise ValueError(f"expected a C x H x W or N x C x H x W tensor, got shape {x.shape}")


def output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
	return (size + 2 * padding - kernel) // stride + 1


def im2col(x4: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
	"""Patches [N x H_o x W_o x (k*k*C)] ordered (row, column, channel)"""
	n, c, h, w = x4.shape
	if padding:
		x4 = np.pad(x4, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
	windows = sliding_window_view(x4, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
	h_o, w_o = windows.shape[2], windows.shape[3]
	return windows.transpose(0, 2, 3, 4, 5, 1).reshape(n, h_o, w_o, kernel * kernel * c)


def accumulate_rows(cols: np.ndarray, wmat: np.ndarray) -> np.ndarray:
	"""rows[P x K] . wmat[K x O], summed term by term in K order"""
	dtype = np.result_type(cols.dtype, wmat.dtype)
	out = np.zeros((cols.shape[0], wmat.shape[1]), dtype=dtype)
	if cols.shape[0] == 0:
		return out
	cols_t = np.ascontiguousarray(cols.T, dtype=dtype)
	wmat = wmat.astype(dtype, copy=False)
	for term in range(cols_t.shape[0]):
		out += np.multiply.outer(cols_t[term], wmat[term])
	return out


def _check_conv_shapes(x4: np.ndarray, weights: np.ndarray, padding: int) -> None:
	kernel, _, c_i, _ = weights.shape
	if x4.shape[1] != c_i:
		raise ValueError(
			f"conv2d input shape {x4.shape} has {x4.shape[1]} channels but weights shape "
			f"{weights.shape} expect c_i={c_i}"
		)
	if x4.shape[2] + 2 * padding < kernel or x4.shape[3] + 2 * padding < kernel:
		raise ValueError(
			f"conv2d input shape {x4.shape} padded by {padding} is smaller than the "
			f"{kernel}x{kernel} filters of weights shape {weights.shape}"
		)


def conv2d_array(x4: np.ndarray, weights: np.ndarray, bias: Optional[np.ndarray], stride: int = 1,
				 padding: int = 0, positions: Optional[np.ndarray] = None) -> np.ndarray:
	"""Dense convolution [N x c_o x H_o x W_o].

	When ``positions`` (bool [N x H_o x W_o]) is given, only those output
	positions are evaluated and the others are left at zero.
	"""
	_check_conv_shapes(x4, weights, padding)
	kernel, _, c_i, c_o = weights.shape
	cols = im2col(x4, kernel, stride, padding)
	n, h_o, w_o, _ = cols.shape
	wmat = weights.reshape(kernel * kernel * c_i, c_o)
	dtype = np.result_type(x4.dtype, weights.dtype)
	out = np.zeros((n, h_o, w_o, c_o), dtype=dtype)
	if positions is None:
		out[...] = accumulate_rows(cols.reshape(-1, cols.shape[-1]), wmat).reshape(n, h_o, w_o, c_o)
		if bias is not None:
			out += bias.astype(dtype, copy=False)
	else:
		if positions.shape != (n, h_o, w_o):
			raise ValueError(f"positions shape {positions.shape} does not match output grid {(n, h_o, w_o)}")
		values = accumulate_rows(cols[positions], wmat)
		if bias is not None:
			values += bias.astype(dtype, copy=False)
		out[positions] = values
	return out.transpose(0, 3, 1, 2)


def dwconv2d_array(x4: np.ndarray, filters: np.ndarray) -> np.ndarray:
	"""Per-channel K x K convolution, stride 1, 'same' padding"""
	kernel, kernel_w, one, channels = filters.shape
	if kernel != kernel_w or one != 1:
		raise ValueError(f"depthwise filters must be [K x K x 1 x c], got {filters.shape}")
	if x4.shape[1] != channels:
		raise ValueError(
			f"dwconv2d input shape {x4.shape} has {x4.shape[1]} channels but filters shape "
			f"{filters.shape} have {channels}"
		)
	pad = kernel // 2
	n, c, h, w = x4.shape
	padded = np.pad(x4, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
	dtype = np.result_type(x4.dtype, filters.dtype)
	out = np.zeros((n, c, h, w), dtype=dtype)
	for i in range(kernel):
		for j in range(kernel):
			out += padded[:, :, i:i + h, j:j + w] * filters[i, j, 0, :].astype(dtype)[None, :, None, None]
	return out


def channel_axis(ndim: int) -> int:
	"""Channel axis for rank 1 (C), 2 (N x C), 3 (C x H x W) and 4 (N x C x H x W)"""
	return {1: 0, 2: 1, 3: 0, 4: 1}[ndim]


def broadcast_channels(vector: np.ndarray, ndim: int) -> np.ndarray:
	shape = [1] * ndim
	shape[channel_axis(ndim)] = -1
	return vector.reshape(shape)


def bn_affine(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray, var: np.ndarray,
			  eps: float = BN_EPS) -> np.ndarray:
	"""(x - mean) * gamma / sqrt(var + eps) + beta, per channel"""
	dtype = x.dtype
	scale = (gamma.astype(dtype) / np.sqrt(var.astype(dtype) + dtype.type(eps))).astype(dtype)
	return (x - broadcast_channels(mean.astype(dtype), x.ndim)) * broadcast_channels(scale, x.ndim) \
		+ broadcast_channels(beta.astype(dtype), x.ndim)


def batch_moments(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
	"""Per-channel mean, biased variance and element count"""
	axis = channel_axis(x.ndim)
	reduce_axes = tuple(a for a in range(x.ndim) if a != axis)
	count = int(np.prod([x.shape[a] for a in reduce_axes])) if reduce_axes else 1
	if not reduce_axes:
		return x.copy(), np.zeros_like(x), 1
	mean = x.mean(axis=reduce_axes)
	var = x.var(axis=reduce_axes)
	return mean, var, count


def update_running(running_mean: np.ndarray, running_var: np.ndarray, mean: np.ndarray, var: np.ndarray,
				   count: int, momentum: Optional[float], step: int = 1) -> None:
	"""In-place running-statistics update.

	The running variance tracks the unbiased batch variance. ``momentum=None``
	gives the cumulative average, where ``step`` is the 1-based batch index.
	"""
	unbiased = var * (count / (count - 1)) if count > 1 else var
	factor = (1.0 / step) if momentum is None else momentum
	running_mean *= (1.0 - factor)
	running_mean += factor * mean
	running_var *= (1.0 - factor)
	running_var += factor * unbiased


def relu_array(x: np.ndarray, cap: Optional[float] = None) -> np.ndarray:
	out = np.maximum(x, x.dtype.type(0))
	if cap is not None:
		out = np.minimum(out, x.dtype.type(cap))
	return out


def maxpool2x2_array(x4: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	"""2x2/stride-2 max pooling; returns pooled values and window argmax (0..3)"""
	n, c, h, w = x4.shape
	h_o, w_o = h // 2, w // 2
	if h_o < 1 or w_o < 1:
		raise ValueError(f"maxpool2x2 needs spatial extents >= 2, got shape {x4.shape}")
	windows = x4[:, :, :2 * h_o, :2 * w_o].reshape(n, c, h_o, 2, w_o, 2).transpose(0, 1, 2, 4, 3, 5)
	windows = windows.reshape(n, c, h_o, w_o, 4)
	arg = windows.argmax(axis=-1)
	return np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0], arg


def linear_array(x2: np.ndarray, weights: np.ndarray, bias: Optional[np.ndarray]) -> np.ndarray:
	if x2.ndim != 2 or weights.ndim != 2 or x2.shape[1] != weights.shape[0]:
		raise ValueError(f"linear input shape {x2.shape} does not match weights shape {weights.shape} [in x out]")
	out = accumulate_rows(x2, weights)
	if bias is not None:
		if bias.shape != (weights.shape[1],):
			raise ValueError(f"linear bias shape {bias.shape} does not match weights shape {weights.shape}")
		out += bias.astype(out.dtype, copy=False)
	return out


def conv2d(input: Tensor, params: ConvParams, counter: MacCounter, tag: str = 'conv2d') -> Tensor:
	"""Convolution plus bias; charges k^2 * c_i MACs per output element"""
	x4, squeeze = as_batch(input.data)
	out = conv2d_array(x4, params.weights.data, params.bias.data, params.stride, params.padding)
	counter.add(tag, out.size * params.macs_per_output())
	return Tensor(out[0] if squeeze else out)


def dwconv2d(input: Tensor, filters: Tensor, counter: MacCounter, tag: str = 'dwconv2d',
			 charged_elements: Optional[int] = None) -> Tensor:
	"""Depthwise convolution.

	``charged_elements`` lets the caller apply a sparse accounting contract;
	by default every output element costs K^2 MACs.
	"""
	if filters.rank != 4:
		raise ValueError(f"depthwise filters must be [K x K x 1 x c], got {filters.shape}")
	x4, squeeze = as_batch(input.data)
	out = dwconv2d_array(x4, filters.data)
	elements = out.size if charged_elements is None else int(charged_elements)
	counter.add(tag, elements * filters.shape[0] * filters.shape[1])
	return Tensor(out[0] if squeeze else out)


def batch_norm(input: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor, running_var: Tensor,
			   eps: float = BN_EPS, training: bool = False, momentum: Optional[float] = BN_MOMENTUM) -> Tensor:
	"""Batch normalization.

	Inference uses the running statistics. Training normalizes with batch
	statistics and updates ``running_mean``/``running_var`` in place.
	"""
	channels = input.shape[channel_axis(input.rank)]
	for label, vector in (('gamma', gamma), ('beta', beta), ('running_mean', running_mean), ('running_var', running_var)):
		if vector.shape != (channels,):
			raise ValueError(f"batch_norm {label} shape {vector.shape} does not match input shape {input.shape}")
	if training:
		mean, var, count = batch_moments(input.data)
		out = bn_affine(input.data, gamma.data, beta.data, mean, var, eps)
		update_running(running_mean.data, running_var.data, mean, var, count, momentum)
		return Tensor(out)
	if np.any(running_var.data <= 0):
		raise ValueError(f"batch_norm running variance must be positive, got min {running_var.data.min()}")
	return Tensor(bn_affine(input.data, gamma.data, beta.data, running_mean.data, running_var.data, eps))


def relu(input: Tensor, cap: Optional[float] = None) -> Tensor:
	return Tensor(relu_array(input.data, cap))


def maxpool2x2(input: Tensor) -> Tensor:
	x4, squeeze = as_batch(input.data)
	out, _ = maxpool2x2_array(x4)
	return Tensor(out[0] if squeeze else out)


def linear(input: Tensor, weights: Tensor, bias: Optional[Tensor], counter: MacCounter, tag: str = 'linear') -> Tensor:
	"""y = x . W + b with W stored [in x out]; charges in * out MACs per sample"""
	# rank 1 and C x H x W are one sample; rank 2 and 4 lead with the batch axis
	single = input.rank in (1, 3)
	x2 = input.data.reshape(1, -1) if single else input.data.reshape(input.shape[0], -1)
	out = linear_array(x2, weights.data, None if bias is None else bias.data)
	counter.add(tag, x2.shape[0] * weights.shape[0] * weights.shape[1])
	return Tensor(out[0] if single else out)

"""
Service for zero-activation prediction
"""
import logging
from typing import Optional, Union

import numpy as np

from src.models.pattern import PatternMask
from src.models.tensor import ConvParams, MacCounter, Tensor
from src.models.zap_unit import (
	PREDICTOR_KERNEL, BatchNormParams, MispredictionHistogram, PredictionOutcome, ZapUnit,
)
from src.utils import kernels
from src.utils.patterns import get_pattern, spatial_mask

logger = logging.getLogger(__name__)


class ZapService:
	"""Service for zero-activation prediction and the three-step predicted convolution"""

	@staticmethod
	def init_unit(channels: int, pattern: Union[str, PatternMask], seed: int = 0) -> ZapUnit:
		"""
		Create an untrained predictor

		Args:
			channels: Output channels of the host layer (c_o)
			pattern: Pattern id or PatternMask
			seed: Seed for the filter initialization

		Returns:
			ZapUnit with fan-in uniform filters and identity batch norms
		"""
		if channels < 1:
			raise ValueError(f"predictor needs at least one channel, got {channels}")
		if not isinstance(pattern, PatternMask):
			pattern = get_pattern(pattern)
		rng = np.random.default_rng(seed)
		bound = 1.0 / np.sqrt(PREDICTOR_KERNEL * PREDICTOR_KERNEL)
		shape = (PREDICTOR_KERNEL, PREDICTOR_KERNEL, 1, channels)
		return ZapUnit(
			pattern=pattern,
			dw1=rng.uniform(-bound, bound, size=shape).astype(np.float32),
			bn1=BatchNormParams.identity(channels),
			dw2=rng.uniform(-bound, bound, size=shape).astype(np.float32),
			bn2=BatchNormParams.identity(channels),
		)

	@staticmethod
	def predictor_forward(x4: np.ndarray, unit: ZapUnit) -> np.ndarray:
		"""dw-conv, BN, ReLU, dw-conv, BN with running statistics"""
		hidden = kernels.dwconv2d_array(x4, unit.dw1)
		hidden = kernels.bn_affine(hidden, unit.bn1.gamma, unit.bn1.beta, unit.bn1.running_mean,
								   unit.bn1.running_var, unit.bn1.eps)
		hidden = kernels.relu_array(hidden)
		hidden = kernels.dwconv2d_array(hidden, unit.dw2)
		return kernels.bn_affine(hidden, unit.bn2.gamma, unit.bn2.beta, unit.bn2.running_mean,
								 unit.bn2.running_var, unit.bn2.eps)

	@staticmethod
	def predict_mask(partial_ofm: Tensor, unit: ZapUnit, counter: MacCounter, tag: str = 'layer') -> Tensor:
		"""
		Run the predictor on X_o[I_s] and return the raw map M

		The first depthwise layer is charged K^2 per I_s element and the second
		K^2 per I_t element, so each ofm element costs K^2 MACs in total.
		"""
		x4, squeeze = kernels.as_batch(partial_ofm.data)
		if x4.shape[1] != unit.channels:
			raise ValueError(
				f"partial ofm shape {partial_ofm.shape} has {x4.shape[1]} channels but the predictor "
				f"expects {unit.channels}"
			)
		n, channels, h_o, w_o = x4.shape
		s_map = spatial_mask(unit.pattern, h_o, w_o)
		computed = int(s_map.sum()) * n * channels
		predicted = s_map.size * n * channels - computed
		macs_per_element = unit.kernel * unit.kernel
		counter.add(f'{tag}.zap', computed * macs_per_element)
		counter.add(f'{tag}.zap', predicted * macs_per_element)
		raw = ZapService.predictor_forward(x4, unit)
		return Tensor(raw[0] if squeeze else raw)

	@staticmethod
	def binarize(m: Union[Tensor, np.ndarray], sigma: float) -> np.ndarray:
		"""M^sigma = M > sigma; True means predicted non-zero, compute it"""
		values = m.data if isinstance(m, Tensor) else np.asarray(m)
		return values > sigma

	@staticmethod
	def predicted_conv(input: Tensor, params: ConvParams, unit: ZapUnit, counter: MacCounter,
					   bn: Optional[BatchNormParams] = None, cap: Optional[float] = None, tag: str = 'layer',
					   true_ofm: Optional[Tensor] = None):
		"""
		Three-step convolution of a host block conv -> [BN] -> ReLU

		Step one computes I_s, step two predicts I_t from the partial ofm and
		step three computes only the I_t elements predicted non-zero. Skipped
		elements are exactly zero.

		Args:
			input: ifm, C x H x W or N x C x H x W
			params: Host convolution (stride 1)
			unit: Enabled predictor; its sigma is the threshold
			counter: Charged '<tag>.conv' for computed elements and '<tag>.zap' for the predictor
			bn: Host batch norm between the conv and the ReLU, if any
			cap: Host ReLU cap, if any
			tag: Layer name used in counter tags
			true_ofm: Dense post-ReLU ofm; when given, mispredictions are listed

		Returns:
			(post-ReLU ofm Tensor, PredictionOutcome)
		"""
		if not unit.enabled:
			raise ValueError(f"predictor for '{tag}' is disabled")
		if params.stride != 1:
			raise ValueError(f"predicted convolution needs stride 1, '{tag}' has stride {params.stride}")
		if unit.channels != params.out_channels:
			raise ValueError(
				f"predictor for '{tag}' has {unit.channels} channels but weights shape "
				f"{params.weights.shape} produce {params.out_channels}"
			)
		x4, squeeze = kernels.as_batch(input.data)
		weights, bias = params.weights.data, params.bias.data
		n = x4.shape[0]
		h_o = kernels.output_extent(x4.shape[2], params.kernel, 1, params.padding)
		w_o = kernels.output_extent(x4.shape[3], params.kernel, 1, params.padding)
		s_map = spatial_mask(unit.pattern, h_o, w_o)

		def finish(raw: np.ndarray) -> np.ndarray:
			if bn is not None:
				raw = kernels.bn_affine(raw, bn.gamma, bn.beta, bn.running_mean, bn.running_var, bn.eps)
			return kernels.relu_array(raw, cap)

		# step 1: X_o[I_s]
		positions_s = np.broadcast_to(s_map, (n, h_o, w_o))
		raw_s = kernels.conv2d_array(x4, weights, bias, 1, params.padding, positions=positions_s)
		counter.add(f'{tag}.conv', int(s_map.sum()) * n * params.out_channels * params.macs_per_output())
		partial = np.where(s_map, finish(raw_s), np.float32(0.0))

		# step 2: M and M^sigma
		raw_map = ZapService.predict_mask(Tensor(partial), unit, counter, tag).data
		target = np.broadcast_to(~s_map, partial.shape)
		predicted = ZapService.binarize(raw_map, unit.sigma)
		compute = target & predicted

		# step 3: X_o[I_t] where predicted non-zero
		raw_t = kernels.conv2d_array(x4, weights, bias, 1, params.padding, positions=compute.any(axis=1))
		computed = int(compute.sum())
		counter.add(f'{tag}.conv', computed * params.macs_per_output())
		raw = np.where(s_map, raw_s, raw_t)
		out = np.where(s_map | compute, finish(raw), np.float32(0.0))

		mispredictions = []
		if true_ofm is not None:
			truth = true_ofm.data.reshape(out.shape)
			missed = target & ~predicted & (truth > 0)
			for position in np.argwhere(missed):
				value = float(truth[tuple(position)])
				position = position[1:] if squeeze else position
				mispredictions.append((tuple(int(p) for p in position), value))

		outcome = PredictionOutcome(
			predicted_mask=predicted[0] if squeeze else predicted,
			target_mask=np.array(target[0] if squeeze else target),
			computed=computed,
			skipped=int(target.sum()) - computed,
			raw_map=raw_map[0] if squeeze else raw_map,
			mispredictions=mispredictions,
		)
		return Tensor(out[0] if squeeze else out), outcome

	@staticmethod
	def misprediction_histogram(outcome: PredictionOutcome, true_ofm: Tensor, bin_width: float,
								bins: Optional[int] = None) -> MispredictionHistogram:
		"""
		Histogram of true non-zero values that were predicted zero

		Args:
			outcome: Outcome of a predicted convolution on the same input
			true_ofm: Dense post-ReLU ofm
			bin_width: Width of each value bin (> 0)
			bins: Fixed bin count; values beyond the last bin land in it

		Returns:
			MispredictionHistogram with shares of the ofm element count
		"""
		if bin_width <= 0:
			raise ValueError(f"bin width must be positive, got {bin_width}")
		truth = true_ofm.data
		if truth.shape != outcome.target_mask.shape:
			raise ValueError(f"true ofm shape {truth.shape} does not match outcome shape {outcome.target_mask.shape}")
		values = truth[outcome.skipped_mask & (truth > 0)]
		index = np.floor(values / bin_width).astype(np.int64)
		if bins is None:
			bins = int(index.max()) + 1 if index.size else 0
		elif index.size:
			index = np.minimum(index, bins - 1)
		counts = np.bincount(index, minlength=bins)[:bins] if bins else np.zeros(0, dtype=np.int64)
		return MispredictionHistogram(
			bin_width=float(bin_width),
			shares=counts / truth.size,
			counts=counts,
			elements=int(truth.size),
		)

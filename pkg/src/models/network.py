"""
Model for a built network: spec, host parameters, predictors and layer shapes
"""
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from src.models.model_spec import ModelSpec
from src.models.tensor import ConvParams, Tensor
from src.models.zap_unit import BatchNormParams, ZapUnit

RUNNING_STATS = ('running_mean', 'running_var')


@dataclass
class Network:
	"""A sequential CNN ready to run.

	``params`` maps "<layer>.<name>" to arrays; BN running statistics live
	there too and are updated in place. ``shapes`` holds each layer's output
	shape (C, H, W) or (features,).
	"""

	spec: ModelSpec
	params: Dict[str, np.ndarray]
	zaps: Dict[str, ZapUnit] = field(default_factory=dict)
	shapes: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

	def conv_params(self, name: str) -> ConvParams:
		layer = self.spec.layer(name)
		return ConvParams(
			weights=Tensor(self.params[f'{name}.weight']),
			bias=Tensor(self.params[f'{name}.bias']),
			stride=layer.stride,
			padding=layer.padding,
		)

	def bn_params(self, name: str) -> BatchNormParams:
		"""BN parameters sharing storage with ``params``"""
		return BatchNormParams(
			gamma=self.params[f'{name}.gamma'],
			beta=self.params[f'{name}.beta'],
			running_mean=self.params[f'{name}.running_mean'],
			running_var=self.params[f'{name}.running_var'],
		)

	def bn_layers(self) -> List[str]:
		return [layer.name for layer in self.spec.layers if layer.kind == 'bn']

	def trainable_names(self) -> List[str]:
		return [name for name in self.params if not name.endswith(RUNNING_STATS)]

	def parameter_count(self, include_zaps: bool = False) -> int:
		count = sum(int(self.params[name].size) for name in self.trainable_names())
		if include_zaps:
			count += sum(unit.parameter_count() for unit in self.zaps.values())
		return count

	def baseline_conv_macs(self) -> Dict[str, int]:
		"""Per-image MACs of every conv layer computed densely"""
		macs = {}
		for layer in self.spec.conv_layers():
			channels, height, width = self.shapes[layer.name]
			macs[layer.name] = channels * height * width * layer.kernel * layer.kernel * layer.in_channels
		return macs

	def copy(self) -> 'Network':
		return Network(
			spec=self.spec,
			params={name: value.copy() for name, value in self.params.items()},
			zaps={name: unit.copy() for name, unit in self.zaps.items()},
			shapes=dict(self.shapes),
		)


@dataclass
class EvaluationResult:
	"""Top-1 accuracy and MAC counts of one pass over a dataset"""

	accuracy: float
	images: int
	macs: Dict[str, int]
	baseline_conv_macs: int

	@property
	def total_macs(self) -> int:
		return sum(self.macs.values())

	@property
	def conv_macs(self) -> int:
		"""Convolution plus predictor MACs"""
		return sum(value for tag, value in self.macs.items() if tag.endswith(('.conv', '.zap')))

	@property
	def mac_reduction(self) -> float:
		"""1 - after / before over convolution layers"""
		return 1.0 - self.conv_macs / self.baseline_conv_macs if self.baseline_conv_macs else 0.0

	def per_image(self) -> Dict[str, float]:
		return {tag: value / self.images for tag, value in sorted(self.macs.items())}

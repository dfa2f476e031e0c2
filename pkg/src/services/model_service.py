import os
import json
import logging
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from src.models.dataset import TinyImageSet
from src.models.model_spec import ModelSpec
from src.models.network import EvaluationResult, Network
from src.models.tensor import MacCounter, Tensor
from src.models.zap_unit import BatchNormParams, ZapUnit
from src.services.zap_service import ZapService
from src.utils import autograd as ag
from src.utils import kernels
from src.utils.optimizers import SgdState, sgd_step
from src.utils.patterns import get_pattern, spatial_mask
from src.utils.serialization import load_container, save_container

logger = logging.getLogger(__name__)

try:
	from tqdm import tqdm
except ImportError:
	def tqdm(iterable, *args, **kwargs):
		return iterable

ZAP_PREFIX = 'zap.'
ZAP_ARRAYS = ('dw1', 'dw2')
ZAP_NORMS = ('bn1', 'bn2')


class ModelService:
	"""Service for building, running, training and persisting host networks"""

	@staticmethod
	def infer_shapes(spec: ModelSpec) -> Dict[str, Tuple[int, ...]]:
		"""
		Check layer compatibility and return each layer's output shape

		Raises:
			ValueError naming the first layer whose input does not fit
		"""
		shape: Tuple[int, ...] = tuple(spec.input_shape)
		shapes = {}
		seen = set()
		for layer in spec.layers:
			if layer.name in seen:
				raise ValueError(f"duplicate layer name '{layer.name}'")
			seen.add(layer.name)
			if layer.kind == 'conv':
				if len(shape) != 3:
					raise ValueError(f"conv layer '{layer.name}' needs a C x H x W input, got {shape}")
				if layer.in_channels != shape[0]:
					raise ValueError(f"conv layer '{layer.name}' expects {layer.in_channels} channels, input has shape {shape}")
				if not layer.kernel or layer.kernel < 1 or not layer.out_channels:
					raise ValueError(f"conv layer '{layer.name}' needs kernel and out_channels")
				h_o = kernels.output_extent(shape[1], layer.kernel, layer.stride, layer.padding)
				w_o = kernels.output_extent(shape[2], layer.kernel, layer.stride, layer.padding)
				if h_o < 1 or w_o < 1:
					raise ValueError(f"conv layer '{layer.name}' kernel {layer.kernel} does not fit input shape {shape}")
				shape = (layer.out_channels, h_o, w_o)
			elif layer.kind == 'bn':
				if layer.channels != shape[0]:
					raise ValueError(f"bn layer '{layer.name}' has {layer.channels} channels, input has shape {shape}")
			elif layer.kind == 'pool':
				if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
					raise ValueError(f"pool layer '{layer.name}' needs spatial extents >= 2, got {shape}")
				shape = (shape[0], shape[1] // 2, shape[2] // 2)
			elif layer.kind == 'linear':
				features = int(np.prod(shape))
				if layer.in_features != features:
					raise ValueError(f"linear layer '{layer.name}' expects {layer.in_features} features, input has shape {shape}")
				shape = (layer.out_features,)
			shapes[layer.name] = shape
		if shape != (spec.num_classes,):
			raise ValueError(f"model output shape {shape} does not match {spec.num_classes} classes")
		return shapes

	@staticmethod
	def validate_zaps(spec: ModelSpec) -> None:
		convs = spec.conv_layers()
		for index, layer in enumerate(convs):
			if not layer.zap:
				continue
			if index == 0:
				raise ValueError(f"the first conv layer '{layer.name}' cannot carry a predictor")
			if layer.stride != 1:
				raise ValueError(f"predictor on '{layer.name}' needs a stride-1 convolution, got stride {layer.stride}")
			if layer.pattern is None:
				raise ValueError(f"predictor on '{layer.name}' has no pattern")
			get_pattern(layer.pattern)
			spec.host_block(layer.name)

	@staticmethod
	def build_model(spec: ModelSpec, seed: int = 0) -> Network:
		"""
		Build a network with freshly initialized parameters

		Conv weights use He-normal initialization, linear weights fan-in uniform,
		batch norms start at identity and predictors via ZapService.init_unit.
		"""
		shapes = ModelService.infer_shapes(spec)
		ModelService.validate_zaps(spec)
		rng = np.random.default_rng(seed)
		params: Dict[str, np.ndarray] = {}
		zaps: Dict[str, ZapUnit] = {}
		for layer in spec.layers:
			if layer.kind == 'conv':
				fan_in = layer.kernel * layer.kernel * layer.in_channels
				shape = (layer.kernel, layer.kernel, layer.in_channels, layer.out_channels)
				params[f'{layer.name}.weight'] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
				params[f'{layer.name}.bias'] = np.zeros(layer.out_channels, dtype=np.float32)
				if layer.zap:
					zaps[layer.name] = ZapService.init_unit(layer.out_channels, layer.pattern, seed=int(rng.integers(2 ** 31)))
			elif layer.kind == 'bn':
				for name, value in BatchNormParams.identity(layer.channels).arrays().items():
					params[f'{layer.name}.{name}'] = value
			elif layer.kind == 'linear':
				bound = 1.0 / np.sqrt(layer.in_features)
				params[f'{layer.name}.weight'] = rng.uniform(-bound, bound, (layer.in_features, layer.out_features)).astype(np.float32)
				params[f'{layer.name}.bias'] = np.zeros(layer.out_features, dtype=np.float32)
		logger.debug(f"Built {spec.name}: {sum(v.size for v in params.values())} host values, {len(zaps)} predictors")
		return Network(spec=spec, params=params, zaps=zaps, shapes=shapes)

	@staticmethod
	def forward(network: Network, images: np.ndarray, counter: Optional[MacCounter] = None,
				use_zaps: bool = True, sigmas: Optional[Dict[str, float]] = None) -> np.ndarray:
		"""
		Inference pass (running BN statistics)

		Zapped host blocks run as predicted convolutions unless ``use_zaps`` is
		False or their sigma is -inf, in which case they run densely.

		Args:
			network: Network to run
			images: N x C x H x W float32 batch
			counter: MAC counter; tags are '<layer>.conv', '<layer>.zap' and '<layer>.linear'
			use_zaps: Run enabled predictors
			sigmas: Per-layer thresholds overriding each unit's sigma

		Returns:
			N x classes logits
		"""
		counter = counter if counter is not None else MacCounter()
		sigmas = sigmas or {}
		x = np.asarray(images, dtype=np.float32)
		consumed: Set[str] = set()
		for layer in network.spec.layers:
			if layer.name in consumed:
				continue
			if layer.kind == 'conv':
				unit = network.zaps.get(layer.name) if use_zaps else None
				sigma = sigmas.get(layer.name, unit.sigma) if unit is not None else None
				if unit is not None and unit.enabled and sigma != float('-inf'):
					bn_layer, relu_layer = network.spec.host_block(layer.name)
					bn = network.bn_params(bn_layer.name) if bn_layer is not None else None
					out, _ = ZapService.predicted_conv(
						Tensor(x), network.conv_params(layer.name), unit.with_sigma(sigma), counter,
						bn=bn, cap=relu_layer.cap, tag=layer.name,
					)
					x = out.data
					consumed.update({relu_layer.name} | ({bn_layer.name} if bn_layer is not None else set()))
				else:
					x = kernels.conv2d(Tensor(x), network.conv_params(layer.name), counter, tag=f'{layer.name}.conv').data
			elif layer.kind == 'bn':
				bn = network.bn_params(layer.name)
				x = kernels.batch_norm(
					Tensor(x), Tensor(bn.gamma), Tensor(bn.beta), Tensor(bn.running_mean), Tensor(bn.running_var), bn.eps,
				).data
			elif layer.kind == 'relu':
				x = kernels.relu(Tensor(x), layer.cap).data
			elif layer.kind == 'pool':
				x = kernels.maxpool2x2(Tensor(x)).data
			elif layer.kind == 'linear':
				x = kernels.linear(
					Tensor(x.reshape(x.shape[0], -1)), Tensor(network.params[f'{layer.name}.weight']),
					Tensor(network.params[f'{layer.name}.bias']), counter, tag=f'{layer.name}.linear',
				).data
		return x

	@staticmethod
	def zap_gate(unit: ZapUnit, activation: np.ndarray, sigma: float) -> np.ndarray:
		"""0/1 gate over a post-ReLU ofm: 1 on I_s and where the predictor says compute"""
		s_map = spatial_mask(unit.pattern, activation.shape[2], activation.shape[3])
		partial = np.where(s_map, activation, 0).astype(np.float32)
		raw = ZapService.predictor_forward(partial, unit)
		return s_map | ZapService.binarize(raw, sigma)

	@staticmethod
	def forward_on_tape(network: Network, tape: ag.GradTape, images: np.ndarray, batch_stats: bool = False,
						update_stats: bool = False, momentum: Optional[float] = kernels.BN_MOMENTUM, step: int = 1,
						zap_sigmas: Optional[Dict[str, float]] = None,
						captures: Optional[Dict[str, Dict[str, np.ndarray]]] = None) -> ag.Node:
		"""
		Differentiable pass recording host parameters on ``tape``

		Args:
			network: Network whose host parameters go on the tape
			tape: Tape to record on (disabled tapes give forward-only passes)
			images: N x C x H x W float32 batch
			batch_stats: Normalize with batch statistics instead of running ones
			update_stats: Fold batch statistics into the running ones
			momentum: Running-statistics momentum; None is the cumulative average
			step: 1-based batch index for the cumulative average
			zap_sigmas: Per-layer thresholds; those layers' post-ReLU ofm is
				gated by its predictor as a constant mask
			captures: Dict keyed by layer name to fill with 'ifm' and 'ofm'
				(post-ReLU, ungated)

		Returns:
			Logits node
		"""
		zap_sigmas = zap_sigmas or {}
		x = tape.constant(np.asarray(images, dtype=np.float32))
		current_conv = None
		for layer in network.spec.layers:
			name = layer.name
			if layer.kind == 'conv':
				if captures is not None and name in captures:
					captures[name]['ifm'] = x.value
				current_conv = name
				x = ag.conv2d(tape, x, tape.parameter(f'{name}.weight', network.params[f'{name}.weight']),
							  tape.parameter(f'{name}.bias', network.params[f'{name}.bias']), layer.stride, layer.padding)
			elif layer.kind == 'bn':
				gamma = tape.parameter(f'{name}.gamma', network.params[f'{name}.gamma'])
				beta = tape.parameter(f'{name}.beta', network.params[f'{name}.beta'])
				running_mean = network.params[f'{name}.running_mean']
				running_var = network.params[f'{name}.running_var']
				running = None if batch_stats else (running_mean, running_var)
				x, mean, var, count = ag.batch_norm(tape, x, gamma, beta, kernels.BN_EPS, running)
				if batch_stats and update_stats:
					kernels.update_running(running_mean, running_var, mean, var, count, momentum, step)
			elif layer.kind == 'relu':
				x = ag.relu(tape, x, layer.cap)
				if current_conv is not None:
					if captures is not None and current_conv in captures:
						captures[current_conv]['ofm'] = x.value
					if current_conv in zap_sigmas and current_conv in network.zaps:
						gate = ModelService.zap_gate(network.zaps[current_conv], x.value, zap_sigmas[current_conv])
						x = ag.gate(tape, x, gate)
					current_conv = None
			elif layer.kind == 'pool':
				x = ag.maxpool2x2(tape, x)
			elif layer.kind == 'linear':
				if x.value.ndim > 2:
					x = ag.flatten(tape, x)
				x = ag.linear(tape, x, tape.parameter(f'{name}.weight', network.params[f'{name}.weight']),
							  tape.parameter(f'{name}.bias', network.params[f'{name}.bias']))
		return x

	@staticmethod
	def evaluate(network: Network, dataset: TinyImageSet, batch_size: int = 128, use_zaps: bool = True,
				 sigmas: Optional[Dict[str, float]] = None) -> EvaluationResult:
		"""Top-1 accuracy and MAC counts over a dataset"""
		counter = MacCounter()
		correct = 0
		for images, labels in tqdm(dataset.batches(batch_size), desc="Evaluating", leave=False):
			logits = ModelService.forward(network, images, counter, use_zaps=use_zaps, sigmas=sigmas)
			correct += int((logits.argmax(axis=1) == labels).sum())
		baseline = sum(network.baseline_conv_macs().values()) * len(dataset)
		return EvaluationResult(
			accuracy=correct / len(dataset),
			images=len(dataset),
			macs=counter.snapshot(),
			baseline_conv_macs=baseline,
		)

	@staticmethod
	def train(network: Network, dataset: TinyImageSet, epochs: int, batch_size: int = 32,
			  state: Optional[SgdState] = None, seed: int = 0, momentum: Optional[float] = kernels.BN_MOMENTUM,
			  zap_sigmas: Optional[Dict[str, float]] = None) -> List[float]:
		"""
		Train host parameters with SGD on cross-entropy

		Predictors are never updated; with ``zap_sigmas`` their masks gate the
		host activations as constants.

		Returns:
			Mean training loss per epoch
		"""
		state = state or SgdState()
		rng = np.random.default_rng(seed)
		history = []
		for epoch in range(epochs):
			losses = []
			for images, labels in tqdm(dataset.batches(batch_size, rng), desc=f"Epoch {epoch + 1}/{epochs}", leave=False):
				tape = ag.GradTape()
				logits = ModelService.forward_on_tape(network, tape, images, batch_stats=True, update_stats=True,
													  momentum=momentum, zap_sigmas=zap_sigmas)
				loss = ag.cross_entropy_loss(tape, logits, labels)
				grads = ag.backward(loss, tape)
				updated = sgd_step({name: network.params[name] for name in grads}, grads, state)
				network.params.update(updated)
				losses.append(float(loss.value))
			history.append(float(np.mean(losses)))
			logger.info(f"Epoch {epoch + 1}/{epochs}: loss {history[-1]:.4f}")
		return history

	@staticmethod
	def network_arrays(network: Network) -> Dict[str, np.ndarray]:
		"""Every stored array: host parameters, then 'zap.<layer>.*' entries"""
		arrays = dict(network.params)
		for layer, unit in network.zaps.items():
			for name in ZAP_ARRAYS:
				arrays[f'{ZAP_PREFIX}{layer}.{name}'] = getattr(unit, name)
			for norm in ZAP_NORMS:
				for name, value in getattr(unit, norm).arrays().items():
					arrays[f'{ZAP_PREFIX}{layer}.{norm}.{name}'] = value
		return arrays

	@staticmethod
	def save_network(network: Network, path: str) -> str:
		"""
		Save weights to ``path`` (.zapw) and the model spec to a .json sidecar

		Returns:
			Path of the spec sidecar
		"""
		spec_path = os.path.splitext(path)[0] + '.json'
		save_container(path, ModelService.network_arrays(network))
		with open(spec_path, 'w') as f:
			json.dump(network.spec.to_dict(), f, indent=2)
		logger.info(f"Saved {network.spec.name} to {path}")
		return spec_path

	@staticmethod
	def load_network(path: str) -> Network:
		spec_path = os.path.splitext(path)[0] + '.json'
		if not os.path.isfile(spec_path):
			raise ValueError(f"model spec not found next to weights: {spec_path}")
		with open(spec_path, 'r') as f:
			spec = ModelSpec.from_dict(json.load(f))
		arrays = load_container(path)
		network = ModelService.build_model(spec)
		for name in network.params:
			if name not in arrays:
				raise ValueError(f"weight container {path} has no entry '{name}'")
			if arrays[name].shape != network.params[name].shape:
				raise ValueError(f"entry '{name}' has shape {arrays[name].shape}, expected {network.params[name].shape}")
			network.params[name] = arrays[name].copy()
		for layer, unit in network.zaps.items():
			key = f'{ZAP_PREFIX}{layer}'
			try:
				norms = {
					norm: BatchNormParams(**{name: arrays[f'{key}.{norm}.{name}'].copy()
											 for name in BatchNormParams.identity(1).arrays()})
					for norm in ZAP_NORMS
				}
				network.zaps[layer] = ZapUnit(
					pattern=unit.pattern, dw1=arrays[f'{key}.dw1'].copy(), bn1=norms['bn1'],
					dw2=arrays[f'{key}.dw2'].copy(), bn2=norms['bn2'],
				)
			except KeyError as e:
				raise ValueError(f"weight container {path} has no entry {e}")
		logger.debug(f"Loaded {spec.name} from {path}")
		return network

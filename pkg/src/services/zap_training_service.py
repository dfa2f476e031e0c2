"""
Service for training predictors against their host layers
"""
import os
import logging
import concurrent.futures
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.models.dataset import TinyImageSet
from src.models.network import Network
from src.models.tensor import MacCounter, Tensor
from src.models.zap_unit import LayerCapture, PredictorQuality, ZapUnit
from src.services.model_service import ModelService
from src.services.zap_service import ZapService
from src.utils import autograd as ag
from src.utils import kernels
from src.utils.optimizers import AdamState, SgdState, adam_step
from src.utils.patterns import spatial_mask
from src.utils.serialization import load_container, save_container

logger = logging.getLogger(__name__)

try:
	from tqdm import tqdm
except ImportError:
	def tqdm(iterable, *args, **kwargs):
		return iterable

PREDICTOR_CAP = 1.0


class ZapTrainingService:
	"""Service for label-free predictor training and host BN recalibration"""

	@staticmethod
	def capture_pairs(network: Network, zapped_layers: Iterable[str], images: np.ndarray,
					  batch_size: int = 128) -> Dict[str, LayerCapture]:
		"""
		Record each layer's ifm and true post-ReLU ofm with all predictors bypassed

		Args:
			network: Host network (running BN statistics are used)
			zapped_layers: Layers to capture
			images: N x C x H x W float32 images

		Returns:
			Dict of layer name to LayerCapture
		"""
		layers = list(zapped_layers)
		if not layers:
			return {}
		chunks: Dict[str, Dict[str, List[np.ndarray]]] = {layer: {'ifm': [], 'ofm': []} for layer in layers}
		for start in range(0, images.shape[0], batch_size):
			captures = {layer: {} for layer in layers}
			ModelService.forward_on_tape(network, ag.GradTape(enabled=False), images[start:start + batch_size],
										 captures=captures)
			for layer in layers:
				chunks[layer]['ifm'].append(captures[layer]['ifm'])
				chunks[layer]['ofm'].append(captures[layer]['ofm'])
		result = {}
		for layer in layers:
			ifm = np.concatenate(chunks[layer]['ifm'])
			ofm = np.concatenate(chunks[layer]['ofm'])
			pattern = network.zaps[layer].pattern if layer in network.zaps else None
			if pattern is None:
				raise ValueError(f"layer '{layer}' has no predictor to capture for")
			s_map = spatial_mask(pattern, ofm.shape[2], ofm.shape[3])
			result[layer] = LayerCapture(
				layer=layer,
				ifm=ifm,
				ofm=ofm,
				partial=np.where(s_map, ofm, np.float32(0.0)),
				target_mask=~s_map,
			)
			logger.debug(f"Captured {layer}: ifm {ifm.shape}, ofm {ofm.shape}")
		return result

	@staticmethod
	def spill(captures: Dict[str, LayerCapture], directory: str) -> List[str]:
		"""Write captures to '<layer>.capture.zapw' files; returns the paths"""
		paths = []
		for layer, capture in captures.items():
			path = os.path.join(directory, f'{layer}.capture.zapw')
			save_container(path, {
				f'{layer}.ifm': capture.ifm,
				f'{layer}.ofm': capture.ofm,
				f'{layer}.target_mask': capture.target_mask.astype(np.float32),
			})
			paths.append(path)
		return paths

	@staticmethod
	def load_spilled(path: str) -> LayerCapture:
		arrays = load_container(path)
		layer = os.path.basename(path)[:-len('.capture.zapw')]
		target_mask = arrays[f'{layer}.target_mask'] > 0.5
		ofm = arrays[f'{layer}.ofm']
		return LayerCapture(
			layer=layer,
			ifm=arrays[f'{layer}.ifm'],
			ofm=ofm,
			partial=np.where(target_mask, np.float32(0.0), ofm),
			target_mask=target_mask,
		)

	@staticmethod
	def predictor_loss(tape: ag.GradTape, unit: ZapUnit, partial: np.ndarray, targets: np.ndarray,
					   target_mask: np.ndarray) -> Tuple[ag.Node, list]:
		"""
		Training-mode predictor pass with the final ReLU capped at 1

		Returns:
			(MSE over I_t, [(bn params, mean, var, count) per BN])
		"""
		params = {name: tape.parameter(name, value) for name, value in unit.trainable().items()}
		x = tape.constant(partial)
		x = ag.dwconv2d(tape, x, params['dw1'])
		x, mean1, var1, count1 = ag.batch_norm(tape, x, params['bn1.gamma'], params['bn1.beta'], unit.bn1.eps)
		x = ag.relu(tape, x)
		x = ag.dwconv2d(tape, x, params['dw2'])
		x, mean2, var2, count2 = ag.batch_norm(tape, x, params['bn2.gamma'], params['bn2.beta'], unit.bn2.eps)
		x = ag.relu(tape, x, PREDICTOR_CAP)
		loss = ag.mse_loss(tape, x, targets, target_mask[None, None])
		return loss, [(unit.bn1, mean1, var1, count1), (unit.bn2, mean2, var2, count2)]

	@staticmethod
	def train_zap(unit: ZapUnit, capture: LayerCapture, epochs: int = 5, adam: Optional[AdamState] = None,
				  batch_size: int = 32, seed: int = 0,
				  momentum: Optional[float] = kernels.BN_MOMENTUM) -> Tuple[ZapUnit, List[float]]:
		"""
		Fit a predictor to (ofm > 0) on I_t; no labels are involved

		Args:
			unit: Predictor to start from (not modified)
			capture: Snapshot of the host layer
			epochs: Passes over the capture
			adam: Optimizer state (defaults: lr 1e-3, betas 0.9/0.999)
			batch_size: Images per step
			seed: Shuffling seed
			momentum: Predictor BN running-statistics momentum

		Returns:
			(trained unit, mean loss per epoch)
		"""
		if len(capture) == 0:
			raise ValueError(f"no captured samples for layer '{capture.layer}'")
		adam = adam or AdamState()
		rng = np.random.default_rng(seed)
		trained = unit.copy()
		targets = capture.targets
		history = []
		for epoch in range(epochs):
			losses = []
			order = rng.permutation(len(capture))
			for start in range(0, len(capture), batch_size):
				index = order[start:start + batch_size]
				tape = ag.GradTape()
				loss, stats = ZapTrainingService.predictor_loss(
					tape, trained, capture.partial[index], targets[index], capture.target_mask,
				)
				grads = ag.backward(loss, tape)
				updated = adam_step(trained.trainable(), grads, adam)
				trained.dw1, trained.dw2 = updated['dw1'], updated['dw2']
				for norm, key in ((trained.bn1, 'bn1'), (trained.bn2, 'bn2')):
					norm.gamma, norm.beta = updated[f'{key}.gamma'], updated[f'{key}.beta']
				for norm, mean, var, count in stats:
					kernels.update_running(norm.running_mean, norm.running_var, mean, var, count, momentum)
				losses.append(float(loss.value))
			history.append(float(np.mean(losses)))
			logger.debug(f"{capture.layer} predictor epoch {epoch + 1}/{epochs}: loss {history[-1]:.5f}")
		return trained, history

	@staticmethod
	def train_all(network: Network, captures: Dict[str, LayerCapture], epochs: int = 5, lr: float = 1e-3,
				  batch_size: int = 32, seed: int = 0, workers: Optional[int] = None) -> Dict[str, List[float]]:
		"""
		Train every captured layer's predictor concurrently and install the results

		Each layer gets its own Adam state and seed; nothing else is shared.

		Returns:
			Loss history per layer
		"""
		workers = workers or os.cpu_count() or 1
		histories: Dict[str, List[float]] = {}
		trained: Dict[str, ZapUnit] = {}
		with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
			futures = {
				executor.submit(
					ZapTrainingService.train_zap, network.zaps[layer], capture, epochs,
					AdamState(lr=lr), batch_size, seed + index,
				): layer
				for index, (layer, capture) in enumerate(sorted(captures.items()))
			}
			for future in tqdm(concurrent.futures.as_completed(futures), total=len(futures), desc="Training predictors"):
				layer = futures[future]
				trained[layer], histories[layer] = future.result()
				logger.info(f"Trained predictor for {layer}: loss {histories[layer][0]:.4f} -> {histories[layer][-1]:.4f}")
		for layer, unit in trained.items():
			network.zaps[layer] = unit
		return histories

	@staticmethod
	def evaluate_predictor(unit: ZapUnit, capture: LayerCapture, sigma: float = 0.5) -> PredictorQuality:
		"""Zero/non-zero classification of I_t elements at threshold sigma"""
		raw = ZapService.predict_mask(Tensor(capture.partial), unit, MacCounter(), capture.layer).data
		raw = raw.reshape(capture.ofm.shape)
		selected = np.broadcast_to(capture.target_mask, capture.ofm.shape)
		truth = capture.ofm[selected] > 0
		predicted = ZapService.binarize(raw[selected], sigma)
		positives = int(truth.sum())
		negatives = int(truth.size - positives)
		tpr = float((predicted & truth).sum() / positives) if positives else 1.0
		tnr = float((~predicted & ~truth).sum() / negatives) if negatives else 1.0
		return PredictorQuality(
			sigma=sigma,
			true_positive_rate=tpr,
			true_negative_rate=tnr,
			accuracy=float((predicted == truth).mean()) if truth.size else 1.0,
			majority_rate=max(positives, negatives) / truth.size if truth.size else 1.0,
			support=int(truth.size),
		)

	@staticmethod
	def recalibrate_bn(network: Network, batches: Iterable[np.ndarray], sigmas: Optional[Dict[str, float]] = None,
					   momentum: Optional[float] = kernels.BN_MOMENTUM, reset: bool = False) -> Network:
		"""
		Refresh host BN running statistics by forward passes only

		Args:
			network: Network to update in place
			batches: Float image batches
			sigmas: Thresholds of the predictors to run; None or empty runs densely
			momentum: Update momentum; None is the cumulative average over the batches
			reset: Start from mean 0 / variance 1 instead of the current statistics

		Returns:
			The same network
		"""
		bn_layers = network.bn_layers()
		if not bn_layers:
			logger.info("No batch norm layers to recalibrate")
			return network
		if reset:
			for name in bn_layers:
				network.params[f'{name}.running_mean'][...] = 0.0
				network.params[f'{name}.running_var'][...] = 1.0
		active = {layer: sigma for layer, sigma in (sigmas or {}).items() if sigma != float('-inf')}
		steps = 0
		for step, images in enumerate(batches, start=1):
			ModelService.forward_on_tape(network, ag.GradTape(enabled=False), images, batch_stats=True,
										 update_stats=True, momentum=momentum, step=step, zap_sigmas=active)
			steps = step
		logger.info(f"Recalibrated {len(bn_layers)} batch norm layers over {steps} batches")
		return network

	@staticmethod
	def fine_tune(network: Network, dataset: TinyImageSet, epochs: int = 5, sigmas: Optional[Dict[str, float]] = None,
				  state: Optional[SgdState] = None, batch_size: int = 32, seed: int = 0) -> List[float]:
		"""
		Train host parameters with predictor masks as constant gates; predictors stay frozen

		With no sigmas this is plain training.
		"""
		active = {layer: sigma for layer, sigma in (sigmas or {}).items()
				  if layer in network.zaps and sigma != float('-inf')}
		logger.info(f"Fine-tuning for {epochs} epochs with {len(active)} gated layers")
		return ModelService.train(network, dataset, epochs, batch_size, state or SgdState(lr=0.01), seed,
								  zap_sigmas=active)

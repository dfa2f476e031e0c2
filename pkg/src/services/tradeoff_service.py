"""
Service for error statistics, trade-off fits and threshold allocation
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar
from scipy.special import expit

from src.models.dataset import TinyImageSet
from src.models.network import Network
from src.models.tensor import MacCounter, Tensor
from src.models.tradeoff import (
	CurveSet, InterpolatedCurve, LayerCurves, LinearAccuracyModel, OperatingPointEstimate, SigmoidFit,
	SweepPoint, SweepResult, ThresholdSolution,
)
from src.models.zap_unit import MispredictionHistogram
from src.services.model_service import ModelService
from src.services.zap_service import ZapService
from src.services.zap_training_service import ZapTrainingService
from src.utils.patterns import effective_alpha

logger = logging.getLogger(__name__)

try:
	from tqdm import tqdm
except ImportError:
	def tqdm(iterable, *args, **kwargs):
		return iterable

M_SAMPLE_LIMIT = 20000
DEFAULT_BOUNDS = (0.0, 0.5)


class InfeasibleBudgetError(ValueError):
	"""The budget is below the smallest achievable constraint total"""

	def __init__(self, budget: float, minimal_value: float):
		super().__init__(f"budget {budget:.6g} is infeasible; the minimal achievable total is {minimal_value:.6g}")
		self.budget = budget
		self.minimal_value = minimal_value


class TradeoffService:
	"""Service for per-layer error statistics, curve fitting and threshold allocation"""

	@staticmethod
	def layer_error(true_ofm: Union[Tensor, np.ndarray], predicted_ofm: Union[Tensor, np.ndarray]) -> float:
		"""1 - sum(predicted) / sum(true), clamped to [0, 1]; 0 when the true ofm has no mass"""
		truth = np.asarray(true_ofm.data if isinstance(true_ofm, Tensor) else true_ofm, dtype=np.float64)
		predicted = np.asarray(predicted_ofm.data if isinstance(predicted_ofm, Tensor) else predicted_ofm, dtype=np.float64)
		if truth.shape != predicted.shape:
			raise ValueError(f"true ofm shape {truth.shape} does not match predicted shape {predicted.shape}")
		if truth.size and (truth.min() < 0 or predicted.min() < 0):
			raise ValueError("layer error needs non-negative (post-ReLU) feature maps")
		total = truth.sum()
		if total <= 0:
			return 0.0
		return float(np.clip(1.0 - predicted.sum() / total, 0.0, 1.0))

	@staticmethod
	def scale_error(eps: Sequence[float]) -> Tuple[float, float]:
		"""(prod(1 - eps_i), 1 - sum(eps_i))"""
		values = np.asarray(list(eps), dtype=np.float64)
		if values.size and (values.min() < 0 or values.max() >= 1):
			raise ValueError(f"layer errors must lie in [0, 1), got {values.tolist()}")
		return float(np.prod(1.0 - values)), float(1.0 - values.sum())

	@staticmethod
	def zero_prediction_rate(m_samples: Sequence[float], sigma: float) -> float:
		"""Share of predictor values at or below sigma"""
		values = np.sort(np.asarray(m_samples, dtype=np.float64))
		if values.size == 0:
			raise ValueError("zero prediction rate needs at least one predictor value")
		return float(np.searchsorted(values, sigma, side='right') / values.size)

	@staticmethod
	def sample_values(values: np.ndarray, limit: int = M_SAMPLE_LIMIT) -> List[float]:
		"""Sorted, evenly spaced order statistics of at most ``limit`` values"""
		ordered = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
		if ordered.size > limit:
			ordered = ordered[np.linspace(0, ordered.size - 1, limit).round().astype(np.int64)]
		return ordered.tolist()

	@staticmethod
	def collect_curves(network: Network, images: np.ndarray, grid: Sequence[float], batch_size: int = 128) -> CurveSet:
		"""
		Measure eps_i(sigma), MAC_i(sigma) and the zero-prediction rate for every zapped layer

		Each layer sees the ifm of the predictor-free network (teacher forcing),
		so its error is independent of the other layers' thresholds. Because
		computed elements are exact, a predicted ofm equals the true ofm on
		computed elements and zero elsewhere, and all sigmas share one
		predictor pass.

		Returns:
			CurveSet with per-image MAC figures
		"""
		grid = sorted(float(sigma) for sigma in grid)
		if not grid:
			raise ValueError("sigma grid is empty")
		layers = sorted(network.zaps)
		captures = ZapTrainingService.capture_pairs(network, layers, images, batch_size)
		baseline = network.baseline_conv_macs()
		n = images.shape[0]
		curves = {}
		for layer in tqdm(layers, desc="Collecting curves", leave=False):
			unit = network.zaps[layer]
			capture = captures[layer]
			params = network.conv_params(layer)
			raw = np.concatenate([
				ZapService.predictor_forward(capture.partial[start:start + batch_size], unit)
				for start in range(0, n, batch_size)
			])
			selected = np.broadcast_to(capture.target_mask, capture.ofm.shape)
			values = raw[selected].astype(np.float64)
			truth = capture.ofm[selected].astype(np.float64)
			total_mass = float(capture.ofm.astype(np.float64).sum())
			order = np.argsort(values, kind='stable')
			values, truth = values[order], truth[order]
			lost_mass = np.concatenate([[0.0], np.cumsum(truth)])
			_, channels, h_o, w_o = capture.ofm.shape
			elements = channels * h_o * w_o
			computed_s = int((~capture.target_mask).sum()) * channels
			predictor_macs = unit.kernel * unit.kernel * elements
			eps, macs, zero_rates = [], [], []
			for sigma in grid:
				skipped = int(np.searchsorted(values, sigma, side='right'))
				computed_t = values.size - skipped
				eps.append(float(np.clip(lost_mass[skipped] / total_mass, 0.0, 1.0)) if total_mass > 0 else 0.0)
				macs.append((computed_s * n + computed_t) * params.macs_per_output() / n + predictor_macs)
				zero_rates.append(skipped / values.size if values.size else 0.0)
			curves[layer] = LayerCurves(
				layer=layer,
				sigmas=list(grid),
				eps=eps,
				macs=macs,
				zero_rates=zero_rates,
				m_samples=TradeoffService.sample_values(values),
				baseline_macs=int(baseline[layer]),
				predictor_macs=int(predictor_macs),
				macs_per_element=int(params.macs_per_output()),
				alpha=effective_alpha(unit.pattern, h_o, w_o),
			)
			logger.debug(f"{layer}: eps {eps[0]:.4f}..{eps[-1]:.4f}, MACs {macs[0]:.0f}..{macs[-1]:.0f}")
		return CurveSet(curves=curves, total_baseline_macs=int(sum(baseline.values())), images=n)

	@staticmethod
	def measure_sweep(network: Network, dataset: TinyImageSet, grid: Sequence[float], curves: CurveSet,
					  batch_size: int = 128) -> SweepResult:
		"""Accuracy and MAC reduction at each uniform sigma, paired with the curves' summed error"""
		baseline = ModelService.evaluate(network, dataset, batch_size, use_zaps=False)
		result = SweepResult(baseline_accuracy=baseline.accuracy)
		layers = sorted(network.zaps)
		for sigma in tqdm(grid, desc="Sweeping thresholds"):
			measured = ModelService.evaluate(network, dataset, batch_size, sigmas={layer: sigma for layer in layers})
			eps = [float(np.interp(sigma, curves.curves[layer].sigmas, curves.curves[layer].eps)) for layer in layers]
			product, linear = TradeoffService.scale_error(np.minimum(eps, 1.0 - 1e-12))
			result.points.append(SweepPoint(
				sigma=float(sigma),
				accuracy=measured.accuracy,
				accuracy_drop=baseline.accuracy - measured.accuracy,
				mac_reduction=measured.mac_reduction,
				sum_eps=float(sum(eps)),
				scale_error_product=product,
				scale_error_linear=linear,
			))
			logger.info(f"sigma {sigma:.3f}: accuracy {measured.accuracy:.4f}, MAC reduction {measured.mac_reduction:.2%}")
		return result

	@staticmethod
	def fit_sigmoid(sigmas: Sequence[float], values: Sequence[float]) -> SigmoidFit:
		"""
		Least-squares (Levenberg-Marquardt) fit of d + c / (1 + exp(-a (sigma - b)))

		Several starting slopes are tried and the lowest residual wins. Constant
		data gives an amplitude-0 fit.
		"""
		x = np.asarray(sigmas, dtype=np.float64)
		y = np.asarray(values, dtype=np.float64)
		if x.shape != y.shape or x.ndim != 1:
			raise ValueError(f"sigmoid fit needs matching 1-D samples, got {x.shape} and {y.shape}")
		if x.size < 4:
			raise ValueError(f"sigmoid fit needs at least 4 samples, got {x.size}")
		span = float(np.ptp(y))
		if span <= 1e-12 * max(1.0, float(np.abs(y).max())):
			return SigmoidFit(a=0.0, b=float(x.mean()), c=0.0, d=float(y.mean()), residual=float(np.sqrt(np.mean((y - y.mean()) ** 2))))

		def residuals(theta):
			a, b, c, d = theta
			return d + c * expit(a * (x - b)) - y

		increasing = np.polyfit(x, y, 1)[0] >= 0
		c0 = span if increasing else -span
		d0 = float(y.min() if increasing else y.max())
		b0 = float(x[np.argmin(np.abs(y - (d0 + c0 / 2)))])
		width = float(np.ptp(x)) or 1.0
		best = None
		for slope in (4.0, 10.0, 40.0, 100.0):
			for center in (b0, float(x.mean())):
				try:
					fit = least_squares(residuals, [slope / width, center, c0, d0], method='lm',
										xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=5000)
				except (ValueError, FloatingPointError):
					continue
				if best is None or fit.cost < best.cost:
					best = fit
		if best is None:
			raise ValueError("sigmoid fit did not converge from any start")
		a, b, c, d = (float(v) for v in best.x)
		if a < 0:
			a, c, d = -a, -c, d + c
		residual = float(np.sqrt(np.mean(residuals((a, b, c, d)) ** 2)))
		return SigmoidFit(a=a, b=b, c=c, d=d, residual=residual)

	@staticmethod
	def fit_curves(curves: CurveSet) -> Tuple[Dict[str, SigmoidFit], Dict[str, SigmoidFit]]:
		"""Sigmoid fits of eps_i(sigma) and MAC_i(sigma) for every layer"""
		eps_fits, mac_fits = {}, {}
		for layer, curve in curves.curves.items():
			eps_fits[layer] = TradeoffService.fit_sigmoid(curve.sigmas, curve.eps)
			mac_fits[layer] = TradeoffService.fit_sigmoid(curve.sigmas, curve.macs)
			logger.debug(f"{layer}: eps residual {eps_fits[layer].residual:.2e}, MAC residual {mac_fits[layer].residual:.2e}")
		return eps_fits, mac_fits

	@staticmethod
	def fit_linear_accuracy(measurements: Sequence[Tuple[float, float]]) -> LinearAccuracyModel:
		"""
		Ordinary least squares of accuracy drop against 1 - scale_error

		Args:
			measurements: (scale_error, accuracy drop) pairs, at least two
		"""
		data = np.asarray(list(measurements), dtype=np.float64)
		if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
			raise ValueError(f"linear accuracy fit needs at least two (scale_error, drop) pairs, got {data.shape}")
		x = 1.0 - data[:, 0]
		y = data[:, 1]
		if np.ptp(x) == 0:
			raise ValueError("linear accuracy fit needs at least two distinct scale errors")
		design = np.stack([x, np.ones_like(x)], axis=1)
		(slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
		predicted = slope * x + intercept
		ss_res = float(((y - predicted) ** 2).sum())
		ss_tot = float(((y - y.mean()) ** 2).sum())
		if ss_tot > 0:
			r_squared = 1.0 - ss_res / ss_tot
		else:
			r_squared = 1.0 if ss_res <= 1e-24 else 0.0
		return LinearAccuracyModel(
			slope=float(slope), intercept=float(intercept), r_squared=float(r_squared),
			samples=int(data.shape[0]), residual=float(np.sqrt(ss_res / data.shape[0])),
		)

	@staticmethod
	def estimate_band(accuracy_model: LinearAccuracyModel, eps_models: Optional[Dict[str, object]] = None) -> float:
		"""
		Half-width of the band around an estimated accuracy drop

		The accuracy-model residual plus the per-layer error residuals carried
		through the slope, since the drop is linear in sum(eps). Models without
		a residual (sampled curves) add nothing.
		"""
		eps_residual = sum(getattr(model, 'residual', 0.0) for model in (eps_models or {}).values())
		return float(accuracy_model.residual + abs(accuracy_model.slope) * eps_residual)

	@staticmethod
	def estimate_operating_point(curves: CurveSet, accuracy_model: LinearAccuracyModel, sigmas: Dict[str, float],
								 eps_models: Optional[Dict[str, object]] = None,
								 mac_models: Optional[Dict[str, object]] = None) -> OperatingPointEstimate:
		"""
		Estimate accuracy drop and network MAC reduction before measuring them

		Per-layer error and MACs come from ``eps_models``/``mac_models`` (any
		object with ``evaluate``, e.g. SigmoidFit) or from the sampled curves.
		Non-zapped conv layers keep their dense cost.
		"""
		missing = set(curves.curves) - set(sigmas)
		if missing:
			raise ValueError(f"no sigma given for layers {sorted(missing)}")
		extrapolated = []
		sum_eps = 0.0
		after = float(curves.total_baseline_macs)
		for layer, curve in curves.curves.items():
			sigma = float(sigmas[layer])
			if sigma < curve.sigmas[0] or sigma > curve.sigmas[-1]:
				extrapolated.append(layer)
			eps_model = (eps_models or {}).get(layer) or InterpolatedCurve(curve.sigmas, curve.eps)
			mac_model = (mac_models or {}).get(layer) or InterpolatedCurve(curve.sigmas, curve.macs)
			sum_eps += float(np.clip(eps_model.evaluate(sigma), 0.0, 1.0))
			after += float(mac_model.evaluate(sigma)) - curve.baseline_macs
		if extrapolated:
			logger.warning(f"Sigma outside the sampled range for {extrapolated}; estimates are extrapolated")
		used = {layer: model for layer, model in (eps_models or {}).items() if layer in curves.curves}
		return OperatingPointEstimate(
			sigmas=dict(sigmas),
			accuracy_drop=accuracy_model.predict(1.0 - sum_eps),
			mac_reduction=1.0 - after / curves.total_baseline_macs if curves.total_baseline_macs else 0.0,
			sum_eps=sum_eps,
			extrapolated=extrapolated,
			band=TradeoffService.estimate_band(accuracy_model, used),
		)

	@staticmethod
	def optimize_thresholds(eps_curves: Dict[str, object], mac_curves: Dict[str, object],
							error_budget: Optional[float] = None, mac_budget: Optional[float] = None,
							bounds: Tuple[float, float] = DEFAULT_BOUNDS, grid_points: int = 201,
							tolerance: float = 1e-4, max_iterations: int = 60) -> ThresholdSolution:
		"""
		Choose one threshold per layer under a single coupling budget

		With ``error_budget`` it minimizes sum MAC_i subject to sum eps_i <= budget;
		with ``mac_budget`` the roles swap. The multiplier of the budget is found
		by bisection, each layer minimizing objective_i + lambda * constraint_i
		on its own (grid scan refined by bounded scalar minimization). The
		returned point is always feasible; leftover budget is then spent layer
		by layer.

		Raises:
			InfeasibleBudgetError: budget below the smallest achievable total
		"""
		if (error_budget is None) == (mac_budget is None):
			raise ValueError("give exactly one of error_budget and mac_budget")
		if set(eps_curves) != set(mac_curves):
			raise ValueError("error and MAC curves cover different layers")
		low, high = bounds
		if not high > low:
			raise ValueError(f"sigma bounds must be increasing, got {bounds}")
		layers = sorted(eps_curves)

		def clipped(curve):
			return lambda sigma: np.maximum(np.asarray(curve.evaluate(sigma), dtype=np.float64), 0.0)

		if error_budget is not None:
			budget = float(error_budget)
			objective = {layer: clipped(mac_curves[layer]) for layer in layers}
			constraint = {layer: clipped(eps_curves[layer]) for layer in layers}
		else:
			budget = float(mac_budget)
			objective = {layer: clipped(eps_curves[layer]) for layer in layers}
			constraint = {layer: clipped(mac_curves[layer]) for layer in layers}
		if budget < 0:
			raise ValueError(f"budget must be non-negative, got {budget}")

		grid = np.linspace(low, high, grid_points)
		objective_grid = {layer: objective[layer](grid) for layer in layers}
		constraint_grid = {layer: constraint[layer](grid) for layer in layers}
		objective_scale = max(sum(float(np.ptp(v)) for v in objective_grid.values()), 1e-12)
		constraint_scale = max(sum(float(np.ptp(v)) for v in constraint_grid.values()), 1e-12)

		def layer_argmin(layer: str, weight_objective: float, weight_constraint: float) -> float:
			def f(sigma):
				return float(weight_objective * objective[layer](sigma) / objective_scale
							 + weight_constraint * constraint[layer](sigma) / constraint_scale)
			values = (weight_objective * objective_grid[layer] / objective_scale
					  + weight_constraint * constraint_grid[layer] / constraint_scale)
			k = int(np.argmin(values))
			best_sigma, best_value = float(grid[k]), float(values[k])
			left, right = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
			if right > left:
				refined = minimize_scalar(f, bounds=(left, right), method='bounded', options={'xatol': 1e-10})
				if refined.fun < best_value:
					best_sigma = float(refined.x)
			return best_sigma

		def total(function, sigmas):
			return float(sum(function[layer](sigmas[layer]) for layer in layers))

		def solve(multiplier):
			sigmas = {layer: layer_argmin(layer, 1.0, multiplier) for layer in layers}
			return sigmas, total(constraint, sigmas)

		minimal = {layer: layer_argmin(layer, 0.0, 1.0) for layer in layers}
		minimal_total = total(constraint, minimal)
		if minimal_total > budget:
			raise InfeasibleBudgetError(budget, minimal_total)

		iterations = 0
		multiplier = 0.0
		sigmas, used = solve(0.0)
		if used > budget:
			upper = 1.0
			sigmas, used = solve(upper)
			doublings = 0
			while used > budget and doublings < 60:
				upper *= 2.0
				sigmas, used = solve(upper)
				doublings += 1
			if used > budget:
				sigmas, used = dict(minimal), minimal_total
			lower = 0.0
			while iterations < max_iterations and budget - used >= tolerance:
				middle = 0.5 * (lower + upper)
				candidate, candidate_used = solve(middle)
				if candidate_used <= budget:
					upper, sigmas, used = middle, candidate, candidate_used
				else:
					lower = middle
				iterations += 1
			multiplier = upper

		# spend leftover budget one layer at a time
		for layer in layers:
			start = sigmas[layer]
			goal = layer_argmin(layer, 1.0, 0.0)
			if goal == start:
				continue
			others = used - float(constraint[layer](start))
			current_objective = float(objective[layer](start))

			def acceptable(t):
				sigma = start + t * (goal - start)
				return (others + float(constraint[layer](sigma)) <= budget
						and float(objective[layer](sigma)) <= current_objective)

			if acceptable(1.0):
				step = 1.0
			else:
				lo_t, hi_t = 0.0, 1.0
				for _ in range(50):
					mid_t = 0.5 * (lo_t + hi_t)
					if acceptable(mid_t):
						lo_t = mid_t
					else:
						hi_t = mid_t
				step = lo_t
			if step > 0.0:
				sigmas[layer] = start + step * (goal - start)
				used = others + float(constraint[layer](sigmas[layer]))

		eps_total = float(sum(np.maximum(eps_curves[layer].evaluate(sigmas[layer]), 0.0) for layer in layers))
		mac_total = float(sum(np.maximum(mac_curves[layer].evaluate(sigmas[layer]), 0.0) for layer in layers))
		logger.info(f"Optimized {len(layers)} thresholds: sum eps {eps_total:.5f}, sum MACs {mac_total:.1f}")
		return ThresholdSolution(
			sigmas={layer: float(sigmas[layer]) for layer in layers},
			total_eps=eps_total,
			total_macs=mac_total,
			multiplier=multiplier,
			iterations=iterations,
		)

	@staticmethod
	def sigma_for_target(curve, target: float, bounds: Tuple[float, float] = DEFAULT_BOUNDS) -> float:
		"""
		Invert a monotone curve: the sigma within ``bounds`` where it reaches ``target``

		Raises:
			ValueError: target not reached inside the bounds
		"""
		low, high = bounds
		f_low = float(curve.evaluate(low)) - target
		f_high = float(curve.evaluate(high)) - target
		if f_low == 0:
			return float(low)
		if f_high == 0:
			return float(high)
		if f_low * f_high > 0:
			raise ValueError(f"target {target} is outside the curve range over sigma in {bounds}")
		return float(brentq(lambda sigma: float(curve.evaluate(sigma)) - target, low, high, xtol=1e-12))

	@staticmethod
	def sigma_for_mac_target(curve, target_macs: float, bounds: Tuple[float, float] = DEFAULT_BOUNDS) -> float:
		return TradeoffService.sigma_for_target(curve, target_macs, bounds)

	@staticmethod
	def sigma_for_error_target(curve, target_eps: float, bounds: Tuple[float, float] = DEFAULT_BOUNDS) -> float:
		return TradeoffService.sigma_for_target(curve, target_eps, bounds)

	@staticmethod
	def misprediction_histograms(network: Network, images: np.ndarray, sigma: float, bin_width: float,
								 bins: int, batch_size: int = 128) -> Dict[str, MispredictionHistogram]:
		"""
		Histograms of mispredicted values per zapped layer plus their union under 'all'

		Every layer runs on its predictor-free ifm at the same sigma.
		"""
		layers = sorted(network.zaps)
		captures = ZapTrainingService.capture_pairs(network, layers, images, batch_size)
		histograms = {}
		for layer in layers:
			bn_layer, relu_layer = network.spec.host_block(layer)
			bn = network.bn_params(bn_layer.name) if bn_layer is not None else None
			unit = network.zaps[layer].with_sigma(sigma)
			counts = np.zeros(bins, dtype=np.int64)
			elements = 0
			for start in range(0, images.shape[0], batch_size):
				ifm = captures[layer].ifm[start:start + batch_size]
				truth = Tensor(captures[layer].ofm[start:start + batch_size])
				_, outcome = ZapService.predicted_conv(Tensor(ifm), network.conv_params(layer), unit, MacCounter(),
													   bn=bn, cap=relu_layer.cap, tag=layer)
				part = ZapService.misprediction_histogram(outcome, truth, bin_width, bins)
				counts += part.counts
				elements += part.elements
			histograms[layer] = MispredictionHistogram(bin_width, counts / elements, counts, elements)
		all_counts = sum((h.counts for h in histograms.values()), np.zeros(bins, dtype=np.int64))
		all_elements = sum(h.elements for h in histograms.values())
		histograms['all'] = MispredictionHistogram(
			bin_width, all_counts / all_elements if all_elements else all_counts.astype(np.float64),
			all_counts, all_elements,
		)
		return histograms

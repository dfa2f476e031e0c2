"""
Models for accuracy-vs-MAC trade-off analysis
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import expit


@dataclass
class LayerCurves:
	"""Per-layer curves sampled on a sigma grid.

	``eps`` is the layer error, ``macs`` the per-image conv + predictor MACs
	and ``zero_rates`` the share of I_t predicted zero. ``m_samples`` is a
	sorted sample of predictor values on I_t.
	"""

	layer: str
	sigmas: List[float]
	eps: List[float]
	macs: List[float]
	zero_rates: List[float]
	m_samples: List[float]
	baseline_macs: int
	predictor_macs: int
	macs_per_element: int
	alpha: float

	def __post_init__(self):
		if not (len(self.sigmas) == len(self.eps) == len(self.macs) == len(self.zero_rates)):
			raise ValueError(f"curve lengths disagree for layer '{self.layer}'")

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'LayerCurves':
		return cls(**data)

	def to_dict(self) -> Dict[str, Any]:
		return asdict(self)


@dataclass
class CurveSet:
	"""Curves of every zapped layer plus the network-wide conv baseline"""

	curves: Dict[str, LayerCurves]
	total_baseline_macs: int
	images: int

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'CurveSet':
		return cls(
			curves={name: LayerCurves.from_dict(curve) for name, curve in data['curves'].items()},
			total_baseline_macs=int(data['total_baseline_macs']),
			images=int(data['images']),
		)

	def to_dict(self) -> Dict[str, Any]:
		return {
			'curves': {name: curve.to_dict() for name, curve in self.curves.items()},
			'total_baseline_macs': self.total_baseline_macs,
			'images': self.images,
		}


@dataclass
class SigmoidFit:
	"""value(sigma) = d + c / (1 + exp(-a * (sigma - b))), with a >= 0"""

	a: float
	b: float
	c: float
	d: float
	residual: float = 0.0

	def evaluate(self, sigma):
		return self.d + self.c * expit(self.a * (np.asarray(sigma, dtype=np.float64) - self.b))

	def inverse(self, value: float) -> float:
		"""Sigma at which the curve reaches ``value``; ValueError outside its open range"""
		if self.a <= 0 or self.c == 0:
			raise ValueError("a flat sigmoid has no inverse")
		ratio = (value - self.d) / self.c
		if not 0.0 < ratio < 1.0:
			raise ValueError(f"value {value} outside the open range of the fitted curve")
		return float(self.b + np.log(ratio / (1.0 - ratio)) / self.a)

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'SigmoidFit':
		return cls(**data)

	def to_dict(self) -> Dict[str, Any]:
		return asdict(self)


@dataclass
class InterpolatedCurve:
	"""Piecewise-linear curve through measured samples; flat outside the samples"""

	sigmas: List[float]
	values: List[float]

	def evaluate(self, sigma):
		return np.interp(sigma, self.sigmas, self.values)


@dataclass
class LinearAccuracyModel:
	"""accuracy drop = intercept + slope * (1 - scale_error)"""

	slope: float
	intercept: float
	r_squared: float
	samples: int
	residual: float = 0.0

	def predict(self, scale_error: float) -> float:
		return self.intercept + self.slope * (1.0 - scale_error)

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'LinearAccuracyModel':
		return cls(**data)

	def to_dict(self) -> Dict[str, Any]:
		return asdict(self)


@dataclass
class SweepPoint:
	"""Measurement at one uniform sigma"""

	sigma: float
	accuracy: float
	accuracy_drop: float
	mac_reduction: float
	sum_eps: float
	scale_error_product: float
	scale_error_linear: float


@dataclass
class SweepResult:
	baseline_accuracy: float
	points: List[SweepPoint] = field(default_factory=list)

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'SweepResult':
		return cls(
			baseline_accuracy=data['baseline_accuracy'],
			points=[SweepPoint(**point) for point in data['points']],
		)

	def to_dict(self) -> Dict[str, Any]:
		return {'baseline_accuracy': self.baseline_accuracy, 'points': [asdict(point) for point in self.points]}


@dataclass
class OperatingPointEstimate:
	"""Estimated accuracy drop and MAC reduction; the true drop is expected within +-band"""

	sigmas: Dict[str, float]
	accuracy_drop: float
	mac_reduction: float
	sum_eps: float
	extrapolated: List[str] = field(default_factory=list)
	band: float = 0.0


@dataclass
class ThresholdSolution:
	"""Per-layer thresholds with the achieved totals of both curve families"""

	sigmas: Dict[str, float]
	total_eps: float
	total_macs: float
	multiplier: float
	iterations: int


@dataclass
class TradeoffReport:
	"""Fitted per-layer sigmoids plus the accuracy model"""

	eps_fits: Dict[str, SigmoidFit]
	mac_fits: Dict[str, SigmoidFit]
	accuracy_model: Optional[LinearAccuracyModel]
	sigma_range: List[float]

	@classmethod
	def from_dict(cls, data: Dict[str, Any]) -> 'TradeoffReport':
		model = data.get('accuracy_model')
		return cls(
			eps_fits={name: SigmoidFit.from_dict(fit) for name, fit in data['eps_fits'].items()},
			mac_fits={name: SigmoidFit.from_dict(fit) for name, fit in data['mac_fits'].items()},
			accuracy_model=LinearAccuracyModel.from_dict(model) if model else None,
			sigma_range=list(data['sigma_range']),
		)

	def to_dict(self) -> Dict[str, Any]:
		return {
			'eps_fits': {name: fit.to_dict() for name, fit in self.eps_fits.items()},
			'mac_fits': {name: fit.to_dict() for name, fit in self.mac_fits.items()},
			'accuracy_model': self.accuracy_model.to_dict() if self.accuracy_model else None,
			'sigma_range': list(self.sigma_range),
		}

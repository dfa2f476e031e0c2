"""
Adam (for predictors) and SGD with momentum (for host models)
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class AdamState:
	"""Adam moments and hyperparameters; moments are created lazily per parameter"""

	lr: float = 1e-3
	beta1: float = 0.9
	beta2: float = 0.999
	eps: float = 1e-8
	step: int = 0
	m: Dict[str, np.ndarray] = field(default_factory=dict)
	v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState) -> Dict[str, np.ndarray]:
	"""One bias-corrected Adam update; returns new parameter arrays"""
	state.step += 1
	bias1 = 1.0 - state.beta1 ** state.step
	bias2 = 1.0 - state.beta2 ** state.step
	updated = {}
	for name, value in params.items():
		grad = grads[name]
		if grad.shape != value.shape:
			raise ValueError(f"gradient shape {grad.shape} does not match parameter '{name}' shape {value.shape}")
		if name not in state.m:
			state.m[name] = np.zeros_like(value)
			state.v[name] = np.zeros_like(value)
		state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
		state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (grad * grad)
		m_hat = state.m[name] / bias1
		v_hat = state.v[name] / bias2
		updated[name] = (value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(value.dtype)
	return updated


@dataclass
class SgdState:
	lr: float = 0.05
	momentum: float = 0.9
	weight_decay: float = 5e-4
	velocity: Dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: SgdState) -> Dict[str, np.ndarray]:
	"""SGD with heavy-ball momentum and L2 weight decay"""
	updated = {}
	for name, value in params.items():
		grad = grads[name]
		if grad.shape != value.shape:
			raise ValueError(f"gradient shape {grad.shape} does not match parameter '{name}' shape {value.shape}")
		if state.weight_decay:
			grad = grad + state.weight_decay * value
		velocity = state.velocity.get(name)
		velocity = grad if velocity is None else state.momentum * velocity + grad
		state.velocity[name] = velocity
		updated[name] = (value - state.lr * velocity).astype(value.dtype)
	return updated

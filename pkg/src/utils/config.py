"""
Utilities for reading run configuration files.

The format is one ``key = value`` per line; ``#`` starts a comment. Layer
entries use dotted keys such as ``sigma.conv3 = 0.1`` or ``pattern.conv2 = A``.
"""
import logging
import os
import re
from dataclasses import fields
from typing import Any, Dict, List, Optional

from src.models.config import RunConfig
from src.utils.patterns import get_pattern

logger = logging.getLogger(__name__)

LINE_PATTERN = re.compile(r'^\s*([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*$')
OPTIONAL_FLOATS = ('error_budget', 'mac_budget', 'bn_momentum')
POSITIVE_KEYS = ('bin_width', 'batch_size', 'epochs', 'zap_epochs', 'calibration_batches', 'workers')


def parse_grid(text: str) -> List[float]:
	"""Parse "start:stop:step" (inclusive stop) or a comma-separated list"""
	text = text.strip()
	if ':' in text:
		parts = text.split(':')
		if len(parts) != 3:
			raise ValueError(f"grid range must be start:stop:step, got '{text}'")
		start, stop, step = (float(part) for part in parts)
		if step <= 0 or stop < start:
			raise ValueError(f"grid range '{text}' is empty or has a non-positive step")
		count = int(round((stop - start) / step)) + 1
		return [round(start + i * step, 10) for i in range(count)]
	values = [float(part) for part in text.split(',') if part.strip()]
	if not values:
		raise ValueError("grid has no values")
	if any(b < a for a, b in zip(values, values[1:])):
		raise ValueError(f"grid values must be non-decreasing, got {values}")
	return values


def parse_layer_values(items: Optional[List[str]], convert=float) -> Dict[str, Any]:
	"""Parse ["conv2=0.1", ...] as given on the command line"""
	values = {}
	for item in items or []:
		if '=' not in item:
			raise ValueError(f"expected <layer>=<value>, got '{item}'")
		layer, value = item.split('=', 1)
		values[layer.strip()] = convert(value.strip())
	return values


def check_value(key: str, value: Any) -> Any:
	"""Reject non-positive counts and widths"""
	if key in POSITIVE_KEYS and not value > 0:
		raise ValueError(f"{key} must be positive, got {value}")
	return value


def _convert(key: str, raw: str, template: Any) -> Any:
	if key == 'grid':
		return parse_grid(raw)
	if key in OPTIONAL_FLOATS:
		return None if raw.lower() in ('', 'none') else float(raw)
	if key in ('model_spec',):
		return raw or None
	if key == 'pattern':
		return get_pattern(raw).id
	if isinstance(template, bool):
		return raw.lower() in ('1', 'true', 'yes')
	if isinstance(template, int):
		return int(raw)
	if isinstance(template, float):
		return float(raw)
	return raw


def parse_config(text: str, config: Optional[RunConfig] = None) -> RunConfig:
	"""Apply the lines of a configuration text to ``config`` (defaults when None)"""
	config = config or RunConfig()
	known = {f.name for f in fields(RunConfig)} - {'patterns', 'sigmas'}
	for number, line in enumerate(text.splitlines(), start=1):
		line = line.split('#', 1)[0]
		if not line.strip():
			continue
		match = LINE_PATTERN.match(line)
		if not match:
			raise ValueError(f"config line {number}: expected 'key = value', got '{line.strip()}'")
		key, raw = match.group(1), match.group(2)
		try:
			if key.startswith('sigma.'):
				config.sigmas[key[len('sigma.'):]] = float(raw)
			elif key.startswith('pattern.'):
				config.patterns[key[len('pattern.'):]] = get_pattern(raw).id
			elif key in known:
				setattr(config, key, check_value(key, _convert(key, raw, getattr(config, key))))
			else:
				raise ValueError(f"unknown key '{key}'")
		except ValueError as e:
			raise ValueError(f"config line {number}: {e}")
	return config


def load_config(path: Optional[str]) -> RunConfig:
	"""Read a configuration file; no path gives the defaults"""
	if not path:
		return RunConfig()
	if not os.path.isfile(path):
		raise ValueError(f"config file not found: {path}")
	with open(path, 'r') as f:
		config = parse_config(f.read())
	logger.debug(f"Loaded config from {path}: {config}")
	return config


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
	"""Set every override that is not None; command-line flags take precedence over the file"""
	for key, value in overrides.items():
		if value is None:
			continue
		if not hasattr(config, key):
			raise ValueError(f"unknown config key '{key}'")
		if key in ('sigmas', 'patterns'):
			getattr(config, key).update(value)
		else:
			setattr(config, key, check_value(key, value))
	return config

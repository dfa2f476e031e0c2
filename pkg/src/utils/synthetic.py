"""
Procedural image sets: colored geometric shapes on textured backgrounds
"""
import colorsys
import logging
from typing import Tuple

import numpy as np
from PIL import Image, ImageDraw

from src.models.dataset import TinyImageSet

logger = logging.getLogger(__name__)

SHAPES = ('circle', 'square', 'triangle_up', 'triangle_down', 'hbar', 'vbar', 'cross', 'ring')
MAX_CLASSES = 2 * len(SHAPES)
SUPERSAMPLE = 4


def _color(rng: np.random.Generator, family: int, families: int) -> Tuple[int, int, int]:
	"""A bright color; with two families, hues split into warm and cool halves"""
	if families == 1:
		hue = rng.uniform(0.0, 1.0)
	else:
		hue = rng.uniform(0.0, 0.4) if family == 0 else rng.uniform(0.5, 0.9)
	r, g, b = colorsys.hsv_to_rgb(hue, rng.uniform(0.6, 1.0), rng.uniform(0.8, 1.0))
	return int(r * 255), int(g * 255), int(b * 255)


def _background(rng: np.random.Generator, size: int) -> Image.Image:
	base = rng.uniform(10, 70, size=3)
	ramp = np.linspace(0, rng.uniform(-20, 20), size)[None, :, None]
	noise = rng.normal(0, 12, size=(size, size, 3))
	pixels = np.clip(base[None, None, :] + ramp + noise, 0, 255).astype(np.uint8)
	return Image.fromarray(pixels)


def _draw_shape(draw: ImageDraw.ImageDraw, shape: str, cx: float, cy: float, r: float,
				color: Tuple[int, int, int]) -> None:
	if shape == 'circle':
		draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=color)
	elif shape == 'square':
		draw.rectangle([cx - r * 0.8, cy - r * 0.8, cx + r * 0.8, cy + r * 0.8], fill=color)
	elif shape == 'triangle_up':
		draw.polygon([(cx, cy - r), (cx + r, cy + r * 0.8), (cx - r, cy + r * 0.8)], fill=color)
	elif shape == 'triangle_down':
		draw.polygon([(cx, cy + r), (cx + r, cy - r * 0.8), (cx - r, cy - r * 0.8)], fill=color)
	elif shape == 'hbar':
		draw.rectangle([cx - r, cy - r * 0.3, cx + r, cy + r * 0.3], fill=color)
	elif shape == 'vbar':
		draw.rectangle([cx - r * 0.3, cy - r, cx + r * 0.3, cy + r], fill=color)
	elif shape == 'cross':
		draw.rectangle([cx - r, cy - r * 0.25, cx + r, cy + r * 0.25], fill=color)
		draw.rectangle([cx - r * 0.25, cy - r, cx + r * 0.25, cy + r], fill=color)
	elif shape == 'ring':
		draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=color, width=max(2, int(r * 0.35)))
	else:
		raise ValueError(f"unknown shape '{shape}'")


def render_image(rng: np.random.Generator, label: int, classes: int, size: int = 16, channels: int = 3) -> np.ndarray:
	"""Render one image of class ``label`` as u8 [channels x size x size]"""
	big = size * SUPERSAMPLE
	image = _background(rng, big)
	draw = ImageDraw.Draw(image)
	radius = big * rng.uniform(0.22, 0.32)
	margin = radius + SUPERSAMPLE
	cx = rng.uniform(margin, big - margin)
	cy = rng.uniform(margin, big - margin)
	families = 1 if classes <= len(SHAPES) else 2
	color = _color(rng, label // len(SHAPES), families)
	_draw_shape(draw, SHAPES[label % len(SHAPES)], cx, cy, radius, color)
	image = image.resize((size, size), Image.Resampling.BOX)
	if channels == 1:
		image = image.convert('L')
	pixels = np.asarray(image, dtype=np.uint8)
	if pixels.ndim == 2:
		pixels = pixels[:, :, None]
	return pixels.transpose(2, 0, 1)


def generate_synthetic(n: int, classes: int, seed: int, size: int = 16, channels: int = 3) -> TinyImageSet:
	"""Deterministic labeled image set.

	Args:
		n: Number of images (>= 1)
		classes: Number of classes, 1..16; classes 8..15 reuse the shapes in cool colors
		seed: Seed for every random choice
		size: Image height and width
		channels: 1 (grayscale) or 3 (RGB)

	Returns:
		TinyImageSet whose class histogram is uniform within one image
	"""
	if n < 1:
		raise ValueError(f"synthetic set needs n >= 1, got {n}")
	if not 1 <= classes <= MAX_CLASSES:
		raise ValueError(f"synthetic classes must be 1..{MAX_CLASSES}, got {classes}")
	if channels not in (1, 3):
		raise ValueError(f"synthetic channels must be 1 or 3, got {channels}")
	if size < 4:
		raise ValueError(f"synthetic image size must be >= 4, got {size}")
	rng = np.random.default_rng(seed)
	labels = rng.permutation(np.arange(n) % classes).astype(np.uint8)
	images = np.empty((n, channels, size, size), dtype=np.uint8)
	for index, label in enumerate(labels):
		images[index] = render_image(rng, int(label), classes, size, channels)
	logger.debug(f"Generated {n} synthetic images, {classes} classes, seed {seed}")
	return TinyImageSet(images, labels, classes)

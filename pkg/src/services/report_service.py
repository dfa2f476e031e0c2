import os
import csv
import json
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from src.models.tradeoff import CurveSet, LinearAccuracyModel, SweepResult
from src.models.zap_unit import MispredictionHistogram
from src.services.tradeoff_service import TradeoffService

logger = logging.getLogger(__name__)

CURVES_COLUMNS = ['layer', 'sigma', 'eps', 'macs', 'zero_rate']
SCALE_ERROR_COLUMNS = ['sigma', 'sum_eps', 'scale_error_linear', 'scale_error_product', 'accuracy', 'accuracy_drop']
TRADEOFF_COLUMNS = ['source', 'sigma', 'mac_reduction', 'accuracy_drop', 'drop_low', 'drop_high']
OPERATING_POINT_COLUMNS = ['pattern', 'sigma', 'accuracy', 'accuracy_drop', 'mac_reduction']
MISPREDICTION_COLUMNS = ['sigma', 'layer', 'bin_low', 'bin_high', 'share', 'count']


class ReportService:
	"""Service for writing plot-ready CSV and JSON series"""

	@staticmethod
	def write_csv(path: str, columns: List[str], rows: Iterable[Sequence]) -> int:
		"""
		Write a CSV file with a header row

		Returns:
			Number of data rows written
		"""
		directory = os.path.dirname(path)
		if directory:
			os.makedirs(directory, exist_ok=True)
		count = 0
		with open(path, 'w', encoding='utf-8', newline='') as f:
			writer = csv.writer(f)
			writer.writerow(columns)
			for row in rows:
				writer.writerow(row)
				count += 1
		logger.info(f"Wrote {count} rows to {path}")
		return count

	@staticmethod
	def write_json(path: str, data: Dict) -> None:
		directory = os.path.dirname(path)
		if directory:
			os.makedirs(directory, exist_ok=True)
		with open(path, 'w') as f:
			json.dump(data, f, indent=2)
		logger.info(f"Wrote {path}")

	@staticmethod
	def curve_rows(curves: CurveSet) -> List[list]:
		rows = []
		for layer in sorted(curves.curves):
			curve = curves.curves[layer]
			for sigma, eps, macs, rate in zip(curve.sigmas, curve.eps, curve.macs, curve.zero_rates):
				rows.append([layer, sigma, eps, macs, rate])
		return rows

	@staticmethod
	def scale_error_rows(sweep: SweepResult) -> List[list]:
		"""Accuracy against 1 - sum(eps) for each uniform sigma"""
		return [
			[p.sigma, p.sum_eps, p.scale_error_linear, p.scale_error_product, p.accuracy, p.accuracy_drop]
			for p in sweep.points
		]

	@staticmethod
	def tradeoff_rows(sweep: SweepResult, curves: CurveSet, accuracy_model: LinearAccuracyModel,
					  estimate_points: int = 101, eps_models: Optional[Dict] = None,
					  mac_models: Optional[Dict] = None) -> List[list]:
		"""
		Measured sweep points followed by the estimated curve on a fine uniform grid

		The estimated rows carry the band of TradeoffService.estimate_band.
		"""
		rows = [['measured', p.sigma, p.mac_reduction, p.accuracy_drop, p.accuracy_drop, p.accuracy_drop]
				for p in sweep.points]
		sigmas = [s for curve in curves.curves.values() for s in (curve.sigmas[0], curve.sigmas[-1])]
		if not sigmas:
			return rows
		for sigma in np.linspace(min(sigmas), max(sigmas), estimate_points):
			estimate = TradeoffService.estimate_operating_point(
				curves, accuracy_model, {layer: float(sigma) for layer in curves.curves}, eps_models, mac_models,
			)
			rows.append([
				'estimated', float(sigma), estimate.mac_reduction, estimate.accuracy_drop,
				estimate.accuracy_drop - estimate.band, estimate.accuracy_drop + estimate.band,
			])
		return rows

	@staticmethod
	def misprediction_rows(histograms: Dict[float, Dict[str, MispredictionHistogram]]) -> List[list]:
		rows = []
		for sigma in sorted(histograms):
			for layer in sorted(histograms[sigma]):
				histogram = histograms[sigma][layer]
				edges = histogram.edges
				for index, (share, count) in enumerate(zip(histogram.shares, histogram.counts)):
					rows.append([sigma, layer, float(edges[index]), float(edges[index + 1]), float(share), int(count)])
		return rows

	@staticmethod
	def write_report(out_dir: str, curves: CurveSet, sweep: SweepResult, accuracy_model: LinearAccuracyModel,
					 histograms: Dict[float, Dict[str, MispredictionHistogram]],
					 operating_points: Optional[List[list]] = None, eps_models: Optional[Dict] = None,
					 mac_models: Optional[Dict] = None) -> Dict[str, str]:
		"""
		Write every report series into ``out_dir``

		Returns:
			Dict of series name to file path
		"""
		paths = {
			'curves': os.path.join(out_dir, 'curves.csv'),
			'scale_error': os.path.join(out_dir, 'accuracy_vs_scale_error.csv'),
			'tradeoff': os.path.join(out_dir, 'tradeoff.csv'),
			'mispredictions': os.path.join(out_dir, 'mispredictions.csv'),
			'summary': os.path.join(out_dir, 'report.json'),
		}
		ReportService.write_csv(paths['curves'], CURVES_COLUMNS, ReportService.curve_rows(curves))
		ReportService.write_csv(paths['scale_error'], SCALE_ERROR_COLUMNS, ReportService.scale_error_rows(sweep))
		tradeoff = ReportService.tradeoff_rows(sweep, curves, accuracy_model, eps_models=eps_models, mac_models=mac_models)
		ReportService.write_csv(paths['tradeoff'], TRADEOFF_COLUMNS, tradeoff)
		ReportService.write_csv(paths['mispredictions'], MISPREDICTION_COLUMNS, ReportService.misprediction_rows(histograms))
		if operating_points:
			paths['operating_points'] = os.path.join(out_dir, 'operating_points.csv')
			ReportService.write_csv(paths['operating_points'], OPERATING_POINT_COLUMNS, operating_points)
		ReportService.write_json(paths['summary'], {
			'baseline_accuracy': sweep.baseline_accuracy,
			'accuracy_model': accuracy_model.to_dict(),
			'sweep': sweep.to_dict(),
			'misprediction_mass': {
				str(sigma): {layer: h.mass for layer, h in per_layer.items()}
				for sigma, per_layer in sorted(histograms.items())
			},
		})
		return paths

#!/usr/bin/env python3
"""
Unit tests for ReportService
"""
import os
import csv
import sys
import json
import unittest
import tempfile

import numpy as np

# Add the project root directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.models.tradeoff import CurveSet, LayerCurves, LinearAccuracyModel, SigmoidFit, SweepPoint, SweepResult
from src.models.zap_unit import MispredictionHistogram
from src.services.report_service import (
	CURVES_COLUMNS,
	MISPREDICTION_COLUMNS,
	TRADEOFF_COLUMNS,
	ReportService
)


def layer_curve(layer, baseline):
	return LayerCurves(
		layer=layer, sigmas=[0.0, 0.25, 0.5], eps=[0.0, 0.04, 0.1], macs=[baseline + 50.0, baseline * 0.75, baseline * 0.5],
		zero_rates=[0.0, 0.5, 0.9], m_samples=[0.1, 0.4, 0.8], baseline_macs=baseline, predictor_macs=50,
		macs_per_element=9, alpha=0.5,
	)


class TestReportService(unittest.TestCase):
	"""Test cases for the report series"""

	def setUp(self):
		"""Set up test environment"""
		self.temp_dir = tempfile.TemporaryDirectory()
		self.test_dir = self.temp_dir.name
		self.curves = CurveSet(
			curves={'conv3': layer_curve('conv3', 2000), 'conv2': layer_curve('conv2', 1000)},
			total_baseline_macs=4000, images=10,
		)
		self.sweep = SweepResult(baseline_accuracy=0.9, points=[
			SweepPoint(0.0, 0.9, 0.0, -0.02, 0.0, 1.0, 1.0),
			SweepPoint(0.5, 0.7, 0.2, 0.3, 0.2, 0.81, 0.8),
		])
		self.model = LinearAccuracyModel(slope=1.0, intercept=0.0, r_squared=1.0, samples=2, residual=0.01)
		self.histograms = {
			0.1: {
				'conv2': MispredictionHistogram(0.1, np.array([0.01, 0.0]), np.array([1, 0]), 100),
				'all': MispredictionHistogram(0.1, np.array([0.005, 0.0]), np.array([1, 0]), 200),
			},
		}

	def tearDown(self):
		"""Clean up test environment"""
		self.temp_dir.cleanup()

	def read_csv(self, path):
		with open(path, 'r', encoding='utf-8', newline='') as f:
			return list(csv.reader(f))

	def test_write_csv(self):
		path = os.path.join(self.test_dir, 'nested', 'rows.csv')
		count = ReportService.write_csv(path, ['a', 'b'], [[1, 'x'], [2, 'y, z']])
		self.assertEqual(count, 2)
		self.assertEqual(self.read_csv(path), [['a', 'b'], ['1', 'x'], ['2', 'y, z']])

	def test_curve_rows_sorted_by_layer(self):
		rows = ReportService.curve_rows(self.curves)
		self.assertEqual(len(rows), 6)
		self.assertEqual([row[0] for row in rows], ['conv2'] * 3 + ['conv3'] * 3)
		self.assertEqual(rows[1], ['conv2', 0.25, 0.04, 750.0, 0.5])
		self.assertEqual(len(rows[0]), len(CURVES_COLUMNS))

	def test_scale_error_rows(self):
		rows = ReportService.scale_error_rows(self.sweep)
		self.assertEqual(rows[1], [0.5, 0.2, 0.8, 0.81, 0.7, 0.2])

	def test_tradeoff_rows(self):
		rows = ReportService.tradeoff_rows(self.sweep, self.curves, self.model, estimate_points=11)
		self.assertEqual([row[0] for row in rows], ['measured'] * 2 + ['estimated'] * 11)
		self.assertEqual(rows[1][1:], [0.5, 0.3, 0.2, 0.2, 0.2])
		first, last = rows[2], rows[-1]
		self.assertEqual((first[1], last[1]), (0.0, 0.5))
		# sum eps 0.2 at the top of the grid, drop = 1 - (1 - 0.2)
		self.assertAlmostEqual(last[3], 0.2)
		self.assertAlmostEqual(last[4], 0.19)
		self.assertAlmostEqual(last[5], 0.21)
		self.assertAlmostEqual(last[2], 0.375)
		self.assertEqual(len(first), len(TRADEOFF_COLUMNS))

	def test_tradeoff_band_includes_fit_residuals(self):
		fits = {layer: SigmoidFit(a=0.0, b=0.0, c=0.0, d=0.05, residual=0.002) for layer in self.curves.curves}
		rows = ReportService.tradeoff_rows(self.sweep, self.curves, self.model, estimate_points=3, eps_models=fits)
		for row in rows[2:]:
			# 0.01 accuracy residual + slope 1 x two layers of 0.002
			self.assertAlmostEqual(row[3], 0.1)
			self.assertAlmostEqual(row[5] - row[3], 0.014)
			self.assertAlmostEqual(row[3] - row[4], 0.014)

	def test_misprediction_rows(self):
		rows = ReportService.misprediction_rows(self.histograms)
		self.assertEqual(rows[0], [0.1, 'all', 0.0, 0.1, 0.005, 1])
		self.assertEqual(rows[2][:2], [0.1, 'conv2'])
		self.assertAlmostEqual(rows[3][3], 0.2)
		self.assertEqual(len(rows[0]), len(MISPREDICTION_COLUMNS))

	def test_write_report(self):
		operating_points = [['B', 0.2, 0.85, 0.05, 0.3]]
		paths = ReportService.write_report(self.test_dir, self.curves, self.sweep, self.model, self.histograms,
										   operating_points=operating_points)
		self.assertEqual(set(paths), {'curves', 'scale_error', 'tradeoff', 'mispredictions', 'operating_points', 'summary'})
		for path in paths.values():
			self.assertTrue(os.path.isfile(path), path)
		self.assertEqual(self.read_csv(paths['curves'])[0], CURVES_COLUMNS)
		self.assertEqual(len(self.read_csv(paths['operating_points'])), 2)
		with open(paths['summary'], 'r') as f:
			summary = json.load(f)
		self.assertEqual(summary['baseline_accuracy'], 0.9)
		self.assertEqual(summary['misprediction_mass'], {'0.1': {'conv2': 0.01, 'all': 0.005}})
		self.assertEqual(SweepResult.from_dict(summary['sweep']), self.sweep)

	def test_operating_points_optional(self):
		paths = ReportService.write_report(self.test_dir, self.curves, self.sweep, self.model, {})
		self.assertNotIn('operating_points', paths)
		self.assertEqual(self.read_csv(paths['mispredictions']), [MISPREDICTION_COLUMNS])


if __name__ == '__main__':
	unittest.main()

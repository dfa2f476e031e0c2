#!/usr/bin/env python3
"""
Main module for the zero-activation prediction toolkit
"""
import os
import sys
import json
import time
import logging
import argparse
from typing import Dict, List, Optional

import numpy as np

# Add the parent directory to sys.path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.models.config import RunConfig
from src.models.model_spec import ModelSpec, toynet4
from src.models.network import Network
from src.models.tradeoff import CurveSet, InterpolatedCurve, SweepResult, TradeoffReport
from src.services.model_service import ModelService
from src.services.report_service import CURVES_COLUMNS, ReportService
from src.services.tradeoff_service import InfeasibleBudgetError, TradeoffService
from src.services.zap_service import ZapService
from src.services.zap_training_service import ZapTrainingService
from src.utils.config import apply_overrides, load_config, parse_grid, parse_layer_values
from src.utils.optimizers import SgdState
from src.utils.patterns import get_pattern
from src.utils.serialization import load_dataset, save_dataset
from src.utils.synthetic import generate_synthetic

# Configure logging
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
log_dir = os.path.join(project_root, "logs")
data_dir = os.path.join(project_root, "data")
os.makedirs(log_dir, exist_ok=True)

logging.basicConfig(
	level=logging.INFO,
	format='%(asctime)s - %(levelname)s - %(message)s',
	handlers=[
		logging.StreamHandler(),
		logging.FileHandler(os.path.join(log_dir, 'zap.log'))
	]
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


def summary(title: str, lines: List[str]) -> None:
	logger.info("=" * 50)
	logger.info(title)
	for line in lines:
		logger.info(line)
	logger.info("=" * 50)


def require_file(path: str, what: str) -> str:
	if not path or not os.path.isfile(path):
		raise ValueError(f"{what} not found: {path}")
	return path


def load_split(directory: str, split: str):
	return load_dataset(require_file(os.path.join(directory, f'{split}.tis'), f'{split} split'))


def resolve_sigmas(config: RunConfig, network: Network, sigma_all: Optional[float] = None,
				   sigma_layer: Optional[List[str]] = None) -> Dict[str, float]:
	"""Per-layer thresholds: --sigma-layer beats --sigma-all beats the config"""
	layers = sorted(network.zaps)
	sigmas = {layer: (sigma_all if sigma_all is not None else config.sigma_for(layer)) for layer in layers}
	for layer, value in parse_layer_values(sigma_layer).items():
		if layer not in network.zaps:
			raise ValueError(f"layer '{layer}' has no predictor; zapped layers are {layers}")
		sigmas[layer] = value
	return sigmas


def model_spec_for(args, config: RunConfig, classes: int, input_shape) -> ModelSpec:
	spec_path = args.spec or config.model_spec
	if spec_path:
		with open(require_file(spec_path, 'model spec'), 'r') as f:
			spec = ModelSpec.from_dict(json.load(f))
	else:
		spec = toynet4(input_shape=input_shape, num_classes=classes, pattern=config.pattern)
	zapped = [layer.name for layer in spec.layers if layer.zap]
	for layer, pattern in config.patterns.items():
		if layer not in zapped:
			raise ValueError(f"pattern.{layer} names a layer without a predictor; zapped layers are {zapped}")
		spec.layer(layer).pattern = pattern
	return spec


def cmd_gen_data(args, config: RunConfig) -> int:
	train = generate_synthetic(args.train, args.classes, config.seed, args.size)
	test = generate_synthetic(args.test, args.classes, config.seed + 1, args.size)
	save_dataset(os.path.join(args.out_dir, 'train.tis'), train)
	save_dataset(os.path.join(args.out_dir, 'test.tis'), test)
	summary("Synthetic Data Summary:", [
		f"Train images: {len(train)}",
		f"Test images: {len(test)}",
		f"Classes: {args.classes}, image size: {args.size}x{args.size}",
		f"Written to: {args.out_dir}",
	])
	return EXIT_OK


def cmd_train_base(args, config: RunConfig) -> int:
	train = load_split(args.data_dir, 'train')
	test = load_split(args.data_dir, 'test')
	spec = model_spec_for(args, config, train.classes, train.image_shape)
	network = ModelService.build_model(spec, seed=config.seed)
	history = ModelService.train(network, train, config.epochs, config.batch_size, SgdState(lr=config.lr),
								 seed=config.seed, momentum=config.bn_momentum)
	result = ModelService.evaluate(network, test, use_zaps=False)
	ModelService.save_network(network, args.model)
	summary("Base Training Summary:", [
		f"Model: {spec.name}, {network.parameter_count()} parameters",
		f"Final training loss: {history[-1]:.4f}" if history else "No epochs run",
		f"Test accuracy: {result.accuracy:.4f}",
		f"Saved to: {args.model}",
	])
	return EXIT_OK


def cmd_train_zap(args, config: RunConfig) -> int:
	network = ModelService.load_network(require_file(args.model, 'model weights'))
	train = load_split(args.data_dir, 'train')
	test = load_split(args.data_dir, 'test')
	if args.pattern:
		for offset, layer in enumerate(sorted(network.zaps)):
			network.zaps[layer] = ZapService.init_unit(network.zaps[layer].channels, config.pattern_for(layer),
													   seed=config.seed + offset)
			network.spec.layer(layer).pattern = network.zaps[layer].pattern.id
	layers = sorted(network.zaps)
	if not layers:
		raise ValueError("model has no zapped layers")
	count = min(args.capture_images, len(train)) if args.capture_images else len(train)
	captures = ZapTrainingService.capture_pairs(network, layers, train.as_float(0, count), config.batch_size)
	histories = ZapTrainingService.train_all(network, captures, config.zap_epochs, config.zap_lr,
											 config.batch_size, config.seed, config.workers)
	held_out = ZapTrainingService.capture_pairs(network, layers, test.as_float(0, min(len(test), 500)), config.batch_size)
	lines = []
	for layer in layers:
		quality = ZapTrainingService.evaluate_predictor(network.zaps[layer], held_out[layer], 0.5)
		lines.append(
			f"{layer}: loss {histories[layer][-1]:.4f}, balanced accuracy {quality.balanced_accuracy:.4f} "
			f"(majority rate {quality.majority_rate:.4f})"
		)
	out = args.out or args.model
	ModelService.save_network(network, out)
	summary("Predictor Training Summary:", lines + [f"Saved to: {out}"])
	return EXIT_OK


def cmd_recalibrate_bn(args, config: RunConfig) -> int:
	network = ModelService.load_network(require_file(args.model, 'model weights'))
	train = load_split(args.data_dir, 'train')
	sigmas = resolve_sigmas(config, network, args.sigma)
	rng = np.random.default_rng(config.seed)
	batches = (images for _, (images, _) in zip(range(config.calibration_batches), train.batches(config.batch_size, rng)))
	ZapTrainingService.recalibrate_bn(network, batches, sigmas, momentum=config.bn_momentum, reset=args.reset)
	out = args.out or args.model
	ModelService.save_network(network, out)
	summary("BN Recalibration Summary:", [
		f"Thresholds: {sigmas}",
		f"Batches: {config.calibration_batches} x {config.batch_size}",
		f"Saved to: {out}",
	])
	return EXIT_OK


def cmd_fine_tune(args, config: RunConfig) -> int:
	network = ModelService.load_network(require_file(args.model, 'model weights'))
	train = load_split(args.data_dir, 'train')
	test = load_split(args.data_dir, 'test')
	sigmas = resolve_sigmas(config, network, args.sigma)
	before = ModelService.evaluate(network, test, sigmas=sigmas)
	history = ZapTrainingService.fine_tune(network, train, args.epochs, sigmas, SgdState(lr=config.lr),
										   config.batch_size, config.seed)
	after = ModelService.evaluate(network, test, sigmas=sigmas)
	out = args.out or args.model
	ModelService.save_network(network, out)
	summary("Fine-tuning Summary:", [
		f"Loss: {history[0]:.4f} -> {history[-1]:.4f}" if history else "No epochs run",
		f"Test accuracy: {before.accuracy:.4f} -> {after.accuracy:.4f}",
		f"Saved to: {out}",
	])
	return EXIT_OK


def cmd_eval(args, config: RunConfig) -> int:
	network = ModelService.load_network(require_file(args.model, 'model weights'))
	dataset = load_split(args.data_dir, args.split)
	sigmas = resolve_sigmas(config, network, args.sigma_all, args.sigma_layer)
	baseline = ModelService.evaluate(network, dataset, use_zaps=False)
	result = ModelService.evaluate(network, dataset, use_zaps=not args.no_zap, sigmas=sigmas)
	per_image = result.per_image()
	lines = [f"Top-1 accuracy: {result.accuracy:.4f} (baseline {baseline.accuracy:.4f})"]
	lines += [f"  {tag}: {value:.1f} MACs/image" for tag, value in per_image.items()]
	lines += [
		f"Total MACs: {result.total_macs} ({result.total_macs / result.images:.1f}/image)",
		f"MAC reduction: {result.mac_reduction:.2%}",
		f"Accuracy degradation: {baseline.accuracy - result.accuracy:.4f}",
	]
	summary("Evaluation Summary:", lines)
	if args.out:
		ReportService.write_json(args.out, {
			'sigmas': sigmas,
			'accuracy': result.accuracy,
			'baseline_accuracy': baseline.accuracy,
			'macs': result.macs,
			'total_macs': result.total_macs,
			'mac_reduction': result.mac_reduction,
			'images': result.images,
		})
	return EXIT_OK


def cmd_sweep(args, config: RunConfig) -> int:
	network = ModelService.load_network(require_file(args.model, 'model weights'))
	dataset = load_split(args.data_dir, args.split)
	if not network.zaps:
		raise ValueError("model has no zapped layers to sweep")
	images = dataset.as_float(0, args.curve_images or None)
	curves = TradeoffService.collect_curves(network, images, config.grid, config.batch_size)
	sweep = TradeoffService.measure_sweep(network, dataset, config.grid, curves, config.batch_size)
	ReportService.write_json(os.path.join(args.out_dir, 'curves.json'), curves.to_dict())
	ReportService.write_json(os.path.join(args.out_dir, 'sweep.json'), sweep.to_dict())
	ReportService.write_csv(os.path.join(args.out_dir, 'curves.csv'), CURVES_COLUMNS, ReportService.curve_rows(curves))
	summary("Sweep Summary:", [
		f"Sigma grid: {config.grid[0]} .. {config.grid[-1]} ({len(config.grid)} points)",
		f"Layers: {sorted(curves.curves)}",
		f"Baseline accuracy: {sweep.baseline_accuracy:.4f}",
		f"Written to: {args.out_dir}",
	])
	return EXIT_OK


def load_curves(sweep_dir: str) -> CurveSet:
	with open(require_file(os.path.join(sweep_dir, 'curves.json'), 'curves'), 'r') as f:
		return CurveSet.from_dict(json.load(f))


def load_sweep(sweep_dir: str) -> SweepResult:
	with open(require_file(os.path.join(sweep_dir, 'sweep.json'), 'sweep results'), 'r') as f:
		return SweepResult.from_dict(json.load(f))


def load_tradeoff(sweep_dir: str) -> TradeoffReport:
	with open(require_file(os.path.join(sweep_dir, 'tradeoff.json'), 'fitted trade-off'), 'r') as f:
		return TradeoffReport.from_dict(json.load(f))


def cmd_fit(args, config: RunConfig) -> int:
	curves = load_curves(args.sweep_dir)
	sweep = load_sweep(args.sweep_dir)
	eps_fits, mac_fits = TradeoffService.fit_curves(curves)
	model = TradeoffService.fit_linear_accuracy([(p.scale_error_linear, p.accuracy_drop) for p in sweep.points])
	sigmas = [s for curve in curves.curves.values() for s in curve.sigmas]
	report = TradeoffReport(eps_fits, mac_fits, model, [min(sigmas), max(sigmas)])
	ReportService.write_json(os.path.join(args.sweep_dir, 'tradeoff.json'), report.to_dict())
	lines = [f"Accuracy model: drop = {model.intercept:.4f} + {model.slope:.4f} * sum(eps), R^2 {model.r_squared:.4f}"]
	for layer in sorted(eps_fits):
		lines.append(f"{layer}: eps residual {eps_fits[layer].residual:.2e}, MAC residual {mac_fits[layer].residual:.2e}")
	summary("Fit Summary:", lines)
	return EXIT_OK


def cmd_optimize(args, config: RunConfig) -> int:
	if args.error_budget is not None or args.mac_budget is not None:
		error_budget, mac_budget = args.error_budget, args.mac_budget
	else:
		error_budget, mac_budget = config.error_budget, config.mac_budget
	if args.measured:
		curves = load_curves(args.sweep_dir)
		eps_curves = {layer: InterpolatedCurve(c.sigmas, c.eps) for layer, c in curves.curves.items()}
		mac_curves = {layer: InterpolatedCurve(c.sigmas, c.macs) for layer, c in curves.curves.items()}
		bounds = (min(config.grid), max(config.grid))
	else:
		report = load_tradeoff(args.sweep_dir)
		eps_curves, mac_curves = report.eps_fits, report.mac_fits
		bounds = tuple(report.sigma_range)
	solution = TradeoffService.optimize_thresholds(eps_curves, mac_curves, error_budget=error_budget,
												   mac_budget=mac_budget, bounds=bounds)
	lines = [f"{layer}: sigma {sigma:.4f}" for layer, sigma in sorted(solution.sigmas.items())]
	lines += [f"Sum eps: {solution.total_eps:.5f}", f"Sum MACs: {solution.total_macs:.1f}/image"]
	summary("Threshold Optimization Summary:", lines)
	if args.out:
		ReportService.write_json(args.out, {
			'sigmas': solution.sigmas,
			'total_eps': solution.total_eps,
			'total_macs': solution.total_macs,
			'error_budget': error_budget,
			'mac_budget': mac_budget,
		})
	return EXIT_OK


def cmd_report(args, config: RunConfig) -> int:
	network = ModelService.load_network(require_file(args.model, 'model weights'))
	dataset = load_split(args.data_dir, args.split)
	curves = load_curves(args.sweep_dir)
	sweep = load_sweep(args.sweep_dir)
	tradeoff_path = os.path.join(args.sweep_dir, 'tradeoff.json')
	if os.path.isfile(tradeoff_path):
		report = load_tradeoff(args.sweep_dir)
		accuracy_model, eps_models, mac_models = report.accuracy_model, report.eps_fits, report.mac_fits
	else:
		accuracy_model = TradeoffService.fit_linear_accuracy([(p.scale_error_linear, p.accuracy_drop) for p in sweep.points])
		eps_models = mac_models = None
	hist_sigmas = parse_grid(args.hist_sigmas)
	images = dataset.as_float(0, args.curve_images or None)
	bins = max(1, int(np.ceil(args.max_value / config.bin_width)))
	histograms = {
		sigma: TradeoffService.misprediction_histograms(network, images, sigma, config.bin_width, bins, config.batch_size)
		for sigma in hist_sigmas
	}
	operating_points = []
	for item in args.mask_weights or []:
		pattern, path = item.split('=', 1) if '=' in item else (None, item)
		masked = ModelService.load_network(require_file(path, f'weights for mask {pattern}'))
		if not masked.zaps:
			raise ValueError(f"weights {path} have no predictors")
		pattern = pattern or next(iter(masked.zaps.values())).pattern.id
		baseline = ModelService.evaluate(masked, dataset, use_zaps=False)
		for sigma in hist_sigmas:
			result = ModelService.evaluate(masked, dataset, sigmas={layer: sigma for layer in masked.zaps})
			operating_points.append([pattern, sigma, result.accuracy, baseline.accuracy - result.accuracy, result.mac_reduction])
	paths = ReportService.write_report(args.out_dir, curves, sweep, accuracy_model, histograms, operating_points,
									   eps_models, mac_models)
	summary("Report Summary:", [f"{name}: {path}" for name, path in paths.items()])
	return EXIT_OK


COMMANDS = {
	'gen-data': cmd_gen_data,
	'train-base': cmd_train_base,
	'train-zap': cmd_train_zap,
	'recalibrate-bn': cmd_recalibrate_bn,
	'fine-tune': cmd_fine_tune,
	'eval': cmd_eval,
	'sweep': cmd_sweep,
	'fit': cmd_fit,
	'optimize': cmd_optimize,
	'report': cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
	default_model = os.path.join(data_dir, 'model.zapw')
	default_sweep = os.path.join(data_dir, 'sweep')
	parser = argparse.ArgumentParser(description='Zero-activation prediction for small CNNs')
	parser.add_argument('--config', help='Key-value config file (flags override it)')
	parser.add_argument('--seed', type=int, help='Seed for every random choice (default: 0)')
	parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose output')
	parser.add_argument('--quiet', '-q', action='store_true', help='Only report errors')
	commands = parser.add_subparsers(dest='command', required=True)

	gen = commands.add_parser('gen-data', help='Generate the synthetic train/test sets')
	gen.add_argument('--out-dir', default=data_dir, help='Directory for train.tis and test.tis (default: data)')
	gen.add_argument('--train', type=int, default=5000, help='Training images (default: 5000)')
	gen.add_argument('--test', type=int, default=1000, help='Test images (default: 1000)')
	gen.add_argument('--classes', type=int, default=8, help='Number of classes (default: 8)')
	gen.add_argument('--size', type=int, default=16, help='Image height and width (default: 16)')

	def model_args(sub, split=False):
		sub.add_argument('--model', default=default_model, help='Weight container (.zapw, spec in .json next to it)')
		sub.add_argument('--data-dir', default=data_dir, help='Directory with train.tis and test.tis')
		if split:
			sub.add_argument('--split', default='test', choices=['train', 'test'], help='Split to run on (default: test)')

	train = commands.add_parser('train-base', help='Train the host model with SGD')
	model_args(train)
	train.add_argument('--spec', help='Model spec JSON (default: ToyNet-4)')
	train.add_argument('--epochs', type=int, help='Training epochs')
	train.add_argument('--batch-size', type=int, help='Images per step')
	train.add_argument('--lr', type=float, help='SGD learning rate')
	train.add_argument('--pattern', help='Pattern of every zapped layer (A, B, C or D)')

	zap = commands.add_parser('train-zap', help='Train every predictor against its host layer')
	model_args(zap)
	zap.add_argument('--out', help='Output weights (default: overwrite --model)')
	zap.add_argument('--pattern', help='Re-initialize predictors with this pattern before training')
	zap.add_argument('--epochs', type=int, help='Predictor epochs (default: 5)')
	zap.add_argument('--lr', type=float, help='Adam learning rate (default: 1e-3)')
	zap.add_argument('--workers', type=int, help='Concurrent layer trainings')
	zap.add_argument('--capture-images', type=int, default=2000, help='Training images to capture (0 = all)')

	recal = commands.add_parser('recalibrate-bn', help='Refresh host BN statistics with predictors active')
	model_args(recal)
	recal.add_argument('--out', help='Output weights (default: overwrite --model)')
	recal.add_argument('--sigma', type=float, help='Threshold for every zapped layer')
	recal.add_argument('--batches', type=int, help='Calibration batches')
	recal.add_argument('--reset', action='store_true', help='Reset statistics before recalibrating')

	tune = commands.add_parser('fine-tune', help='Fine-tune host weights with predictor masks applied')
	model_args(tune)
	tune.add_argument('--out', help='Output weights (default: overwrite --model)')
	tune.add_argument('--sigma', type=float, help='Threshold for every zapped layer')
	tune.add_argument('--epochs', type=int, default=5, help='Fine-tuning epochs (default: 5)')
	tune.add_argument('--lr', type=float, help='SGD learning rate')

	evaluate = commands.add_parser('eval', help='Measure accuracy and MACs')
	model_args(evaluate, split=True)
	evaluate.add_argument('--sigma-all', type=float, help='Threshold for every zapped layer (--sigma-all=-inf computes all)')
	evaluate.add_argument('--sigma-layer', action='append', help='Per-layer threshold, e.g. conv3=0.1 (repeatable)')
	evaluate.add_argument('--no-zap', action='store_true', help='Run every layer densely')
	evaluate.add_argument('--out', help='Write the results as JSON')

	sweep = commands.add_parser('sweep', help='Sample per-layer curves and uniform-sigma measurements')
	model_args(sweep, split=True)
	sweep.add_argument('--grid', help='Sigma grid, start:stop:step or a list (default: 0:0.5:0.02)')
	sweep.add_argument('--out-dir', default=default_sweep, help='Output directory (default: data/sweep)')
	sweep.add_argument('--curve-images', type=int, default=0, help='Images used for curves (0 = all)')

	fit = commands.add_parser('fit', help='Fit sigmoids and the linear accuracy model')
	fit.add_argument('--sweep-dir', default=default_sweep, help='Directory written by sweep')

	optimize = commands.add_parser('optimize', help='Allocate per-layer thresholds under a budget')
	optimize.add_argument('--sweep-dir', default=default_sweep, help='Directory with curves.json / tradeoff.json')
	budget = optimize.add_mutually_exclusive_group()
	budget.add_argument('--error-budget', type=float, help='Bound on the summed layer error')
	budget.add_argument('--mac-budget', type=float, help='Bound on the summed zapped-layer MACs per image')
	optimize.add_argument('--measured', action='store_true', help='Use the sampled curves instead of the fits')
	optimize.add_argument('--out', help='Write the thresholds as JSON')

	report = commands.add_parser('report', help='Write plot-ready CSV/JSON series')
	model_args(report, split=True)
	report.add_argument('--sweep-dir', default=default_sweep, help='Directory written by sweep/fit')
	report.add_argument('--out-dir', default=os.path.join(data_dir, 'report'), help='Output directory')
	report.add_argument('--mask-weights', nargs='*', help='Per-mask weights, e.g. A=data/model_a.zapw')
	report.add_argument('--hist-sigmas', default='0,0.1,0.3,0.5', help='Thresholds for histograms and operating points')
	report.add_argument('--bin-width', type=float, help='Histogram bin width (default: 0.1)')
	report.add_argument('--max-value', type=float, default=2.0, help='Upper edge of the last histogram bin')
	report.add_argument('--curve-images', type=int, default=0, help='Images used for histograms (0 = all)')
	return parser


def join_sentinels(argv: List[str]) -> List[str]:
	"""Glue "--sigma-all -inf" into one token; argparse reads a bare "-inf" as an option"""
	joined: List[str] = []
	for token in argv:
		if joined and token.lower() in ('-inf', '-infinity') and joined[-1] in ('--sigma-all', '--sigma'):
			joined[-1] = f"{joined[-1]}={token}"
		else:
			joined.append(token)
	return joined


def command_overrides(args) -> Dict[str, object]:
	"""Map the flags of the chosen command onto RunConfig fields"""
	option = lambda name: getattr(args, name, None)
	overrides = {
		'seed': args.seed,
		'batch_size': option('batch_size'),
		'workers': option('workers'),
		'calibration_batches': option('batches'),
		'bin_width': option('bin_width'),
		'grid': parse_grid(args.grid) if option('grid') else None,
		'pattern': get_pattern(args.pattern).id if option('pattern') else None,
	}
	if args.command == 'train-zap':
		overrides.update(zap_epochs=option('epochs'), zap_lr=option('lr'))
	else:
		overrides.update(lr=option('lr'))
		if args.command == 'train-base':
			overrides['epochs'] = option('epochs')
	return overrides


def main(argv: Optional[List[str]] = None) -> int:
	"""Parse arguments, run one command and map failures to exit codes

	Returns:
		0 on success, 2 on validation errors or missing artifacts, 3 on an infeasible budget
	"""
	parser = build_parser()
	args = parser.parse_args(join_sentinels(sys.argv[1:] if argv is None else list(argv)))

	# Set logging level based on verbosity
	if args.verbose:
		logging.getLogger().setLevel(logging.DEBUG)
		logger.debug("Verbose logging enabled")
	elif args.quiet:
		logging.getLogger().setLevel(logging.ERROR)
	else:
		logging.getLogger().setLevel(logging.INFO)

	start_time = time.time()
	try:
		config = apply_overrides(load_config(args.config), **command_overrides(args))
		logger.debug(f"Running {args.command} with {config}")
		code = COMMANDS[args.command](args, config)
	except InfeasibleBudgetError as e:
		logger.error(f"Infeasible budget: {e}")
		return EXIT_INFEASIBLE
	except (ValueError, KeyError, OSError) as e:
		logger.error(f"{args.command} failed: {e}")
		return EXIT_INVALID
	elapsed_time = time.time() - start_time
	minutes, seconds = divmod(elapsed_time, 60)
	logger.info(f"{args.command} finished in {int(minutes)} minutes, {int(seconds)} seconds")
	return code


if __name__ == "__main__":
	sys.exit(main())

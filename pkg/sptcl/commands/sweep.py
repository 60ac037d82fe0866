"""sweep: grid over eta / r / rho / p_noise / outlier count, each cell averaged over seeds.

Cells run in a process pool when more than one worker is configured; the
results table is always ordered by grid index.
"""

import argparse
import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from sptcl import config as settings
from sptcl import reports, solver
from sptcl.commands.common import (
    RunData,
    add_data_arguments,
    add_hyperparam_arguments,
    hyperparams_from_args,
    load_run_data,
    run_config_from_args,
)
from sptcl.config import RunConfig
from sptcl.datamodel import (
    Dataset,
    Hyperparams,
    NoiseSpec,
    SyntheticSpec,
    generate_synthetic,
    inject_label_noise,
    subset_classes,
)
from sptcl.errors import InputError, SptclError, ValidationError
from sptcl.evaluation import accuracy
from sptcl.utils import derive_seed, parse_float_list, parse_int_list

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepGrid:
    eta: tuple[float, ...]
    r: tuple[float, ...]
    rho: tuple[float, ...]
    p_noise: tuple[float, ...]
    outliers: tuple[int, ...]

    def __post_init__(self) -> None:
        for name in reports.SWEEP_PARAMS:
            if not getattr(self, name):
                raise ValidationError(f"Sweep axis {name!r} is empty")

    def points(self) -> list[dict]:
        axes = [getattr(self, name) for name in reports.SWEEP_PARAMS]
        return [dict(zip(reports.SWEEP_PARAMS, combo)) for combo in itertools.product(*axes)]

    def check(self, hp: Hyperparams) -> None:
        """Build every grid point's hyper-parameters and noise spec; raises ValidationError on the first bad value."""
        for point in self.points():
            replace(hp, eta=point["eta"], r=point["r"], rho=point["rho"])
            NoiseSpec(p_noise=point["p_noise"])
            if point["outliers"] < 0:
                raise ValidationError(f"Outlier count must be >= 0, got {point['outliers']}")


@dataclass(frozen=True, eq=False)
class SweepConfig:
    """Base hyper-parameters, seeds and the data: feature files (``run``) or a synthetic spec."""

    hyperparams: Hyperparams
    seeds: tuple[int, ...]
    results_path: Path
    run: RunConfig | None = None
    synthetic: SyntheticSpec | None = None
    workers: int = 1

    def validate(self) -> None:
        if (self.run is None) == (self.synthetic is None):
            raise InputError("A sweep needs either input files or --synthetic, not both")
        if not self.seeds:
            raise ValidationError("A sweep needs at least one seed")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.run is not None:
            self.run.validate()
            if self.run.target_labels is None:
                raise InputError("A sweep scores accuracy and needs --target-labels")
        self.results_path.parent.mkdir(parents=True, exist_ok=True)


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="grid search over hyper-parameters, noise and outliers")
    add_data_arguments(parser, required=False)
    add_hyperparam_arguments(parser)
    parser.add_argument("--synthetic", action="store_true", help="use the default synthetic task instead of files")
    parser.add_argument("--grid-eta", type=parse_float_list)
    parser.add_argument("--grid-r", type=parse_float_list)
    parser.add_argument("--grid-rho", type=parse_float_list)
    parser.add_argument("--grid-p-noise", type=parse_float_list)
    parser.add_argument("--grid-outliers", type=parse_int_list,
                        help="outlier class counts; files keep target classes [0, C - o)")
    parser.add_argument("--seeds", type=parse_int_list, default=[settings.DEFAULT_SEED])
    parser.add_argument("--workers", type=int, default=settings.SWEEP_WORKERS)
    parser.add_argument("--out", type=Path, default=Path("sweep.csv"), help="results table (CSV)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    hp = hyperparams_from_args(args)
    synthetic = SyntheticSpec() if args.synthetic else None
    run = None
    if not args.synthetic:
        if args.source is None or args.source_labels is None or args.target is None:
            raise InputError("Pass --source, --source-labels and --target, or --synthetic")
        run = run_config_from_args(_with_out(args), hp)
    grid = SweepGrid(
        eta=tuple(args.grid_eta or [hp.eta]),
        r=tuple(args.grid_r or [hp.r]),
        rho=tuple(args.grid_rho or [hp.rho]),
        p_noise=tuple(args.grid_p_noise if args.grid_p_noise is not None else [args.p_noise]),
        outliers=tuple(args.grid_outliers if args.grid_outliers is not None
                       else [synthetic.outlier_classes if synthetic else 0]),
    )
    config = SweepConfig(
        hyperparams=hp,
        seeds=tuple(args.seeds),
        results_path=args.out,
        run=run,
        synthetic=synthetic,
        workers=args.workers,
    )
    return cmd_sweep(config, grid)


def _with_out(args: argparse.Namespace) -> argparse.Namespace:
    """RunConfig's output directory is the folder holding the results table."""
    namespace = argparse.Namespace(**vars(args))
    namespace.out = args.out.parent
    return namespace


def cmd_sweep(config: SweepConfig, grid: SweepGrid) -> int:
    grid.check(config.hyperparams)
    config.validate()
    base = None
    if config.run is not None:
        # noise is applied per seed inside each trial
        base = load_run_data(replace(config.run, noise=NoiseSpec()))
    points = grid.points()
    tasks = [(index, point, config.seeds, config.hyperparams, base, config.synthetic)
             for index, point in enumerate(points)]
    logger.info("Sweeping %d grid points x %d seeds with %d worker(s)", len(points), len(config.seeds), config.workers)

    if config.workers == 1:
        outcomes = list(map(_run_cell, tasks))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_cell, tasks))

    with config.results_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(reports.sweep_header())
        for point, accuracies in zip(points, outcomes):
            writer.writerow(reports.sweep_row(point, accuracies))
    failed = sum(1 for accuracies in outcomes if len(accuracies) < len(config.seeds))
    if failed:
        logger.warning("%d of %d grid cells had failing seeds", failed, len(points))
    logger.info("Wrote %s", config.results_path)
    return 0


def _run_cell(task) -> list[float]:
    index, point, seeds, hp, base, synthetic = task
    accuracies = []
    for seed in seeds:
        try:
            accuracies.append(run_trial(point, seed, hp, base, synthetic))
        except SptclError as exc:
            logger.warning("Cell %d %s seed %d failed: %s: %s", index, point, seed, exc.category, exc)
    return accuracies


def run_trial(point: dict, seed: int, hp: Hyperparams, base: RunData | None,
              synthetic: SyntheticSpec | None) -> float:
    """One fit at one grid point and seed; returns final target accuracy."""
    hp = replace(hp, eta=point["eta"], r=point["r"], rho=point["rho"], seed=seed)
    if synthetic is not None:
        spec = replace(synthetic, outlier_classes=point["outliers"], seed=derive_seed(seed, "synthetic"))
        source, target, truth = generate_synthetic(spec)
    else:
        source, target, truth = base.source, base.target, base.target_truth
        outliers = point["outliers"]
        if outliers:
            kept = subset_classes(Dataset(target.features, truth, source.class_count),
                                  range(source.class_count - outliers))
            target, truth = Dataset(kept.features, None, source.class_count), kept.labels

    noise = NoiseSpec(p_noise=point["p_noise"], seed=derive_seed(seed, "noise"))
    if noise.p_noise > 0:
        noisy, _ = inject_label_noise(source.labels, source.class_count, noise)
        source = Dataset(source.features, noisy, source.class_count)
    result = solver.fit(source, target, hp, target_truth=truth)
    return accuracy(result.predictions, truth)

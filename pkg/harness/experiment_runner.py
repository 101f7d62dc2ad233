"""
Execute validated experiments and persist their trajectories.

Each run writes records.csv (one row per step, fixed header, 17 significant
digits) and summary.json into its output directory. compare_experiments runs
several configurations and merges their records into comparison.csv.
"""

import json
import logging
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

import ags
from ags.adaptation import CMA, AdaptationStrategy, CmaParams
from ags.bounds import GD_CONVEX, GD_NONCONVEX, SGD, CertificateTracker
from ags.exceptions import RunAborted
from ags.objectives import FiniteSum, Objective, make_benchmark, make_finite_sum, sample_initial_point
from ags.optimizers import (
    AGS_GD,
    AGS_SGD,
    ANALYTIC_QUADRATIC,
    CMA_BASELINE,
    MONTE_CARLO,
    STOCHASTIC_METHODS,
    GradientSource,
    RunRecord,
    Schedule,
    default_schedule,
    run,
)
from ags.smoothing import McConfig
from harness.experiment_config import ExperimentConfig, HarnessIOError, load_config, parse_config

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "t",
    "f_x",
    "f_best",
    "grad_norm_est",
    "grad_stderr_norm",
    "sigma_opnorm",
    "sigma_min_eig",
    "evals_cumulative",
    "certificate",
]
FLOAT_FORMAT = "%.17g"
OUT_DIR_ENV = "AGS_OUT_DIR"
DEFAULT_OUT_DIR = "out"


def _derived_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1, dtype=np.uint64)[0])


def version_string() -> str:
    """git describe of the source tree, or the package version outside a checkout."""
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{ags.__version__}"


def resolve_output(cfg: ExperimentConfig, override: Optional[Union[str, Path]] = None) -> Path:
    """--out beats the config's output, which beats $AGS_OUT_DIR, which beats out/."""
    return Path(override or cfg.output or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    """RunRecords as a DataFrame with exactly the records.csv columns."""
    rows = [asdict(r) for r in records]
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


class ExperimentRunner:
    """
    Builds the library objects a configuration describes and runs them.

    Attributes:
        cfg: The validated configuration
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg

    @property
    def method(self) -> str:
        return self.cfg.optimizer.method

    def build_objective(self) -> Objective:
        fn = self.cfg.function
        x_opt = None if fn.x_opt == "origin" else fn.x_opt
        return make_benchmark(fn.name, fn.dim, fn.rotation_seed, x_opt)

    def build_finite_sum(self, objective: Objective) -> Optional[FiniteSum]:
        stochastic = self.cfg.stochastic
        if stochastic is None or self.method not in STOCHASTIC_METHODS:
            return None
        return make_finite_sum(objective, stochastic.K, stochastic.noise_scale, _derived_seed(self.cfg.seed, 1))

    def initial_point(self) -> np.ndarray:
        if self.cfg.x0 is not None:
            return np.array(self.cfg.x0, dtype=float)
        rng = np.random.default_rng(_derived_seed(self.cfg.seed, 2))
        return sample_initial_point(self.cfg.function.name, self.cfg.function.dim, rng)

    def build_schedule(self, objective: Objective) -> Schedule:
        base = default_schedule(self.method, objective.smoothness_L)
        sched = self.cfg.optimizer.schedule
        return Schedule(
            eta0=sched.eta0 if sched.eta0 is not None else base.eta0,
            eta_exponent=sched.eta_exponent if sched.eta_exponent is not None else base.eta_exponent,
            beta=sched.beta,
            theta_scale=sched.theta_scale,
            theta_exponent=sched.theta_exponent,
            epsilon=sched.epsilon,
        )

    def build_adaptation(self) -> Optional[AdaptationStrategy]:
        if self.cfg.gradient_source is None:
            return None
        conf = self.cfg.smoothing.adaptation
        cma = None
        if conf.kind == CMA:
            cma = CmaParams.default(self.cfg.smoothing.mc_samples, c_mu=conf.c_mu, mu=conf.mu)
        return AdaptationStrategy(
            kind=conf.kind,
            sigma0=self.cfg.sigma0_matrix(),
            floor=conf.floor,
            cap=conf.cap,
            gamma=conf.gamma,
            cma=cma,
            scale_decay=conf.scale_decay,
        )

    def build_grad_source(self) -> GradientSource:
        source = self.cfg.gradient_source
        if source == ANALYTIC_QUADRATIC:
            return GradientSource.analytic()
        if source == MONTE_CARLO:
            smoothing = self.cfg.smoothing
            return GradientSource.monte_carlo(
                McConfig(smoothing.mc_samples, variant=smoothing.delta, workers=smoothing.workers)
            )
        return GradientSource.exact()

    def build_certificate(self, objective: Objective, x0: np.ndarray,
                          schedule: Schedule) -> Optional[CertificateTracker]:
        """Tracker for the convergence result matching the method, if its inputs are known."""
        L = objective.smoothness_L
        if not self.cfg.certificate or L is None:
            return None
        d = objective.dim
        f0_gap = None
        if objective.f_star is not None:
            f0_gap = max(0.0, objective.value(x0, count=False) - objective.f_star)
        if self.method == AGS_GD and schedule.eta_exponent == 0.0:
            if objective.convex and objective.x_opt is not None:
                return CertificateTracker(GD_CONVEX, L, d, x0_dist=float(np.linalg.norm(x0 - objective.x_opt)))
            if f0_gap is not None:
                return CertificateTracker(GD_NONCONVEX, L, d, f0_gap=f0_gap, step=schedule.eta0)
        stochastic = self.cfg.stochastic
        if (self.method == AGS_SGD and f0_gap is not None and stochastic is not None
                and stochastic.grad_sq_bound is not None):
            return CertificateTracker(SGD, L, d, f0_gap=f0_gap, lambda_sq_bound=stochastic.grad_sq_bound)
        return None

    def execute(self, out_dir: Union[str, Path]) -> Dict:
        """
        Run the experiment and write records.csv and summary.json.

        Args:
            out_dir: Directory for this run's files (created if missing)

        Returns:
            The summary dictionary written to summary.json

        Raises:
            HarnessIOError: if the output files cannot be written
        """
        out_dir = Path(out_dir)
        objective = self.build_objective()
        x0 = self.initial_point()
        schedule = self.build_schedule(objective)
        tracker = self.build_certificate(objective, x0, schedule)
        started = time.perf_counter()
        aborted, reason = False, None
        logger.info("running %s on %s (dim=%d) into %s", self.method, objective.name, objective.dim, out_dir)
        try:
            records = run(
                self.method,
                objective,
                x0,
                self.cfg.optimizer.T,
                schedule=schedule,
                adaptation=self.build_adaptation(),
                grad_source=self.build_grad_source(),
                seed=self.cfg.seed,
                finite_sum=self.build_finite_sum(objective),
                certificate=tracker,
                grad_tol=self.cfg.optimizer.grad_tol,
                adaptation_samples=self.cfg.smoothing.mc_samples,
            )
        except RunAborted as e:
            logger.warning("run aborted: %s", e)
            records, aborted, reason = e.records, True, str(e)
        wall_time = time.perf_counter() - started

        summary = {
            "final_f": records[-1].f_x if records else None,
            "best_f": records[-1].f_best if records else None,
            "f_x0": objective.value(x0, count=False),
            "steps": len(records),
            "total_evals": objective.eval_count,
            "wall_time": wall_time,
            "aborted": aborted,
            "abort_reason": reason,
            "certificate": records[-1].certificate if records else None,
            "certificate_kind": tracker.kind if tracker is not None else None,
            "adaptation_fallbacks": sum(r.adaptation_fallback for r in records),
            "version": version_string(),
            "config": self.cfg.model_dump(mode="json"),
        }
        if self.method == CMA_BASELINE:
            summary["baseline"] = "plumbing"
        self._write(out_dir, records, summary)
        logger.info("finished %s: final f=%s after %d steps", self.method, summary["final_f"], len(records))
        return summary

    @staticmethod
    def _write(out_dir: Path, records: List[RunRecord], summary: Dict):
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise HarnessIOError(f"cannot create output directory ({e.strerror})", out_dir) from e
        records_path = out_dir / "records.csv"
        summary_path = out_dir / "summary.json"
        try:
            records_frame(records).to_csv(records_path, index=False, float_format=FLOAT_FORMAT)
        except OSError as e:
            raise HarnessIOError(f"cannot write records ({e.strerror})", records_path) from e
        try:
            with open(summary_path, "w") as f:
                json.dump(summary, f, indent=2)
        except OSError as e:
            raise HarnessIOError(f"cannot write summary ({e.strerror})", summary_path) from e


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None,
                   seed: Optional[int] = None) -> Dict:
    """
    Run one configuration.

    Args:
        cfg: Validated configuration
        out_dir: Overrides the configured output directory
        seed: Overrides the configured master seed

    Returns:
        Summary dictionary (also written to summary.json)
    """
    if seed is not None:
        cfg = parse_config(json.dumps({**cfg.model_dump(mode="json"), "seed": seed}))
    return ExperimentRunner(cfg).execute(resolve_output(cfg, out_dir))


def _run_named(args) -> Dict:
    path, out_dir = args
    return run_experiment(load_config(path), out_dir)


def _run_names(paths: Sequence[Path]) -> List[str]:
    names: List[str] = []
    for path in paths:
        name = path.stem
        suffix = 2
        while name in names:
            name = f"{path.stem}_{suffix}"
            suffix += 1
        names.append(name)
    return names


def compare_experiments(config_paths: Sequence[Union[str, Path]], out_dir: Union[str, Path],
                        jobs: int = 1) -> pd.DataFrame:
    """
    Run several configurations and merge their records.

    Each configuration runs into out_dir/<config name>/; the merged table is
    written to out_dir/comparison.csv with a leading config column.

    Args:
        config_paths: Configuration files
        out_dir: Root output directory
        jobs: Worker processes (1 runs sequentially)

    Returns:
        The merged long-format DataFrame; attrs["aborted"] names the runs that aborted
    """
    paths = [Path(p) for p in config_paths]
    # validate everything before running anything
    for path in paths:
        load_config(path)
    out_dir = Path(out_dir)
    names = _run_names(paths)
    tasks = [(path, out_dir / name) for path, name in zip(paths, names)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_named, tasks))
    else:
        summaries = [_run_named(task) for task in tasks]

    frames = []
    for name, (_, run_dir), summary in zip(names, tasks, summaries):
        frame = pd.read_csv(run_dir / "records.csv")
        frame.insert(0, "config", name)
        frame["method"] = summary["config"]["optimizer"]["method"]
        frames.append(frame)
    merged = pd.concat(frames, ignore_index=True)
    merged.attrs["aborted"] = [name for name, summary in zip(names, summaries) if summary["aborted"]]
    comparison_path = out_dir / "comparison.csv"
    try:
        merged.to_csv(comparison_path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise HarnessIOError(f"cannot write comparison ({e.strerror})", comparison_path) from e
    logger.info("compared %d configurations into %s", len(names), comparison_path)
    return merged

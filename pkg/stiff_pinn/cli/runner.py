"""Experiment runner behind the ``stiff-pinn`` subcommands.

One :class:`ExperimentRunner` holds a validated config and lazily builds
what the commands share: the mechanism, the full-system BDF reference,
the QSS partition and the reduced system. Each ``cmd_*`` method writes its
artifacts into the output directory, records them in a run manifest and
returns the process exit code.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import __version__
from ..common.config import ExperimentConfig, parse_grid, serialize_config
from ..common.errors import (
    ClosureError,
    ConfigError,
    EigenSolverError,
    PartitionError,
    StepLimitExceeded,
    StiffPinnError,
    UndefinedStiffnessError,
)
from ..common.io_utils import write_table
from ..common.seeding import SWEEP, derive_seed
from ..integrators import (
    SolutionTrajectory,
    SolverConfig,
    integrate_bdf,
    integrate_dopri5,
    stiffness_ratio,
    stiffness_spectrum,
)
from ..integrators.base import run_solver
from ..integrators.bdf import BdfSolver
from ..integrators.dopri5 import Dopri5Solver
from ..mechanism import Mechanism, StateVector, load_mechanism, serialize_mechanism
from ..pinn import (
    MlpModel,
    TrainingConfig,
    eval_grid,
    evaluate_rmse,
    load_checkpoint,
    predict_full_state,
    save_checkpoint,
    train,
    trained_species,
)
from ..pinn.loss import System
from ..qssa import (
    QssPartition,
    ReducedRhs,
    ReducedSystem,
    closure_onset,
    closure_residual_norm,
    rober_rate_constants,
    select_qss_species,
    serialize_partition,
    solve_qss_closure,
    species_maxima,
)
from .manifest import RunManifest
from .plotting import plot_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 4

# First nonzero point of a log output grid, relative to t_end
LOG_GRID_START = 1e-11
WEIGHT_SCALE_FLOOR = 1e-12


class TrajectoryPredictor:
    """A stored trajectory answering ``predictor(times)`` like a trained model."""

    def __init__(self, trajectory: SolutionTrajectory):
        self.trajectory = trajectory
        self.species = tuple(trajectory.species_names)

    def __call__(self, t) -> np.ndarray:
        return self.trajectory.sample(np.atleast_1d(np.asarray(t, dtype=float)))


class FullStatePredictor:
    """Non-QSS model outputs plus closure-reconstructed QSS species."""

    def __init__(self, model, r: ReducedSystem):
        self.model = model
        self.system = r
        self.species = r.base.species_names

    def __call__(self, t) -> np.ndarray:
        return predict_full_state(self.model, self.system, np.atleast_1d(np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class SweepTask:
    cell: int
    seed_index: int
    seed: int
    widths: Tuple[int, ...]
    system: System
    training: TrainingConfig
    eval_times: np.ndarray
    expected: np.ndarray


def run_sweep_task(task: SweepTask) -> Dict:
    """Train and score one (architecture, seed) pair; failures are returned, not raised."""
    species = trained_species(task.system)
    started = time.perf_counter()
    try:
        model = MlpModel.initialize(
            task.widths,
            task.seed,
            species=species,
            y0=task.system.y0,
            transform=task.training.output_transform,
            time_scale=task.training.t_max,
        )
        result = train(model, task.system, task.training)
        predicted = np.asarray(result.model(task.eval_times), dtype=float)
        rmse = np.sqrt(np.mean((predicted - task.expected) ** 2, axis=0))
        final_loss = result.history[-1].total_loss if result.history else float("nan")
        return {
            "ok": bool(np.all(np.isfinite(rmse))),
            "updates": result.updates,
            "final_loss": final_loss,
            "rmse": rmse.tolist(),
            "seconds": time.perf_counter() - started,
            "error": "" if np.all(np.isfinite(rmse)) else "non-finite prediction",
        }
    except StiffPinnError as exc:
        return {
            "ok": False,
            "updates": 0,
            "final_loss": float("nan"),
            "rmse": [float("nan")] * len(species),
            "seconds": time.perf_counter() - started,
            "error": str(exc),
        }


def cmd_plot(
    inputs: Sequence[str],
    output_path: str,
    species: Optional[Sequence[str]] = None,
    logx: bool = False,
    logy: bool = False,
    title: Optional[str] = None,
) -> int:
    """Overlay CSV tables into one SVG."""
    count = plot_csv(inputs, output_path, species=species, logx=logx, logy=logy, title=title)
    print(f"Plotted {count} series from {len(inputs)} file(s): {output_path}")
    return EXIT_OK


class ExperimentRunner:
    """Runs the experiment subcommands for one configuration."""

    def __init__(self, cfg: ExperimentConfig, verbose: bool = False):
        self.cfg = cfg
        self.verbose = verbose
        self.output_dir = Path(cfg.output.directory)
        self._started = time.perf_counter()

    def _log(self, message: str):
        """Detail line with the elapsed time: INFO under --verbose, DEBUG otherwise."""
        level = logging.INFO if self.verbose else logging.DEBUG
        logger.log(level, "[%.1fs] %s", time.perf_counter() - self._started, message)

    def _banner(self, title: str, lines: Sequence[str] = ()) -> None:
        print(f"\n{'=' * 60}")
        print(title)
        print(f"{'=' * 60}")
        for line in lines:
            print(line)
        print(f"{'=' * 60}\n")

    def _output(self, name: str) -> str:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return str(self.output_dir / name)

    def _finish(
        self,
        command: str,
        files: Sequence[str],
        seeds: Optional[Dict[str, int]] = None,
        details: Optional[Dict] = None,
        status: str = "ok",
    ) -> str:
        elapsed = time.perf_counter() - self._started
        manifest = RunManifest(
            command=command,
            version=__version__,
            config=serialize_config(self.cfg),
            seeds=dict(seeds or {}),
            timings={"total_seconds": round(elapsed, 3)},
            status=status,
            details=dict(details or {}),
        )
        for file_path in files:
            manifest.add_file(file_path, str(self.output_dir))
        manifest_path = self._output(f"{command}_manifest.json")
        manifest.write(manifest_path)
        print(f"Manifest: {manifest_path}")
        print(f"\n{'=' * 60}")
        print(f"stiff-pinn {command} - Complete ({status})")
        print(f"Total Time: {elapsed:.1f}s")
        print(f"{'=' * 60}\n")
        return manifest_path

    def _plot(self, csv_path: str, files: List[str], **kwargs) -> None:
        if not self.cfg.output.emit_svg:
            return
        svg_path = str(Path(csv_path).with_suffix(".svg"))
        plot_csv([csv_path], svg_path, **kwargs)
        files.append(svg_path)

    # -- shared pieces -----------------------------------------------------

    @cached_property
    def mechanism(self) -> Mechanism:
        m = load_mechanism(self.cfg.mechanism.source)
        self._log(f"Mechanism: {m.n_species} species, {m.n_reactions} reactions")
        return m

    @property
    def t_span(self) -> Tuple[float, float]:
        t0, t1 = self.mechanism.t_span
        if self.cfg.solver.t_end is not None:
            t1 = self.cfg.solver.t_end
        if not t1 > t0:
            raise ConfigError(f"solver.t_end={t1:g} must exceed the mechanism start time {t0:g}")
        return t0, t1

    def solver_config(
        self,
        method: Optional[str] = None,
        rtol: Optional[float] = None,
        indices: Optional[Sequence[int]] = None,
    ) -> SolverConfig:
        """Solver settings from ``[solver]``; per-species atol is restricted to ``indices``."""
        s = self.cfg.solver
        atol = s.atol
        if len(atol) == 1:
            atol = atol[0]
        elif len(atol) != self.mechanism.n_species:
            raise ConfigError(
                f"solver.atol has {len(atol)} entries; give one value or one per species "
                f"({self.mechanism.n_species})"
            )
        elif indices is not None:
            atol = tuple(atol[i] for i in indices)
        return SolverConfig(
            rtol=rtol or s.rtol,
            atol=atol,
            initial_step=s.initial_step,
            max_steps=s.max_steps,
            method=method or s.method,
        )

    def output_times(self, t_span: Tuple[float, float]) -> Optional[np.ndarray]:
        """The ``[solver] output_grid``: log, linear, or None for every accepted step."""
        t0, t1 = t_span
        n = self.cfg.solver.output_points
        if self.cfg.solver.output_grid == "steps":
            return None
        if self.cfg.solver.output_grid == "linear":
            return np.linspace(t0, t1, n)
        if t0 > 0:
            grid = np.logspace(np.log10(t0), np.log10(t1), n)
        else:
            grid = np.concatenate([[t0], np.logspace(np.log10(t1 * LOG_GRID_START), np.log10(t1), n - 1)])
        # logspace endpoints do not round-trip through log10
        grid[0], grid[-1] = t0, t1
        return grid

    def _full_rhs(self):
        kinetics = self.mechanism.kinetics
        return (lambda t, y: kinetics.rhs(y)), (lambda t, y: kinetics.jacobian(y))

    @cached_property
    def reference(self) -> SolutionTrajectory:
        """Full-system BDF run over every accepted step, with dense output.

        Always covers the mechanism span (QSS selection needs it), extended
        to ``solver.t_end`` when that lies beyond.
        """
        m = self.mechanism
        rhs, jac = self._full_rhs()
        span = (m.t_span[0], max(m.t_span[1], self.t_span[1]))
        started = time.perf_counter()
        trajectory = integrate_bdf(rhs, jac, m.y0, span, self.solver_config("bdf"), dense_output=True)
        trajectory.species_names = m.species_names
        self._log(
            f"Reference BDF run: {trajectory.stats.accepted_steps} steps "
            f"({time.perf_counter() - started:.1f}s)"
        )
        return trajectory

    @cached_property
    def partition(self) -> QssPartition:
        """Explicit ``qssa.species`` or the threshold selection on the reference run."""
        m = self.mechanism
        if self.cfg.qssa.species:
            partition = QssPartition.from_qss(m.indices_of(self.cfg.qssa.species), m.n_species)
        else:
            partition = select_qss_species(
                m, self.reference, self.cfg.qssa.threshold, self.cfg.qssa.consumed_only
            )
        if not partition.qss_indices:
            raise PartitionError(
                f"Empty QSS set: no eligible species stays below threshold "
                f"{self.cfg.qssa.threshold:g}.\n\n"
                f"Raise qssa.threshold or list species explicitly with --qssa.species=..."
            )
        self._log("QSS species: " + " ".join(partition.qss_names(m)))
        return partition

    def closure_mode(self, partition: QssPartition) -> str:
        mode = self.cfg.qssa.closure
        if mode != "auto":
            return mode
        if rober_rate_constants(self.mechanism) is not None and partition.qss_indices == (1,):
            return "closed-form-rober"
        return "newton"

    def reduced_system(self, partition: Optional[QssPartition] = None) -> ReducedSystem:
        partition = partition or self.partition
        threshold = self.cfg.qssa.threshold
        return ReducedSystem(
            self.mechanism,
            partition,
            closure_mode=self.closure_mode(partition),
            tolerance=self.cfg.qssa.tolerance,
            max_iterations=self.cfg.qssa.max_iterations,
            initial_guess=threshold / 10.0 if threshold > 0 else 1e-5,
        )

    def reduced_start(self, r: ReducedSystem) -> Tuple[float, np.ndarray]:
        """First reference time from which the closure converges, with the non-QSS state there.

        The closure has no solution at initial states that lack some species
        (POLLU starts with NO2 = 0); the reduced run then starts from the full
        BDF state once the closure holds.
        """
        reference = self.reference
        onset = closure_onset(r, reference.states)
        if onset >= reference.times.size or reference.times[onset] >= self.t_span[1]:
            raise ClosureError(
                f"QSS closure does not converge along the reference run before t={self.t_span[1]:g}"
            )
        t_start = float(reference.times[onset])
        if onset:
            logger.warning(
                "QSS closure fails until t=%.3g; the reduced run starts from the full BDF state there",
                t_start,
            )
        return t_start, reference.states[onset, r.non_qss]

    def training_system(self) -> System:
        if self.cfg.training.mode == "regular":
            return self.mechanism
        return self.reduced_system()

    def species_weights(self, species: Sequence[str]) -> Optional[Tuple[float, ...]]:
        """``training.species_weights``: empty, ``auto`` (1/max^2 from the reference) or a list."""
        text = self.cfg.training.species_weights.strip()
        if not text:
            return None
        if text.lower() == "auto":
            m = self.mechanism
            maxima = species_maxima(m, self.reference)[list(m.indices_of(species))]
            return tuple(float(w) for w in 1.0 / np.maximum(maxima, WEIGHT_SCALE_FLOOR) ** 2)
        try:
            weights = tuple(float(v) for v in text.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"Invalid training.species_weights: {text!r}") from None
        if len(weights) != len(species):
            raise ConfigError(
                f"training.species_weights has {len(weights)} entries for "
                f"{len(species)} trained species ({', '.join(species)})"
            )
        return weights

    def training_config(self, species: Sequence[str], rng_seed: Optional[int] = None) -> TrainingConfig:
        t = self.cfg.training
        return TrainingConfig(
            n_collocation=t.n_collocation,
            t_min=t.t_min,
            t_max=t.t_max,
            sampling=t.sampling,
            batch_size=t.batch_size,
            learning_rate=t.learning_rate,
            max_updates=t.max_updates,
            species_weights=self.species_weights(species),
            rng_seed=t.seed if rng_seed is None else rng_seed,
            output_transform=t.output_transform,
            y_ref_scale=t.y_ref_scale or None,
            ic_weights=t.ic_weights or None,
            log_every=t.log_every,
            plateau_window=t.plateau_window,
        )

    def evaluation_times(self, points: Optional[int] = None) -> np.ndarray:
        t = self.cfg.training
        return eval_grid(t.t_min, t.t_max, points or self.cfg.output.eval_points, log=t.sampling == "log-uniform")

    # -- commands ----------------------------------------------------------

    def cmd_simulate(self) -> int:
        """Integrate the full or reduced system and write the trajectory CSV."""
        s = self.cfg.solver
        m = self.mechanism
        span = self.t_span
        self._banner("stiff-pinn - Simulate", [
            f"Mechanism: {self.cfg.mechanism.source}",
            f"System: {s.system}",
            f"Method: {s.method}",
            f"Tolerances: rtol={s.rtol:g} atol={','.join(f'{a:g}' for a in s.atol)}",
            f"Span: [{span[0]:g}, {span[1]:g}]",
            f"Output: {self.output_dir}",
        ])
        times = self.output_times(span)
        started = time.perf_counter()
        if s.system == "full":
            rhs, jac = self._full_rhs()
            cfg = self.solver_config()
            if s.method == "bdf":
                trajectory = integrate_bdf(rhs, jac, m.y0, span, cfg, times)
            else:
                trajectory = integrate_dopri5(rhs, m.y0, span, cfg, times)
            trajectory.species_names = m.species_names
            details = {}
        else:
            r = self.reduced_system()
            t_start, y_start = self.reduced_start(r)
            rhs = ReducedRhs(r)
            cfg = self.solver_config(indices=r.partition.non_qss_indices)
            reference = self.reference
            if times is None:
                head_rows = reference.times < t_start
                head_times, head_states = reference.times[head_rows], reference.states[head_rows]
                tail = None
            else:
                head_times = times[times < t_start]
                head_states = reference.sample(head_times) if head_times.size else np.empty((0, m.n_species))
                tail = times[times >= t_start]
            tail_span = (t_start, span[1])
            if s.method == "bdf":
                reduced = integrate_bdf(rhs, rhs.jacobian, y_start, tail_span, cfg, tail)
            else:
                reduced = integrate_dopri5(rhs, y_start, tail_span, cfg, tail)
            trajectory = SolutionTrajectory(
                times=np.concatenate([head_times, reduced.times]),
                states=np.vstack([head_states, rhs.full_states(reduced.times, reduced.states)]),
                stats=reduced.stats,
                species_names=m.species_names,
            )
            details = {
                "qss_species": list(r.qss_names),
                "closure": r.closure_mode,
                "reduced_start_time": t_start,
            }
        elapsed = time.perf_counter() - started

        stats = trajectory.stats
        print(f"Integrated in {elapsed:.1f}s: {stats.accepted_steps} accepted, "
              f"{stats.rejected_steps} rejected, {stats.rhs_evaluations} RHS evaluations")
        csv_path = self._output("trajectory.csv")
        trajectory.write_csv(csv_path)
        print(f"Trajectory: {csv_path} ({trajectory.times.size} rows)")
        files = [csv_path]
        self._plot(csv_path, files, logx=s.output_grid == "log", logy=True, title=self.cfg.mechanism.source)
        details["stats"] = asdict(stats)
        self._finish("simulate", files, details=details)
        return EXIT_OK

    def cmd_reduce(self) -> int:
        """Select the QSS partition and self-test its closure on the reference run."""
        m = self.mechanism
        self._banner("stiff-pinn - Reduce", [
            f"Mechanism: {self.cfg.mechanism.source}",
            f"Threshold: {self.cfg.qssa.threshold:g}",
            f"Consumed-only filter: {self.cfg.qssa.consumed_only}",
            f"Output: {self.output_dir}",
        ])
        reference = self.reference
        maxima = species_maxima(m, reference)
        partition = self.partition
        r = self.reduced_system(partition)
        consumed = set(m.consumed_species())
        excluded = [
            m.species_names[i] for i in range(m.n_species)
            if maxima[i] < self.cfg.qssa.threshold and i not in consumed
        ]

        files = []
        partition_path = self._output("partition.qss")
        Path(partition_path).write_text(serialize_partition(partition, m), encoding="utf-8")
        files.append(partition_path)
        mech_path = self._output("reduced.mech")
        Path(mech_path).write_text(serialize_mechanism(m, r.qss_names), encoding="utf-8")
        files.append(mech_path)

        maxima_path = self._output("species_maxima.csv")
        flags = np.array([
            maxima,
            [1.0 if i in partition.qss_indices else 0.0 for i in range(m.n_species)],
            [1.0 if i in consumed else 0.0 for i in range(m.n_species)],
        ])
        write_table(maxima_path, m.species_names, flags, trailer=[
            "row 1: maximum concentration over the reference run",
            "row 2: 1 if QSS",
            "row 3: 1 if consumed by some reaction",
        ])
        files.append(maxima_path)

        times = reference.times
        y_non_qss = reference.states[:, r.non_qss]
        y_qss, report = solve_qss_closure(r, 0.0, y_non_qss)
        residual = closure_residual_norm(r, r.embed(np.abs(y_non_qss), y_qss))
        expected = reference.states[:, r.qss]
        selftest_path = self._output("closure_selftest.csv")
        write_table(
            selftest_path,
            ("t", "residual_norm", "converged", *r.qss_names, *(f"{n}_reference" for n in r.qss_names)),
            np.column_stack([times, residual, report.point_converged.astype(float), y_qss, expected]),
            trailer=[f"closure={r.closure_mode}", f"tolerance={r.tolerance!r}"],
        )
        files.append(selftest_path)

        n_ok = int(np.count_nonzero(report.point_converged))
        onset = closure_onset(r, reference.states)
        start = float(times[onset]) if onset < times.size else None
        print(serialize_partition(partition, m).rstrip())
        print(f"Non-QSS species: {' '.join(r.non_qss_names)}")
        if excluded:
            print(f"Below threshold but never consumed (kept non-QSS): {' '.join(excluded)}")
        print(f"Closure ({r.closure_mode}) self-test: {n_ok}/{times.size} points converged, "
              f"max residual {float(np.max(residual)) if residual.size else 0.0:.3g}")
        if onset:
            print(f"Closure holds from t={start:g} on" if start is not None else "Closure fails at the end of the run")
        self._finish("reduce", files, details={
            "qss_species": list(r.qss_names),
            "excluded_species": excluded,
            "closure": r.closure_mode,
            "selftest_converged": n_ok,
            "selftest_points": int(times.size),
            "reduced_start_time": start,
        })
        return EXIT_OK

    def cmd_train(self) -> int:
        """Train one network in ``regular`` or ``stiff`` mode."""
        t = self.cfg.training
        system = self.training_system()
        species = trained_species(system)
        tcfg = self.training_config(species)
        widths = (1, *self.cfg.network.widths, len(species))
        model = MlpModel.initialize(
            widths,
            tcfg.rng_seed,
            species=species,
            y0=system.y0,
            transform=tcfg.output_transform,
            time_scale=tcfg.t_max,
        )
        lines = [
            f"Mechanism: {self.cfg.mechanism.source}",
            f"Mode: {t.mode}",
            f"Trained species: {' '.join(species)}",
            f"Widths: {','.join(str(w) for w in widths)} ({model.n_params} parameters)",
            f"Collocation: {tcfg.n_collocation} {tcfg.sampling} on [{tcfg.t_min:g}, {tcfg.t_max:g}]",
            f"Batch: {tcfg.batch_size}  Learning rate: {tcfg.learning_rate:g}",
            f"Max updates: {tcfg.max_updates}",
            f"Seed: {tcfg.rng_seed}",
            f"Output: {self.output_dir}",
        ]
        if isinstance(system, ReducedSystem):
            lines.insert(3, f"QSS species: {' '.join(system.qss_names)} ({system.closure_mode})")
        self._banner("stiff-pinn - Train", lines)

        def report(record) -> None:
            print(f"[update {record.step:>7d}] loss {record.total_loss:.6e} ({record.wall_time:.1f}s)")

        result = train(model, system, tcfg, sinks=[report])

        files = []
        checkpoint_path = self._output("checkpoint.txt")
        save_checkpoint(result.model, checkpoint_path)
        files.append(checkpoint_path)
        history_path = self._output("loss_history.csv")
        history = np.array(
            [[r.step, r.total_loss, *r.per_species_loss, r.wall_time] for r in result.history]
        ).reshape(len(result.history), len(species) + 3)
        write_table(history_path, ("step", "total_loss", *species, "wall_time"), history)
        files.append(history_path)
        if result.history:
            self._plot(history_path, files, species=("total_loss", *species), logy=True, title=f"{t.mode} loss")

        final = result.history[-1].total_loss if result.history else float("nan")
        print(f"Updates: {result.updates}{' (stopped on plateau)' if result.stopped_early else ''}")
        print(f"Final loss: {final:.6e}")
        if result.excluded_points:
            print(f"Collocation points excluded by closure failures: {result.excluded_points}")
        print(f"Checkpoint: {checkpoint_path}")
        self._finish("train", files, seeds={"training.seed": tcfg.rng_seed}, details={
            "mode": t.mode,
            "widths": list(widths),
            "updates": result.updates,
            "final_loss": final,
            "stopped_early": result.stopped_early,
            "excluded_points": result.excluded_points,
        })
        return EXIT_OK

    def load_predictor(self, checkpoint: str):
        """A checkpoint file, or a trajectory CSV replayed as a model."""
        if Path(checkpoint).suffix.lower() == ".csv":
            return TrajectoryPredictor(SolutionTrajectory.read_csv(checkpoint))
        return load_checkpoint(checkpoint)

    def cmd_evaluate(
        self,
        checkpoint: Optional[str] = None,
        reference: Optional[str] = None,
        species: Optional[Sequence[str]] = None,
        eval_points: Optional[int] = None,
        reconstruct_qss: bool = False,
    ) -> int:
        """Per-species RMSE of a checkpoint against a reference trajectory."""
        checkpoint = checkpoint or str(self.output_dir / "checkpoint.txt")
        if not Path(checkpoint).is_file():
            raise FileNotFoundError(f"Checkpoint not found: {checkpoint}\n\nRun 'stiff-pinn train' first or pass --checkpoint")
        predictor = self.load_predictor(checkpoint)
        if reconstruct_qss:
            m = self.mechanism
            missing = [name for name in m.species_names if name not in predictor.species]
            if missing:
                partition = QssPartition.from_qss(m.indices_of(missing), m.n_species)
                predictor = FullStatePredictor(predictor, self.reduced_system(partition))
            else:
                logger.warning("--reconstruct-qss ignored: the checkpoint predicts every species")
        ref = SolutionTrajectory.read_csv(reference) if reference else self.reference
        times = self.evaluation_times(eval_points)
        species = tuple(species or predictor.species)
        self._banner("stiff-pinn - Evaluate", [
            f"Checkpoint: {checkpoint}",
            f"Reference: {reference or 'BDF run of ' + self.cfg.mechanism.source}",
            f"Species: {' '.join(species)}",
            f"Evaluation grid: {times.size} points on [{times[0]:g}, {times[-1]:g}]",
            f"Output: {self.output_dir}",
        ])

        rmse = evaluate_rmse(predictor, ref, species, times)
        expected = ref.sample(times)[:, [ref.species_names.index(name) for name in species]]
        scale = np.max(np.abs(expected), axis=0)
        normalized = np.where(scale > 0, rmse / np.where(scale > 0, scale, 1.0), np.nan)

        files = []
        rmse_path = self._output("rmse.csv")
        write_table(rmse_path, species, np.array([rmse, normalized]), trailer=[
            "row 1: RMSE",
            "row 2: RMSE / max|reference|",
        ])
        files.append(rmse_path)
        prediction_path = self._output("prediction.csv")
        cols = [list(predictor.species).index(name) for name in species]
        predicted = np.asarray(predictor(times), dtype=float).reshape(times.size, -1)[:, cols]
        write_table(prediction_path, ("t", *species), np.column_stack([times, predicted]))
        files.append(prediction_path)
        self._plot(prediction_path, files, logx=self.cfg.training.sampling == "log-uniform", title="prediction")

        for name, value, rel in zip(species, rmse, normalized):
            print(f"  {name:<10s} RMSE {value:.4e}  normalized {rel:.4e}")
        self._finish("evaluate", files, details={
            "checkpoint": checkpoint,
            "reference": reference or "",
            "rmse": dict(zip(species, (float(v) for v in rmse))),
        })
        return EXIT_OK

    def cmd_sweep(self, jobs: Optional[int] = None) -> int:
        """Train every (width x depth, seed) cell and report the median RMSE per architecture."""
        grid = parse_grid(self.cfg.sweep.grid)
        n_seeds = self.cfg.sweep.seeds
        jobs = jobs or self.cfg.sweep.jobs
        system = self.training_system()
        species = trained_species(system)
        tcfg = self.training_config(species)
        times = self.evaluation_times()
        cols = [self.reference.species_names.index(name) for name in species]
        expected = self.reference.sample(times)[:, cols]
        self._banner("stiff-pinn - Sweep", [
            f"Mechanism: {self.cfg.mechanism.source}",
            f"Mode: {self.cfg.training.mode}",
            f"Grid: {', '.join(f'{w}x{d}' for w, d in grid)}",
            f"Seeds per cell: {n_seeds}",
            f"Max updates: {tcfg.max_updates}",
            f"Jobs: {jobs}",
            f"Output: {self.output_dir}",
        ])

        tasks = []
        seeds = {}
        for cell, (width, depth) in enumerate(grid):
            for seed_index in range(n_seeds):
                seed = derive_seed(tcfg.rng_seed, SWEEP, cell, seed_index)
                seeds[f"{width}x{depth}#{seed_index}"] = seed
                tasks.append(SweepTask(
                    cell=cell,
                    seed_index=seed_index,
                    seed=seed,
                    widths=(1, *([width] * depth), len(species)),
                    system=system,
                    training=replace(tcfg, rng_seed=seed),
                    eval_times=times,
                    expected=expected,
                ))

        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(run_sweep_task, tasks))
        else:
            outcomes = [run_sweep_task(task) for task in tasks]

        run_rows, table_rows = [], []
        failures = 0
        for task, outcome in zip(tasks, outcomes):
            width, depth = grid[task.cell]
            status = "ok" if outcome["ok"] else f"FAILED: {outcome['error']}"
            print(f"[{width}x{depth} seed {task.seed_index}] loss {outcome['final_loss']:.4e} "
                  f"({outcome['seconds']:.1f}s) {status}")
            failures += not outcome["ok"]
            run_rows.append([width, depth, task.seed_index, float(outcome["ok"]), outcome["updates"],
                             outcome["final_loss"], *outcome["rmse"]])
        runs = np.array(run_rows, dtype=float)
        for cell, (width, depth) in enumerate(grid):
            block = runs[cell * n_seeds:(cell + 1) * n_seeds]
            ok = block[:, 3] == 1.0
            median = np.median(block[ok, 6:], axis=0) if np.any(ok) else np.full(len(species), np.nan)
            table_rows.append([width, depth, float(ok.sum()), *median])

        files = []
        table_path = self._output("sweep.csv")
        write_table(table_path, ("width", "depth", "completed", *(f"rmse_{n}" for n in species)),
                    np.array(table_rows))
        files.append(table_path)
        runs_path = self._output("sweep_runs.csv")
        write_table(runs_path, ("width", "depth", "seed_index", "ok", "updates", "final_loss",
                                *(f"rmse_{n}" for n in species)), runs)
        files.append(runs_path)

        print(f"\n{'width':>6s} {'depth':>6s} " + " ".join(f"{'rmse_' + n:>14s}" for n in species))
        for row in table_rows:
            print(f"{int(row[0]):>6d} {int(row[1]):>6d} " + " ".join(f"{v:>14.4e}" for v in row[3:]))

        status = "partial" if failures else "ok"
        self._finish("sweep", files, seeds=seeds, status=status, details={
            "runs": len(tasks),
            "failed_runs": failures,
            "errors": [o["error"] for o in outcomes if not o["ok"]],
        })
        return EXIT_PARTIAL if failures else EXIT_OK

    def cmd_stiffness(self, compare_t_end: float = 100.0, compare_rtol: float = 1e-6) -> int:
        """Jacobian spectrum along the BDF trajectory, plus the Dopri5 vs BDF step counts."""
        m = self.mechanism
        span = self.t_span
        rhs, jac = self._full_rhs()
        compare_span = (span[0], min(compare_t_end, span[1]))
        self._banner("stiff-pinn - Stiffness", [
            f"Mechanism: {self.cfg.mechanism.source}",
            f"Span: [{span[0]:g}, {span[1]:g}]",
            f"Step-count comparison: [{compare_span[0]:g}, {compare_span[1]:g}] at rtol={compare_rtol:g}",
            f"Output: {self.output_dir}",
        ])
        trajectory = integrate_bdf(rhs, jac, m.y0, span, self.solver_config("bdf"), self.output_times(span))

        n = m.n_species
        rows = []
        missing = 0
        for t, y in zip(trajectory.times, trajectory.states):
            try:
                spectrum = stiffness_spectrum(jac, StateVector(t, y))
            except EigenSolverError as exc:
                logger.warning("t=%g: eigenvalues missing (%s)", t, exc)
                missing += 1
                rows.append([t] + [np.nan] * (3 + 2 * n))
                continue
            spectrum = spectrum[np.lexsort((spectrum.real, -np.abs(spectrum)))]
            largest = float(np.max(np.abs(spectrum)))
            try:
                ratio = stiffness_ratio(spectrum)
                smallest = largest / ratio
            except UndefinedStiffnessError:
                ratio = smallest = np.nan
            pairs = np.column_stack([spectrum.real, spectrum.imag]).ravel()
            rows.append([t, ratio, largest, smallest, *pairs])

        files = []
        columns = ["t", "ratio", "max_abs", "min_abs_nonzero"]
        for k in range(n):
            columns += [f"eig{k + 1}_re", f"eig{k + 1}_im"]
        spectrum_path = self._output("stiffness.csv")
        write_table(spectrum_path, columns, np.array(rows))
        files.append(spectrum_path)
        self._plot(spectrum_path, files, species=("ratio",), logx=True, logy=True, title="stiffness ratio")

        bdf = BdfSolver(rhs, jac, m.y0, compare_span, self.solver_config("bdf", rtol=compare_rtol))
        run_solver(bdf, [compare_span[1]])
        dopri = Dopri5Solver(rhs, m.y0, compare_span, self.solver_config("dopri5", rtol=compare_rtol))
        completed = True
        try:
            run_solver(dopri, [compare_span[1]])
        except StepLimitExceeded as exc:
            logger.warning("%s", exc)
            completed = False
        step_ratio = dopri.stats.accepted_steps / max(bdf.stats.accepted_steps, 1)
        counts_path = self._output("step_counts.csv")
        write_table(counts_path, (
            "t_end", "rtol",
            "bdf_accepted", "bdf_rejected", "bdf_rhs_evaluations", "bdf_jacobian_evaluations",
            "dopri5_accepted", "dopri5_rejected", "dopri5_rhs_evaluations", "dopri5_completed",
            "step_ratio",
        ), np.array([[
            compare_span[1], compare_rtol,
            bdf.stats.accepted_steps, bdf.stats.rejected_steps,
            bdf.stats.rhs_evaluations, bdf.stats.jacobian_evaluations,
            dopri.stats.accepted_steps, dopri.stats.rejected_steps,
            dopri.stats.rhs_evaluations, float(completed),
            step_ratio,
        ]]))
        files.append(counts_path)

        ratios = np.array([row[1] for row in rows], dtype=float)
        finite = ratios[np.isfinite(ratios)]
        if finite.size:
            print(f"Stiffness ratio: min {finite.min():.3e}, max {finite.max():.3e} "
                  f"over {finite.size} of {len(rows)} output times")
        if missing:
            print(f"Eigenvalues missing at {missing} output time(s)")
        print(f"Accepted steps on [{compare_span[0]:g}, {compare_span[1]:g}]: BDF {bdf.stats.accepted_steps}, "
              f"Dopri5 {dopri.stats.accepted_steps}{'' if completed else ' (step limit hit)'} "
              f"-> ratio {step_ratio:.1f}")
        self._finish("stiffness", files, details={
            "missing_points": missing,
            "step_ratio": step_ratio,
            "dopri5_completed": completed,
        })
        return EXIT_OK

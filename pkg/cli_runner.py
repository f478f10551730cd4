import csv
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from pydantic import BaseModel, ValidationError

from config import Config
from diagnostics import (
    cesaro_deviation,
    convergence_series,
    counterexample_prefix_bound,
    ensemble_summary,
    prefix_deviation_series,
    prefix_deviations,
    summability_partial_sums,
    windowed_bound_from_prefix,
    windowed_deviation_series,
)
from errors import ConfigParseError, ConfigValidationError, OverflowRisk
from markov_core import (
    cesaro_stationary,
    counterexample_schedule,
    entropy_rate,
    stationary_distribution,
    validate_matrix,
)
from models import (
    RESULT_COLUMNS,
    ConditionReport,
    ConvergenceRecord,
    ExperimentConfig,
    OutputFormat,
    StochasticMatrix,
)
from utils import format_float, parse_probability

logger = logging.getLogger(__name__)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a JSON experiment config, reporting every error"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, e.lineno, e.colno)
    if not isinstance(data, dict):
        raise ConfigParseError("top-level config must be a JSON object", 1, 1)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError([(".".join(str(part) for part in err["loc"]), err["msg"]) for err in e.errors()])


def serialize_config(config: ExperimentConfig) -> str:
    return config.model_dump_json(indent=2)


def load_config(path: str) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def config_digest(config: ExperimentConfig) -> str:
    """Short content hash of everything that shapes the results; stamped on every output file"""
    canonical = config.model_dump_json(exclude={"outputs", "jobs"})
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, out_dir: Optional[str] = None,
                    fmt: Optional[str] = None, jobs: Optional[int] = None) -> ExperimentConfig:
    """CLI flag overrides, revalidated through the model"""
    data = config.model_dump(mode="json")
    if seed is not None:
        data["seeds"] = [seed]
    if out_dir is not None:
        data["outputs"]["out_dir"] = out_dir
    if fmt is not None:
        data["outputs"]["format"] = fmt
    if jobs is not None:
        data["jobs"] = jobs
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigValidationError([(".".join(str(part) for part in err["loc"]), err["msg"]) for err in e.errors()])


def load_matrix_file(path: str) -> StochasticMatrix:
    """Read a matrix file: a JSON list of rows or an object with 'entries'"""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, e.lineno, e.colno)
    if isinstance(data, dict):
        data = data.get("entries")
    if not isinstance(data, list):
        raise ConfigParseError("matrix file must hold a list of rows or an object with 'entries'")
    try:
        rows = [[parse_probability(x) for x in row] for row in data]
    except (TypeError, ValueError) as e:
        raise ConfigParseError(f"bad matrix entry: {e}")
    return validate_matrix(rows)


class RunArtifacts(BaseModel):
    """Files written by one run, plus the id stamped into each of them"""
    run_id: str
    results_path: Optional[str] = None
    conditions_path: str
    manifest_path: str
    record_count: int = 0


class ExperimentRunner:
    """Orchestrates condition checks, the convergence series and all output files"""

    def __init__(self, config: ExperimentConfig, progress_callback: Optional[Callable[[str], None]] = None):
        self.config = config
        self.progress_callback = progress_callback
        self.step_counter = 0
        self.run_id = config_digest(config)

    def _log_progress(self, message: str):
        """Log progress step and call callback if provided"""
        self.step_counter += 1
        full_message = f"Step {self.step_counter}: {message}"
        logger.info(full_message)
        if self.progress_callback:
            self.progress_callback(full_message)

    def check_conditions(self) -> List[ConditionReport]:
        """Summability, windowed and prefix condition reports; no simulation"""
        settings = self.config.conditions
        plan = self.config.window_plan
        schedule = self.config.schedule
        reports = []

        if settings.check_summability:
            report = summability_partial_sums(plan, settings.epsilon, settings.summability_cutoff)
            reports.append(report)
            self._log_progress(f"Summability (epsilon={settings.epsilon}): {report.verdict.value}")

        if settings.check_windowed:
            report = None
            if settings.derive_windowed_from_prefix:
                report = windowed_bound_from_prefix(schedule, plan, settings.threshold, settings.ratio_limit)
                if report is None:
                    self._log_progress("a_n/phi(n) unbounded on the grid, computing windowed condition directly")
            if report is None:
                report = windowed_deviation_series(schedule, plan, settings.threshold)
            reports.append(report)
            self._log_progress(f"Windowed Cesaro condition: {report.verdict.value} (last D_n={report.values[-1]:.6g})")

        if settings.check_prefix:
            grid = settings.prefix_grid or sorted({a + phi for _, a, phi in plan.windows()})
            if grid[-1] > self.config.step_budget:
                raise OverflowRisk(plan.n_grid[-1], grid[-1], self.config.step_budget)
            report = prefix_deviation_series(schedule, grid, settings.threshold)
            reports.append(report)
            self._log_progress(f"Prefix Cesaro condition: {report.verdict.value} (last={report.values[-1]:.6g})")
        return reports

    def run(self) -> RunArtifacts:
        """Full experiment: conditions, convergence records, ensemble summary, manifest"""
        cfg = self.config
        self._log_progress(f"Experiment '{cfg.name}': b={cfg.states}, schedule={cfg.schedule.kind.value}, "
                           f"{len(cfg.window_plan.n_grid)} grid points x {len(cfg.seeds)} seeds")
        reports = self.check_conditions()

        self._log_progress("Simulating delayed windows...")
        records = convergence_series(cfg, progress=self._log_progress)
        summary = ensemble_summary(records, cfg.states)
        self._log_progress(f"Collected {len(records)} records")

        out_dir = self._prepare_out_dir()
        results_path = out_dir / f"{cfg.outputs.results_file}.{cfg.outputs.format.value}"
        if cfg.outputs.format == OutputFormat.CSV:
            write_results_csv(results_path, records, self.run_id, cfg.outputs.manifest_file)
        else:
            write_results_json(results_path, records, self.run_id, cfg.outputs.manifest_file)
        conditions_path = out_dir / cfg.outputs.conditions_file
        write_conditions_json(conditions_path, reports, self.run_id, cfg.outputs.manifest_file, summary)
        manifest_path = self._write_manifest(out_dir, [results_path, conditions_path])
        self._log_progress(f"Results written to {out_dir}")
        return RunArtifacts(run_id=self.run_id, results_path=str(results_path), conditions_path=str(conditions_path),
                            manifest_path=str(manifest_path), record_count=len(records))

    def check(self) -> RunArtifacts:
        """Conditions only"""
        reports = self.check_conditions()
        out_dir = self._prepare_out_dir()
        conditions_path = out_dir / self.config.outputs.conditions_file
        write_conditions_json(conditions_path, reports, self.run_id, self.config.outputs.manifest_file)
        manifest_path = self._write_manifest(out_dir, [conditions_path])
        return RunArtifacts(run_id=self.run_id, conditions_path=str(conditions_path), manifest_path=str(manifest_path))

    def _prepare_out_dir(self) -> Path:
        out_dir = Path(self.config.outputs.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return out_dir

    def _write_manifest(self, out_dir: Path, files: List[Path]) -> Path:
        path = out_dir / self.config.outputs.manifest_file
        manifest = {
            "run_id": self.run_id,
            "tool_version": Config.TOOL_VERSION,
            "schema_version": Config.SCHEMA_VERSION,
            "rng_id": self.config.rng_id,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "files": [p.name for p in files],
            "config": self.config.model_dump(mode="json"),
        }
        path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return path


def _record_row(record: ConvergenceRecord) -> List[str]:
    row = []
    for column in RESULT_COLUMNS:
        value = getattr(record, column)
        row.append(str(value) if isinstance(value, int) else format_float(value))
    return row


def write_results_csv(path: Path, records: List[ConvergenceRecord], run_id: str, manifest_name: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# run_id={run_id} manifest={manifest_name}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for record in records:
            writer.writerow(_record_row(record))


def write_results_json(path: Path, records: List[ConvergenceRecord], run_id: str, manifest_name: str):
    rows = [dict(zip(RESULT_COLUMNS, _record_row(r))) for r in records]
    payload = {"run_id": run_id, "manifest": manifest_name, "columns": RESULT_COLUMNS, "records": rows}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, indent=2) + "\n")


def write_conditions_json(path: Path, reports: List[ConditionReport], run_id: str, manifest_name: str,
                          summary: Optional[List[Dict[str, Any]]] = None):
    payload: Dict[str, Any] = {
        "run_id": run_id,
        "manifest": manifest_name,
        "conditions": [r.model_dump(mode="json") for r in reports],
    }
    if summary is not None:
        payload["ensemble"] = summary
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, indent=2) + "\n")


def counterexample_table(n_max: int = 20, step_budget: int = Config.STEP_BUDGET) -> List[Dict[str, float]]:
    """Windowed deviation at (a=2^n, phi=n) next to the prefix deviation at 2^n and its closed-form bound"""
    if n_max < 1:
        raise ValueError(f"n_max must be positive, got {n_max}")
    if 2 ** n_max + n_max > step_budget:
        raise OverflowRisk(n_max, 2 ** n_max + n_max, step_budget)
    schedule = counterexample_schedule()
    ends = [2 ** n for n in range(1, n_max + 1)]
    prefix = prefix_deviations(schedule, ends)
    rows = []
    for n, end, value in zip(range(1, n_max + 1), ends, prefix):
        rows.append({
            "n": n,
            "windowed": cesaro_deviation(schedule, 2 ** n, n)[1],
            "prefix_at_2^n": value,
            "prefix_bound": counterexample_prefix_bound(end),
        })
    return rows


def stationary_report(matrix: StochasticMatrix, cesaro_m: int = Config.DEFAULT_CESARO_M) -> Dict[str, Any]:
    """pi, its residual, the entropy rate and the Cesaro cross-check for one matrix"""
    pi = stationary_distribution(matrix)
    rows = cesaro_stationary(matrix, cesaro_m)
    gap = max(abs(row.array - pi.array).max() for row in rows)
    return {
        "pi": pi.weights,
        "residual": pi.residual,
        "entropy_rate": entropy_rate(matrix, pi),
        "cesaro_m": cesaro_m,
        "cesaro_rows": [row.weights for row in rows],
        "cesaro_max_gap": float(gap),
    }

from fastapi import APIRouter, Depends, HTTPException, status
from fastapi.responses import PlainTextResponse
from sqlalchemy.orm import Session
import io
import logging

from db.models import ExperimentRun, PointResult, RunKind, RunStatus, get_db
from noc.errors import DeadlockDetected, HermesError
from noc.harness import (
    CSV_HEADER,
    aggregate_values,
    csv_row,
    dynamic_fault_experiment,
    record_values,
    run_point,
    run_points,
    seed_groups,
    write_csv,
)
from schemas.experiments import (
    DynamicRequest,
    DynamicSeries,
    ExperimentConfig,
    ExperimentRunResponse,
    MetricsRecord,
    PointRequest,
    SweepRequest,
)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/experiments", tags=["experiments"])


def _simulation_error(e: HermesError) -> HTTPException:
    if isinstance(e, DeadlockDetected):
        return HTTPException(status_code=status.HTTP_409_CONFLICT, detail=str(e))
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


def point_from_record(record: MetricsRecord) -> PointResult:
    return PointResult(**record_values(record))


def point_from_mean(records: list[MetricsRecord]) -> PointResult:
    """Per-rate aggregate row, seed column ``mean``."""
    return PointResult(**aggregate_values(records))


def _new_run(db: Session, kind: RunKind, cfg: ExperimentConfig) -> ExperimentRun:
    run = ExperimentRun(kind=kind.value, config_json=cfg.model_dump_json(), status=RunStatus.RUNNING.value)
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def _fail_run(db: Session, run: ExperimentRun, e: Exception):
    run.status = RunStatus.FAILED.value
    run.error = str(e)
    db.commit()


@router.post("/point", response_model=MetricsRecord)
def simulate_point(request: PointRequest, db: Session = Depends(get_db)):
    """
    Simulate one (rate, seed) point and store it.
    """
    run = _new_run(db, RunKind.POINT, request.config)
    try:
        record = run_point(request.config, request.rate, request.seed)
    except HermesError as e:
        _fail_run(db, run, e)
        raise _simulation_error(e)
    run.points.append(point_from_record(record))
    run.status = RunStatus.DONE.value
    db.commit()
    return record


@router.post("/sweep", response_model=ExperimentRunResponse)
def simulate_sweep(request: SweepRequest, db: Session = Depends(get_db)):
    """
    Run every rate x seed point of the config; one mean row follows each rate.
    """
    cfg = request.config
    run = _new_run(db, RunKind.SWEEP, cfg)
    tasks = [(rate, seed) for rate in sorted(set(cfg.rates)) for seed in sorted(set(cfg.seeds))]
    try:
        records = run_points(cfg, tasks)
    except HermesError as e:
        _fail_run(db, run, e)
        raise _simulation_error(e)
    for group in seed_groups(records):
        for record in group:
            run.points.append(point_from_record(record))
        run.points.append(point_from_mean(group))
    run.status = RunStatus.DONE.value
    db.commit()
    db.refresh(run)
    logger.info("sweep run %d stored with %d rows", run.id, len(run.points))
    return run


@router.post("/dynamic", response_model=DynamicSeries)
def simulate_dynamic(request: DynamicRequest, db: Session = Depends(get_db)):
    """
    Mid-run fault injection; returns latency per time bin.
    """
    run = _new_run(db, RunKind.DYNAMIC, request.config)
    try:
        series = dynamic_fault_experiment(request.config, request.seed)
    except HermesError as e:
        _fail_run(db, run, e)
        raise _simulation_error(e)
    run.status = RunStatus.DONE.value
    db.commit()
    return series


def _get_run(db: Session, run_id: int) -> ExperimentRun:
    run = db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()
    if not run:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"run {run_id} not found")
    return run


@router.get("/{run_id}", response_model=ExperimentRunResponse)
def get_run(run_id: int, db: Session = Depends(get_db)):
    return _get_run(db, run_id)


def _csv_row(point: PointResult) -> list[str]:
    return csv_row({column: getattr(point, column) for column in CSV_HEADER})


@router.get("/{run_id}/csv", response_class=PlainTextResponse)
def export_csv(run_id: int, db: Session = Depends(get_db)):
    """
    Stored rows in the sweep CSV format.
    """
    run = _get_run(db, run_id)
    buffer = io.StringIO()
    write_csv([_csv_row(p) for p in run.points], buffer)
    return PlainTextResponse(buffer.getvalue(), media_type="text/csv")

"""Experiment reports kept in a SQL database, one row per run and per cell."""

import logging
import math
from dataclasses import dataclass
from datetime import datetime
from typing import List, Optional

from heavytail.database import get_db
from heavytail.dist import describe_distribution
from heavytail.exceptions import BadConfig
from heavytail.models import CellRecord, ExperimentRun
from heavytail.montecarlo import (
    DEFAULT_LEVEL,
    CellResult,
    ExperimentReport,
    ExperimentSpec,
    err_confidence_interval,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunSummary:
    run_id: int
    created_at: datetime
    dist: str
    param: str
    master_seed: int
    scenarios: int
    hypothesis: str
    cells: int


@dataclass(frozen=True)
class StoredRun:
    report: ExperimentReport
    level: float
    created_at: datetime


def _nullable(value: float) -> Optional[float]:
    return None if math.isnan(value) else value


def _restore(value: Optional[float]) -> float:
    return math.nan if value is None else value


def save_report(report: ExperimentReport, url: str, level: float = DEFAULT_LEVEL) -> int:
    kind, param = describe_distribution(report.spec.distribution)
    with get_db(url) as db:
        run = ExperimentRun(
            created_at=datetime.now(),
            dist=kind,
            param=param,
            master_seed=str(report.spec.master_seed),
            scenarios=report.spec.scenarios,
            hypothesis=report.spec.hypothesis_label.value,
            level=level,
            spec_json=report.spec.model_dump_json(),
        )
        db.add(run)
        for position, cell in enumerate(report.cells):
            low, high = err_confidence_interval(cell, level)
            db.add(CellRecord(
                run=run,
                position=position,
                m=cell.m,
                n=cell.n,
                q=cell.q,
                rejections=cell.rejections,
                scenarios=cell.scenarios,
                errors=cell.errors,
                err=cell.err,
                err_low=low,
                err_high=high,
                mean_stat=_nullable(cell.mean_statistic),
                std_stat=_nullable(cell.std_statistic),
            ))
        db.flush()
        run_id = run.id
    logger.info("stored run %d with %d cells in %s", run_id, len(report.cells), url)
    return run_id


def list_runs(url: str) -> List[RunSummary]:
    with get_db(url) as db:
        runs = db.query(ExperimentRun).order_by(ExperimentRun.id).all()
        return [
            RunSummary(
                run_id=run.id,
                created_at=run.created_at,
                dist=run.dist,
                param=run.param,
                master_seed=int(run.master_seed),
                scenarios=run.scenarios,
                hypothesis=run.hypothesis,
                cells=len(run.cells),
            )
            for run in runs
        ]


def load_run(url: str, run_id: int) -> StoredRun:
    with get_db(url) as db:
        run = db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()
        if run is None:
            raise BadConfig(f"no stored run with id {run_id} in {url}")
        cells = [
            CellResult(
                m=record.m,
                n=record.n,
                q=record.q,
                rejections=record.rejections,
                scenarios=record.scenarios,
                errors=record.errors,
                err=record.err,
                type2=1.0 - record.err,
                mean_statistic=_restore(record.mean_stat),
                std_statistic=_restore(record.std_stat),
            )
            for record in run.cells
        ]
        report = ExperimentReport(spec=ExperimentSpec.model_validate_json(run.spec_json), cells=cells)
        return StoredRun(report=report, level=run.level, created_at=run.created_at)


def load_report(url: str, run_id: int) -> ExperimentReport:
    return load_run(url, run_id).report

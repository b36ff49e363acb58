from sqladmin import ModelView
from db.models import ExperimentRun, PointResult


class ExperimentRunAdmin(ModelView, model=ExperimentRun):
    column_list = [ExperimentRun.id, ExperimentRun.kind, ExperimentRun.status, ExperimentRun.created_at]
    column_default_sort = [(ExperimentRun.id, True)]


class PointResultAdmin(ModelView, model=PointResult):
    column_list = [
        PointResult.run_id, PointResult.variant, PointResult.vcs, PointResult.fault_count,
        PointResult.rate, PointResult.seed, PointResult.avg_latency, PointResult.throughput,
    ]
    can_create = False

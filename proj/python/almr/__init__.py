"""ALMR and learning-rate selection for continual pre-training."""

try:
    from . import _almr
except ImportError:
    import _almr  # in-tree build: the extension sits on PYTHONPATH

AlmrError = _almr.AlmrError
Surface = _almr.Surface
FrontierLine = _almr.FrontierLine

ingest = _almr.ingest
average_metric = _almr.average_metric
degradation = _almr.degradation
chinese_fraction = _almr.chinese_fraction
metric_ridge = _almr.metric_ridge
loss_descent_line = _almr.loss_descent_line
intersect = _almr.intersect
ridge_almr_at_lr = _almr.ridge_almr_at_lr
recommend = _almr.recommend
plan = _almr.plan
schedule = _almr.schedule
lab_grid = _almr.lab_grid
render_contours = _almr.render_contours
cli = _almr.cli


def fit_surface(points, kind="thin_plate_spline", field="avg_metric", ridge=0.0):
    return Surface.fit(list(points), kind, field, ridge)


__all__ = [
    "AlmrError", "Surface", "FrontierLine", "ingest", "average_metric",
    "degradation", "chinese_fraction", "fit_surface", "metric_ridge",
    "loss_descent_line", "intersect", "ridge_almr_at_lr", "recommend", "plan",
    "schedule", "lab_grid", "render_contours", "cli",
]

"""Demand-prediction RMSE for fitted utilities against regression baselines.

Baselines map income-normalised prices ``p / m`` to the full bundle; demand
is homogeneous of degree zero, so that ratio carries all the information.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dataset import Dataset, train_test_split
from .errors import ValidationError
from .fitting import FitConfig, fit, predict_demand
from .sim import SimSpec, generate

log = logging.getLogger(__name__)

METHODS = ("pearl-cd", "pearl-icnn", "linear", "knn")
RIDGE = 1e-8


def rmse(pred, actual) -> float:
    """Root of the per-observation squared error summed over goods."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    actual = np.atleast_2d(np.asarray(actual, dtype=float))
    if pred.shape != actual.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    return float(np.sqrt(np.mean(np.sum((pred - actual) ** 2, axis=1))))


def _features(p, m):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    m = np.asarray(m, dtype=float).reshape(-1)
    if p.shape[0] != m.size:
        raise ValidationError(f"{p.shape[0]} price rows but {m.size} incomes")
    if np.any(m <= 0):
        raise ValidationError("income must be positive")
    return p / m[:, None]


@dataclass(frozen=True)
class LinearBaseline:
    """Least squares from normalised prices to quantities, with intercept."""

    coef: np.ndarray  # (k + 1, k); first row is the intercept
    ridge: bool = False

    kind = "linear"

    def predict(self, p, m):
        z = _features(p, m)
        out = self.coef[0] + z @ self.coef[1:]
        return out[0] if np.ndim(p) == 1 else out


@dataclass(frozen=True)
class KnnBaseline:
    """Mean bundle of the nearest training observations in normalised price."""

    z: np.ndarray
    x: np.ndarray
    n_neighbors: int = 5
    tree: cKDTree = field(init=False, repr=False, compare=False)

    kind = "knn"

    def __post_init__(self):
        object.__setattr__(self, "tree", cKDTree(self.z))

    def predict(self, p, m):
        _, idx = self.tree.query(_features(p, m), k=self.n_neighbors)
        idx = np.asarray(idx).reshape(-1, self.n_neighbors)
        out = self.x[idx].mean(axis=1)
        return out[0] if np.ndim(p) == 1 else out


def fit_baseline(kind: str, train: Dataset, n_neighbors: int = 5):
    z = _features(train.p, train.m)
    if kind == "linear":
        if train.N < train.k + 1:
            raise ValidationError(f"linear baseline needs at least k+1 = {train.k + 1} observations")
        a = np.hstack([np.ones((train.N, 1)), z])
        if np.linalg.matrix_rank(a) < a.shape[1]:
            log.warning("singular design matrix; using ridge penalty %g", RIDGE)
            coef = np.linalg.solve(a.T @ a + RIDGE * np.eye(a.shape[1]), a.T @ train.x)
            return LinearBaseline(coef, ridge=True)
        coef, *_ = np.linalg.lstsq(a, train.x, rcond=None)
        return LinearBaseline(coef)
    if kind == "knn":
        if n_neighbors < 1 or train.N < n_neighbors:
            raise ValidationError(f"knn needs 1 <= n_neighbors <= N, got {n_neighbors} with N={train.N}")
        return KnnBaseline(z, np.array(train.x), n_neighbors)
    raise ValidationError(f"unknown baseline {kind!r}; expected 'linear' or 'knn'")


def predict_baseline(model, p, m):
    return model.predict(p, m)


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    k: int
    N: int
    epsilon: float
    train_rmse: float
    test_rmse: float
    wall_time: float


FIELDS = ("method", "k", "N", "epsilon", "train_rmse", "test_rmse", "wall_time")


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow]

    def row(self, method: str) -> BenchmarkRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELDS)
        for r in self.rows:
            w.writerow([r.method, r.k, r.N, f"{r.epsilon:.6f}", f"{r.train_rmse:.6g}",
                        f"{r.test_rmse:.6g}", f"{r.wall_time:.3f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_text(self) -> str:
        cells = [list(FIELDS)] + [
            [r.method, str(r.k), str(r.N), f"{r.epsilon:.4f}", f"{r.train_rmse:.4g}",
             f"{r.test_rmse:.4g}", f"{r.wall_time:.2f}"] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(FIELDS))]
        return "\n".join("  ".join(c.ljust(wd) if i == 0 else c.rjust(wd)
                                   for i, (c, wd) in enumerate(zip(row, widths)))
                         for row in cells) + "\n"


def run_benchmark(spec: SimSpec, methods=METHODS, cfg: FitConfig | dict | None = None,
                  test_fraction: float = 0.2, n_neighbors: int = 5) -> BenchmarkReport:
    """Generate, split, fit every method on the training part and score both parts.

    ``cfg`` is one :class:`FitConfig` for both utility families, a mapping
    from ``"cd"``/``"icnn"`` to configs, or ``None`` for each family's
    defaults.
    """
    unknown = [mth for mth in methods if mth not in METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}; expected a subset of {METHODS}")
    d = generate(spec)
    train, test = train_test_split(d, test_fraction, spec.seed)
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        if method.startswith("pearl-"):
            kind = method.split("-", 1)[1]
            kcfg = cfg.get(kind) if isinstance(cfg, dict) else cfg
            rep = fit(train, {"kind": kind, "seed": spec.seed}, kcfg or FitConfig.for_model(kind))
            eps = rep.epsilon
            pred_tr = predict_demand(rep, train.p, train.m)
            pred_te = predict_demand(rep, test.p, test.m)
        else:
            model = fit_baseline(method, train, n_neighbors)
            eps = 1.0
            pred_tr = model.predict(train.p, train.m)
            pred_te = model.predict(test.p, test.m)
        rows.append(BenchmarkRow(method, d.k, d.N, eps, rmse(pred_tr, train.x),
                                 rmse(pred_te, test.x), time.perf_counter() - t0))
        log.info("%s test RMSE %.4g", method, rows[-1].test_rmse)
    return BenchmarkReport(rows)

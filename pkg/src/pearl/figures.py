"""Tabular data behind the diagnostic figures, with optional PNG rendering.

Each ``*_data`` function returns ``(header, rows)``; :func:`emit_figure_data`
writes them as CSV and, unless told otherwise, draws a matching PNG next to
it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import ValidationError
from .fitting import FitReport, multiplier, predict_demand
from .sim import cd_demand, cd_utility
from .solvers import SolverConfig, elasticity_matrix, money_metric
from .utility import CobbDouglasModel

KINDS = ("loss-curve", "contour", "demand-curve", "elasticity")
THETA_GRID = np.round(np.linspace(0.05, 0.95, 19), 10)


def loss_curve_data(d: Dataset, grid=THETA_GRID, cfg: SolverConfig | None = None):
    """Loss and its slope in ``theta_1`` for two-good Cobb-Douglas models.

    The slope is taken along ``(1, -1)`` in exponent space, which keeps the
    exponents on the simplex.
    """
    if d.k != 2:
        raise ValidationError(f"loss curve needs k=2 data, got k={d.k}")
    rows = []
    for t in np.asarray(grid, dtype=float):
        if not 0 < t < 1:
            raise ValidationError(f"theta_1 grid values must lie in (0, 1), got {t}")
        model = CobbDouglasModel.from_theta([t, 1 - t])
        res = money_metric(model, d.p, model.eval(d.x), cfg, d.x)
        gap = res.m_hat - d.expenditure
        coef = np.sign(gap) * multiplier(d.p, model.grad_x(res.h))
        dtheta = coef @ (model.grad_theta(d.x) - model.grad_theta(res.h))
        rows.append((float(t), float(np.abs(gap).sum()), float(dtheta[0] - dtheta[1])))
    return ("theta_1", "loss", "gradient"), rows


def contour_data(model, theta=None, lo=0.5, hi=60.0, n=41):
    """Fitted utility (and the generating Cobb-Douglas one) over a 2-D grid."""
    if model.k != 2:
        raise ValidationError(f"contour needs a two-good model, got k={model.k}")
    axis = np.linspace(lo, hi, n)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    fitted = model.eval(pts)
    header = ["x_1", "x_2", "fitted"]
    cols = [pts[:, 0], pts[:, 1], fitted]
    if theta is not None:
        header.append("truth")
        cols.append(cd_utility(theta, pts))
    return tuple(header), [tuple(float(c[i]) for c in cols) for i in range(len(pts))]


def demand_curve_data(report, good: int = 0, other_price: float = 5.0, income: float = 20.0,
                      prices=None, theta=None, cfg: SolverConfig | None = None):
    """Demand for one good as its own price varies, other prices held fixed.

    ``report`` is a :class:`~pearl.fitting.FitReport` or a bare model.  The
    default grid runs past the simulated price range to show extrapolation.
    """
    if not isinstance(report, FitReport):
        report = FitReport(model=report, epsilon=1.0, loss_history=[], converged=True)
    k = report.model.k
    if not 0 <= good < k:
        raise ValidationError(f"good must be in [0, {k}), got {good}")
    grid = np.linspace(1.0, 15.0, 57) if prices is None else np.asarray(prices, dtype=float)
    p = np.full((grid.size, k), float(other_price))
    p[:, good] = grid
    x = predict_demand(report, p, np.full(grid.size, float(income)), cfg)
    header = ["price", "demand"]
    cols = [grid, x[:, good]]
    if theta is not None:
        header.append("truth")
        cols.append(cd_demand(theta, p, np.full(grid.size, float(income)))[:, good])
    return tuple(header), [tuple(float(c[i]) for c in cols) for i in range(grid.size)]


def elasticity_data(model, p, m, rel_step: float = 1e-3, cfg: SolverConfig | None = None):
    """Long-format elasticity matrix: one row per (good, price) pair."""
    e = elasticity_matrix(model, p, m, rel_step, cfg).e
    k = e.shape[0]
    rows = [(i + 1, j + 1, float(e[i, j])) for i in range(k) for j in range(k)]
    return ("good", "price", "elasticity"), rows


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def render(kind: str, header, rows, path) -> Path:
    """Draw the figure for ``kind`` into ``path`` (PNG)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.asarray(rows, dtype=float)
    if kind == "loss-curve":
        fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(5, 5))
        a1.plot(data[:, 0], data[:, 1], "o-")
        a2.plot(data[:, 0], data[:, 2], "o-")
        a2.axhline(0.0, color="grey", lw=0.8)
        a1.set_ylabel("loss")
        a2.set_ylabel("gradient")
        a2.set_xlabel(r"$\theta_1$")
    elif kind == "contour":
        n = int(round(np.sqrt(len(data))))
        x1 = data[:, 0].reshape(n, n)
        x2 = data[:, 1].reshape(n, n)
        # utility is ordinal: levels at matching grid quantiles trace the same
        # curves for any increasing transform of the same preferences
        q = np.linspace(0.1, 0.9, 8)
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.contour(x1, x2, data[:, 2].reshape(n, n), levels=np.quantile(data[:, 2], q),
                   colors="tab:blue")
        if "truth" in header:
            ax.contour(x1, x2, data[:, 3].reshape(n, n), levels=np.quantile(data[:, 3], q),
                       colors="k", linestyles="dashed")
        ax.set_xlabel(r"$x_1$")
        ax.set_ylabel(r"$x_2$")
    elif kind == "demand-curve":
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(data[:, 0], data[:, 1], label="fitted")
        if "truth" in header:
            ax.plot(data[:, 0], data[:, 2], "k--", label="truth")
        ax.legend()
        ax.set_xlabel("price")
        ax.set_ylabel("demand")
    elif kind == "elasticity":
        k = int(data[:, 0].max())
        e = data[:, 2].reshape(k, k)
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(e, cmap="RdBu", vmin=-1.5, vmax=1.5)
        for i in range(k):
            for j in range(k):
                ax.text(j, i, f"{e[i, j]:.2f}", ha="center", va="center", fontsize=8)
        ax.set_xticks(range(k), [str(j + 1) for j in range(k)])
        ax.set_yticks(range(k), [str(i + 1) for i in range(k)])
        ax.set_xlabel("price")
        ax.set_ylabel("good")
        fig.colorbar(im, ax=ax)
    else:
        raise ValidationError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def emit_figure_data(kind: str, out_dir, *, plot: bool = True, stem: str | None = None,
                     **inputs) -> list[Path]:
    """Write ``<stem>.csv`` (and ``<stem>.png``) for one figure kind.

    ``inputs`` are the keyword arguments of the matching ``*_data``
    function.  Returns the written paths.
    """
    builders = {"loss-curve": loss_curve_data, "contour": contour_data,
                "demand-curve": demand_curve_data, "elasticity": elasticity_data}
    if kind not in builders:
        raise ValidationError(f"unknown figure kind {kind!r}; expected one of {KINDS}")
    header, rows = builders[kind](**inputs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or kind
    paths = [write_csv(out / f"{stem}.csv", header, rows)]
    if plot:
        paths.append(render(kind, header, rows, out / f"{stem}.png"))
    return paths

"""Projected-gradient solvers for Hicksian and Marshallian demand.

Both solvers work on a batch of independent problems at once: prices of
shape ``(n, k)`` with one level (utility or income) per row.  Single
problems are accepted as 1-D inputs and returned unbatched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGradientError, ValidationError

GRAD_TINY = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Step size, iteration budget and tolerances shared by both solvers.

    With ``adaptive`` the step grows after every improving move and shrinks
    after a rejected one, per problem; otherwise every step has size
    ``step_size`` exactly.
    """

    step_size: float = 1e-3
    iterations: int = 1000
    positivity_floor: float = 1e-9
    adaptive: bool = True
    feas_tol: float = 1e-6
    tangency_tol: float = 1e-10
    max_projections: int = 50

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValidationError("step_size must be positive")
        if self.iterations < 1:
            raise ValidationError("iterations must be at least 1")
        if not self.positivity_floor > 0:
            raise ValidationError("positivity_floor must be positive")


@dataclass(frozen=True)
class HicksianResult:
    h: np.ndarray
    m_hat: np.ndarray | float


@dataclass(frozen=True)
class ElasticityMatrix:
    e: np.ndarray
    p: np.ndarray
    m: float

    def to_csv(self, path) -> None:
        k = self.e.shape[0]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["good"] + [str(j) for j in range(1, k + 1)])
            for i in range(k):
                w.writerow([str(i + 1)] + [f"{v:.10g}" for v in self.e[i]])


def _batch(p, level, start, k_hint=None):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p2 = np.atleast_2d(p)
    n, k = p2.shape
    lv = np.broadcast_to(np.asarray(level, dtype=float), (n,)).copy()
    if start is None:
        s = None
    else:
        s = np.array(np.broadcast_to(np.asarray(start, dtype=float), (n, k)))
    if np.any(p2 <= 0):
        raise ValidationError("prices must be strictly positive")
    return p2, lv, s, single


def _unit(v):
    n = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def _tangent(a, b):
    """Component of ``a/|a|`` orthogonal to ``b``, rowwise."""
    ah, bh = _unit(a), _unit(b)
    return ah - np.einsum("ij,ij->i", ah, bh)[:, None] * bh


def _free_tangent(a, b, v, floor):
    """:func:`_tangent` restricted to coordinates not pinned at ``floor``.

    A coordinate is pinned when it sits on the floor and the unrestricted
    direction would push it further down.
    """
    at_floor = v <= floor * (1 + 1e-9)
    pinned = np.zeros_like(at_floor)
    d = _tangent(a, b)
    # releasing one good can tip another: grow the pinned set until stable
    for _ in range(v.shape[1]):
        more = at_floor & ~pinned & (d < 0)
        if not more.any():
            break
        pinned |= more
        d = np.where(pinned, 0.0, _tangent(np.where(pinned, 0.0, a), np.where(pinned, 0.0, b)))
    return d


def _bb_step(s, y, fallback):
    """Barzilai-Borwein length ``s.s / s.y`` where the curvature is positive."""
    sy = np.einsum("ij,ij->i", s, y)
    ss = np.einsum("ij,ij->i", s, s)
    good = sy > 1e-300
    return np.where(good, ss / np.where(good, sy, 1.0), fallback)


def project_to_level(model, h, u, cfg: SolverConfig, active=None, frozen=None):
    """Move each row along its utility gradient until ``U(h) = u``.

    Each correction is the first-order step ``(u - U) g / |g|^2``; repeated
    up to ``cfg.max_projections`` times so the level is met to round-off.
    Entries flagged in ``frozen`` stay put unless a row has nothing else
    left to move.
    """
    h = np.maximum(h, cfg.positivity_floor)
    tol = 1e-12 * np.maximum(1.0, np.abs(u))
    for _ in range(cfg.max_projections):
        val, g = model.value_and_grad_x(h)
        resid = u - val
        todo = np.abs(resid) > tol
        if active is not None:
            todo &= active
        if not todo.any():
            break
        # goods on the floor cannot absorb a decrease
        blocked = (h <= cfg.positivity_floor) & ((resid[:, None] * g) < 0)
        if frozen is not None:
            blocked |= frozen
        gf = np.where(blocked, 0.0, g)
        stuck = np.einsum("ij,ij->i", gf, gf) < GRAD_TINY ** 2
        g = np.where(stuck[:, None], g, gf)
        gn2 = np.einsum("ij,ij->i", g, g)
        if np.any(gn2[todo] < GRAD_TINY ** 2):
            bad = int(np.nonzero(todo & (gn2 < GRAD_TINY ** 2))[0][0])
            raise DegenerateGradientError(
                f"utility gradient vanished at row {bad} (|grad U| < {GRAD_TINY:g})")
        step = np.where(todo, resid / np.where(gn2 > 0, gn2, 1.0), 0.0)
        h = np.maximum(h + step[:, None] * g, cfg.positivity_floor)
    return h


def money_metric(model, p, u, cfg: SolverConfig | None = None, h0=None) -> HicksianResult:
    """Cheapest bundle at prices ``p`` with utility at least ``u``.

    Iterates a descent step along ``-p/|p|`` followed by projection back to
    the level set ``U = u``.  ``h0`` (default: cost-neutral bundle scaled to
    the level) warm-starts the search.
    """
    cfg = cfg or SolverConfig()
    p2, u2, h, single = _batch(p, u, h0)
    n, k = p2.shape
    if h is None:
        h = np.ones((n, k)) / p2
    if np.any(h <= 0):
        raise ValidationError("initial bundle must be strictly positive")
    h = project_to_level(model, h, u2, cfg)

    def descent(v):
        # -p/|p| with its component along grad U removed: to first order the
        # same move as stepping along -p/|p| and projecting back, without the
        # second-order drift off the level set
        _, g = model.value_and_grad_x(v)
        return _free_tangent(-p2, g, v, cfg.positivity_floor)

    cost = np.einsum("ij,ij->i", p2, h)
    d = descent(h)
    alpha = np.full(n, cfg.step_size)
    active = np.ones(n, dtype=bool)
    for _ in range(cfg.iterations):
        moved = np.maximum(h + alpha[:, None] * d, cfg.positivity_floor)
        # goods driven onto the floor stay there while the level is restored
        trial = project_to_level(model, moved, u2, cfg, active, moved <= cfg.positivity_floor)
        new_cost = np.einsum("ij,ij->i", p2, trial)
        if not cfg.adaptive:
            h, cost = trial, new_cost
            d = descent(h)
            continue
        ok = active & (new_cost < cost)
        alpha_next = np.where(ok, alpha * 1.5, alpha * 0.5)
        if ok.any():
            d_new = descent(trial)
            alpha_next = np.where(ok, _bb_step(trial - h, d - d_new, alpha_next), alpha_next)
            d = np.where(ok[:, None], d_new, d)
        h = np.where(ok[:, None], trial, h)
        cost = np.where(ok, new_cost, cost)
        alpha = alpha_next
        active &= (np.linalg.norm(d, axis=1) > cfg.tangency_tol) & (alpha > 1e-15 * np.maximum(1.0, cost))
        if not active.any():
            break
    h = project_to_level(model, h, u2, cfg)
    m_hat = np.einsum("ij,ij->i", p2, h)
    if single:
        return HicksianResult(h[0], float(m_hat[0]))
    return HicksianResult(h, m_hat)


def tangency_residual(g, p):
    """Norm of the component of ``g/|g|`` orthogonal to ``p``."""
    g2, p2 = np.atleast_2d(g), np.atleast_2d(p)
    gh, ph = _unit(g2), _unit(p2)
    tang = gh - np.einsum("ij,ij->i", gh, ph)[:, None] * ph
    r = np.linalg.norm(tang, axis=1)
    return r if np.ndim(g) == 2 else float(r[0])


def maximize_utility(model, p, m, cfg: SolverConfig | None = None, x0=None):
    """Utility-maximising bundle on the budget hyperplane ``p.x = m``.

    Projected gradient ascent: move along the part of the normalised
    utility gradient tangent to the budget plane, then rescale onto it.
    The default start spends ``m/k`` on every good.
    """
    cfg = cfg or SolverConfig()
    p2, m2, z, single = _batch(p, m, x0)
    n, k = p2.shape
    if np.any(m2 <= 0):
        raise ValidationError("income must be positive")
    if z is None:
        z = m2[:, None] / (k * p2)
    if np.any(z <= 0):
        raise ValidationError("initial bundle must be strictly positive")

    def rescale(v):
        v = np.maximum(v, cfg.positivity_floor)
        return v * (m2 / np.einsum("ij,ij->i", p2, v))[:, None]

    def direction(v):
        val, g = model.value_and_grad_x(v)
        gn = np.linalg.norm(g, axis=1)
        if np.any(gn < GRAD_TINY):
            bad = int(np.nonzero(gn < GRAD_TINY)[0][0])
            raise DegenerateGradientError(
                f"utility gradient vanished at row {bad} (|grad U| < {GRAD_TINY:g})")
        return val, _free_tangent(g, p2, v, cfg.positivity_floor)

    z = rescale(z)
    val, d = direction(z)
    alpha = np.full(n, cfg.step_size)
    active = np.ones(n, dtype=bool)
    for _ in range(cfg.iterations):
        trial = rescale(z + alpha[:, None] * d)
        if not cfg.adaptive:
            z = trial
            val, d = direction(z)
            continue
        t_val, t_d = direction(trial)
        ok = active & (t_val > val)
        z = np.where(ok[:, None], trial, z)
        val = np.where(ok, t_val, val)
        d = np.where(ok[:, None], t_d, d)
        alpha = np.where(ok, alpha * 1.5, alpha * 0.5)
        scale = m2 / np.linalg.norm(p2, axis=1)
        active &= (np.linalg.norm(d, axis=1) > cfg.tangency_tol) & (alpha > 1e-15 * scale)
        if not active.any():
            break
    return z[0] if single else z


def elasticity_matrix(model, p, m, rel_step: float = 1e-3,
                      cfg: SolverConfig | None = None) -> ElasticityMatrix:
    """Price elasticities by central differences of Marshallian demand.

    Column j perturbs ``p_j`` by ``+-rel_step * p_j``; all ``2k + 1`` demand
    problems are solved as one batch.
    """
    p = np.asarray(p, dtype=float)
    k = p.size
    if not 0 < rel_step < 1:
        raise ValidationError("rel_step must lie in (0, 1)")
    bump = np.eye(k) * rel_step * p
    prices = np.vstack([p[None, :], p + bump, p - bump])
    x = maximize_utility(model, prices, np.full(2 * k + 1, m), cfg)
    base, up, down = x[0], x[1:k + 1], x[k + 1:]
    dx = (up - down).T  # dx[i, j]: change in good i for price j
    e = (p[None, :] / base[:, None]) * dx / (2 * rel_step * p[None, :])
    return ElasticityMatrix(e=e, p=p, m=float(m))

"""Synthetic Cobb-Douglas consumers with optional noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ValidationError

QUANTITY_FLOOR = 1e-6
MAX_RESAMPLE = 100


@dataclass(frozen=True)
class RandomUtilityNoise:
    """Bundles shrink by ``|eta|`` with ``eta ~ N(0, sigma^2 * correlation)``."""

    sigma: float = 1.0
    correlation: np.ndarray | None = None


@dataclass(frozen=True)
class EndogeneityNoise:
    """One shock per observation added to both prices and exponents.

    ``sigma`` is the standard deviation of each shock component.
    """

    sigma: float = 0.1


@dataclass(frozen=True)
class SimSpec:
    k: int = 2
    N: int = 160
    theta: tuple = (0.4, 0.6)
    price_range: tuple = (1.0, 10.0)
    income_range: tuple = (50.0, 150.0)
    seed: int = 0
    noise: RandomUtilityNoise | EndogeneityNoise | None = None
    theta_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.k,):
            raise ValidationError(f"theta must have {self.k} entries, got {theta.size}")
        if np.any(theta <= 0) or abs(theta.sum() - 1.0) > 1e-9:
            raise ValidationError("theta must be positive and sum to one")
        if self.N < 1:
            raise ValidationError("N must be positive")
        for name, (lo, hi) in (("price_range", self.price_range), ("income_range", self.income_range)):
            if not 0 < lo <= hi:
                raise ValidationError(f"{name} must be positive and ordered, got {(lo, hi)}")
        if isinstance(self.noise, RandomUtilityNoise) and self.noise.correlation is not None:
            c = np.asarray(self.noise.correlation, dtype=float)
            if (c.shape != (self.k, self.k) or not np.allclose(c, c.T)
                    or not np.allclose(np.diag(c), 1.0) or np.linalg.eigvalsh(c).min() < -1e-10):
                raise ValidationError("correlation must be a symmetric PSD matrix with unit diagonal")
        object.__setattr__(self, "theta_arr", theta)


def cd_demand(theta, p, m):
    """Marshallian Cobb-Douglas demand ``theta_j m / p_j`` (batched over rows)."""
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    m = np.asarray(m, dtype=float)
    return theta * np.expand_dims(m, -1) / p


def cd_hicksian(theta, p, u):
    """Expenditure-minimising Cobb-Douglas bundle reaching utility ``u``."""
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    # minimal cost is u * prod (p_j / theta_j) ** theta_j
    cost = np.asarray(u, dtype=float) * np.exp(np.sum(theta * np.log(p / theta), axis=-1))
    return cd_demand(theta, p, cost)


def cd_utility(theta, x):
    x = np.asarray(x, dtype=float)
    return np.exp(np.log(x) @ np.asarray(theta, dtype=float))


def generate(spec: SimSpec) -> Dataset:
    """Draw prices and incomes uniformly and record optimal (possibly noisy) choices."""
    rng = np.random.default_rng(spec.seed)
    k, n = spec.k, spec.N
    p = rng.uniform(*spec.price_range, size=(n, k))
    m = rng.uniform(*spec.income_range, size=n)
    noise = spec.noise
    if noise is None:
        x = cd_demand(spec.theta_arr, p, m)
    elif isinstance(noise, RandomUtilityNoise):
        corr = np.eye(k) if noise.correlation is None else np.asarray(noise.correlation, dtype=float)
        eta = rng.multivariate_normal(np.zeros(k), noise.sigma ** 2 * corr, size=n, method="eigh")
        x = np.maximum(cd_demand(spec.theta_arr, p, m) - np.abs(eta), QUANTITY_FLOOR)
        m = np.einsum("ij,ij->i", p, x)
    elif isinstance(noise, EndogeneityNoise):
        x = np.empty((n, k))
        for i in range(n):
            for _ in range(MAX_RESAMPLE):
                eta = rng.normal(0.0, noise.sigma, size=k)
                p_new, th_new = p[i] + eta, spec.theta_arr + eta
                if np.all(p_new > 0) and np.all(th_new > 0):
                    break
            else:
                raise ValidationError(f"observation {i}: could not draw a valid endogeneity shock")
            p[i] = p_new
            x[i] = cd_demand(th_new / th_new.sum(), p_new, m[i])
        # recorded expenditure stays exact under the perturbed prices
        m = np.einsum("ij,ij->i", p, x)
    else:
        raise ValidationError(f"unknown noise model {noise!r}")
    return Dataset(x, p, m)

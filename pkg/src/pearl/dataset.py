"""Observations of consumer choice, CSV I/O and train/test splitting.

A dataset is stored column-wise as three arrays: quantities ``x`` (N, k),
prices ``p`` (N, k) and expenditure ``m`` (N,).  Expenditure is kept
explicitly because noise models redefine it after perturbing bundles.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ParseError, ValidationError

BUDGET_TOL = 1e-8


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    p: np.ndarray
    m: float

    @property
    def k(self) -> int:
        return self.x.shape[0]

    @property
    def expenditure(self) -> float:
        return float(self.p @ self.x)


class Dataset:
    """An ordered collection of observations sharing the same number of goods."""

    def __init__(self, x, p, m, *, validate: bool = True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = np.atleast_2d(np.asarray(p, dtype=float))
        m = np.atleast_1d(np.asarray(m, dtype=float))
        if x.shape != p.shape:
            raise ValidationError(f"quantity shape {x.shape} != price shape {p.shape}")
        if m.shape != (x.shape[0],):
            raise ValidationError(f"expenditure shape {m.shape} does not match N={x.shape[0]}")
        if x.shape[0] < 1:
            raise ValidationError("dataset needs at least one observation")
        self.x, self.p, self.m = x, p, m
        for arr in (self.x, self.p, self.m):
            arr.setflags(write=False)
        if validate:
            self.validate()

    @classmethod
    def from_observations(cls, observations) -> "Dataset":
        observations = list(observations)
        if not observations:
            raise ValidationError("dataset needs at least one observation")
        ks = {len(o.x) for o in observations}
        if len(ks) != 1:
            raise ValidationError(f"observations have mixed dimensions {sorted(ks)}")
        return cls([o.x for o in observations], [o.p for o in observations],
                   [o.m for o in observations])

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def observations(self) -> list[Observation]:
        return list(self)

    @property
    def expenditure(self) -> np.ndarray:
        """Row-wise p_i . x_i (not necessarily equal to m_i)."""
        return np.einsum("ij,ij->i", self.p, self.x)

    def __len__(self) -> int:
        return self.N

    def __iter__(self) -> Iterator[Observation]:
        for i in range(self.N):
            yield self[i]

    def __getitem__(self, i: int) -> Observation:
        return Observation(self.x[i].copy(), self.p[i].copy(), float(self.m[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.x.shape == other.x.shape
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.p, other.p)
                and np.array_equal(self.m, other.m))

    def __repr__(self) -> str:
        return f"Dataset(N={self.N}, k={self.k})"

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.x[idx], self.p[idx], self.m[idx], validate=False)

    def scaled(self, epsilon: float) -> "Dataset":
        """Dataset with every bundle and expenditure multiplied by ``epsilon``."""
        return Dataset(self.x * epsilon, self.p, self.m * epsilon, validate=False)

    def validate(self, abs_tol: float = BUDGET_TOL) -> None:
        """Raise ValidationError naming the first offending observation and field."""
        checks = [
            (~np.isfinite(self.x), "x", "quantity must be finite"),
            (~np.isfinite(self.p), "p", "price must be finite"),
            (self.p <= 0, "p", "price must be positive"),
            (self.x < 0, "x", "quantity must be nonnegative"),
        ]
        for bad, field, msg in checks:
            rows, cols = np.nonzero(bad)
            if rows.size:
                i, j = rows[0], cols[0]
                raise ValidationError(f"observation {i}: {field}_{j + 1}: {msg}")
        bad_m = np.nonzero(~np.isfinite(self.m) | (self.m <= 0))[0]
        if bad_m.size:
            raise ValidationError(f"observation {bad_m[0]}: m: expenditure must be positive")
        over = self.expenditure - self.m
        bad_b = np.nonzero(over > abs_tol)[0]
        if bad_b.size:
            i = bad_b[0]
            raise ValidationError(
                f"observation {i}: m: budget feasibility violated "
                f"(p.x - m = {over[i]:.3g} > {abs_tol:g})")


def _header(k: int) -> list[str]:
    return ([f"x_{j}" for j in range(1, k + 1)]
            + [f"p_{j}" for j in range(1, k + 1)] + ["m"])


def load_dataset(path) -> Dataset:
    """Read a dataset from CSV with header ``x_1..x_k,p_1..p_k,m``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 3 or (len(header) - 1) % 2:
            raise ParseError(f"{path}: header must be x_1..x_k,p_1..p_k,m; got {header}")
        k = (len(header) - 1) // 2
        # "x1" and "x_1" spellings are both accepted
        if [h.replace("_", "").lower() for h in header] != [h.replace("_", "") for h in _header(k)]:
            raise ParseError(f"{path}: header must be {','.join(_header(k))}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2 * k + 1:
                raise ParseError(f"{path}: row {lineno}: expected {2 * k + 1} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no observations")
    data = np.array(rows)
    return Dataset(data[:, :k], data[:, k:2 * k], data[:, 2 * k])


def save_dataset(d: Dataset, path) -> None:
    """Write ``d`` as CSV; 17 significant digits make the round trip exact."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_header(d.k))
            for x, p, m in zip(d.x, d.p, d.m):
                writer.writerow([f"{v:.17g}" for v in (*x, *p, m)])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write dataset: {exc.strerror}", os.fspath(path)) from exc


def train_test_split(d: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random disjoint split with ``round(N * (1 - f))`` training rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if d.N < 2:
        raise ValidationError("cannot split a dataset with fewer than 2 observations")
    train_idx, test_idx = split_indices(d.N, test_fraction, seed)
    return d.subset(train_idx), d.subset(test_idx)


def split_indices(n: int, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Index form of :func:`train_test_split`."""
    n_train = min(max(int(round(n * (1.0 - test_fraction))), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])

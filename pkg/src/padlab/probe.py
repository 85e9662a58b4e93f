"""Linear readout of position from per-location feature statistics.

Each location is described by the per-channel mean and standard deviation of
the network output across Monte Carlo samples.  A closed-form ridge
regression maps these vectors to grid coordinates ``2 * (i/H - 1/2)`` and
``2 * (j/W - 1/2)``; held-out R^2 measures how much position the statistics
leak.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convnet import NetworkSpec
from .errors import DegenerateDesignError, DimensionError
from .posenc import csg_coords
from .statlab import estimate_moments
from .tensor import GridSize, RngSpec

DEFAULT_LAMBDA = 1e-3


@dataclass
class LocationStats:
    mean: np.ndarray
    std: np.ndarray
    samples: int

    @property
    def size(self) -> GridSize:
        return GridSize(*self.mean.shape[1:])

    @property
    def vectors(self) -> np.ndarray:
        """``(H*W, 2C)`` design rows in row-major location order: means, then stds."""
        c = self.mean.shape[0]
        return np.concatenate([self.mean.reshape(c, -1), self.std.reshape(c, -1)]).T

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, size: GridSize) -> "LocationStats":
        """Wrap arbitrary per-location vectors (first half read as means, second as stds)."""
        v = np.asarray(vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != size.height * size.width:
            raise DimensionError(f"need {size.height * size.width} location vectors, got {v.shape}")
        half = (v.shape[1] + 1) // 2
        mean = v[:, :half].T.reshape(half, size.height, size.width)
        std = v[:, half:].T.reshape(v.shape[1] - half, size.height, size.width)
        return cls(mean, std, 0)


def location_statistics(net: NetworkSpec, input_size: GridSize, samples: int,
                        rng: RngSpec = RngSpec(), workers: int | None = None) -> LocationStats:
    report = estimate_moments(net, input_size, [(0, 0)], samples, rng, workers=workers)
    return LocationStats(report.expectation, np.sqrt(report.variance), samples)


def checkerboard(size: GridSize) -> np.ndarray:
    """Boolean training mask: ``True`` where ``(row + col)`` is even."""
    i, j = np.indices(size.shape)
    return ((i + j) % 2 == 0).ravel()


def coordinate_targets(size: GridSize) -> np.ndarray:
    ci = csg_coords(size.height)
    cj = csg_coords(size.width)
    ii, jj = np.meshgrid(ci, cj, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


@dataclass
class ProbeResult:
    coef: np.ndarray
    intercept: np.ndarray
    r2: np.ndarray
    error_map: np.ndarray
    lam: float
    split: str
    train_error: float

    def predict(self, vectors: np.ndarray) -> np.ndarray:
        return vectors @ self.coef + self.intercept

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coef.tolist(),
            "intercept": self.intercept.tolist(),
            "r2": {"row": float(self.r2[0]), "col": float(self.r2[1])},
            "lambda": self.lam,
            "split": self.split,
            "train_error": self.train_error,
            "score": positional_info_score(self),
        }


def r_squared(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    sse = ((pred - target) ** 2).sum(axis=0)
    sst = ((target - target.mean(axis=0)) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sst > 0, 1.0 - sse / np.where(sst > 0, sst, 1.0), 0.0)


def ridge(x: np.ndarray, y: np.ndarray, lam: float):
    """Ridge via the normal equations with an unpenalized intercept."""
    xm, ym = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - xm, y - ym
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    if lam == 0.0 and np.linalg.matrix_rank(gram) < x.shape[1]:
        raise DegenerateDesignError(
            "design matrix is rank deficient with lambda = 0; use a positive ridge strength"
        )
    coef = np.linalg.solve(gram, xc.T @ yc)
    return coef, ym - xm @ coef


def fit_probe(stats: LocationStats, grid: GridSize | None = None, lam: float = DEFAULT_LAMBDA,
              split: str = "checkerboard") -> ProbeResult:
    """Fit the readout on one checkerboard colour and score it on the other."""
    if lam < 0:
        raise ValueError("ridge strength must be non-negative")
    grid = stats.size if grid is None else grid
    if split != "checkerboard":
        raise ValueError(f"unknown split {split!r}")
    x = stats.vectors
    y = coordinate_targets(grid)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} statistic vectors for a {grid} grid")
    train = checkerboard(grid)
    if train.sum() < 4:
        raise DimensionError("need at least 4 training locations")
    coef, intercept = ridge(x[train], y[train], lam)
    pred = x @ coef + intercept
    err = ((pred - y) ** 2).sum(axis=1)
    return ProbeResult(
        coef=coef,
        intercept=intercept,
        r2=r_squared(pred[~train], y[~train]),
        error_map=err.reshape(grid.shape),
        lam=float(lam),
        split=split,
        train_error=float(err[train].sum()),
    )


def positional_info_score(result: ProbeResult) -> float:
    """Mean held-out R^2 over the two coordinates."""
    return float(np.mean(result.r2))

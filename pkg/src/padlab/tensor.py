"""Dense real-valued grids, deterministic Gaussian sampling and resizing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .rng import gaussian_block


@dataclass(frozen=True, order=True)
class GridSize:
    height: int
    width: int

    def __post_init__(self):
        if int(self.height) < 1 or int(self.width) < 1:
            raise DimensionError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "width", int(self.width))

    @classmethod
    def parse(cls, text: str) -> "GridSize":
        """Parse ``"HxW"`` (or a single ``"N"`` for a square grid)."""
        parts = str(text).lower().replace("×", "x").split("x")
        try:
            dims = [int(p) for p in parts]
        except ValueError:
            raise DimensionError(f"cannot parse grid size {text!r}") from None
        if len(dims) == 1:
            dims = dims * 2
        if len(dims) != 2:
            raise DimensionError(f"cannot parse grid size {text!r}")
        return cls(*dims)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __str__(self):
        return f"{self.height}x{self.width}"


@dataclass(frozen=True)
class RngSpec:
    """Key for the counter-based generator: same (seed, stream) -> same draws."""

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = int(getattr(self, name))
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")
            object.__setattr__(self, name, v)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A C x H x W grid of float64 values, immutable after construction."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3:
            raise DimensionError(f"feature map needs shape (C, H, W), got {v.shape}")
        if min(v.shape) < 1:
            raise DimensionError(f"feature map has an empty axis: {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature map values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> GridSize:
        return GridSize(self.values.shape[1], self.values.shape[2])

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.all(self.values == other.values))

    def __repr__(self):
        return f"FeatureMap(channels={self.channels}, size={self.size})"


def _check_dims(channels, size: GridSize):
    if int(channels) < 1:
        raise DimensionError(f"channels must be >= 1, got {channels}")
    if not isinstance(size, GridSize):
        size = GridSize(*size)
    return int(channels), size


def make_map(channels: int, size: GridSize, fill: float = 0.0) -> FeatureMap:
    channels, size = _check_dims(channels, size)
    return FeatureMap(np.full((channels, size.height, size.width), float(fill)))


def gaussian_batch(channels: int, size: GridSize, seed: int, streams) -> np.ndarray:
    """i.i.d. N(0, 1) arrays of shape ``(len(streams), C, H, W)``, one per stream."""
    channels, size = _check_dims(channels, size)
    n = channels * size.height * size.width
    flat = gaussian_block(seed, streams, n)
    return flat.reshape(-1, channels, size.height, size.width)


def sample_gaussian(channels: int, size: GridSize, rng: RngSpec) -> FeatureMap:
    """Standard-normal map; the value at flat index k is a pure function of (seed, stream, k)."""
    return FeatureMap(gaussian_batch(channels, size, rng.seed, [rng.stream])[0])


def _lerp_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = x.shape[axis]
    if n_in == n_out:
        return x
    if n_in == 1:
        return np.repeat(x, n_out, axis=axis)
    pos = np.arange(n_out)
    if n_out == 1:
        src = np.zeros(1)
    else:
        # integer numerator keeps the last corner exact
        src = (pos * (n_in - 1)) / (n_out - 1)
    lo = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    shape = [1] * x.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    a = np.take(x, lo, axis=axis)
    b = np.take(x, hi, axis=axis)
    return a + frac * (b - a)


def resize_array(x: np.ndarray, target: GridSize) -> np.ndarray:
    """Align-corners bilinear resize over the last two axes of ``x``."""
    out = _lerp_axis(x, target.height, x.ndim - 2)
    return _lerp_axis(out, target.width, x.ndim - 1)


def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense ``(n_out, n_in)`` matrix of the 1-D align-corners interpolation weights."""
    return _lerp_axis(np.eye(n_in), n_out, 0)


def bilinear_resize(fmap: FeatureMap, target: GridSize) -> FeatureMap:
    """Per-channel bilinear interpolation with align-corners semantics.

    Output pixel ``y`` samples the source at ``y * (H - 1) / (H' - 1)``, so the
    four corner samples land exactly on the source corners.  A 1-pixel source
    axis is broadcast.
    """
    if not isinstance(target, GridSize):
        target = GridSize(*target)
    return FeatureMap(resize_array(fmap.values, target))

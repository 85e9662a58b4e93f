"""Scale-dependent pieces of multi-scale training with positional encodings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ScheduleError
from .posenc import EncodingKind, resize_encoding
from .rng import uniform_block
from .tensor import FeatureMap, GridSize

DEFAULT_SCALES = ((256, 256), (384, 384), (512, 512))
DEFAULT_PROBS = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class ScaleSchedule:
    scales: tuple
    probs: tuple

    def __post_init__(self):
        scales = tuple(s if isinstance(s, GridSize) else GridSize(*s) for s in self.scales)
        probs = tuple(float(p) for p in self.probs)
        if not scales:
            raise ScheduleError("schedule needs at least one scale")
        if len(scales) != len(probs):
            raise ScheduleError(f"{len(scales)} scales but {len(probs)} probabilities")
        if any(p < 0 for p in probs):
            raise ScheduleError("probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ScheduleError(f"probabilities sum to {sum(probs)!r}, not 1")
        if any(a.height * a.width >= b.height * b.width for a, b in zip(scales, scales[1:])):
            raise ScheduleError("scales must be strictly ascending")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ScheduleError("larger scales may not be more likely than smaller ones")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def default(cls):
        return cls(DEFAULT_SCALES, DEFAULT_PROBS)

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleSchedule":
        try:
            return cls(tuple(tuple(s) for s in d["scales"]), tuple(d["probs"]))
        except (KeyError, TypeError) as exc:
            raise ScheduleError(f"malformed schedule: {exc}") from None
        except DimensionError as exc:
            raise ScheduleError(str(exc)) from None

    def to_dict(self) -> dict:
        return {"scales": [list(s.shape) for s in self.scales], "probs": list(self.probs)}


@dataclass(frozen=True)
class ScaleDraw:
    step: int
    index: int
    scale: GridSize
    stream: int


def _pick(schedule: ScaleSchedule, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(schedule.probs)
    idx = np.searchsorted(cdf, u, side="right")
    last = max(i for i, p in enumerate(schedule.probs) if p > 0)
    return np.minimum(idx, last)


def sample_scales(schedule: ScaleSchedule, seed: int, steps) -> np.ndarray:
    """Scale indices for each training step; step ``t`` reads stream ``t``."""
    steps = np.asarray(steps, dtype=np.uint64).reshape(-1)
    u = uniform_block(seed, steps, 1)[:, 0]
    return _pick(schedule, u)


def sample_scale(schedule: ScaleSchedule, seed: int, step: int) -> ScaleDraw:
    idx = int(sample_scales(schedule, seed, [step])[0])
    return ScaleDraw(int(step), idx, schedule.scales[idx], int(step))


def prepare_scale_input(kind: EncodingKind, base: FeatureMap, scale: GridSize, mode: str) -> FeatureMap:
    return resize_encoding(kind, base, scale, mode)


def pool_bins(n: int) -> list[tuple[int, int]]:
    half = n // 2
    return [(0, half), (half, n)]


def adaptive_avg_pool_2x2(fmap: FeatureMap) -> FeatureMap:
    """Average over a 2x2 partition with bin ``r`` spanning ``[floor(r*H/2), floor((r+1)*H/2))``."""
    h, w = fmap.size.shape
    if h < 2 or w < 2:
        raise DimensionError(f"2x2 pooling needs at least a 2x2 map, got {h}x{w}")
    v = fmap.values
    out = np.empty((fmap.channels, 2, 2))
    for r, (r0, r1) in enumerate(pool_bins(h)):
        for s, (c0, c1) in enumerate(pool_bins(w)):
            out[:, r, s] = v[:, r0:r1, c0:c1].mean(axis=(1, 2))
    return FeatureMap(out)

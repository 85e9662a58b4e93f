"""Explicit positional encodings: Cartesian grid, sinusoidal, frozen constant.

Channel layout of the sinusoidal encoding with ``C`` channels: the first
``C/2`` channels encode the row index ``i``, the last ``C/2`` the column
index ``j``; each half is ``[sin(w0 t), cos(w0 t), sin(w1 t), cos(w1 t), ...]``
with ``w_k = 10000 ** (-2k / d)`` and ``d = C / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UnsupportedError
from .tensor import FeatureMap, GridSize, RngSpec, bilinear_resize, gaussian_batch

KINDS = ("csg", "spe", "fixed")
RESIZE_MODES = ("interp", "expand")


@dataclass(frozen=True)
class EncodingKind:
    """``csg``, ``spe`` (``channels`` divisible by 4) or ``fixed`` (frozen N(0,1) map)."""

    kind: str
    channels: int = 2
    rng: RngSpec = RngSpec()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoding kind {self.kind!r}")
        if self.kind == "csg":
            object.__setattr__(self, "channels", 2)
        if self.kind == "spe" and (self.channels < 4 or self.channels % 4):
            raise DimensionError(f"SPE needs a channel count divisible by 4, got {self.channels}")
        if self.channels < 1:
            raise DimensionError("encoding needs at least one channel")

    @classmethod
    def csg(cls):
        return cls("csg", 2)

    @classmethod
    def spe(cls, channels):
        return cls("spe", int(channels))

    @classmethod
    def fixed(cls, channels, rng=RngSpec()):
        return cls("fixed", int(channels), rng)

    def generate(self, size: GridSize, align_corners: bool = False) -> FeatureMap:
        if self.kind == "csg":
            return csg(size, align_corners=align_corners)
        if self.kind == "spe":
            return spe(size, self.channels)
        return fixed_constant(self.channels, size, self.rng)


def csg_coords(n: int, align_corners: bool = False) -> np.ndarray:
    """1-D normalized coordinates ``2 * (i / n - 1/2)``, or ``2 * i / (n - 1) - 1``."""
    i = np.arange(n, dtype=np.int64)
    if align_corners:
        if n == 1:
            return np.zeros(1)
        return (2 * i - (n - 1)) / (n - 1)
    # 2 * (i/n - 1/2) as one correctly rounded division
    return (2 * i - n) / n


def csg(size: GridSize, align_corners: bool = False) -> FeatureMap:
    """Normalized Cartesian grid: channel 0 holds the row coordinate, channel 1 the column.

    With the default convention the top-left corner is ``(-1, -1)`` and the
    bottom-right is ``(1 - 2/H, 1 - 2/W)``; ``align_corners=True`` instead
    spans ``[-1, 1]`` on both axes.
    """
    if not isinstance(size, GridSize):
        size = GridSize(*size)
    ci = csg_coords(size.height, align_corners)
    cj = csg_coords(size.width, align_corners)
    out = np.empty((2, size.height, size.width))
    out[0] = ci[:, None]
    out[1] = cj[None, :]
    return FeatureMap(out)


def _inside(size: GridSize, loc) -> bool:
    return 0 <= loc[0] < size.height and 0 <= loc[1] < size.width


def csg_translate(size: GridSize, origin, offset) -> np.ndarray:
    """Grid code at ``origin + offset`` obtained by translating the code at ``origin``."""
    target = (origin[0] + offset[0], origin[1] + offset[1])
    if not (_inside(size, origin) and _inside(size, target)):
        raise DimensionError(f"locations {tuple(origin)} -> {target} leave the {size} grid")
    # codes are numerator / extent; translating adds 2 * offset to the numerator
    out = []
    for pos, step, n in ((origin[0], offset[0], size.height), (origin[1], offset[1], size.width)):
        numer = 2 * int(pos) - n
        out.append((numer + 2 * int(step)) / n)
    return np.array(out)


def spe_frequencies(channels: int) -> np.ndarray:
    """Per-axis frequencies ``1 / 10000 ** (2k / d)`` for ``k < d / 2`` with ``d = channels / 2``."""
    if channels < 4 or channels % 4:
        raise DimensionError(f"SPE needs a channel count divisible by 4, got {channels}")
    d = channels // 2
    k = np.arange(d // 2, dtype=np.float64)
    return 1.0 / 10000.0 ** (2.0 * k / d)


def spe_axis(n: int, channels: int) -> np.ndarray:
    """``(channels/2, n)`` codes for positions ``0..n-1`` along one axis."""
    omega = spe_frequencies(channels)
    t = np.arange(n, dtype=np.float64)
    ang = omega[:, None] * t[None, :]
    out = np.empty((2 * omega.size, n))
    out[0::2] = np.sin(ang)
    out[1::2] = np.cos(ang)
    return out


def spe(size: GridSize, channels: int) -> FeatureMap:
    if not isinstance(size, GridSize):
        size = GridSize(*size)
    half = channels // 2
    rows = spe_axis(size.height, channels)
    cols = spe_axis(size.width, channels)
    out = np.empty((channels, size.height, size.width))
    out[:half] = rows[:, :, None]
    out[half:] = cols[:, None, :]
    return FeatureMap(out)


def spe_rotate(column, phi: float, omega: float) -> np.ndarray:
    """Shift a ``(sin, cos)`` pair at position ``i`` to position ``i + phi``."""
    s, c = column
    a = omega * phi
    ca, sa = math.cos(a), math.sin(a)
    return np.array([ca * s + sa * c, -sa * s + ca * c])


def fixed_constant(channels: int, size: GridSize, rng: RngSpec) -> FeatureMap:
    """Frozen standard-normal map standing in for a learned constant input."""
    if not isinstance(size, GridSize):
        size = GridSize(*size)
    return FeatureMap(gaussian_batch(channels, size, rng.seed, [rng.stream])[0])


def resize_encoding(kind: EncodingKind, current: FeatureMap, target: GridSize, mode: str) -> FeatureMap:
    """Grow or shrink an encoding by interpolation or, for SPE only, by regeneration."""
    if mode not in RESIZE_MODES:
        raise ValueError(f"unknown resize mode {mode!r}")
    if not isinstance(target, GridSize):
        target = GridSize(*target)
    if mode == "expand":
        if kind.kind != "spe":
            raise UnsupportedError(f"expand resize is only defined for SPE, not {kind.kind}")
        if current.channels != kind.channels:
            raise DimensionError(f"encoding has {current.channels} channels, kind says {kind.channels}")
        return spe(target, kind.channels)
    return bilinear_resize(current, target)


def compose_noise_pe(pe: FeatureMap, rng: RngSpec, scale: float = 1.0) -> FeatureMap:
    """``pe`` plus position-aligned N(0, scale^2) noise; ``scale=0`` returns ``pe``."""
    if scale == 0.0:
        return pe
    noise = gaussian_batch(pe.channels, pe.size, rng.seed, [rng.stream])[0]
    return FeatureMap(pe.values + scale * noise)


def encoding_descriptor(kind: EncodingKind, size: GridSize, mode: str = "interp",
                        align_corners: bool = False) -> dict:
    d = {
        "kind": kind.kind,
        "channels": kind.channels,
        "size": list(size.shape),
        "resize_mode": mode,
    }
    if kind.kind == "spe":
        d["frequencies"] = spe_frequencies(kind.channels).tolist()
        d["layout"] = "height-half then width-half; [sin, cos] per frequency"
    if kind.kind == "csg":
        d["align_corners"] = bool(align_corners)
    if kind.kind == "fixed":
        d["seed"] = kind.rng.seed
        d["stream"] = kind.rng.stream
    return d

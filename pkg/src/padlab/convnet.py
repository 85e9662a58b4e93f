"""Forward evaluation of small stride-1 convolutional pipelines.

Arrays flowing through the batched helpers have shape ``(N, C, H, W)``; the
public functions take and return :class:`FeatureMap` objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numba
import numpy as np

from .errors import DimensionError, ShapeError, StageError, UnsupportedError
from .tensor import FeatureMap, GridSize, resize_array

NETWORK_FORMAT = "padlab.network"
NETWORK_VERSION = 1

PAD_MODES = ("none", "zero", "reflect", "circular")
_NP_PAD = {"zero": "constant", "reflect": "reflect", "circular": "wrap"}

DEFAULT_GAMMA = 0.2


@dataclass(frozen=True)
class Padding:
    """Padding mode applied on all four sides before a valid convolution.

    ``reflect`` mirrors about the border sample without repeating it
    (``x[-1] -> x[1]``); ``circular`` wraps indices modulo the extent.
    """

    mode: str = "none"
    pad: int = 0

    def __post_init__(self):
        if self.mode not in PAD_MODES:
            raise ValueError(f"unknown padding mode {self.mode!r}")
        if int(self.pad) < 0:
            raise ValueError("padding must be non-negative")
        object.__setattr__(self, "pad", 0 if self.mode == "none" else int(self.pad))

    @classmethod
    def none(cls):
        return cls("none", 0)

    @classmethod
    def zero(cls, pad):
        return cls("zero", pad)

    @classmethod
    def reflect(cls, pad):
        return cls("reflect", pad)

    @classmethod
    def circular(cls, pad):
        return cls("circular", pad)

    def __str__(self):
        return "none" if self.mode == "none" else f"{self.mode}({self.pad})"


@dataclass(frozen=True, eq=False)
class ConvLayer:
    weights: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)
    padding: Padding = Padding()

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim == 2:
            w = w[None, None]
        if w.ndim != 4 or min(w.shape) < 1:
            raise DimensionError(f"kernel must be (out, in, kh, kw), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        b = np.broadcast_to(np.asarray(self.bias, dtype=np.float64), (w.shape[0],)).copy()
        if not np.all(np.isfinite(b)):
            raise ValueError("bias must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    def output_size(self, size: GridSize) -> GridSize:
        kh, kw = self.kernel
        p = self.padding.pad
        if self.padding.mode == "reflect" and p >= min(size.height, size.width):
            raise ShapeError(f"reflect pad {p} needs a map larger than {size}")
        h, w = size.height + 2 * p - kh + 1, size.width + 2 * p - kw + 1
        if h < 1 or w < 1:
            raise ShapeError(f"{kh}x{kw} kernel does not fit padded {size} map")
        return GridSize(h, w)

    def with_padding(self, padding: Padding) -> "ConvLayer":
        return ConvLayer(self.weights, self.bias, padding)


@dataclass(frozen=True)
class Activation:
    kind: str = "identity"
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.kind not in ("identity", "leaky_relu"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if not 0.0 <= float(self.gamma) < 1.0:
            raise ValueError("LeakyReLU slope must satisfy 0 <= gamma < 1")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def leaky_relu(cls, gamma=DEFAULT_GAMMA):
        return cls("leaky_relu", float(gamma))


@dataclass(frozen=True)
class Upsample:
    target: GridSize


Stage = Union[ConvLayer, Activation, Upsample]


@dataclass(frozen=True)
class NetworkSpec:
    stages: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        for s in self.stages:
            if not isinstance(s, (ConvLayer, Activation, Upsample)):
                raise TypeError(f"not a pipeline stage: {s!r}")

    def shapes(self, channels: int, size: GridSize) -> list[tuple[int, GridSize]]:
        """(channels, size) entering each stage, plus the final output."""
        out = [(channels, size)]
        for idx, stage in enumerate(self.stages):
            try:
                channels, size = _stage_shape(stage, channels, size)
            except (ShapeError, DimensionError) as exc:
                raise StageError(idx, exc) from exc
            out.append((channels, size))
        return out

    def output_shape(self, channels: int, size: GridSize) -> tuple[int, GridSize]:
        return self.shapes(channels, size)[-1]

    @property
    def in_channels(self) -> int | None:
        for s in self.stages:
            if isinstance(s, ConvLayer):
                return s.in_channels
        return None

    @property
    def is_linear(self) -> bool:
        return all(not isinstance(s, Activation) or s.kind == "identity" for s in self.stages)

    @property
    def conv_layers(self) -> list[ConvLayer]:
        return [s for s in self.stages if isinstance(s, ConvLayer)]


def _stage_shape(stage, channels, size):
    if isinstance(stage, ConvLayer):
        if stage.in_channels != channels:
            raise ShapeError(f"layer expects {stage.in_channels} channels, got {channels}")
        return stage.out_channels, stage.output_size(size)
    if isinstance(stage, Upsample):
        return channels, stage.target
    return channels, size


def pad_batch(x: np.ndarray, padding: Padding) -> np.ndarray:
    if padding.mode == "none" or padding.pad == 0:
        return x
    p = padding.pad
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode=_NP_PAD[padding.mode])


@numba.njit(cache=True)
def _valid_xcorr(xp, wts, bias, out):
    n, c = xp.shape[0], xp.shape[1]
    o_ch, kh, kw = wts.shape[0], wts.shape[2], wts.shape[3]
    oh, ow = out.shape[2], out.shape[3]
    for b in range(n):
        for o in range(o_ch):
            acc = out[b, o]
            acc[:, :] = bias[o]
            for ci in range(c):
                src = xp[b, ci]
                for ky in range(kh):
                    for kx in range(kw):
                        wv = wts[o, ci, ky, kx]
                        if wv == 0.0:
                            continue
                        for y in range(oh):
                            for x in range(ow):
                                acc[y, x] += wv * src[y + ky, x + kx]


def conv_batch(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Cross-correlation of an ``(N, C, H, W)`` batch with one layer."""
    n, c, h, w = x.shape
    if c != layer.in_channels:
        raise ShapeError(f"layer expects {layer.in_channels} channels, got {c}")
    oh, ow = layer.output_size(GridSize(h, w)).shape
    xp = np.ascontiguousarray(pad_batch(x, layer.padding), dtype=np.float64)
    out = np.empty((n, layer.out_channels, oh, ow))
    _valid_xcorr(xp, layer.weights, layer.bias, out)
    return out


def activate_array(x: np.ndarray, act: Activation) -> np.ndarray:
    if act.kind == "identity":
        return x
    return np.where(x >= 0.0, x, act.gamma * x)


def forward_batch(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    for idx, stage in enumerate(net.stages):
        try:
            if isinstance(stage, ConvLayer):
                x = conv_batch(x, stage)
            elif isinstance(stage, Activation):
                x = activate_array(x, stage)
            else:
                x = resize_array(x, stage.target)
        except (ShapeError, DimensionError) as exc:
            raise StageError(idx, exc) from exc
    return x


def conv2d(fmap: FeatureMap, layer: ConvLayer) -> FeatureMap:
    """Stride-1 cross-correlation; output extent ``H + 2*pad - kh + 1``."""
    return FeatureMap(conv_batch(fmap.values[None], layer)[0])


def activate(fmap: FeatureMap, act: Activation) -> FeatureMap:
    if act.kind == "identity":
        return fmap
    return FeatureMap(activate_array(fmap.values, act))


def forward(net: NetworkSpec, fmap: FeatureMap) -> FeatureMap:
    """Apply the stages in order; failures are re-raised as :class:`StageError`."""
    if not net.stages:
        return fmap
    return FeatureMap(forward_batch(net, fmap.values[None])[0])


def strip_padding(net: NetworkSpec, final: GridSize, input_size: GridSize | None = None):
    """Padding-free counterpart of a zero-padded pipeline.

    Walks the stages backwards from ``final``: every conv loses its padding and
    the size it needs grows by ``k - 1``; an upsample is retargeted to the grown
    size so the convolutions after it still end at their original extent.
    The convolutions ahead of the first upsample instead need a larger input
    map, which is returned along with the new network.

    ``input_size`` (the original input extent) is needed only when the network
    contains upsamples, to know what each upsample originally received.
    """
    for idx, s in enumerate(net.stages):
        if isinstance(s, ConvLayer) and s.padding.mode not in ("none", "zero"):
            raise UnsupportedError(
                f"stage {idx}: {s.padding.mode} padding cannot be stripped; only zero padding"
            )
    has_upsample = any(isinstance(s, Upsample) for s in net.stages)
    if has_upsample and input_size is None:
        raise DimensionError("input_size is required to strip a pipeline containing upsamples")
    if has_upsample:
        chans = net.in_channels or 1
        original = net.shapes(chans, input_size)
    need = final
    stages = list(net.stages)
    for idx in range(len(stages) - 1, -1, -1):
        s = stages[idx]
        if isinstance(s, ConvLayer):
            kh, kw = s.kernel
            need = GridSize(need.height + kh - 1, need.width + kw - 1)
            stages[idx] = s.with_padding(Padding.none())
        elif isinstance(s, Upsample):
            stages[idx] = Upsample(need)
            need = original[idx][1]
    return NetworkSpec(tuple(stages)), need


# -- JSON ------------------------------------------------------------------

def padding_to_dict(p: Padding) -> dict:
    return {"mode": p.mode, "pad": p.pad}


def stage_to_dict(stage) -> dict:
    if isinstance(stage, ConvLayer):
        return {
            "type": "conv",
            "weights": stage.weights.tolist(),
            "bias": stage.bias.tolist(),
            "padding": padding_to_dict(stage.padding),
        }
    if isinstance(stage, Activation):
        d = {"type": "act", "kind": stage.kind}
        if stage.kind == "leaky_relu":
            d["gamma"] = stage.gamma
        return d
    return {"type": "upsample", "size": list(stage.target.shape)}


def stage_from_dict(d: dict):
    kind = d.get("type")
    if kind == "conv":
        pad = d.get("padding", {"mode": "none"})
        return ConvLayer(d["weights"], d.get("bias", 0.0), Padding(pad.get("mode", "none"), pad.get("pad", 0)))
    if kind == "act":
        return Activation(d.get("kind", "identity"), d.get("gamma", DEFAULT_GAMMA))
    if kind == "upsample":
        return Upsample(GridSize(*d["size"]))
    raise ValueError(f"unknown stage type {kind!r}")


def network_to_dict(net: NetworkSpec) -> dict:
    return {
        "format": NETWORK_FORMAT,
        "version": NETWORK_VERSION,
        "stages": [stage_to_dict(s) for s in net.stages],
    }


def network_from_dict(d: dict) -> NetworkSpec:
    if d.get("format", NETWORK_FORMAT) != NETWORK_FORMAT:
        raise ValueError(f"not a network document: format={d.get('format')!r}")
    if int(d.get("version", NETWORK_VERSION)) > NETWORK_VERSION:
        raise ValueError(f"unsupported network schema version {d['version']}")
    return NetworkSpec(tuple(stage_from_dict(s) for s in d["stages"]))


def load_network(path) -> NetworkSpec:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


def save_network(net: NetworkSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=2, sort_keys=True)
        fh.write("\n")

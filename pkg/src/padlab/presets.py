"""Built-in networks covering the canonical padding cases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convnet import Activation, ConvLayer, NetworkSpec, Padding, strip_padding
from .tensor import GridSize, gaussian_batch

DEFAULT_SIZE = GridSize(16, 16)
DEEP_SEED = 2021


@dataclass(frozen=True)
class Preset:
    name: str
    net: NetworkSpec
    input_size: GridSize
    description: str

    @property
    def padded(self) -> bool:
        return any(s.padding.mode != "none" for s in self.net.conv_layers)


def _ones(bias=0.0, padding=Padding.none()):
    return ConvLayer(np.ones((1, 1, 3, 3)), bias, padding)


def _deep_zero_net(channels=4, layers=3, k=5, gamma=0.2):
    stages, c_in = [], 1
    for layer in range(layers):
        w = gaussian_batch(channels * c_in, GridSize(k, k), DEEP_SEED, [layer])[0]
        stages.append(ConvLayer(w.reshape(channels, c_in, k, k) / k, 0.0, Padding.zero(k // 2)))
        if layer < layers - 1:
            stages.append(Activation.leaky_relu(gamma))
        c_in = channels
    return NetworkSpec(tuple(stages))


def _build():
    zero2 = NetworkSpec((_ones(0.0, Padding.zero(1)), Activation.leaky_relu(0.2),
                         _ones(0.0, Padding.zero(1))))
    nopad2, nopad2_in = strip_padding(zero2, DEFAULT_SIZE)
    zdeep = _deep_zero_net()
    ndeep, ndeep_in = strip_padding(zdeep, DEFAULT_SIZE)
    items = [
        Preset("nopad-linear", NetworkSpec((_ones(0.5),)), DEFAULT_SIZE,
               "one valid 3x3 all-ones conv, bias 0.5"),
        Preset("zeropad-2layer", zero2, DEFAULT_SIZE,
               "3x3 all-ones conv, zero(1) -> LeakyReLU(0.2) -> 3x3 all-ones conv, zero(1)"),
        Preset("reflect-linear", NetworkSpec((_ones(0.5, Padding.reflect(1)),)), DEFAULT_SIZE,
               "one 3x3 all-ones conv with reflect(1) padding, bias 0.5"),
        Preset("circular-linear", NetworkSpec((_ones(0.5, Padding.circular(1)),)), DEFAULT_SIZE,
               "one 3x3 all-ones conv with circular(1) padding, bias 0.5"),
        Preset("nopad-2layer", nopad2, nopad2_in,
               "zeropad-2layer with padding stripped; 16x16 output"),
        Preset("zeropad-deep", zdeep, DEFAULT_SIZE,
               "3 x (5x5 conv, 4 channels, zero(2)) with LeakyReLU(0.2), fixed random weights"),
        Preset("nopad-deep", ndeep, ndeep_in,
               "zeropad-deep with padding stripped; 16x16 output"),
    ]
    return {p.name: p for p in items}


PRESETS = _build()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None

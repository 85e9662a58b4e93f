"""Monte Carlo and exact moments of convolutional feature maps.

Inputs are i.i.d. N(0, 1) noise maps.  For every output location ``i`` we
track the expectation ``E[y_i]`` and, for each requested offset ``d``, the raw
autocorrelation ``E[y_i * y_{i+d}]`` (bias included, not centered).

The Monte Carlo side splits the ``M`` samples into fixed-size chunks whose
boundaries depend only on ``M``.  Each chunk is reduced with a two-pass mean /
sum-of-squares, and chunks are merged with Chan's parallel update along a
fixed binary tree, so the result does not depend on how many workers ran.

The analytic side composes every stage into one linear map from the input
noise (plus a padding "null" variable and a constant "one" variable) to the
output, and reads the moments off the coefficient rows.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import ndtr

from .convnet import Activation, ConvLayer, NetworkSpec, Upsample, forward_batch
from .errors import DimensionError, ShapeError, UnsupportedError
from .tensor import GridSize, RngSpec, gaussian_batch, interp_matrix

CHUNK = 2048
DEFAULT_Z = 5.0


# -- offsets / reports -------------------------------------------------------

def normalize_offsets(offsets, size: GridSize) -> tuple[tuple[int, int], ...]:
    out = []
    for d in offsets:
        di, dj = (int(d[0]), int(d[1]))
        if abs(di) >= size.height or abs(dj) >= size.width:
            raise DimensionError(f"offset {(di, dj)} does not fit a {size} output")
        if (di, dj) not in out:
            out.append((di, dj))
    if not out:
        raise DimensionError("at least one offset is required")
    return tuple(out)


def _pair_slices(offset, size: GridSize):
    """Slices (first, second) such that first[i] pairs with second[i] = first[i + offset]."""
    di, dj = offset
    h, w = size.shape
    a = (slice(max(0, -di), h - max(0, di)), slice(max(0, -dj), w - max(0, dj)))
    b = (slice(max(0, di), h - max(0, -di)), slice(max(0, dj), w - max(0, -dj)))
    return a, b


@dataclass
class Autocorr:
    """``E[y_i * y_{i+offset}]`` over the locations ``i`` whose partner is inside the map.

    ``values[c, r, s]`` belongs to location ``(origin[0] + r, origin[1] + s)``.
    """

    offset: tuple[int, int]
    origin: tuple[int, int]
    values: np.ndarray
    se: np.ndarray

    def full(self, size: GridSize) -> np.ndarray:
        out = np.full((self.values.shape[0],) + size.shape, np.nan)
        r0, c0 = self.origin
        out[:, r0:r0 + self.values.shape[1], c0:c0 + self.values.shape[2]] = self.values
        return out


@dataclass
class StatReport:
    expectation: np.ndarray
    expectation_se: np.ndarray
    variance: np.ndarray
    autocorr: dict = field(default_factory=dict)
    samples: int = 0
    seed: int | None = None
    stream: int | None = None
    analytic: bool = False

    @property
    def channels(self) -> int:
        return self.expectation.shape[0]

    @property
    def size(self) -> GridSize:
        return GridSize(*self.expectation.shape[1:])

    @property
    def offsets(self):
        return tuple(self.autocorr)

    def covariance(self, offset) -> np.ndarray:
        """Centered view ``R(i, i+d) - E[y_i] E[y_{i+d}]``."""
        a, b = _pair_slices(offset, self.size)
        e = self.expectation
        return self.autocorr[tuple(offset)].values - e[(slice(None),) + a] * e[(slice(None),) + b]


# -- Welford / Chan accumulation --------------------------------------------

class Welford:
    """Running count, mean and sum of squared deviations for a stack of arrays."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self, count=0, mean=None, m2=None):
        self.count = count
        self.mean = mean
        self.m2 = m2

    @classmethod
    def from_batch(cls, x: np.ndarray) -> "Welford":
        # shift by the first row: constant entries get an exact mean and zero m2
        shifted = x - x[0]
        mean = x[0] + shifted.mean(axis=0)
        dev = shifted - (mean - x[0])
        return cls(x.shape[0], mean, np.einsum("n...,n...->...", dev, dev))

    def update_batch(self, x: np.ndarray) -> "Welford":
        merged = self.merge(Welford.from_batch(x))
        self.count, self.mean, self.m2 = merged.count, merged.mean, merged.m2
        return self

    def merge(self, other: "Welford") -> "Welford":
        if self.count == 0:
            return Welford(other.count, other.mean, other.m2)
        if other.count == 0:
            return Welford(self.count, self.mean, self.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Welford(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.count - 1)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)


def tree_reduce(items: list):
    """Merge a list of accumulators along a fixed balanced binary tree."""
    if len(items) == 1:
        return items[0]
    mid = len(items) // 2
    return tree_reduce(items[:mid]).merge(tree_reduce(items[mid:]))


class _ChunkStats:
    def __init__(self, parts: dict):
        self.parts = parts

    def merge(self, other):
        return _ChunkStats({k: v.merge(other.parts[k]) for k, v in self.parts.items()})


def default_workers() -> int:
    env = os.environ.get("PADLAB_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _net_input_channels(net: NetworkSpec, channels):
    if channels is not None:
        return int(channels)
    return net.in_channels or 1


def sample_outputs(net: NetworkSpec, input_size: GridSize, rng: RngSpec, start: int, stop: int,
                   channels: int | None = None) -> np.ndarray:
    """Network outputs for Monte Carlo samples ``start..stop-1`` (sample m uses stream ``rng.stream + m``)."""
    c = _net_input_channels(net, channels)
    streams = np.arange(start, stop, dtype=np.uint64) + np.uint64(rng.stream)
    x = gaussian_batch(c, input_size, rng.seed, streams)
    return forward_batch(net, x)


def _chunk_stats(net, input_size, rng, channels, offsets, start, stop):
    y = sample_outputs(net, input_size, rng, start, stop, channels)
    size = GridSize(*y.shape[2:])
    parts = {"y": Welford.from_batch(y)}
    for d in offsets:
        a, b = _pair_slices(d, size)
        prod = y[(slice(None), slice(None)) + a] * y[(slice(None), slice(None)) + b]
        parts[d] = Welford.from_batch(prod)
    return _ChunkStats(parts)


def estimate_moments(net: NetworkSpec, input_size: GridSize, offsets, samples: int,
                     rng: RngSpec = RngSpec(), workers: int | None = None,
                     channels: int | None = None) -> StatReport:
    """Monte Carlo expectation and raw autocorrelation maps with standard errors.

    Parameters
    ----------
    net : NetworkSpec
        Pipeline fed with i.i.d. standard-normal maps of ``input_size``.
    offsets : iterable of (di, dj)
        Offsets ``d`` at which ``E[y_i * y_{i+d}]`` is estimated.
    samples : int
        Number of Monte Carlo samples ``M`` (at least 2).
    rng : RngSpec
        Sample ``m`` is drawn from stream ``rng.stream + m`` under ``rng.seed``.
    workers : int, optional
        Thread count; the result is bit-identical for every value.
    """
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")
    if not isinstance(input_size, GridSize):
        input_size = GridSize(*input_size)
    c = _net_input_channels(net, channels)
    _, out_size = net.output_shape(c, input_size)
    offsets = normalize_offsets(offsets, out_size)
    bounds = [(s, min(s + CHUNK, samples)) for s in range(0, samples, CHUNK)]
    workers = default_workers() if workers is None else max(1, int(workers))

    def run(bound):
        return _chunk_stats(net, input_size, rng, c, offsets, *bound)

    if workers == 1 or len(bounds) == 1:
        chunks = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, bounds))
    total = tree_reduce(chunks).parts
    y = total["y"]
    autocorr = {}
    for d in offsets:
        a, _ = _pair_slices(d, out_size)
        autocorr[d] = Autocorr(d, (a[0].start, a[1].start), total[d].mean, total[d].se)
    return StatReport(
        expectation=y.mean,
        expectation_se=y.se,
        variance=y.variance,
        autocorr=autocorr,
        samples=samples,
        seed=rng.seed,
        stream=rng.stream,
    )


# -- analytic engine ----------------------------------------------------------

@dataclass
class LinearCoeffMap:
    """Whole-stack linear operator from input noise to output features.

    ``coeffs`` has one row per output entry (channel-major, row-major) and
    ``n_inputs + 2`` columns: the input noise variables, then the ``null``
    column collecting taps that landed on zero padding, then the constant
    ``one`` column that carries propagated biases.
    """

    coeffs: np.ndarray
    input_shape: tuple[int, int, int]
    output_shape: tuple[int, int, int]

    @property
    def n_inputs(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def null(self) -> int:
        return self.n_inputs

    @property
    def one(self) -> int:
        return self.n_inputs + 1

    @property
    def noise(self) -> np.ndarray:
        return self.coeffs[:, : self.n_inputs]

    @property
    def constant(self) -> np.ndarray:
        return self.coeffs[:, self.one]

    def taps(self, index: int, tol: float = 0.0):
        """Sparse ``(variable id, coefficient)`` list for one output entry."""
        row = self.coeffs[index]
        ids = np.flatnonzero(np.abs(row) > tol)
        return [(int(k), float(row[k])) for k in ids]


def source_index(pos: np.ndarray, n: int, mode: str) -> np.ndarray:
    """Map padded coordinates to source indices; ``-1`` marks a zero-padding tap."""
    if mode == "circular":
        return np.mod(pos, n)
    if mode == "reflect":
        period = 2 * (n - 1)
        if period == 0:
            return np.zeros_like(pos)
        r = np.mod(pos, period)
        return np.where(r < n, r, period - r)
    return np.where((pos >= 0) & (pos < n), pos, -1)


def conv_stage_matrix(layer: ConvLayer, channels: int, size: GridSize) -> sparse.csr_matrix:
    """Sparse ``(n_out, n_in + 2)`` matrix of one convolution over ``[x, null, one]``."""
    if layer.in_channels != channels:
        raise ShapeError(f"layer expects {layer.in_channels} channels, got {channels}")
    out_size = layer.output_size(size)
    h, w = size.shape
    oh, ow = out_size.shape
    n_in = channels * h * w
    null, one = n_in, n_in + 1
    kh, kw = layer.kernel
    p = layer.padding.pad
    mode = layer.padding.mode
    oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    rows, cols, vals = [], [], []
    for o in range(layer.out_channels):
        out_idx = (o * oh + oy) * ow + ox
        for c in range(channels):
            for ky in range(kh):
                sy = source_index(oy + ky - p, h, mode)
                for kx in range(kw):
                    wv = layer.weights[o, c, ky, kx]
                    if wv == 0.0:
                        continue
                    sx = source_index(ox + kx - p, w, mode)
                    src = np.where((sy < 0) | (sx < 0), null, (c * h + sy) * w + sx)
                    rows.append(out_idx.ravel())
                    cols.append(src.ravel())
                    vals.append(np.full(out_idx.size, wv))
        if layer.bias[o] != 0.0:
            rows.append(np.arange(o * oh * ow, (o + 1) * oh * ow))
            cols.append(np.full(oh * ow, one))
            vals.append(np.full(oh * ow, layer.bias[o]))
    n_out = layer.out_channels * oh * ow
    if not rows:
        return sparse.csr_matrix((n_out, n_in + 2))
    m = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_out, n_in + 2),
    )
    return m.tocsr()  # duplicate taps (reflect) are summed here


def upsample_stage_matrix(channels: int, size: GridSize, target: GridSize) -> sparse.csr_matrix:
    ry = interp_matrix(size.height, target.height)
    rx = interp_matrix(size.width, target.width)
    block = sparse.kron(sparse.csr_matrix(ry), sparse.csr_matrix(rx))
    body = sparse.kron(sparse.identity(channels), block)
    pad = sparse.csr_matrix((body.shape[0], 2))
    return sparse.hstack([body, pad]).tocsr()


def linear_map(net: NetworkSpec, input_size: GridSize, channels: int | None = None) -> LinearCoeffMap:
    """Compose the stage index maps into one :class:`LinearCoeffMap`."""
    if not isinstance(input_size, GridSize):
        input_size = GridSize(*input_size)
    c = c0 = _net_input_channels(net, channels)
    n0 = c * input_size.height * input_size.width
    coeffs = np.zeros((n0, n0 + 2))
    coeffs[:, :n0] = np.eye(n0)
    size = input_size
    for idx, stage in enumerate(net.stages):
        if isinstance(stage, Activation):
            if stage.kind != "identity":
                raise UnsupportedError(
                    f"stage {idx}: {stage.kind} is nonlinear; use estimate_moments instead"
                )
            continue
        if isinstance(stage, ConvLayer):
            s = conv_stage_matrix(stage, c, size)
            c, size = stage.out_channels, stage.output_size(size)
        else:
            s = upsample_stage_matrix(c, size, stage.target)
            size = stage.target
        aug = np.zeros((coeffs.shape[0] + 2, n0 + 2))
        aug[:-2] = coeffs
        aug[-2, n0] = 1.0
        aug[-1, n0 + 1] = 1.0
        coeffs = np.asarray(s @ aug)
    return LinearCoeffMap(coeffs, (c0, input_size.height, input_size.width),
                          (c, size.height, size.width))


def moments_from_map(lmap: LinearCoeffMap, offsets) -> StatReport:
    c, h, w = lmap.output_shape
    size = GridSize(h, w)
    offsets = normalize_offsets(offsets, size)
    x = lmap.noise.reshape(c, h, w, -1)
    k = lmap.constant.reshape(c, h, w)
    expectation = k.copy()
    variance = np.einsum("chwn,chwn->chw", x, x)
    autocorr = {}
    for d in offsets:
        a, b = _pair_slices(d, size)
        xa, xb = x[(slice(None),) + a], x[(slice(None),) + b]
        r = np.einsum("chwn,chwn->chw", xa, xb) + k[(slice(None),) + a] * k[(slice(None),) + b]
        autocorr[d] = Autocorr(d, (a[0].start, a[1].start), r, np.zeros_like(r))
    return StatReport(
        expectation=expectation,
        expectation_se=np.zeros_like(expectation),
        variance=variance,
        autocorr=autocorr,
        analytic=True,
    )


def analytic_moments(net: NetworkSpec, input_size: GridSize, offsets,
                     channels: int | None = None) -> StatReport:
    """Exact expectation and raw autocorrelation of a linear pipeline.

    ``E[y_i]`` is the propagated bias; ``R(i, j)`` sums coefficient products
    over the input variables both outputs share, plus the bias cross term.
    Zero-padding taps hit the null variable and drop out; reflected and
    wrapped taps hit the mirrored or wrapped input variable.
    """
    return moments_from_map(linear_map(net, input_size, channels), offsets)


# -- closed-form two-layer expectation -------------------------------------

def leaky_relu_gaussian_mean(mu, sigma, gamma: float):
    """``E[LeakyReLU(Y)]`` for ``Y ~ N(mu, sigma^2)``.

    With ``mu = 0`` this is ``(1 - gamma) * sigma / sqrt(2 pi)``: the negative
    half integrates to ``-sigma / sqrt(2 pi)`` and the positive half to
    ``+sigma / sqrt(2 pi)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    safe = np.where(sigma > 0, sigma, 1.0)
    t = mu / safe
    pos = mu * ndtr(t) + safe * np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    pos = np.where(sigma > 0, pos, np.maximum(mu, 0.0))
    neg = mu - pos
    return pos + gamma * neg


def two_layer_expectation(layer1: ConvLayer, gamma: float, layer2: ConvLayer,
                          input_size: GridSize) -> np.ndarray:
    """Exact ``E[y]`` of ``conv -> LeakyReLU(gamma) -> conv`` on N(0, 1) input.

    Every first-layer output is Gaussian with mean ``b1`` and variance equal to
    the sum of squared coefficients on its surviving taps, so the activation's
    mean has a closed form per location; the second layer is linear in those
    means, with its own padding handled by the same index maps.
    """
    if not isinstance(input_size, GridSize):
        input_size = GridSize(*input_size)
    first = linear_map(NetworkSpec((layer1,)), input_size)
    sigma = np.sqrt(np.einsum("kn,kn->k", first.noise, first.noise))
    act_mean = leaky_relu_gaussian_mean(first.constant, sigma, gamma)
    c1, h1, w1 = first.output_shape
    s2 = conv_stage_matrix(layer2, c1, GridSize(h1, w1))
    out = s2 @ np.concatenate([act_mean, [0.0, 1.0]])
    oh, ow = layer2.output_size(GridSize(h1, w1)).shape
    return np.asarray(out).reshape(layer2.out_channels, oh, ow)


# -- verdicts -----------------------------------------------------------------

@dataclass
class StationarityVerdict:
    expectation_uniform: bool
    expectation_max_z: float
    offset_consistent: dict
    offset_max_z: dict
    anchor_map: np.ndarray
    z_threshold: float

    @property
    def stationary(self) -> bool:
        return self.expectation_uniform and all(self.offset_consistent.values())

    def summary(self) -> dict:
        return {
            "stationary": self.stationary,
            "expectation_uniform": self.expectation_uniform,
            "expectation_max_z": _jsonable_z(self.expectation_max_z),
            "offset_consistent": {f"{d[0]},{d[1]}": v for d, v in self.offset_consistent.items()},
            "offset_max_z": {f"{d[0]},{d[1]}": _jsonable_z(v) for d, v in self.offset_max_z.items()},
            "z_threshold": self.z_threshold,
        }


def _jsonable_z(z):
    return "inf" if math.isinf(z) else float(z)


def _z_scores(dev: np.ndarray, se: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """``|dev| / se``; where ``se == 0`` (exact reports) any non-rounding deviation is infinite."""
    dev = np.abs(dev)
    exact = se <= 0
    tol = 1e-12 * np.maximum(1.0, np.abs(scale))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(exact, np.where(dev <= tol, 0.0, np.inf), dev / np.where(exact, 1.0, se))
    return z


def _max_z(values: np.ndarray, se: np.ndarray) -> float:
    centre = values.mean(axis=(1, 2), keepdims=True)
    z = _z_scores(values - centre, se, values)
    return float(z.max()) if z.size else 0.0


def stationarity_verdict(report: StatReport, z_threshold: float = DEFAULT_Z) -> StationarityVerdict:
    """Test spatial uniformity of the expectation and of each autocorrelation map."""
    e, se = report.expectation, report.expectation_se
    ez = _max_z(e, se)
    med = np.median(e, axis=(1, 2), keepdims=True)
    anchor = _z_scores(e - med, se, e) * np.sign(e - med)
    anchor = np.nan_to_num(anchor, nan=0.0)
    consistent, zmax = {}, {}
    for d, ac in report.autocorr.items():
        zmax[d] = _max_z(ac.values, ac.se)
        consistent[d] = zmax[d] <= z_threshold
    return StationarityVerdict(ez <= z_threshold, ez, consistent, zmax, anchor, float(z_threshold))


def bias_shift_check(net: NetworkSpec, input_size: GridSize, offsets, b: float,
                     channels: int | None = None) -> float:
    """Max ``|R_b(i, d) - R_0(i, d) - b^2|`` with every bias zeroed and ``b`` added at the last conv."""
    stages = [s if not isinstance(s, ConvLayer) else ConvLayer(s.weights, 0.0, s.padding)
              for s in net.stages]
    last = max((i for i, s in enumerate(stages) if isinstance(s, ConvLayer)), default=None)
    if last is None:
        raise UnsupportedError("network has no convolution to carry a bias")
    plain = NetworkSpec(tuple(stages))
    biased_stages = list(stages)
    biased_stages[last] = ConvLayer(stages[last].weights, b, stages[last].padding)
    biased = NetworkSpec(tuple(biased_stages))
    r0 = analytic_moments(plain, input_size, offsets, channels)
    rb = analytic_moments(biased, input_size, offsets, channels)
    worst = 0.0
    for d in r0.autocorr:
        diff = rb.autocorr[d].values - r0.autocorr[d].values - b * b
        worst = max(worst, float(np.abs(diff).max()))
    return worst

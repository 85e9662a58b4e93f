import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from padlab import (Activation, ConvLayer, FeatureMap, GridSize, NetworkSpec, Padding, RngSpec,
                    ShapeError, StageError, UnsupportedError, Upsample, activate, conv2d, forward,
                    make_map, sample_gaussian, strip_padding)
from padlab.convnet import load_network, network_from_dict, network_to_dict, save_network

torch = pytest.importorskip("torch")
F = torch.nn.functional

_TORCH_PAD = {"zero": "constant", "reflect": "reflect", "circular": "circular"}


def torch_conv(x, layer):
    t = torch.from_numpy(np.asarray(x, dtype=np.float64))[None]
    p = layer.padding.pad
    if p:
        t = F.pad(t, (p, p, p, p), mode=_TORCH_PAD[layer.padding.mode])
    out = F.conv2d(t, torch.from_numpy(layer.weights.copy()), torch.from_numpy(layer.bias.copy()))
    return out[0].numpy()


def test_valid_ones():
    out = conv2d(make_map(1, GridSize(3, 3), 1.0), ConvLayer(np.ones((3, 3)), 0.0))
    assert out.values.shape == (1, 1, 1) and out.values[0, 0, 0] == 9.0


def test_zero_pad_single_pixel():
    out = conv2d(make_map(1, GridSize(1, 1), 2.5), ConvLayer(np.ones((3, 3)), 0.0, Padding.zero(1)))
    assert out.values.shape == (1, 1, 1) and out.values[0, 0, 0] == 2.5


def test_circular_uniform():
    out = conv2d(make_map(1, GridSize(3, 3), 1.0), ConvLayer(np.ones((3, 3)), 0.0, Padding.circular(1)))
    assert out.values.shape == (1, 3, 3) and np.all(out.values == 9.0)


def test_reflect_does_not_repeat_edge():
    x = FeatureMap(np.arange(9.0).reshape(1, 3, 3))
    w = np.zeros((3, 3))
    w[1, 0] = 1.0  # picks the left neighbour
    out = conv2d(x, ConvLayer(w, 0.0, Padding.reflect(1)))
    # column -1 mirrors to column 1
    assert out.values[0, :, 0].tolist() == [1.0, 4.0, 7.0]


@pytest.mark.parametrize("mode", ["none", "zero", "reflect", "circular"])
@given(data=st.data())
@settings(max_examples=25, deadline=None)
def test_conv_matches_torch(mode, data):
    cin = data.draw(st.integers(1, 3))
    cout = data.draw(st.integers(1, 3))
    kh = data.draw(st.integers(1, 5))
    kw = data.draw(st.integers(1, 5))
    h = data.draw(st.integers(max(kh, 3), 9))
    w = data.draw(st.integers(max(kw, 3), 9))
    pad = 0 if mode == "none" else data.draw(st.integers(0, 2))
    seed = data.draw(st.integers(0, 2**32))
    rs = np.random.default_rng(seed)
    layer = ConvLayer(rs.standard_normal((cout, cin, kh, kw)), rs.standard_normal(cout), Padding(mode, pad))
    x = rs.standard_normal((cin, h, w))
    np.testing.assert_allclose(conv2d(FeatureMap(x), layer).values, torch_conv(x, layer),
                               rtol=1e-12, atol=1e-12)


def test_conv_errors():
    with pytest.raises(ShapeError):
        conv2d(make_map(2, GridSize(4, 4)), ConvLayer(np.ones((1, 1, 3, 3)), 0.0))
    with pytest.raises(ShapeError):
        conv2d(make_map(1, GridSize(2, 2)), ConvLayer(np.ones((3, 3)), 0.0))
    with pytest.raises(ShapeError):
        conv2d(make_map(1, GridSize(2, 2)), ConvLayer(np.ones((3, 3)), 0.0, Padding.reflect(2)))


def test_activation():
    lr = Activation.leaky_relu(0.2)
    out = activate(FeatureMap(np.array([[[2.0, -1.0]]])), lr).values
    assert out[0, 0, 0] == 2.0 and out[0, 0, 1] == pytest.approx(-0.2, abs=0)
    m = sample_gaussian(1, GridSize(3, 3), RngSpec(1))
    assert activate(m, Activation.identity()) == m
    with pytest.raises(ValueError):
        Activation.leaky_relu(1.0)


def test_forward_compositions():
    m = make_map(1, GridSize(3, 3), 1.0)
    assert forward(NetworkSpec(()), m) == m
    out = forward(NetworkSpec((ConvLayer(np.ones((3, 3)), 0.0),)), m)
    assert out.values.tolist() == [[[9.0]]]
    net = NetworkSpec((ConvLayer(np.ones((3, 3)), 0.0, Padding.zero(1)), Activation.leaky_relu(),
                       ConvLayer(np.ones((3, 3)), 0.0, Padding.zero(1))))
    x = sample_gaussian(1, GridSize(7, 5), RngSpec(0))
    assert forward(net, x).size == GridSize(7, 5)


def test_forward_reports_stage_index():
    net = NetworkSpec((ConvLayer(np.ones((3, 3)), 0.0), ConvLayer(np.ones((1, 2, 3, 3)), 0.0)))
    with pytest.raises(StageError) as info:
        forward(net, make_map(1, GridSize(6, 6)))
    assert info.value.stage == 1


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_translation_equivariance(dy, dx, seed):
    rs = np.random.default_rng(seed)
    net = NetworkSpec((ConvLayer(rs.standard_normal((2, 1, 3, 3)), rs.standard_normal(2)),
                       Activation.leaky_relu(0.2),
                       ConvLayer(rs.standard_normal((1, 2, 2, 3)), 0.1)))
    big = rs.standard_normal((1, 14, 14))
    a = forward(net, FeatureMap(big[:, :10, :10])).values
    b = forward(net, FeatureMap(big[:, dy:dy + 10, dx:dx + 10])).values
    # b[i] sees the window that a[i + d] saw
    h, w = a.shape[1:]
    assert np.array_equal(b[:, : h - dy, : w - dx], a[:, dy:, dx:])


@pytest.mark.parametrize("mode", ["none", "zero", "reflect", "circular"])
def test_linearity(mode):
    rs = np.random.default_rng(7)
    pad = 0 if mode == "none" else 1
    net = NetworkSpec((ConvLayer(rs.standard_normal((2, 1, 3, 3)), rs.standard_normal(2), Padding(mode, pad)),
                       Upsample(GridSize(11, 9)),
                       ConvLayer(rs.standard_normal((1, 2, 3, 3)), rs.standard_normal(1), Padding(mode, pad))))
    u, v = rs.standard_normal((1, 8, 8)), rs.standard_normal((1, 8, 8))
    a, b = 1.7, -0.6
    f = lambda x: forward(net, FeatureMap(x)).values  # noqa: E731
    zero = f(np.zeros((1, 8, 8)))
    lhs = f(a * u + b * v) - zero
    rhs = a * (f(u) - zero) + b * (f(v) - zero)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_circular_shift_equivariance(sy, sx, seed):
    rs = np.random.default_rng(seed)
    layer = ConvLayer(rs.standard_normal((1, 1, 3, 3)), 0.3, Padding.circular(1))
    x = rs.standard_normal((1, 6, 7))
    shifted = conv2d(FeatureMap(np.roll(x, (sy, sx), axis=(1, 2))), layer).values
    assert np.array_equal(shifted, np.roll(conv2d(FeatureMap(x), layer).values, (sy, sx), axis=(1, 2)))


def test_strip_padding_single():
    net = NetworkSpec((ConvLayer(np.ones((3, 3)), 0.0, Padding.zero(1)),))
    stripped, need = strip_padding(net, GridSize(8, 8))
    assert need == GridSize(10, 10)
    assert stripped.stages[0].padding.mode == "none"


def test_strip_padding_two_layers():
    net = NetworkSpec((ConvLayer(np.ones((3, 3)), 0.0, Padding.zero(1)),
                       ConvLayer(np.ones((3, 3)), 0.0, Padding.zero(1))))
    stripped, need = strip_padding(net, GridSize(8, 8))
    assert need == GridSize(12, 12)
    assert stripped.output_shape(1, need)[1] == GridSize(8, 8)


def test_strip_padding_with_upsamples():
    conv = lambda p: ConvLayer(np.ones((3, 3)) / 9, 0.0, Padding.zero(p))  # noqa: E731
    net = NetworkSpec((conv(1), Activation.leaky_relu(), Upsample(GridSize(8, 8)), conv(1), conv(1),
                       Upsample(GridSize(16, 16)), conv(1)))
    orig_in = GridSize(4, 4)
    final = net.output_shape(1, orig_in)[1]
    stripped, need = strip_padding(net, final, input_size=orig_in)
    assert need == GridSize(6, 6)
    assert [s.target for s in stripped.stages if isinstance(s, Upsample)] == [GridSize(12, 12), GridSize(18, 18)]
    out = forward(stripped, sample_gaussian(1, need, RngSpec(0)))
    assert out.size == final
    assert all(s.padding.mode == "none" for s in stripped.conv_layers)


def test_strip_padding_rejects_reflect():
    net = NetworkSpec((ConvLayer(np.ones((3, 3)), 0.0, Padding.reflect(1)),))
    with pytest.raises(UnsupportedError):
        strip_padding(net, GridSize(8, 8))


def test_network_json_roundtrip(tmp_path):
    rs = np.random.default_rng(3)
    net = NetworkSpec((ConvLayer(rs.standard_normal((2, 1, 3, 3)), [0.1, -0.2], Padding.reflect(1)),
                       Activation.leaky_relu(0.1), Upsample(GridSize(9, 9)),
                       ConvLayer(rs.standard_normal((1, 2, 1, 1)), 0.0)))
    doc = network_to_dict(net)
    assert doc["format"] == "padlab.network" and doc["version"] == 1
    json.dumps(doc)
    save_network(net, tmp_path / "n.json")
    back = load_network(tmp_path / "n.json")
    x = sample_gaussian(1, GridSize(6, 6), RngSpec(2))
    assert forward(back, x) == forward(net, x)
    with pytest.raises(ValueError):
        network_from_dict({"format": "padlab.network", "version": 99, "stages": []})

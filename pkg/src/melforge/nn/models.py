"""The four classifier architectures: CC, SSN, SSC and RCC.

All share the default configuration: four 3x3 convolutions with
[32, 64, 128, 64] filters at stride 2 / pad 2, then fully connected
layers [128, 256, 128, 1], leaky-ReLU activations and a sigmoid on the
single output neuron.  Dropout (0.2) and batch normalization are placed
on the *input* of every trainable operation; the final single-neuron
layer of each sigmoid head is the exception and gets dropout only.
That placement reproduces the published parameter totals exactly (see
REFERENCE_PARAM_COUNTS and the README's architecture notes).

SSN runs a full default model per 16-mel band and feeds the four band
probabilities to a global classifier (five outputs, trained on the mean
of the five losses; the global output is the prediction).  SSC runs the
conv stack per band and classifies the concatenated flattened features
(one output).  RCC inserts a residual block (one entry batchnorm, two
3x3 stride-1 convolutions, skip-added) after each strided convolution.
"""

from __future__ import annotations

import numpy as np

from ..rng import RandomStream
from .layers import (
    BatchNorm,
    Context,
    Conv2d,
    Dropout,
    Flatten,
    Layer,
    LeakyReLU,
    Linear,
    Sequential,
    ShapeError,
    Sigmoid,
    conv_out_extent,
)

ARCHITECTURES = ("cc", "ssn", "ssc", "rcc")

CONV_FILTERS = [32, 64, 128, 64]
LINEAR_SIZES = [128, 256, 128, 1]
DROPOUT_RATE = 0.2
LEAKY_SLOPE = 0.01
N_BANDS = 4
DEFAULT_INPUT_SHAPE = (1, 64, 87)

#: Published totals the `params` report compares against.
REFERENCE_PARAM_COUNTS = {"cc": 633_219, "ssn": 1_801_621, "ssc": 1_533_321, "rcc": 1_095_171}


class UnknownArchitectureError(ValueError):
    pass


def _conv_stage(name, in_ch, out_ch, rng, stride=2, pad=2):
    return [
        (f"{name}_bn", BatchNorm(in_ch)),
        (f"{name}_drop", Dropout(DROPOUT_RATE)),
        (name, Conv2d(in_ch, out_ch, kernel=3, stride=stride, pad=pad, init_rng=rng)),
        (f"{name}_act", LeakyReLU(LEAKY_SLOPE)),
    ]


def _hidden_linear_stage(name, in_f, out_f, rng):
    return [
        (f"{name}_bn", BatchNorm(in_f)),
        (f"{name}_drop", Dropout(DROPOUT_RATE)),
        (name, Linear(in_f, out_f, init_rng=rng)),
        (f"{name}_act", LeakyReLU(LEAKY_SLOPE)),
    ]


def _output_stage(name, in_f, rng):
    # the sigmoid head keeps dropout but carries no batchnorm
    return [
        (f"{name}_drop", Dropout(DROPOUT_RATE)),
        (name, Linear(in_f, 1, init_rng=rng)),
        (f"{name}_act", Sigmoid()),
    ]


def _classifier_layers(in_features, rng, prefix="fc"):
    layers = []
    f_in = in_features
    for i, f_out in enumerate(LINEAR_SIZES[:-1], start=1):
        layers += _hidden_linear_stage(f"{prefix}{i}", f_in, f_out, rng)
        f_in = f_out
    layers += _output_stage(f"{prefix}{len(LINEAR_SIZES)}", f_in, rng)
    return layers


def _conv_stack_layers(in_shape, rng, prefix="conv", residual=False):
    """Strided conv stages (optionally followed by residual blocks).

    Returns (layers, flattened feature count) for an input of
    (channels, height, width).
    """
    c, h, w = in_shape
    layers = []
    for i, out_ch in enumerate(CONV_FILTERS, start=1):
        layers += _conv_stage(f"{prefix}{i}", c, out_ch, rng)
        h = conv_out_extent(h, 3, 2, 2)
        w = conv_out_extent(w, 3, 2, 2)
        c = out_ch
        if residual:
            layers.append((f"block{i}", ResidualBlock(out_ch, rng)))
    return layers, c * h * w


class ResidualBlock(Layer):
    """Skip connection around two same-shape stride-1 convolutions.

    Entry batchnorm, then dropout -> conv -> leaky-ReLU -> dropout ->
    conv; the input is added to the result and activated.
    """

    def __init__(self, channels: int, rng: RandomStream | None):
        self.body = Sequential([
            ("bn", BatchNorm(channels)),
            ("drop_a", Dropout(DROPOUT_RATE)),
            ("conv_a", Conv2d(channels, channels, kernel=3, stride=1, pad=1, init_rng=rng)),
            ("act_a", LeakyReLU(LEAKY_SLOPE)),
            ("drop_b", Dropout(DROPOUT_RATE)),
            ("conv_b", Conv2d(channels, channels, kernel=3, stride=1, pad=1, init_rng=rng)),
        ])
        self.out_act = LeakyReLU(LEAKY_SLOPE)

    def forward(self, x, ctx):
        return self.out_act.forward(x + self.body.forward(x, ctx), ctx)

    def backward(self, dout):
        dsum = self.out_act.backward(dout)
        return dsum + self.body.backward(dsum)

    def params(self):
        return self.body.params()

    def buffers(self):
        return self.body.buffers()


class BandSplitNet(Layer):
    """Shared chassis for the sub-spectral models (SSN and SSC).

    Splits the mel axis into N_BANDS equal, non-overlapping bands and
    runs one sub-network per band.  With per-band classifier heads
    (SSN) the four band probabilities feed a global classifier and the
    forward pass returns all five outputs; without them (SSC) the
    flattened band features are concatenated into a single classifier.
    """

    def __init__(self, input_shape, rng, band_heads: bool):
        c, h, w = input_shape
        if h % N_BANDS != 0:
            raise ShapeError(f"mel extent {h} not divisible into {N_BANDS} bands")
        self.band_heads = band_heads
        self.band_rows = h // N_BANDS
        band_shape = (c, self.band_rows, w)
        self.bands = []
        feat = None
        for b in range(N_BANDS):
            layers, feat = _conv_stack_layers(band_shape, rng, prefix=f"band{b}_conv")
            layers.append((f"band{b}_flat", Flatten()))
            if band_heads:
                layers += _classifier_layers(feat, rng, prefix=f"band{b}_fc")
            self.bands.append(Sequential(layers))
        global_in = N_BANDS if band_heads else N_BANDS * feat
        self.global_net = Sequential(_classifier_layers(global_in, rng, prefix="global_fc"))
        self._band_widths = None

    def forward(self, x, ctx):
        outs = []
        for b, net in enumerate(self.bands):
            band = x[:, :, b * self.band_rows : (b + 1) * self.band_rows, :]
            outs.append(net.forward(band, ctx))
        self._band_widths = [o.shape[1] for o in outs]
        concat = np.concatenate(outs, axis=1)
        g = self.global_net.forward(concat, ctx)
        if self.band_heads:
            return np.concatenate(outs + [g], axis=1)  # (N, 5)
        return g  # (N, 1)

    def backward(self, dout):
        n = dout.shape[0]
        if self.band_heads:
            dglobal = dout[:, N_BANDS:]
            dconcat = self.global_net.backward(dglobal) + dout[:, :N_BANDS]
        else:
            dconcat = self.global_net.backward(dout)
        dx = None
        offset = 0
        for b, net in enumerate(self.bands):
            width = self._band_widths[b]
            dband = net.backward(dconcat[:, offset : offset + width])
            offset += width
            if dx is None:
                c, _, w = dband.shape[1], dband.shape[2], dband.shape[3]
                dx = np.zeros((n, c, self.band_rows * N_BANDS, w), dtype=np.float64)
            dx[:, :, b * self.band_rows : (b + 1) * self.band_rows, :] = dband
        return dx

    def params(self):
        out = []
        for b, net in enumerate(self.bands):
            out += net.params()
        out += self.global_net.params()
        return out

    def buffers(self):
        out = []
        for net in self.bands:
            out += net.buffers()
        out += self.global_net.buffers()
        return out


class Model:
    """An architecture tag plus its network, with training conveniences."""

    def __init__(self, arch: str, net: Layer, input_shape, n_outputs: int):
        self.arch = arch
        self.net = net
        self.input_shape = tuple(input_shape)
        self.n_outputs = n_outputs

    def forward(self, x: np.ndarray, train: bool = False,
                rng: RandomStream | None = None) -> np.ndarray:
        """Outputs of shape (N, n_outputs); probabilities in (0, 1)."""
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected (N, {self.input_shape}), got {x.shape}")
        return self.net.forward(x, Context(train=train, rng=rng))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.net.backward(dout)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode probability used for scoring (SSN: the global head)."""
        out = self.forward(x, train=False)
        return out[:, -1]

    def named_params(self):
        return self.net.params()

    def named_buffers(self):
        return self.net.buffers()

    def param_count(self) -> int:
        return sum(p.size for _, p in self.named_params())

    def zero_grads(self):
        for _, p in self.named_params():
            p.grad[...] = 0.0

    def layer_table(self):
        """(name, shape, count) per parameter tensor, in graph order."""
        return [(name, p.shape, p.size) for name, p in self.named_params()]


def build_model(arch: str, input_shape=DEFAULT_INPUT_SHAPE, init_seed: int = 0) -> Model:
    """Construct one of the four architectures with seeded initialization."""
    arch = arch.lower()
    if arch not in ARCHITECTURES:
        raise UnknownArchitectureError(
            f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}"
        )
    rng = RandomStream(init_seed, ("init", arch))
    if arch in ("cc", "rcc"):
        layers, feat = _conv_stack_layers(input_shape, rng, residual=(arch == "rcc"))
        layers.append(("flat", Flatten()))
        layers += _classifier_layers(feat, rng)
        return Model(arch, Sequential(layers), input_shape, n_outputs=1)
    if arch == "ssn":
        return Model(arch, BandSplitNet(input_shape, rng, band_heads=True),
                     input_shape, n_outputs=N_BANDS + 1)
    return Model(arch, BandSplitNet(input_shape, rng, band_heads=False),
                 input_shape, n_outputs=1)

"""Conditioning networks for the flow: spatial graph convolutions over the
skeleton, temporal convolutions over the history window, and the recurrent
per-step conditioner that maps (current pose half, pooled history, controls)
to the coupling scale/offset.

Array layouts:
  history features           (B, M, C, T)
  encoder internal           (B, T, M, channels)
  per-frame pose slices      (B, M, channels)

All layers run on plain ndarrays or on numcore Vars; parameters are float64.
"""

from __future__ import annotations

import numpy as np

from . import numcore as nc

SCALE_SHIFT = 2.0
SCALE_FLOOR = 1e-3

ABLATIONS = ("stmg", "smg", "mg")


def bounded_scale(raw):
    """Map raw conditioner output to a positive coupling scale.

    sigmoid(raw + 2) + 1e-3: zero raw gives ~0.8818, and the scale stays in
    (1e-3, 1 + 1e-3) so the inverse pass never divides by ~0.
    """
    return nc.sigmoid(nc.add(raw, SCALE_SHIFT)) + SCALE_FLOOR


def identity_scale_raw():
    """Raw value at which bounded_scale returns exactly 1."""
    return float(np.log(999.0) - SCALE_SHIFT)


class Linear(nc.Module):
    param_attrs = ("weight", "bias")

    def __init__(self, in_dim, out_dim, rng, zero_init=False):
        if zero_init:
            self.weight = np.zeros((in_dim, out_dim))
            self.bias = np.zeros(out_dim)
        else:
            k = 1.0 / np.sqrt(in_dim)
            self.weight = rng.uniform(-k, k, size=(in_dim, out_dim))
            self.bias = np.zeros(out_dim)

    def __call__(self, x):
        return nc.matmul(x, self.weight) + self.bias


class SpatialGraphConv(nc.Module):
    """y_i = sum_k A_k[i] x W_k + bias, with A_k the partition matrices."""

    param_attrs = ("weight", "bias")

    def __init__(self, adjacency, in_channels, out_channels, rng):
        self.adjacency = adjacency  # PartitionedAdjacency, frozen
        d = adjacency.kernel_scale
        scale = 1.0 / np.sqrt(in_channels * d)
        self.weight = rng.normal(0.0, scale, size=(d, in_channels, out_channels))
        self.bias = np.zeros(out_channels)

    def __call__(self, x):
        # x: (..., M, in_channels)
        out = None
        for k in range(self.adjacency.kernel_scale):
            mixed = nc.matmul(self.adjacency.matrices[k], x)
            term = nc.matmul(mixed, self.weight[k])
            out = term if out is None else out + term
        return out + self.bias


class TemporalConv(nc.Module):
    """1-d convolution along the time axis of (B, T, M, C) features.

    Symmetric (edge-reflecting) padding keeps the output length equal to the
    input length.  Requires T >= (kernel - 1) // 2.
    """

    param_attrs = ("kernel", "bias")

    def __init__(self, channels_in, channels_out, kernel_size, rng):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ValueError(f"temporal kernel must be odd, got {kernel_size}")
        self.kernel_size = kernel_size
        scale = 1.0 / np.sqrt(channels_in * kernel_size)
        self.kernel = rng.normal(0.0, scale, size=(kernel_size, channels_in, channels_out))
        self.bias = np.zeros(channels_out)

    def __call__(self, x):
        t = nc._data(x).shape[1]
        pad = (self.kernel_size - 1) // 2
        if pad > 0:
            if t < pad:
                raise ValueError(f"history of {t} frames too short for kernel {self.kernel_size}")
            left = nc.flip(x[:, :pad], axis=1)
            right = nc.flip(x[:, t - pad:], axis=1)
            xp = nc.concat([left, x, right], axis=1)
        else:
            xp = x
        out = None
        for tap in range(self.kernel_size):
            term = nc.matmul(xp[:, tap:tap + t], self.kernel[tap])
            out = term if out is None else out + term
        return out + self.bias


class GraphTemporalBlock(nc.Module):
    """Spatial graph conv -> (optional) temporal conv -> residual -> relu."""

    param_attrs = ()
    child_attrs = ("sgcn", "tcn", "res")

    def __init__(self, adjacency, channels_in, channels_out, temporal_kernel, rng, use_temporal=True):
        self.sgcn = SpatialGraphConv(adjacency, channels_in, channels_out, rng)
        self.tcn = TemporalConv(channels_out, channels_out, temporal_kernel, rng) if use_temporal else None
        self.res = Linear(channels_in, channels_out, rng) if channels_in != channels_out else None

    def __call__(self, x):
        h = nc.relu(self.sgcn(x))
        if self.tcn is not None:
            h = self.tcn(h)
        shortcut = self.res(x) if self.res is not None else x
        return nc.relu(h + shortcut)


class HistoryEncoder(nc.Module):
    """Pools the pose history into a fixed-width conditioning vector p_t.

    Variants: "stmg" runs graph + temporal convolutions, "smg" graph only,
    "mg" is a parameter-free flatten of the raw history.
    """

    param_attrs = ()
    child_attrs = ("blocks",)

    def __init__(self, variant, adjacency, markers, channels, history_len,
                 block_channels, temporal_kernel, rng):
        if variant not in ABLATIONS:
            raise ValueError(f"unknown ablation variant '{variant}'")
        self.variant = variant
        self.markers = markers
        self.channels = channels
        self.history_len = history_len
        if variant == "mg":
            self.blocks = None
            self.width = markers * channels * history_len
        else:
            use_t = variant == "stmg"
            blocks = []
            cin = channels
            for cout in block_channels:
                blocks.append(GraphTemporalBlock(adjacency, cin, cout, temporal_kernel, rng, use_temporal=use_t))
                cin = cout
            self.blocks = blocks
            self.width = block_channels[-1]

    def __call__(self, history):
        # history: (B, M, C, T)
        if self.variant == "mg":
            b = nc._data(history).shape[0]
            return nc.reshape(history, (b, self.width))
        x = nc.transpose(history, (0, 3, 1, 2))  # (B, T, M, C)
        for block in self.blocks:
            x = block(x)
        return nc.vmean(x, axis=(1, 2))  # (B, width)


class LSTMLayer(nc.Module):
    param_attrs = ("w_ih", "w_hh", "bias")

    def __init__(self, in_dim, hidden, rng):
        self.hidden = hidden
        k = 1.0 / np.sqrt(hidden)
        self.w_ih = rng.uniform(-k, k, size=(in_dim, 4 * hidden))
        self.w_hh = rng.uniform(-k, k, size=(hidden, 4 * hidden))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget gate starts open
        self.bias = bias

    def __call__(self, x, h, c):
        gates = nc.matmul(x, self.w_ih) + nc.matmul(h, self.w_hh) + self.bias
        n = self.hidden
        i = nc.sigmoid(gates[:, :n])
        f = nc.sigmoid(gates[:, n:2 * n])
        g = nc.tanh(gates[:, 2 * n:3 * n])
        o = nc.sigmoid(gates[:, 3 * n:])
        c_new = f * c + i * g
        h_new = o * nc.tanh(c_new)
        return h_new, c_new


class LSTMStack(nc.Module):
    param_attrs = ()
    child_attrs = ("layers",)

    def __init__(self, in_dim, hidden, num_layers, rng):
        self.hidden = hidden
        layers = []
        d = in_dim
        for _ in range(num_layers):
            layers.append(LSTMLayer(d, hidden, rng))
            d = hidden
        self.layers = layers

    def initial_state(self, batch):
        return [(np.zeros((batch, self.hidden)), np.zeros((batch, self.hidden)))
                for _ in self.layers]

    def __call__(self, x, state):
        new_state = []
        h = x
        for layer, (h_prev, c_prev) in zip(self.layers, state):
            h, c = layer(h, h_prev, c_prev)
            new_state.append((h, c))
        return h, new_state


class CouplingConditioner(nc.Module):
    """Produces the coupling (s, b) for one flow step.

    Input is the untransformed pose half, the pooled history vector and the
    flattened control window; a per-step LSTM carries state across frames.
    The output projection is zero-initialized so training starts near identity.
    """

    param_attrs = ()
    child_attrs = ("sgcn", "lstm", "out")

    def __init__(self, variant, adjacency, markers, in_channels, out_channels,
                 graph_channels, pooled_width, control_width, hidden, num_layers, rng):
        self.variant = variant
        self.markers = markers
        self.out_channels = out_channels
        if variant == "mg":
            self.sgcn = None
            pose_width = markers * in_channels
        else:
            self.sgcn = SpatialGraphConv(adjacency, in_channels, graph_channels, rng)
            pose_width = markers * graph_channels
        self.lstm = LSTMStack(pose_width + pooled_width + control_width, hidden, num_layers, rng)
        self.out = Linear(hidden, 2 * markers * out_channels, rng, zero_init=True)

    def initial_state(self, batch):
        return self.lstm.initial_state(batch)

    def __call__(self, pose_half, pooled, controls_flat, state):
        b = nc._data(pose_half).shape[0]
        if self.sgcn is None:
            g = nc.reshape(pose_half, (b, -1))
        else:
            g = nc.reshape(nc.relu(self.sgcn(pose_half)), (b, -1))
        u = nc.concat([g, pooled, controls_flat], axis=1)
        h, new_state = self.lstm(u, state)
        raw = nc.reshape(self.out(h), (b, 2, self.markers, self.out_channels))
        s = bounded_scale(raw[:, 0])
        offset = raw[:, 1]
        return s, offset, new_state

"""Per-frame normalizing flow over skeleton poses.

Each frame (M markers x C channels) is mapped to a standard-normal latent by
a stack of flow steps; every step is actnorm -> invertible channel mix ->
affine coupling, with the coupling's scale/offset produced by the recurrent
graph conditioner.  The sequence model is autoregressive: the same frame-level
bijection is applied at every timestep, conditioned on the pose history and
the control track, with per-step LSTM state carried along.

Conventions:
  frames       (B, M, C) raw cm, root-relative
  history      (B, M, C, T_h)
  controls     (B, 3, T_h + 1), rows (forward, sideways, rotation) per frame
  states       list over flow steps of LSTM state
Unbatched (M, C) inputs are accepted and produce unbatched outputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from . import __version__
from . import numcore as nc
from . import skeleton as sk
from .conditioning import CouplingConditioner, HistoryEncoder, ABLATIONS

LOG2PI = float(np.log(2.0 * np.pi))
CHECKPOINT_MAGIC = b"SKFLOW01"
MIX_LOGDET_FLOOR = float(np.log(1e-12))

DEFAULT_SCHEDULE = (3,) * 10 + (5,) * 4 + (7,) * 2


class ZeroScaleError(ArithmeticError):
    """Actnorm scale has a zero entry; the step is not invertible."""


class DegenerateBatchError(ValueError):
    """Initialization batch has (near-)zero variance in some channel."""


@dataclass
class ModelConfig:
    markers: int = 21
    channels: int = 3
    history: int = 10
    flow_steps: int = 16
    kernel_schedule: tuple = DEFAULT_SCHEDULE
    encoder_kernel_scale: int = 3
    lstm_hidden: int = 512
    lstm_layers: int = 2
    graph_channels: int = 16
    encoder_channels: tuple = (32, 64)
    temporal_kernel: int = 9
    ablation: str = "stmg"

    @property
    def c1(self):
        """Channels left untransformed by the coupling (conditioner input)."""
        return (self.channels + 1) // 2

    @property
    def c2(self):
        return self.channels - self.c1

    def validate(self):
        if self.markers < 1 or self.channels < 2 or self.history < 1:
            raise ValueError("need markers >= 1, channels >= 2, history >= 1")
        if self.flow_steps < 1:
            raise ValueError("need at least one flow step")
        if len(self.kernel_schedule) != self.flow_steps:
            raise ValueError(
                f"kernel schedule length {len(self.kernel_schedule)} != flow steps {self.flow_steps}")
        for d in tuple(self.kernel_schedule) + (self.encoder_kernel_scale,):
            if d < 3 or d % 2 == 0:
                raise ValueError(f"kernel scales must be odd >= 3, got {d}")
        if self.temporal_kernel % 2 == 0 or self.temporal_kernel < 1:
            raise ValueError("temporal kernel must be odd")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.lstm_hidden < 1 or self.lstm_layers < 1:
            raise ValueError("bad LSTM shape")
        return self

    def to_dict(self):
        d = asdict(self)
        d["kernel_schedule"] = list(self.kernel_schedule)
        d["encoder_channels"] = list(self.encoder_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["kernel_schedule"] = tuple(d["kernel_schedule"])
        d["encoder_channels"] = tuple(d["encoder_channels"])
        return cls(**d).validate()


def desk_config(markers=21, ablation="stmg"):
    """Small configuration sized for minutes-scale CPU training runs."""
    return ModelConfig(
        markers=markers,
        flow_steps=6,
        kernel_schedule=(3, 3, 3, 5, 5, 7),
        lstm_hidden=48,
        lstm_layers=2,
        graph_channels=8,
        encoder_channels=(12, 24),
        ablation=ablation,
    ).validate()


class ActNorm(nc.Module):
    """Per-(marker, channel) affine y = (x + bias) * scale with data init."""

    param_attrs = ("scale", "bias")

    def __init__(self, markers, channels):
        self.scale = np.ones((markers, channels))
        self.bias = np.zeros((markers, channels))

    def logdet(self):
        sd = nc._data(self.scale)
        if np.any(sd == 0.0):
            raise ZeroScaleError("actnorm scale has zero entries")
        return nc.vsum(nc.log(nc.absolute(self.scale)))

    def forward(self, x):
        return (x + self.bias) * self.scale, self.logdet()

    def inverse(self, y):
        sd = nc._data(self.scale)
        if np.any(sd == 0.0):
            raise ZeroScaleError("actnorm scale has zero entries")
        return nc.div(y, self.scale) - self.bias

    def init_from_batch(self, x):
        """Set bias/scale so the batch maps to zero mean, unit std per cell."""
        x = nc._data(x)
        if x.ndim != 3 or x.shape[0] < 2:
            raise DegenerateBatchError("need a (N, M, C) batch with N >= 2")
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        if np.any(std < 1e-8):
            flat = int(np.argmin(std))
            raise DegenerateBatchError(
                f"batch std ~ 0 at (marker, channel) {np.unravel_index(flat, std.shape)}")
        self.bias = -mean
        self.scale = 1.0 / std


class InvertibleMix(nc.Module):
    """Invertible C x C mixing matrix applied across channels of each marker."""

    param_attrs = ("weight",)

    def __init__(self, channels, rng=None, identity=False):
        if identity or rng is None:
            self.weight = np.eye(channels)
        else:
            q, r = np.linalg.qr(rng.normal(size=(channels, channels)))
            q = q * np.sign(np.diag(r))  # fix reflection ambiguity
            self.weight = q

    def _logabsdet(self):
        lad = nc.logabsdet(self.weight)
        if float(nc._data(lad)) < MIX_LOGDET_FLOOR:
            raise nc.SingularMatrixError("channel mix matrix is near singular")
        return lad

    def forward(self, x, markers):
        return nc.matmul(x, self.weight), mul_scalar(self._logabsdet(), float(markers))

    def inverse(self, y):
        self._logabsdet()
        return y @ np.linalg.inv(nc._data(self.weight))


def mul_scalar(x, k):
    return nc.mul(x, k)


class FlowStep(nc.Module):
    """actnorm -> channel mix -> affine coupling on the channel split."""

    param_attrs = ()
    child_attrs = ("actnorm", "mix", "conditioner")

    def __init__(self, config, adjacency, pooled_width, rng):
        m, c = config.markers, config.channels
        self.c1 = config.c1
        self.markers = m
        self.actnorm = ActNorm(m, c)
        self.mix = InvertibleMix(c, rng)
        self.conditioner = CouplingConditioner(
            config.ablation, adjacency, m, self.c1, config.c2,
            config.graph_channels, pooled_width, 3 * (config.history + 1),
            config.lstm_hidden, config.lstm_layers, rng)

    def initial_state(self, batch):
        return self.conditioner.initial_state(batch)

    def forward(self, x, pooled, controls_flat, state):
        y, ld_act = self.actnorm.forward(x)
        z, ld_mix = self.mix.forward(y, self.markers)
        xb1 = z[:, :, :self.c1]
        xb2 = z[:, :, self.c1:]
        s, offset, new_state = self.conditioner(xb1, pooled, controls_flat, state)
        h2 = (xb2 + offset) * s
        ld_couple = nc.vsum(nc.log(s), axis=(1, 2))
        out = nc.concat([xb1, h2], axis=2)
        logdet = nc.add(nc.add(ld_act, ld_mix), ld_couple)
        return out, logdet, new_state

    def inverse(self, h, pooled, controls_flat, state):
        hb1 = h[:, :, :self.c1]
        hb2 = h[:, :, self.c1:]
        s, offset, new_state = self.conditioner(hb1, pooled, controls_flat, state)
        xb2 = nc.div(hb2, s) - offset
        z = nc.concat([hb1, xb2], axis=2)
        y = self.mix.inverse(z)
        x = self.actnorm.inverse(y)
        ld_couple = nc.vsum(nc.log(s), axis=(1, 2))
        ld_act = self.actnorm.logdet()
        ld_mix = mul_scalar(self.mix._logabsdet(), float(self.markers))
        logdet = nc.neg(nc.add(nc.add(ld_act, ld_mix), ld_couple))
        return x, logdet, new_state


class FlowModel(nc.Module):
    """The full frame-level bijection plus shared history encoder."""

    param_attrs = ()
    child_attrs = ("encoder", "steps")

    def __init__(self, config, skeleton_spec, rng):
        config.validate()
        if skeleton_spec.marker_count != config.markers:
            raise ValueError(
                f"skeleton has {skeleton_spec.marker_count} markers, config says {config.markers}")
        self.config = config
        self.skeleton = skeleton_spec
        partitions = {}
        for d in set(config.kernel_schedule) | {config.encoder_kernel_scale}:
            partitions[d] = sk.partition(skeleton_spec, d)
        self.partitions = partitions
        self.encoder = HistoryEncoder(
            config.ablation, partitions[config.encoder_kernel_scale],
            config.markers, config.channels, config.history,
            config.encoder_channels, config.temporal_kernel, rng)
        self.steps = [FlowStep(config, partitions[d], self.encoder.width, rng)
                      for d in config.kernel_schedule]
        self.data_mean = np.zeros((config.markers, config.channels))
        self.data_std = np.ones((config.markers, config.channels))

    # -- construction -------------------------------------------------------

    @classmethod
    def create(cls, config, skeleton_spec, seed=0, init="default"):
        rng = nc.make_rng(seed)
        model = cls(config, skeleton_spec, rng)
        if init == "identity":
            model._make_identity()
        elif init == "random":
            model._randomize_heads(rng)
        elif init != "default":
            raise ValueError(f"unknown init mode '{init}'")
        return model

    def _make_identity(self):
        from .conditioning import identity_scale_raw
        half = self.config.markers * self.config.c2
        for step in self.steps:
            step.actnorm.scale = np.ones_like(step.actnorm.scale)
            step.actnorm.bias = np.zeros_like(step.actnorm.bias)
            step.mix.weight = np.eye(self.config.channels)
            step.conditioner.out.weight = np.zeros_like(step.conditioner.out.weight)
            bias = np.zeros_like(step.conditioner.out.bias)
            bias[:half] = identity_scale_raw()
            step.conditioner.out.bias = bias

    def _randomize_heads(self, rng):
        """Make every parameter group active (for gradient checking)."""
        for step in self.steps:
            step.actnorm.scale = np.exp(rng.normal(0.0, 0.2, size=step.actnorm.scale.shape))
            step.actnorm.bias = rng.normal(0.0, 0.2, size=step.actnorm.bias.shape)
            step.conditioner.out.weight = rng.normal(0.0, 0.05, size=step.conditioner.out.weight.shape)
            step.conditioner.out.bias = rng.normal(0.0, 0.05, size=step.conditioner.out.bias.shape)

    # -- plumbing -------------------------------------------------------------

    def initial_state(self, batch):
        return [step.initial_state(batch) for step in self.steps]

    def set_standardization(self, mean, std):
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        shape = (self.config.markers, self.config.channels)
        if mean.shape != shape or std.shape != shape:
            raise ValueError(f"standardization stats must have shape {shape}")
        if np.any(std <= 0):
            raise ValueError("standardization std must be positive")
        self.data_mean = mean
        self.data_std = std

    def standardize(self, x):
        return nc.div(nc.sub(x, self.data_mean), self.data_std)

    def destandardize(self, x):
        return nc.add(nc.mul(x, self.data_std), self.data_mean)

    def _std_logdet(self):
        return float(-np.sum(np.log(self.data_std)))

    @staticmethod
    def _batched(x, nd):
        x_is_var = isinstance(x, nc.Var)
        d = nc._data(x)
        if d.ndim == nd:
            return x, True
        if d.ndim == nd - 1:
            return nc.reshape(x, (1,) + d.shape) if x_is_var else d[None], False
        raise ValueError(f"expected {nd} or {nd - 1} dims, got {d.ndim}")

    def _prep_history(self, history, history_mask):
        history, _ = self._batched(history, 4)
        # stats are per (marker, channel); history carries a trailing time axis
        hist_std = nc.div(nc.sub(history, self.data_mean[:, :, None]),
                          self.data_std[:, :, None])
        if history_mask is not None:
            mask = np.asarray(history_mask, dtype=np.float64)
            if mask.ndim == 2:
                mask = mask[None]
            hist_std = nc.mul(hist_std, mask[:, :, None, :])
        return hist_std

    # -- the bijection ---------------------------------------------------------

    def transform_frame(self, x, history, controls, states=None, history_mask=None):
        """Full data-to-latent map for one frame: returns (z, logdet, states').

        `logdet` is per-sample and includes the standardization term, so
        log p(x) = log N(z) + logdet.
        """
        x_b, batched = self._batched(x, 3)
        hist_std = self._prep_history(history, history_mask)
        controls_b, _ = self._batched(controls, 3)
        b = nc._data(x_b).shape[0]
        if states is None:
            states = self.initial_state(b)
        pooled = self.encoder(hist_std)
        ctrl_flat = nc.reshape(controls_b, (b, -1))
        h = self.standardize(x_b)
        logdet = np.zeros(b)
        new_states = []
        for step, state in zip(self.steps, states):
            h, ld, st = step.forward(h, pooled, ctrl_flat, state)
            logdet = nc.add(logdet, ld)
            new_states.append(st)
        logdet = nc.add(logdet, self._std_logdet())
        if not batched:
            h = h[0] if isinstance(h, nc.Var) else nc._data(h)[0]
            logdet = logdet[0] if isinstance(logdet, nc.Var) else nc._data(logdet)[0]
        return h, logdet, new_states

    def inverse_transform_frame(self, z, history, controls, states=None, history_mask=None):
        """Latent-to-data map; exact inverse of transform_frame."""
        z_b, batched = self._batched(z, 3)
        hist_std = self._prep_history(history, history_mask)
        controls_b, _ = self._batched(controls, 3)
        b = nc._data(z_b).shape[0]
        if states is None:
            states = self.initial_state(b)
        pooled = self.encoder(hist_std)
        ctrl_flat = nc.reshape(controls_b, (b, -1))
        h = z_b
        new_states = [None] * len(self.steps)
        for k in range(len(self.steps) - 1, -1, -1):
            h, _, st = self.steps[k].inverse(h, pooled, ctrl_flat, states[k])
            new_states[k] = st
        x = self.destandardize(h)
        if not batched:
            x = x[0] if isinstance(x, nc.Var) else nc._data(x)[0]
        return x, new_states

    def log_likelihood(self, x, history, controls, states=None, history_mask=None):
        """Exact log density of one frame given history/controls.

        Returns (logp, new_states); logp is per-sample (B,) for batched input,
        a scalar otherwise.
        """
        z, logdet, new_states = self.transform_frame(x, history, controls, states, history_mask)
        nd = nc._data(z).ndim
        if nd == 3:
            zsq = nc.vsum(nc.mul(z, z), axis=(1, 2))
        else:
            zsq = nc.vsum(nc.mul(z, z))
        dim = self.config.markers * self.config.channels
        base = nc.sub(nc.mul(zsq, -0.5), 0.5 * dim * LOG2PI)
        logp = nc.add(base, logdet)
        if not isinstance(logp, nc.Var) and not np.all(np.isfinite(nc._data(logp))):
            raise nc.NonFiniteError("log-likelihood is not finite")
        return logp, new_states

    def sample_frame(self, z, history, controls, states=None, temperature=1.0, history_mask=None):
        """Draw one frame from the conditional density: x = f^{-1}(tau * z)."""
        scaled = nc.mul(z, float(temperature))
        x, new_states = self.inverse_transform_frame(scaled, history, controls, states, history_mask)
        if not isinstance(x, nc.Var) and not np.all(np.isfinite(nc._data(x))):
            raise nc.NonFiniteError("sampled frame is not finite")
        return x, new_states

    # -- data-dependent init ----------------------------------------------------

    def init_actnorm(self, frames, histories, controls, history_mask=None):
        """Initialize every step's actnorm from one batch, sequentially.

        frames (N, M, C), histories (N, M, C, T_h), controls (N, 3, T_h+1),
        all raw.  Each step's actnorm maps its own input batch to zero mean
        and unit std per (marker, channel).
        """
        frames = nc._data(frames)
        n = frames.shape[0]
        hist_std = self._prep_history(histories, history_mask)
        pooled = self.encoder(nc._data(hist_std))
        ctrl_flat = nc._data(controls).reshape(n, -1)
        states = self.initial_state(n)
        h = nc._data(self.standardize(frames))
        for step, state in zip(self.steps, states):
            step.actnorm.init_from_batch(h)
            h, _, _ = step.forward(h, pooled, ctrl_flat, state)
        return self

    # -- bookkeeping -------------------------------------------------------------

    def census(self):
        """Parameter counts by component group."""
        groups = {"graph": 0, "lstm": 0, "projection": 0, "actnorm": 0, "mix": 0}
        total = 0
        for path, arr in self.named_parameters():
            n = nc._data(arr).size
            total += n
            parts = path.split(".")
            if "sgcn" in parts or "tcn" in parts or "res" in parts or "blocks" in parts:
                groups["graph"] += n
            elif "lstm" in parts:
                groups["lstm"] += n
            elif "out" in parts:
                groups["projection"] += n
            elif "actnorm" in parts:
                groups["actnorm"] += n
            elif "mix" in parts:
                groups["mix"] += n
            else:  # pragma: no cover - every param should be classified
                raise AssertionError(f"unclassified parameter {path}")
        groups["total"] = total
        return groups


# -- checkpoints ------------------------------------------------------------------


def save_checkpoint(model, path, meta=None):
    """Deterministic binary checkpoint: header JSON + raw float64 blobs.

    No timestamps or environment data; identical models produce identical
    bytes.
    """
    entries = [(name, nc._data(arr)) for name, arr in model.named_parameters()]
    entries.append(("buffers.data_mean", model.data_mean))
    entries.append(("buffers.data_std", model.data_std))
    header = {
        "format_version": 1,
        "package_version": __version__,
        "config": model.config.to_dict(),
        "skeleton_text": sk.to_config_text(model.skeleton),
        "params": [[name, list(arr.shape)] for name, arr in entries],
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class CheckpointFormatError(ValueError):
    """File is not a recognizable model checkpoint."""


def load_checkpoint(path):
    """Load a checkpoint written by save_checkpoint; returns (model, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"{path}: corrupt header") from exc
        if header.get("format_version") != 1:
            raise CheckpointFormatError(f"{path}: unsupported format {header.get('format_version')}")
        config = ModelConfig.from_dict(header["config"])
        spec = sk.build_skeleton(header["skeleton_text"])
        model = FlowModel.create(config, spec, seed=0, init="default")
        values = {}
        for name, shape in header["params"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointFormatError(f"{path}: truncated blob for {name}")
            values[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    model_params = dict(model.named_parameters())
    for name, arr in values.items():
        if name == "buffers.data_mean":
            model.data_mean = arr
        elif name == "buffers.data_std":
            model.data_std = arr
        elif name in model_params:
            if model_params[name].shape != arr.shape:
                raise CheckpointFormatError(f"{path}: shape mismatch for {name}")
            model.set_parameter(name, arr)
        else:
            raise CheckpointFormatError(f"{path}: unknown parameter {name}")
    missing = set(model_params) - set(values)
    if missing:
        raise CheckpointFormatError(f"{path}: missing parameters {sorted(missing)[:3]}")
    return model, header["meta"]

"""Autoregressive rollout and time-reversal reconstruction of masked frames.

The flow transforms one frame at a time, so rolling out a sequence means:
draw a latent frame, invert the flow under the current history window and
recurrent states, append the result to the history, repeat.  Reconstruction
of a partially observed window runs one rollout forward from the masked
window, reverses the generated future in time, rolls out again across the
reversed window, and keeps generated values only where the input was
missing.  Observed cells pass through bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc

# Marker indices used by the mask presets when the skeleton config does not
# override them through named groups.
RIGHT_ARM_MARKERS = (18, 19, 20)
LEFT_LEG_MARKERS = (2, 3, 4)

MASK_PRESETS = ("none", "right_arm", "left_leg", "right_arm_left_leg", "random4")


class NonFiniteFrameError(ArithmeticError):
    """A rollout produced a non-finite frame; the message carries the step."""


class MaskPresetError(ValueError):
    """Unknown mask preset name."""


class AllMarkersMissingError(ValueError):
    """Some history frame has every marker masked out."""


@dataclass
class GenerationRequest:
    """One rollout job.

    history: (M, C, T_h) seed window, oldest frame first.
    controls: (3, >= T_h + horizon) track covering the seed window and every
        generated frame; column t holds the per-frame forward, sideways and
        rotational velocities at frame t.
    horizon: number of frames to generate, >= 1.
    temperature: latent scale; 0 gives the deterministic mode rollout.
    seed: int or numpy SeedSequence for the latent draws.
    history_mask: optional (M, T_h) binary matrix, 1 = observed.
    """

    history: object
    controls: object
    horizon: int
    temperature: float = 1.0
    seed: object = 0
    history_mask: object = None


def _check_mask(mask, markers, history):
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (markers, history):
        raise ValueError(f"mask must be ({markers}, {history}), got {mask.shape}")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    if np.any(mask.sum(axis=0) < 1.0):
        frame = int(np.argmin(mask.sum(axis=0)))
        raise AllMarkersMissingError(f"history frame {frame} has no observed markers")
    return mask


def generate(model, request):
    """Roll the model forward and return the generated (M, C, T) frames.

    The conditioning history at step k is exactly the last T_h frames of
    seed-window-plus-output; recurrent states advance once per frame.
    """
    cfg = model.config
    markers, channels, t_h = cfg.markers, cfg.channels, cfg.history
    history = np.array(nc._data(request.history), dtype=np.float64)
    if history.shape != (markers, channels, t_h):
        raise ValueError(
            f"history must be ({markers}, {channels}, {t_h}), got {history.shape}")
    controls = np.asarray(nc._data(request.controls), dtype=np.float64)
    horizon = int(request.horizon)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if controls.ndim != 2 or controls.shape[0] != 3 or controls.shape[1] < t_h + horizon:
        raise ValueError(
            f"control track must cover history plus horizon: need (3, >= {t_h + horizon}), "
            f"got {controls.shape}")
    if request.history_mask is None:
        rolling_mask = np.ones((markers, t_h))
    else:
        rolling_mask = _check_mask(request.history_mask, markers, t_h)

    rng = np.random.default_rng(request.seed)
    states = model.initial_state(1)
    rolling = history.copy()
    frames = []
    for k in range(horizon):
        t = t_h + k
        window = controls[:, t - t_h:t + 1]
        z = rng.standard_normal((markers, channels))
        try:
            x, states = model.sample_frame(
                z, rolling, window, states,
                temperature=float(request.temperature), history_mask=rolling_mask)
        except nc.NonFiniteError as exc:
            raise NonFiniteFrameError(f"non-finite frame at rollout step {k}") from exc
        x = np.asarray(nc._data(x), dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NonFiniteFrameError(f"non-finite frame at rollout step {k}")
        frames.append(x)
        rolling = np.concatenate([rolling[:, :, 1:], x[:, :, None]], axis=2)
        rolling_mask = np.concatenate(
            [rolling_mask[:, 1:], np.ones((markers, 1))], axis=1)
    return np.stack(frames, axis=2)


def reverse_sequence(frames, controls):
    """Reverse a clip in time.

    Frame order flips; the control track flips and every channel negates,
    because forward, sideways and rotational controls are per-frame
    velocities.  Applying the operation twice returns the input.
    """
    frames = np.asarray(frames, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim != 2 or controls.shape[0] != 3:
        raise ValueError(f"controls must be (3, T), got {controls.shape}")
    if frames.shape[-1] != controls.shape[-1]:
        raise ValueError(
            f"frames cover {frames.shape[-1]} steps but controls cover {controls.shape[-1]}")
    return frames[..., ::-1].copy(), (-controls[:, ::-1]).copy()


def _preset_group(skeleton_spec, name, default):
    if skeleton_spec is not None and name in skeleton_spec.groups:
        return tuple(skeleton_spec.groups[name])
    return default


def mask_preset(name, markers=21, history=10, skeleton_spec=None, seed=0):
    """Build an (M, T_h) observation mask for a named corruption setting.

    right_arm and left_leg zero whole marker rows for the full window;
    right_arm_left_leg is their union; random4 zeroes 4 distinct markers
    drawn from the given seed; none observes everything.  The marker sets
    come from skeleton groups of the same names when present.
    """
    mask = np.ones((markers, history))
    if name == "none":
        return mask
    if name == "right_arm":
        rows = _preset_group(skeleton_spec, "right_arm", RIGHT_ARM_MARKERS)
    elif name == "left_leg":
        rows = _preset_group(skeleton_spec, "left_leg", LEFT_LEG_MARKERS)
    elif name == "right_arm_left_leg":
        rows = (_preset_group(skeleton_spec, "right_arm", RIGHT_ARM_MARKERS)
                + _preset_group(skeleton_spec, "left_leg", LEFT_LEG_MARKERS))
    elif name == "random4":
        rng = np.random.default_rng(seed)
        rows = tuple(int(i) for i in rng.choice(markers, size=4, replace=False))
    else:
        raise MaskPresetError(
            f"unknown mask preset '{name}'; expected one of {MASK_PRESETS}")
    for row in rows:
        if not 0 <= row < markers:
            raise MaskPresetError(
                f"preset '{name}' marker {row} out of range for {markers} markers")
        mask[row, :] = 0.0
    return mask


@dataclass
class ReconstructionResult:
    """Completed past window, generated future, and per-cell provenance.

    observed is an (M, T_h) boolean matrix; True cells in `past` are
    bit-identical to the input history, False cells were generated.
    """

    past: np.ndarray
    future: np.ndarray
    observed: np.ndarray


def reconstruct(model, history, mask, controls, horizon=None, temperature=0.0, seed=0):
    """Fill masked markers via forward rollout plus time-reversed rollout.

    Step 1 generates `horizon` future frames from the masked window.  Step 2
    reverses the generated future together with its controls, rolls the
    model across the reversed window (recurrent states restart from zero,
    since states from step 1 are not time-symmetric), un-reverses the
    result, and writes it into the masked cells only.
    """
    cfg = model.config
    markers, channels, t_h = cfg.markers, cfg.channels, cfg.history
    history = np.array(nc._data(history), dtype=np.float64)
    if history.shape != (markers, channels, t_h):
        raise ValueError(
            f"history must be ({markers}, {channels}, {t_h}), got {history.shape}")
    mask = _check_mask(mask, markers, t_h)
    horizon = t_h if horizon is None else int(horizon)
    if horizon < t_h:
        raise ValueError(
            f"reconstruction horizon must be >= the history length {t_h}")
    controls = np.asarray(nc._data(controls), dtype=np.float64)
    if controls.ndim != 2 or controls.shape[0] != 3 or controls.shape[1] < t_h + horizon:
        raise ValueError(
            f"control track must cover history plus horizon: need (3, >= {t_h + horizon}), "
            f"got {controls.shape}")

    entropy = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    seed_fwd, seed_bwd = entropy.spawn(2)
    future = generate(model, GenerationRequest(
        history=history, controls=controls, horizon=horizon,
        temperature=temperature, seed=seed_fwd, history_mask=mask))

    # Reverse the combined past-plus-future timeline, then regenerate the
    # final T_h reversed frames, which are the original past in reverse.
    track = controls[:, :t_h + horizon]
    rev_controls = (-track[:, ::-1]).copy()
    rev_history = future[:, :, :t_h][..., ::-1].copy()
    rev_past = generate(model, GenerationRequest(
        history=rev_history, controls=rev_controls[:, horizon - t_h:],
        horizon=t_h, temperature=temperature, seed=seed_bwd))
    filled = rev_past[..., ::-1]

    observed = mask.astype(bool)
    past = np.where(observed[:, None, :], history, filled)
    return ReconstructionResult(past=past, future=future, observed=observed)

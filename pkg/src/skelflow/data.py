"""Motion clips: file formats, resampling, windowing, augmentation, control
extraction and a synthetic gait generator with analytic ground truth.

Conventions used throughout the package:

* positions are (M, 3, T) float64 centimetres; channel order in the local
  (root-relative) frame is x = lateral (towards the left), y = forward,
  z = up; world-frame clips use fixed world axes with z up
* controls are (3, T): row 0 forward and row 1 sideways per-frame
  displacement in cm, row 2 per-frame heading change in radians, each
  expressed in the heading frame of the previous frame; column 0 repeats
  column 1 so the track has no bogus leading zero
* time reversal negates all three control rows (they are velocities)
* a clip is either world-frame or root-relative; `to_root_relative` and
  `world_positions` convert between the two using a smoothed reference
  trajectory, so the root marker keeps a little residual motion instead of
  degenerating to a constant channel
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .sequence import reverse_sequence
from .skeleton import default_skeleton

CLIP_MAGIC = b"SKCLIP01"
DEFAULT_WINDOW_FRAMES = 80
DEFAULT_SMOOTH_WINDOW = 7
STD_FLOOR = 1e-6


class ClipFormatError(ValueError):
    """Structurally invalid clip data or container."""


class ClipParseError(ClipFormatError):
    """Text clip failed to parse; the message carries the line number."""


class UpsampleRequestError(ValueError):
    """resample was asked to raise the frame rate."""


class MissingMirrorMapError(ValueError):
    """Mirroring requested on a skeleton without mirror pairs."""


class PathSpecError(ValueError):
    """Malformed or physically infeasible walker path parameters."""


@dataclass
class MotionClip:
    """A marker sequence with its control track.

    positions: (M, 3, T) cm.  controls: (3, T).  fps > 0.  root_relative
    tells whether positions live in the heading-aligned root frame (True)
    or in world coordinates (False).
    """

    positions: np.ndarray
    controls: np.ndarray
    fps: float
    root_relative: bool = False
    source: str = ""

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        self.controls = np.ascontiguousarray(np.asarray(self.controls, dtype=np.float64))
        self.fps = float(self.fps)
        self.root_relative = bool(self.root_relative)
        if self.positions.ndim != 3 or self.positions.shape[1] != 3:
            raise ClipFormatError(
                f"positions must be (markers, 3, frames), got {self.positions.shape}")
        frames = self.positions.shape[2]
        if self.controls.shape != (3, frames):
            raise ClipFormatError(
                f"controls must be (3, {frames}), got {self.controls.shape}")
        if not self.fps > 0:
            raise ClipFormatError(f"fps must be positive, got {self.fps}")
        if not np.all(np.isfinite(self.positions)):
            raise ClipFormatError("positions contain non-finite values")
        if not np.all(np.isfinite(self.controls)):
            raise ClipFormatError("controls contain non-finite values")

    @property
    def marker_count(self):
        return self.positions.shape[0]

    @property
    def frame_count(self):
        return self.positions.shape[2]

    @property
    def duration(self):
        return (self.frame_count - 1) / self.fps

    def copy(self):
        return MotionClip(self.positions.copy(), self.controls.copy(),
                          self.fps, self.root_relative, self.source)


@dataclass
class TrainingWindow:
    """Fixed-length training slice with its augmentation provenance."""

    positions: np.ndarray
    controls: np.ndarray
    fps: float
    root_relative: bool = True
    source: str = ""
    start_frame: int = 0
    mirrored: bool = False
    time_reversed: bool = False

    def __post_init__(self):
        self.positions = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        self.controls = np.ascontiguousarray(np.asarray(self.controls, dtype=np.float64))
        if self.positions.ndim != 3 or self.positions.shape[1] != 3:
            raise ClipFormatError(
                f"window positions must be (markers, 3, frames), got {self.positions.shape}")
        if self.controls.shape != (3, self.positions.shape[2]):
            raise ClipFormatError(
                f"window controls must be (3, {self.positions.shape[2]}), "
                f"got {self.controls.shape}")

    @property
    def length(self):
        return self.positions.shape[2]

    @property
    def duration(self):
        return self.length / self.fps

    @property
    def provenance(self):
        tags = []
        if self.mirrored:
            tags.append("mirrored")
        if self.time_reversed:
            tags.append("reversed")
        return "+".join(tags) if tags else "original"


# -- clip files ---------------------------------------------------------------------


def _column_names(markers):
    names = []
    for m in range(markers):
        names.extend([f"m{m}x", f"m{m}y", f"m{m}z"])
    names.extend(["c_fwd", "c_side", "c_rot"])
    return names


def _write_text(clip, path):
    m, _, t = clip.positions.shape
    rows = np.concatenate(
        [clip.positions.reshape(m * 3, t), clip.controls], axis=0).T
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# motion clip v1\n")
        fh.write(f"# fps {clip.fps:.17g}\n")
        fh.write(f"# markers {m}\n")
        fh.write(f"# frames {t}\n")
        fh.write(f"# root_relative {int(clip.root_relative)}\n")
        if clip.source:
            fh.write(f"# source {clip.source}\n")
        fh.write(f"# columns {' '.join(_column_names(m))}\n")
        for row in rows:
            fh.write(" ".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def _read_text(path):
    header = {}
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                parts = body.split(None, 1)
                if len(parts) == 2 and parts[0] in ("fps", "markers", "frames",
                                                    "root_relative", "source"):
                    header[parts[0]] = parts[1]
                continue
            tokens = line.split()
            values = np.empty(len(tokens))
            for i, tok in enumerate(tokens):
                try:
                    values[i] = float(tok)
                except ValueError:
                    raise ClipParseError(
                        f"line {line_no}, column {i + 1}: invalid number '{tok}'") from None
            rows.append((line_no, values))
    if "fps" not in header:
        raise ClipParseError("missing '# fps' header")
    if "markers" not in header:
        raise ClipParseError("missing '# markers' header")
    try:
        fps = float(header["fps"])
        markers = int(header["markers"])
    except ValueError as exc:
        raise ClipParseError(f"bad header value: {exc}") from None
    if not rows:
        raise ClipParseError("clip has no frames")
    want = markers * 3 + 3
    for line_no, values in rows:
        if values.shape[0] != want:
            raise ClipParseError(
                f"line {line_no}: marker-count mismatch, expected {want} "
                f"columns for {markers} markers, got {values.shape[0]}")
    if "frames" in header and int(header["frames"]) != len(rows):
        raise ClipParseError(
            f"header declares {header['frames']} frames but file has {len(rows)}")
    table = np.stack([v for _, v in rows], axis=1)
    positions = table[:markers * 3].reshape(markers, 3, len(rows))
    controls = table[markers * 3:]
    return MotionClip(positions, controls, fps,
                      root_relative=bool(int(header.get("root_relative", "0"))),
                      source=header.get("source", ""))


def _write_binary(clip, path):
    m, _, t = clip.positions.shape
    header = {
        "channels": 3,
        "fps": clip.fps,
        "frames": t,
        "markers": m,
        "root_relative": clip.root_relative,
        "source": clip.source,
        "version": 1,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(CLIP_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(clip.positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(clip.controls, dtype="<f8").tobytes())


def _read_binary(path):
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:8] != CLIP_MAGIC:
        raise ClipFormatError("bad magic bytes; not a binary clip")
    if len(payload) < 16:
        raise ClipFormatError("truncated clip header")
    (hlen,) = struct.unpack("<Q", payload[8:16])
    if len(payload) < 16 + hlen:
        raise ClipFormatError("truncated clip header")
    try:
        header = json.loads(payload[16:16 + hlen].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ClipFormatError(f"unreadable clip header: {exc}") from None
    try:
        m, t = int(header["markers"]), int(header["frames"])
        fps = float(header["fps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ClipFormatError(f"incomplete clip header: {exc}") from None
    body = payload[16 + hlen:]
    want = (m * 3 * t + 3 * t) * 8
    if len(body) != want:
        raise ClipFormatError(
            f"payload holds {len(body)} bytes, expected {want}")
    positions = np.frombuffer(body[:m * 3 * t * 8], dtype="<f8").reshape(m, 3, t)
    controls = np.frombuffer(body[m * 3 * t * 8:], dtype="<f8").reshape(3, t)
    return MotionClip(positions, controls, fps,
                      root_relative=bool(header.get("root_relative", False)),
                      source=str(header.get("source", "")))


def save_clip(clip, path, format="text"):
    """Write a clip as tabular text or as the binary container."""
    if format == "text":
        _write_text(clip, path)
    elif format == "binary":
        _write_binary(clip, path)
    else:
        raise ValueError(f"unknown clip format '{format}'")


def load_clip(path, format="auto"):
    """Read a clip; format 'auto' sniffs the binary magic bytes."""
    if format == "auto":
        with open(path, "rb") as fh:
            magic = fh.read(8)
        format = "binary" if magic == CLIP_MAGIC else "text"
    if format == "binary":
        return _read_binary(path)
    if format == "text":
        return _read_text(path)
    raise ValueError(f"unknown clip format '{format}'")


# -- reference trajectory and controls ----------------------------------------------


def _smooth1(track, window):
    """Centered moving average with linear end extrapolation.

    Exact on affine signals, so straight constant-velocity trajectories and
    steady turns survive smoothing unchanged.
    """
    track = np.asarray(track, dtype=np.float64)
    n = track.shape[0]
    w = int(window)
    if w % 2 == 0:
        w -= 1
    if w > n:
        w = n if n % 2 == 1 else n - 1
    if w <= 1:
        return track.copy()
    pad = w // 2
    left = track[0] - np.arange(pad, 0, -1) * (track[1] - track[0])
    right = track[-1] + np.arange(1, pad + 1) * (track[-1] - track[-2])
    ext = np.concatenate([left, track, right])
    return np.convolve(ext, np.full(w, 1.0 / w), mode="valid")


def _reference_trajectory(positions, skeleton_spec, smooth_window):
    """Smoothed root path (2, T) and heading (T,) from world positions.

    Heading is the planar angle of the lateral left-minus-right marker axis,
    unwrapped over time.
    """
    if skeleton_spec.lateral_markers is None:
        raise ValueError("skeleton config must name a lateral marker pair")
    left_ix, right_ix = skeleton_spec.lateral_markers
    late = positions[left_ix, 0:2, :] - positions[right_ix, 0:2, :]
    if np.any(np.hypot(late[0], late[1]) < 1e-9):
        raise ValueError("lateral markers coincide; heading undefined")
    theta = np.unwrap(np.arctan2(late[1], late[0]))
    root_xy = positions[skeleton_spec.root_marker, 0:2, :]
    ref_xy = np.stack([_smooth1(root_xy[0], smooth_window),
                       _smooth1(root_xy[1], smooth_window)])
    return ref_xy, _smooth1(theta, smooth_window)


def extract_controls(positions, fps, skeleton_spec=None,
                     smooth_window=DEFAULT_SMOOTH_WINDOW):
    """Per-frame forward/sideways/rotational velocities of the root path.

    Displacements are expressed in the heading frame of the previous frame;
    column 0 repeats column 1.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if skeleton_spec is None:
        skeleton_spec = default_skeleton()
    if positions.ndim != 3 or positions.shape[0] != skeleton_spec.marker_count:
        raise ValueError(
            f"positions must be ({skeleton_spec.marker_count}, 3, T), got {positions.shape}")
    if positions.shape[2] < 2:
        raise ValueError("need at least 2 frames to extract controls")
    del fps  # controls are per-frame quantities; kept for call-site clarity
    ref_xy, theta = _reference_trajectory(positions, skeleton_spec, smooth_window)
    dxy = ref_xy[:, 1:] - ref_xy[:, :-1]
    cos, sin = np.cos(theta[:-1]), np.sin(theta[:-1])
    controls = np.zeros((3, positions.shape[2]))
    controls[0, 1:] = -sin * dxy[0] + cos * dxy[1]
    controls[1, 1:] = cos * dxy[0] + sin * dxy[1]
    controls[2, 1:] = theta[1:] - theta[:-1]
    controls[:, 0] = controls[:, 1]
    return controls


def to_root_relative(clip, skeleton_spec=None, smooth_window=DEFAULT_SMOOTH_WINDOW):
    """Re-express a world clip in the smoothed heading-aligned root frame.

    The reference trajectory is folded into the control track; vertical
    coordinates stay absolute.  Root-relative input is returned as a copy.
    """
    if clip.root_relative:
        return clip.copy()
    if skeleton_spec is None:
        skeleton_spec = default_skeleton()
    controls = extract_controls(clip.positions, clip.fps, skeleton_spec, smooth_window)
    ref_xy, theta = _reference_trajectory(clip.positions, skeleton_spec, smooth_window)
    cos, sin = np.cos(theta)[None], np.sin(theta)[None]
    dx = clip.positions[:, 0, :] - ref_xy[0][None]
    dy = clip.positions[:, 1, :] - ref_xy[1][None]
    local = clip.positions.copy()
    local[:, 0, :] = cos * dx + sin * dy
    local[:, 1, :] = -sin * dx + cos * dy
    return MotionClip(local, controls, clip.fps, root_relative=True, source=clip.source)


def world_positions(clip, initial_xy=(0.0, 0.0), initial_heading=0.0):
    """Recompose world-frame positions from a root-relative clip.

    The root path is re-integrated from the control track starting at the
    given pose; world clips are returned unchanged (copy).
    """
    if not clip.root_relative:
        return clip.positions.copy()
    c = clip.controls
    t = clip.frame_count
    theta = np.empty(t)
    theta[0] = float(initial_heading)
    if t > 1:
        theta[1:] = float(initial_heading) + np.cumsum(c[2, 1:])
    cos_p, sin_p = np.cos(theta[:-1]), np.sin(theta[:-1])
    ref = np.empty((2, t))
    ref[0, 0], ref[1, 0] = float(initial_xy[0]), float(initial_xy[1])
    if t > 1:
        dx = cos_p * c[1, 1:] - sin_p * c[0, 1:]
        dy = sin_p * c[1, 1:] + cos_p * c[0, 1:]
        ref[0, 1:] = ref[0, 0] + np.cumsum(dx)
        ref[1, 1:] = ref[1, 0] + np.cumsum(dy)
    cos, sin = np.cos(theta)[None], np.sin(theta)[None]
    lx, ly = clip.positions[:, 0, :], clip.positions[:, 1, :]
    world = clip.positions.copy()
    world[:, 0, :] = ref[0][None] + cos * lx - sin * ly
    world[:, 1, :] = ref[1][None] + sin * lx + cos * ly
    return world


# -- resampling ----------------------------------------------------------------------


def resample(clip, target_fps=20.0):
    """Downsample a clip to target_fps by linear interpolation.

    Positions interpolate per channel; controls integrate to a cumulative
    path, interpolate, and re-difference so they stay per-frame velocities
    at the new rate.  Asking for a higher rate raises UpsampleRequestError;
    the same rate returns a bit-exact copy.
    """
    target_fps = float(target_fps)
    if target_fps <= 0:
        raise ValueError("target fps must be positive")
    if target_fps > clip.fps:
        raise UpsampleRequestError(
            f"cannot upsample {clip.fps:g} fps to {target_fps:g} fps")
    if target_fps == clip.fps:
        return clip.copy()
    t = clip.frame_count
    if t < 2:
        raise ValueError("clip too short to resample")
    ratio = clip.fps / target_fps
    t_new = int(np.floor((t - 1) / ratio + 1e-9)) + 1
    if t_new < 2:
        raise ValueError("clip too short at the target rate")
    grid = np.minimum(np.arange(t_new) * ratio, t - 1)
    src = np.arange(t)

    m = clip.marker_count
    flat = clip.positions.reshape(m * 3, t)
    positions = np.stack([np.interp(grid, src, row) for row in flat])
    positions = positions.reshape(m, 3, t_new)

    c = clip.controls
    theta = np.zeros(t)
    theta[1:] = np.cumsum(c[2, 1:])
    cos_p, sin_p = np.cos(theta[:-1]), np.sin(theta[:-1])
    path = np.zeros((2, t))
    path[0, 1:] = np.cumsum(cos_p * c[1, 1:] - sin_p * c[0, 1:])
    path[1, 1:] = np.cumsum(sin_p * c[1, 1:] + cos_p * c[0, 1:])
    theta_q = np.interp(grid, src, theta)
    path_q = np.stack([np.interp(grid, src, path[0]), np.interp(grid, src, path[1])])
    dxy = path_q[:, 1:] - path_q[:, :-1]
    cos_q, sin_q = np.cos(theta_q[:-1]), np.sin(theta_q[:-1])
    controls = np.zeros((3, t_new))
    controls[0, 1:] = -sin_q * dxy[0] + cos_q * dxy[1]
    controls[1, 1:] = cos_q * dxy[0] + sin_q * dxy[1]
    controls[2, 1:] = theta_q[1:] - theta_q[:-1]
    controls[:, 0] = controls[:, 1]
    return MotionClip(positions, controls, target_fps,
                      root_relative=clip.root_relative, source=clip.source)


# -- windowing and augmentation -------------------------------------------------------


def windows(clip, length=DEFAULT_WINDOW_FRAMES, overlap=0.5):
    """Slice a clip into fixed-length windows; trailing partials drop.

    Stride is length * (1 - overlap); a clip shorter than one window yields
    an empty list.
    """
    if length < 1:
        raise ValueError("window length must be >= 1")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    stride = max(1, int(round(length * (1.0 - overlap))))
    out = []
    for start in range(0, clip.frame_count - length + 1, stride):
        out.append(TrainingWindow(
            clip.positions[:, :, start:start + length].copy(),
            clip.controls[:, start:start + length].copy(),
            clip.fps, clip.root_relative, clip.source, start_frame=start))
    return out


def mirror_window(window, skeleton_spec):
    """Lateral mirror: negate the x channel, swap left/right markers,
    negate the sideways and rotational controls."""
    if not window.root_relative:
        raise ValueError("mirroring is defined on root-relative data")
    if not skeleton_spec.mirror_pairs:
        raise MissingMirrorMapError("skeleton config declares no mirror pairs")
    perm = skeleton_spec.mirror_permutation()
    positions = window.positions[perm].copy()
    positions[:, 0, :] = -positions[:, 0, :]
    controls = window.controls.copy()
    controls[1] = -controls[1]
    controls[2] = -controls[2]
    return replace(window, positions=positions, controls=controls,
                   mirrored=not window.mirrored)


def reverse_window(window):
    """Time reversal of a window; reuses the sequence-level reversal rule."""
    positions, controls = reverse_sequence(window.positions, window.controls)
    return replace(window, positions=positions, controls=controls,
                   time_reversed=not window.time_reversed)


def augment(window, skeleton_spec):
    """Original, mirrored, time-reversed and mirrored-reversed variants."""
    mirrored = mirror_window(window, skeleton_spec)
    return [window, mirrored, reverse_window(window), reverse_window(mirrored)]


def standardize_fit(window_list):
    """Per-(marker, channel) mean and std over all frames of all windows.

    Stds floor at 1e-6 so constant channels stay harmless.
    """
    if len(window_list) < 2:
        raise ValueError("need at least 2 windows to fit statistics")
    stacked = np.concatenate([w.positions for w in window_list], axis=2)
    mean = stacked.mean(axis=2)
    std = np.maximum(stacked.std(axis=2), STD_FLOOR)
    return mean, std


# -- walker paths ---------------------------------------------------------------------

_PATH_DEFAULTS = {
    "line": {"speed": 70.0},
    "circle": {"speed": 70.0, "radius": 200.0},
    "s_curve": {"speed": 70.0, "sway": 0.5, "wavelength": 400.0},
}


def parse_path_spec(spec):
    """Parse 'kind:key=value,key=value' into a validated parameter dict."""
    if not isinstance(spec, str):
        raise PathSpecError(f"path spec must be a string, got {type(spec).__name__}")
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind not in _PATH_DEFAULTS:
        raise PathSpecError(
            f"unknown path kind '{kind}'; expected one of {sorted(_PATH_DEFAULTS)}")
    params = dict(_PATH_DEFAULTS[kind])
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in params:
                raise PathSpecError(
                    f"bad parameter '{item.strip()}' for path '{kind}'; "
                    f"known keys: {sorted(params)}")
            try:
                params[key] = float(value)
            except ValueError:
                raise PathSpecError(
                    f"parameter '{key}' needs a number, got '{value.strip()}'") from None
    return _check_path_params({"kind": kind, **params})


def _check_path_params(params):
    kind = params.get("kind")
    if kind not in _PATH_DEFAULTS:
        raise PathSpecError(f"unknown path kind '{kind}'")
    for key in _PATH_DEFAULTS[kind]:
        if key not in params:
            raise PathSpecError(f"path '{kind}' is missing parameter '{key}'")
    if not params["speed"] > 0:
        raise PathSpecError("speed must be positive")
    if kind == "circle" and abs(params.get("radius", 0.0)) < 1.0:
        raise PathSpecError("circle radius must be at least 1 cm in magnitude")
    if kind == "s_curve":
        if params["wavelength"] <= 0:
            raise PathSpecError("wavelength must be positive")
        if params["sway"] < 0:
            raise PathSpecError("sway must be non-negative")
    return params


def path_spec_string(params):
    """Canonical 'kind:key=value,...' form of a parameter dict."""
    kind = params["kind"]
    keys = sorted(k for k in params if k != "kind")
    return kind + ":" + ",".join(f"{k}={params[k]:g}" for k in keys)


class _Path:
    """Planar path by arclength: pos(s) -> (2, ...), heading(s) -> radians.

    Heading 0 faces world +y; the left lateral axis is then world +x.
    s_curve paths integrate their heading profile over a dense arclength
    table once and interpolate afterwards.
    """

    def __init__(self, params, s_min, s_max):
        self.kind = params["kind"]
        self.params = params
        if self.kind == "s_curve":
            ds = 0.5
            n = int(np.ceil((s_max - s_min) / ds)) + 2
            s = s_min + np.arange(n) * ds
            psi = params["sway"] * np.sin(2.0 * np.pi * s / params["wavelength"])
            f = np.stack([-np.sin(psi), np.cos(psi)])
            pos = np.zeros((2, n))
            pos[:, 1:] = np.cumsum(0.5 * ds * (f[:, 1:] + f[:, :-1]), axis=1)
            origin = np.stack([np.interp(0.0, s, pos[0]), np.interp(0.0, s, pos[1])])
            self._table_s = s
            self._table_pos = pos - origin[:, None]

    def heading(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "line":
            return np.zeros_like(s)
        if self.kind == "circle":
            return s / self.params["radius"]
        return self.params["sway"] * np.sin(2.0 * np.pi * s / self.params["wavelength"])

    def pos(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "line":
            return np.stack([np.zeros_like(s), s])
        if self.kind == "circle":
            r = self.params["radius"]
            psi = s / r
            return np.stack([r * (np.cos(psi) - 1.0), r * np.sin(psi)])
        return np.stack([np.interp(s, self._table_s, self._table_pos[0]),
                         np.interp(s, self._table_s, self._table_pos[1])])


def path_controls(params, frames, fps):
    """Control track (3, frames) for a body moving along a walker path.

    Used to drive generation along a prescribed route without synthesizing
    an entire clip first.
    """
    params = _check_path_params(dict(params))
    frames = int(frames)
    if frames < 2:
        raise ValueError("need at least 2 frames of controls")
    seconds = np.arange(frames) / float(fps)
    s = params["speed"] * seconds
    path = _Path(params, -1.0, float(s[-1]) + 1.0)
    psi = path.heading(s)
    xy = path.pos(s)
    dxy = xy[:, 1:] - xy[:, :-1]
    cos, sin = np.cos(psi[:-1]), np.sin(psi[:-1])
    controls = np.zeros((3, frames))
    controls[0, 1:] = -sin * dxy[0] + cos * dxy[1]
    controls[1, 1:] = cos * dxy[0] + sin * dxy[1]
    controls[2, 1:] = psi[1:] - psi[:-1]
    controls[:, 0] = controls[:, 1]
    return controls


# -- synthetic gait -------------------------------------------------------------------

_PELVIS_HEIGHT = 86.0
_HIP_OFFSET = np.array([9.0, 0.0, -4.0])
_THIGH = 45.0
_SHANK = 45.0
_FOOT = 14.0
_HEEL_HEIGHT = 5.0
_FOOT_LATERAL = 8.0
_LIFT = 7.0
_DUTY = 0.4
_SWAY = 2.0
_BOB = 1.5
_SURGE = 1.0
_LOWER_SPINE = 20.0
_UPPER_SPINE = 18.0
_NECK = 12.0
_HEAD = 13.0
_SHOULDER_OFFSET = np.array([18.0, 0.0, 4.0])
_UPPER_ARM = 28.0
_FOREARM = 25.0
_HAND = 10.0
_ARM_SWING = 0.4
_LEG_REACH_LIMIT = _THIGH + _SHANK - 1.0


@dataclass(frozen=True)
class GaitTruth:
    """Analytic ground truth emitted alongside a synthetic clip."""

    step_count: int
    cadence: float
    speed: float
    duty: float
    footstep_intervals: tuple  # (start_s, end_s, heel marker index) per stance
    bone_lengths: tuple  # cm, aligned with the skeleton's edge order
    heel_markers: tuple = (3, 7)


def _smooth5(u):
    """Quintic smoothstep: zero velocity and acceleration at both ends."""
    return u * u * u * (10.0 + u * (6.0 * u - 15.0))


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _segment(yaw, lean, roll, length):
    """A bone vector of exact length: rotations applied to (0, 0, length)."""
    return _rot_z(yaw) @ _rot_x(-lean) @ _rot_y(roll) @ np.array([0.0, 0.0, length])


def _expected_bone_lengths(skeleton_spec):
    hip = float(np.linalg.norm(_HIP_OFFSET))
    shoulder = float(np.linalg.norm(_SHOULDER_OFFSET))
    by_edge = {
        (0, 1): hip, (1, 2): _THIGH, (2, 3): _SHANK, (3, 4): _FOOT,
        (0, 5): hip, (5, 6): _THIGH, (6, 7): _SHANK, (7, 8): _FOOT,
        (0, 9): _LOWER_SPINE, (9, 10): _UPPER_SPINE,
        (10, 11): _NECK, (11, 12): _HEAD,
        (10, 13): shoulder, (13, 15): _UPPER_ARM,
        (15, 16): _FOREARM, (16, 17): _HAND,
        (10, 14): shoulder, (14, 18): _UPPER_ARM,
        (18, 19): _FOREARM, (19, 20): _HAND,
    }
    return tuple(by_edge[edge] for edge in skeleton_spec.edges)


def _leg_chain(hip, heel, forward):
    """Two-bone knee solve; thigh and shank lengths hold exactly."""
    delta = heel - hip
    dist = float(np.linalg.norm(delta))
    if dist > _LEG_REACH_LIMIT:
        raise PathSpecError(
            f"invalid path parameters: leg span {dist:.1f} cm exceeds "
            f"{_LEG_REACH_LIMIT:.1f} cm reach")
    axis = delta / dist
    half = 0.5 * dist
    bend = np.sqrt(_THIGH * _THIGH - half * half)
    side = forward - np.dot(forward, axis) * axis
    norm = float(np.linalg.norm(side))
    if norm < 1e-9:
        seed = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        side = seed - np.dot(seed, axis) * axis
        norm = float(np.linalg.norm(side))
    side = side / norm
    return hip + half * axis + bend * side


def synth_gait(path_spec, steps=20, fps=20.0, seed=0, cadence=2.0, noise_std=0.0):
    """Procedural 21-marker walker along a planar path.

    Returns (clip, truth).  The clip is world-frame with extracted controls;
    the truth carries the exact footstep intervals (each stance covers
    [n/cadence, (n+0.4)/cadence] seconds, feet alternating left first) and
    the constant bone lengths of the rigid construction.  Between stances
    both feet travel, so each heel is stationary exactly during its own
    stances; the clip ends at the last stance's liftoff, which keeps the
    detectable footstep count equal to `steps`.  noise_std > 0 adds
    measurement jitter to every marker for training realism, which breaks
    the exact-rigidity guarantees.
    """
    params = _check_path_params(dict(path_spec)) if isinstance(path_spec, dict) \
        else parse_path_spec(path_spec)
    steps = int(steps)
    if steps < 2:
        raise ValueError("need at least 2 footsteps")
    fps = float(fps)
    cadence = float(cadence)
    if cadence <= 0:
        raise ValueError("cadence must be positive")
    if fps < 5.0 * cadence:
        raise ValueError(
            f"fps {fps:g} too low to resolve stances; need fps >= {5.0 * cadence:g}")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    skeleton_spec = default_skeleton()

    speed = params["speed"]
    frames = int(round(fps * (steps - 1 + _DUTY) / cadence)) + 1
    seconds = np.arange(frames) / fps
    s_body = speed * seconds
    stride = 2.0 * speed / cadence
    s_lo = speed * (-1 + _DUTY) / cadence - stride - 10.0
    s_hi = float(s_body[-1]) + stride + 10.0
    path = _Path(params, s_lo, s_hi)

    # Cached footfalls: world xy and frozen foot heading per stance index.
    footfalls = {}
    for n in range(-2, steps + 3):
        s_n = speed * (n + _DUTY) / cadence
        psi_n = float(path.heading(s_n))
        lateral = _FOOT_LATERAL if n % 2 == 0 else -_FOOT_LATERAL
        xy = path.pos(s_n) + lateral * np.array([np.cos(psi_n), np.sin(psi_n)])
        footfalls[n] = (xy, psi_n)

    psi = path.heading(s_body)
    base = path.pos(s_body)
    osc = np.sin(np.pi * cadence * seconds)
    osc2 = np.sin(2.0 * np.pi * cadence * seconds)
    osc2b = np.sin(2.0 * np.pi * cadence * seconds + 1.1)
    surge = np.sin(2.0 * np.pi * cadence * seconds + 0.3)
    left_axis = np.stack([np.cos(psi), np.sin(psi)])
    fwd_axis = np.stack([-np.sin(psi), np.cos(psi)])

    pelvis = np.zeros((3, frames))
    pelvis[0:2] = base + _SWAY * osc * left_axis + _SURGE * surge * fwd_axis
    pelvis[2] = _PELVIS_HEIGHT + _BOB * osc2b

    yaw_pelvis = psi + 0.06 * osc
    yaw_chest = psi - 0.05 * osc
    lean = 0.05 + 0.02 * osc2
    roll = 0.03 * osc
    arm_left = _ARM_SWING * np.sin(np.pi * cadence * seconds + np.pi)
    flex_left = 0.55 + 0.15 * np.sin(np.pi * cadence * seconds + np.pi + 0.8)
    flex_right = 0.55 + 0.15 * np.sin(np.pi * cadence * seconds + 0.8)

    positions = np.zeros((21, 3, frames))
    swing_time = (2.0 - _DUTY) / cadence
    for t in range(frames):
        now = seconds[t]
        rz_pelvis = _rot_z(yaw_pelvis[t])
        positions[0, :, t] = pelvis[:, t]
        positions[1, :, t] = pelvis[:, t] + rz_pelvis @ _HIP_OFFSET
        positions[5, :, t] = pelvis[:, t] + rz_pelvis @ (_HIP_OFFSET * np.array([-1.0, 1.0, 1.0]))

        m9 = pelvis[:, t] + _segment(yaw_pelvis[t] + 0.3 * (yaw_chest[t] - yaw_pelvis[t]),
                                     lean[t], roll[t], _LOWER_SPINE)
        m10 = m9 + _segment(yaw_chest[t], lean[t] + 0.02, roll[t], _UPPER_SPINE)
        m11 = m10 + _segment(yaw_chest[t], 0.02 * osc2[t], 0.0, _NECK)
        m12 = m11 + _segment(yaw_chest[t], 0.03 + 0.02 * osc2[t], 0.0, _HEAD)
        positions[9, :, t] = m9
        positions[10, :, t] = m10
        positions[11, :, t] = m11
        positions[12, :, t] = m12

        rz_chest = _rot_z(yaw_chest[t])
        m13 = m10 + rz_chest @ _SHOULDER_OFFSET
        m14 = m10 + rz_chest @ (_SHOULDER_OFFSET * np.array([-1.0, 1.0, 1.0]))
        positions[13, :, t] = m13
        positions[14, :, t] = m14
        for shoulder, sign, flex, first in ((m13, 1.0, flex_left[t], True),
                                            (m14, -1.0, flex_right[t], False)):
            alpha = sign * arm_left[t]
            upper = rz_chest @ np.array([0.0, _UPPER_ARM * np.sin(alpha),
                                         -_UPPER_ARM * np.cos(alpha)])
            fore_dir = rz_chest @ np.array([0.0, np.sin(alpha + flex),
                                            -np.cos(alpha + flex)])
            elbow = shoulder + upper
            wrist = elbow + _FOREARM * fore_dir
            hand = wrist + _HAND * fore_dir
            if first:
                positions[15, :, t] = elbow
                positions[16, :, t] = wrist
                positions[17, :, t] = hand
            else:
                positions[18, :, t] = elbow
                positions[19, :, t] = wrist
                positions[20, :, t] = hand

        forward3 = np.array([fwd_axis[0, t], fwd_axis[1, t], 0.0])
        for foot, (hip_ix, knee_ix, heel_ix, toe_ix) in ((0, (1, 2, 3, 4)),
                                                         (1, (5, 6, 7, 8))):
            n = int(np.floor(cadence * now + 1e-12))
            if n % 2 != foot:
                n -= 1
            lift_time = (n + _DUTY) / cadence
            if now <= lift_time + 1e-12:
                xy, chi = footfalls[n]
                heel = np.array([xy[0], xy[1], _HEEL_HEIGHT])
            else:
                u = (now - lift_time) / swing_time
                w = _smooth5(u)
                xy_a, chi_a = footfalls[n]
                xy_b, chi_b = footfalls[n + 2]
                xy = (1.0 - w) * xy_a + w * xy_b
                chi = (1.0 - w) * chi_a + w * chi_b
                heel = np.array([xy[0], xy[1],
                                 _HEEL_HEIGHT + _LIFT * np.sin(np.pi * u) ** 2])
            hip = positions[hip_ix, :, t]
            positions[knee_ix, :, t] = _leg_chain(hip, heel, forward3)
            positions[heel_ix, :, t] = heel
            horiz = np.sqrt(_FOOT * _FOOT - _HEEL_HEIGHT * _HEEL_HEIGHT)
            toe_dir = np.array([-np.sin(chi), np.cos(chi), 0.0])
            positions[toe_ix, :, t] = heel + horiz * toe_dir \
                - np.array([0.0, 0.0, _HEEL_HEIGHT])

    if noise_std > 0:
        rng = np.random.default_rng(seed)
        positions = positions + rng.normal(0.0, noise_std, positions.shape)

    controls = extract_controls(positions, fps, skeleton_spec)
    clip = MotionClip(positions, controls, fps, root_relative=False,
                      source=f"synth:{path_spec_string(params)}")
    intervals = tuple(
        (n / cadence, (n + _DUTY) / cadence, 3 if n % 2 == 0 else 7)
        for n in range(steps))
    truth = GaitTruth(
        step_count=steps, cadence=cadence, speed=speed, duty=_DUTY,
        footstep_intervals=intervals,
        bone_lengths=_expected_bone_lengths(skeleton_spec))
    return clip, truth

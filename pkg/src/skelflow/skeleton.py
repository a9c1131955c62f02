"""Skeleton graphs: marker topology, hop distances and the distance
partitioning used by the spatial graph convolutions.

A skeleton is an undirected connected tree/graph over M markers.  Config is
plain text, one directive per line:

    markers 21
    center 10
    heels 3 7
    root 0
    lateral 1 5
    edge 0 1
    mirror 1 5
    group right_arm 18 19 20
    bone_cm 0 1 12.5

`markers`, `center`, `heels` and at least M-1 `edge` lines are required; the
rest are optional.  Lines starting with '#' are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    from importlib import resources as _resources
except ImportError:  # pragma: no cover
    _resources = None


class SkeletonConfigError(ValueError):
    """Malformed or inconsistent skeleton config."""


class DisconnectedGraphError(SkeletonConfigError):
    """The edge list does not connect all markers."""


@dataclass(frozen=True)
class SkeletonSpec:
    marker_count: int
    edges: tuple
    center_marker: int
    heel_markers: tuple
    root_marker: int = 0
    lateral_markers: tuple = None
    mirror_pairs: tuple = ()
    groups: dict = field(default_factory=dict)
    bone_lengths_cm: tuple = None

    def adjacency(self):
        a = np.zeros((self.marker_count, self.marker_count), dtype=np.float64)
        for i, j in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    def mirror_permutation(self):
        """Index permutation swapping each mirror pair, identity elsewhere."""
        perm = np.arange(self.marker_count)
        for a, b in self.mirror_pairs:
            perm[a], perm[b] = b, a
        return perm


def _check_index(value, m, what, line_no):
    if not (0 <= value < m):
        raise SkeletonConfigError(f"line {line_no}: {what} {value} out of range [0, {m})")


def build_skeleton(config_text):
    """Parse skeleton config text into a validated SkeletonSpec."""
    markers = None
    center = None
    heels = None
    root = 0
    lateral = None
    edges = []
    edge_lines = []
    mirror = []
    groups = {}
    bones = {}

    for line_no, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key == "markers":
                markers = int(parts[1])
            elif key == "center":
                center = int(parts[1])
            elif key == "heels":
                heels = (int(parts[1]), int(parts[2]))
            elif key == "root":
                root = int(parts[1])
            elif key == "lateral":
                lateral = (int(parts[1]), int(parts[2]))
            elif key == "edge":
                edges.append((int(parts[1]), int(parts[2])))
                edge_lines.append(line_no)
            elif key == "mirror":
                mirror.append((int(parts[1]), int(parts[2])))
            elif key == "group":
                groups[parts[1]] = tuple(int(p) for p in parts[2:])
            elif key == "bone_cm":
                bones[(int(parts[1]), int(parts[2]))] = float(parts[3])
            else:
                raise SkeletonConfigError(f"line {line_no}: unknown directive '{key}'")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, SkeletonConfigError):
                raise
            raise SkeletonConfigError(f"line {line_no}: cannot parse '{raw.strip()}'") from exc

    if markers is None or markers < 1:
        raise SkeletonConfigError("config must declare a positive marker count")
    if center is None:
        raise SkeletonConfigError("config must declare a center marker")
    if heels is None:
        raise SkeletonConfigError("config must declare two heel markers")

    _check_index(center, markers, "center marker", 0)
    _check_index(root, markers, "root marker", 0)
    for h in heels:
        _check_index(h, markers, "heel marker", 0)
    if heels[0] == heels[1]:
        raise SkeletonConfigError("heel markers must be distinct")
    if lateral is not None:
        for l in lateral:
            _check_index(l, markers, "lateral marker", 0)

    seen = set()
    norm_edges = []
    for (i, j), line_no in zip(edges, edge_lines):
        _check_index(i, markers, "edge endpoint", line_no)
        _check_index(j, markers, "edge endpoint", line_no)
        if i == j:
            raise SkeletonConfigError(f"line {line_no}: self loop on marker {i}")
        e = (min(i, j), max(i, j))
        if e in seen:
            raise SkeletonConfigError(f"line {line_no}: duplicate edge {e}")
        seen.add(e)
        norm_edges.append(e)
    norm_edges.sort()

    # connectivity check (BFS from 0)
    if markers > 1:
        adj = [[] for _ in range(markers)]
        for i, j in norm_edges:
            adj[i].append(j)
            adj[j].append(i)
        visited = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in visited:
                        visited.add(v)
                        nxt.append(v)
            frontier = nxt
        if len(visited) != markers:
            missing = sorted(set(range(markers)) - visited)
            raise DisconnectedGraphError(f"markers {missing} are not reachable from marker 0")

    used = set()
    for a, b in mirror:
        _check_index(a, markers, "mirror marker", 0)
        _check_index(b, markers, "mirror marker", 0)
        if a == b or a in used or b in used:
            raise SkeletonConfigError(f"bad mirror pair ({a}, {b})")
        used.update((a, b))

    bone_lengths = None
    if bones:
        bl = []
        for e in norm_edges:
            if e not in bones:
                raise SkeletonConfigError(f"bone_cm missing for edge {e}")
            if bones[e] <= 0:
                raise SkeletonConfigError(f"bone_cm for edge {e} must be positive")
            bl.append(bones[e])
        bone_lengths = tuple(bl)

    for name, members in groups.items():
        for m in members:
            _check_index(m, markers, f"group '{name}' marker", 0)

    return SkeletonSpec(
        marker_count=markers,
        edges=tuple(norm_edges),
        center_marker=center,
        heel_markers=heels,
        root_marker=root,
        lateral_markers=lateral,
        mirror_pairs=tuple(tuple(p) for p in mirror),
        groups=groups,
        bone_lengths_cm=bone_lengths,
    )


def load_skeleton(path):
    with open(path, "r", encoding="utf-8") as fh:
        return build_skeleton(fh.read())


def to_config_text(spec):
    """Canonical config text; build_skeleton(to_config_text(s)) == s."""
    lines = [f"markers {spec.marker_count}",
             f"center {spec.center_marker}",
             f"heels {spec.heel_markers[0]} {spec.heel_markers[1]}",
             f"root {spec.root_marker}"]
    if spec.lateral_markers is not None:
        lines.append(f"lateral {spec.lateral_markers[0]} {spec.lateral_markers[1]}")
    for i, j in spec.edges:
        lines.append(f"edge {i} {j}")
    for a, b in spec.mirror_pairs:
        lines.append(f"mirror {a} {b}")
    for name in sorted(spec.groups):
        members = " ".join(str(m) for m in spec.groups[name])
        lines.append(f"group {name} {members}")
    if spec.bone_lengths_cm is not None:
        for (i, j), length in zip(spec.edges, spec.bone_lengths_cm):
            lines.append(f"bone_cm {i} {j} {length!r}")
    return "\n".join(lines) + "\n"


def default_skeleton():
    """The 21-marker locomotion skeleton shipped with the package."""
    text = _resources.files("skelflow").joinpath("skeletons/locomotion21.txt").read_text()
    return build_skeleton(text)


def hop_distances(spec):
    """All-pairs shortest hop counts, (M, M) int array, BFS per source."""
    m = spec.marker_count
    adj = [[] for _ in range(m)]
    for i, j in spec.edges:
        adj[i].append(j)
        adj[j].append(i)
    dist = np.full((m, m), -1, dtype=np.int64)
    for src in range(m):
        dist[src, src] = 0
        frontier = [src]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if dist[src, v] < 0:
                        dist[src, v] = d
                        nxt.append(v)
            frontier = nxt
    return dist


@dataclass(frozen=True)
class PartitionedAdjacency:
    """Per-subset averaging matrices for one kernel scale.

    matrices[k][i, j] = 1/|S_k(i)| when marker j is in subset k of marker i,
    else zero.  Subset 0 is {i} itself; for each hop ring r = 1..R there is a
    closer-to-center subset (2r-1) and a farther subset (2r); ties on center
    distance go to the farther subset.
    """

    kernel_scale: int
    hop_radius: int
    matrices: np.ndarray  # (D, M, M)

    @property
    def marker_count(self):
        return self.matrices.shape[1]


def partition(spec, kernel_scale):
    """Distance partitioning of the skeleton at an odd kernel scale D >= 3."""
    d = int(kernel_scale)
    if d < 3 or d % 2 == 0:
        raise ValueError(f"kernel scale must be odd and >= 3, got {kernel_scale}")
    radius = (d - 1) // 2
    m = spec.marker_count
    hop = hop_distances(spec)
    to_center = hop[:, spec.center_marker]
    mats = np.zeros((d, m, m), dtype=np.float64)
    for i in range(m):
        mats[0, i, i] = 1.0
        for r in range(1, radius + 1):
            ring = np.where(hop[i] == r)[0]
            if ring.size == 0:
                continue
            closer = ring[to_center[ring] < to_center[i]]
            farther = ring[to_center[ring] >= to_center[i]]
            if closer.size:
                mats[2 * r - 1, i, closer] = 1.0 / closer.size
            if farther.size:
                mats[2 * r, i, farther] = 1.0 / farther.size
    return PartitionedAdjacency(kernel_scale=d, hop_radius=radius, matrices=mats)


def partition_subsets(spec, kernel_scale):
    """Same partitioning as `partition`, as index sets: list over markers of
    list over subsets of sorted marker tuples.  Convenience for inspection."""
    pa = partition(spec, kernel_scale)
    out = []
    for i in range(spec.marker_count):
        subsets = []
        for k in range(pa.kernel_scale):
            subsets.append(tuple(np.where(pa.matrices[k, i] > 0)[0].tolist()))
        out.append(subsets)
    return out

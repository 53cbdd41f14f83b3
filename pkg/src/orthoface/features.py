"""Frontal 2D landmark extraction: agglomerative clustering of edge pixels
per feature window, convex-hull outlines, and the 60-point assembly.

Average linkage is computed over Euclidean point distances. Merge ties
(cluster-pair distances equal within a relative 1e-9 tolerance) resolve to
the pair whose lexicographically smallest member points win; exact float
ties across different summation orders are otherwise not well defined.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateHullError, ExtractionFailureError, InvalidInputError
from .imgproc import Raster, RegionOfInterest
from .scda import FeatureWindows

TIE_TOL = 1e-9


class Window(Enum):
    LEFT_EYE = "left_eye"
    RIGHT_EYE = "right_eye"
    NOSE = "nose"
    MOUTH = "mouth"
    OUTLINE = "outline"


@dataclass(frozen=True)
class Landmark2D:
    """Labeled feature point; frontal view coordinates are (X, Y), profile
    view coordinates are (Z, Y)."""

    id: int
    window: Window
    x: float
    y: float

    def xy(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class LandmarkQuota:
    """Per-window landmark counts; must sum to 60."""

    left_eye: int = 10
    right_eye: int = 10
    nose: int = 12
    mouth: int = 14
    outline: int = 14

    def __post_init__(self):
        counts = self.as_dict()
        if any(v < 1 for v in counts.values()):
            raise InvalidInputError(f"quota counts must be >= 1: {counts}")
        if sum(counts.values()) != 60:
            raise InvalidInputError(f"quota must sum to 60, got {sum(counts.values())}")

    def as_dict(self):
        return {
            Window.LEFT_EYE: self.left_eye, Window.RIGHT_EYE: self.right_eye,
            Window.NOSE: self.nose, Window.MOUTH: self.mouth, Window.OUTLINE: self.outline,
        }


def average_linkage_partition(points, k: int, tie_tol: float = TIE_TOL):
    """Agglomerative average-linkage clustering down to exactly k clusters.

    Cluster-pair distances are maintained as summed point distances
    (Lance-Williams update); each merge takes the global minimum, with the
    tie rule from the module docstring. Returns a list of member-index lists.
    """
    pts = [(float(x), float(y)) for x, y in points]
    n = len(pts)
    if k < 1:
        raise InvalidInputError(f"cluster count must be >= 1, got {k}")
    if n < k:
        raise InvalidInputError(f"cannot form {k} clusters from {n} points")
    coords = np.asarray(pts)
    diff = coords[:, None, :] - coords[None, :, :]
    S = np.sqrt((diff ** 2).sum(axis=2))  # summed pairwise distance between clusters
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    members = [[i] for i in range(n)]
    reps = [pts[i] for i in range(n)]
    np.fill_diagonal(S, np.inf)
    for _ in range(n - k):
        avg = S / np.outer(sizes, sizes)
        avg[~alive, :] = np.inf
        avg[:, ~alive] = np.inf
        dmin = float(avg.min())
        cutoff = dmin + tie_tol * max(1.0, dmin)
        tie_a, tie_b = np.nonzero(avg <= cutoff)
        best = None
        for a, b in zip(tie_a.tolist(), tie_b.tolist()):
            if a >= b:
                continue
            key = tuple(sorted((reps[a], reps[b])))
            if best is None or key < best[0]:
                best = (key, a, b)
        _, a, b = best
        S[a, :] += S[b, :]
        S[:, a] += S[:, b]
        S[a, a] = np.inf
        sizes[a] += sizes[b]
        alive[b] = False
        members[a].extend(members[b])
        reps[a] = min(reps[a], reps[b])
    return [members[i] for i in range(n) if alive[i]]


def order_clockwise(points):
    """Indices ordering points clockwise (screen coordinates, y down)
    around their centroid, starting from the leftmost point."""
    pts = [(float(x), float(y)) for x, y in points]
    cx = sum(p[0] for p in pts) / len(pts)
    cy = sum(p[1] for p in pts) / len(pts)
    start = min(range(len(pts)), key=lambda i: (pts[i][0], pts[i][1]))
    a0 = math.atan2(pts[start][1] - cy, pts[start][0] - cx)

    def key(i):
        ang = math.atan2(pts[i][1] - cy, pts[i][0] - cx)
        rel = (ang - a0) % (2.0 * math.pi)
        if i == start:
            rel = -1.0  # the leftmost point always leads
        return (rel, math.hypot(pts[i][0] - cx, pts[i][1] - cy), pts[i])

    return sorted(range(len(pts)), key=key)


def _edge_points_in(edges: Raster, window: RegionOfInterest):
    sub = edges.plane(0)[window.y0:window.y1 + 1, window.x0:window.x1 + 1]
    ys, xs = np.nonzero(sub)
    return [(int(x) + window.x0, int(y) + window.y0) for x, y in zip(xs, ys)]


def _subsample(points, cap: int):
    pts = sorted(points)
    if cap is None or len(pts) <= cap:
        return pts
    idx = np.linspace(0, len(pts) - 1, cap).round().astype(int)
    return [pts[i] for i in sorted(set(idx.tolist()))]


def extract_landmarks(edges: Raster, window: RegionOfInterest, k: int,
                      label: Window = Window.OUTLINE, id_base: int = 0,
                      max_points: int | None = None):
    """Cluster the edge pixels inside ``window`` into k landmarks.

    Landmarks are cluster centroids, ordered clockwise from the leftmost
    one; ids run id_base..id_base+k-1. ``max_points`` optionally caps the
    pixel count by an even lexicographic subsample before clustering.
    """
    pixels = _edge_points_in(edges, window)
    if len(pixels) < k:
        raise ExtractionFailureError(
            f"{label.value}: {len(pixels)} edge pixels < {k} requested landmarks", label)
    pixels = _subsample(pixels, max_points)
    parts = average_linkage_partition(pixels, k)
    cents = [(float(np.mean([pixels[i][0] for i in part])),
              float(np.mean([pixels[i][1] for i in part]))) for part in parts]
    order = order_clockwise(cents)
    return [Landmark2D(id_base + rank, label, cents[i][0], cents[i][1])
            for rank, i in enumerate(order)]


def _coords_of(p):
    if isinstance(p, Landmark2D):
        return (p.x, p.y)
    return (float(p[0]), float(p[1]))


def convex_hull(points):
    """Counterclockwise convex hull (collinear points excluded), starting
    from the lowest-then-leftmost vertex. Returns the input objects."""
    if len(points) < 3:
        raise InvalidInputError(f"convex hull needs >= 3 points, got {len(points)}")
    coords = [_coords_of(p) for p in points]
    first_at = {}
    for i, c in enumerate(coords):
        first_at.setdefault(c, i)
    uniq = sorted(first_at)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    if len(uniq) < 3 or all(cross(uniq[0], uniq[-1], p) == 0 for p in uniq):
        raise DegenerateHullError("all points collinear", (uniq[0], uniq[-1]))
    lower = []
    for p in uniq:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(uniq):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    start = min(range(len(hull)), key=lambda i: (hull[i][1], hull[i][0]))
    hull = hull[start:] + hull[:start]
    return [points[first_at[c]] for c in hull]


def outline_band_mask(face_roi: RegionOfInterest, windows: FeatureWindows,
                      width: int, height: int, band_frac: float = 0.35):
    """Boolean mask of the ROI boundary band lying outside all four windows."""
    ys, xs = np.mgrid[0:height, 0:width]
    inside = ((xs >= face_roi.x0) & (xs <= face_roi.x1)
              & (ys >= face_roi.y0) & (ys <= face_roi.y1))
    border_dist = np.minimum(
        np.minimum(xs - face_roi.x0, face_roi.x1 - xs),
        np.minimum(ys - face_roi.y0, face_roi.y1 - ys),
    )
    band = inside & (border_dist < band_frac * min(face_roi.width, face_roi.height))
    for win in windows.as_dict().values():
        band[win.y0:win.y1 + 1, win.x0:win.x1 + 1] = False
    return band


def assemble_frontal_set(windows: FeatureWindows, edges: Raster,
                         quota: LandmarkQuota, face_roi: RegionOfInterest,
                         outline_band_frac: float = 0.35,
                         max_points: int | None = 600):
    """Extract all 60 frontal landmarks with deterministic id assignment.

    Window order LeftEye, RightEye, Nose, Mouth, Outline; ids clockwise
    within each window. Outline landmarks come from the edge pixels of the
    face ROI boundary band lying outside the four feature windows.
    """
    counts = quota.as_dict()
    per_window = [
        (Window.LEFT_EYE, windows.left_eye), (Window.RIGHT_EYE, windows.right_eye),
        (Window.NOSE, windows.nose), (Window.MOUTH, windows.mouth),
    ]
    landmarks = []
    id_base = 0
    for label, win in per_window:
        landmarks.extend(extract_landmarks(edges, win, counts[label], label, id_base, max_points))
        id_base += counts[label]
    band = outline_band_mask(face_roi, windows, edges.width, edges.height, outline_band_frac)
    band_edges = Raster.from_array(np.where(band & (edges.plane(0) > 0), 255, 0), edges.semantics)
    landmarks.extend(extract_landmarks(band_edges, face_roi, counts[Window.OUTLINE],
                                       Window.OUTLINE, id_base, max_points))
    ids = sorted(lm.id for lm in landmarks)
    assert ids == list(range(60)), "landmark ids must be a permutation of 0..59"
    return landmarks


def landmarks_to_json(landmarks) -> str:
    """Serialize landmarks with fixed 6-fractional-digit coordinates."""
    rows = [
        '  {"id": %d, "window": "%s", "x": %.6f, "y": %.6f}'
        % (lm.id, lm.window.value, lm.x, lm.y)
        for lm in sorted(landmarks, key=lambda l: l.id)
    ]
    return "[\n" + ",\n".join(rows) + "\n]\n"


def landmarks_from_json(text: str):
    return [Landmark2D(row["id"], Window(row["window"]), float(row["x"]), float(row["y"]))
            for row in json.loads(text)]

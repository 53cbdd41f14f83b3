"""Sequential cluster detection over 2D micro-feature point sets, scatter
statistics, and knowledge-based assignment of the eye/nose/mouth windows.

The clustering scan follows the sequential scheme: take the next unprocessed
point x; when the closed disk V(x) of the configured radius holds at least
``alpha`` points (x included), a new cluster absorbs x together with every
point reachable through a chain of neighborhoods. Two decisions make the
result independent of input order, and both are load-bearing for the tests:

* chain interior points must pass the density test themselves (core-point
  chaining); non-core points are absorbed but never extend a chain;
* a non-core point in reach of several clusters joins the cluster of its
  nearest core point, ties going to the lexicographically smallest core.

Points never absorbed anywhere are reported explicitly as noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, LocalizationFailureError
from .imgproc import Raster, RegionOfInterest


@dataclass(frozen=True)
class ScdaParams:
    """Neighborhood radius (closed Euclidean disk) and density threshold."""

    radius: float = 5.0
    alpha: int = 10

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError(f"radius must be > 0, got {self.radius}")
        if self.alpha < 1:
            raise InvalidInputError(f"alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class PointCluster:
    """Member points with centroid, tight bbox and within-cluster scatter."""

    members: tuple
    centroid: np.ndarray
    bbox: RegionOfInterest
    scatter: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ScdaResult:
    clusters: tuple
    noise: tuple

    def partition_sizes(self):
        return [c.size for c in self.clusters]


def micro_features_from_mask(mask: Raster):
    """Foreground pixels of a binary raster as a list of (x, y) tuples."""
    ys, xs = np.nonzero(mask.plane(0))
    return [(int(x), int(y)) for x, y in zip(xs, ys)]


def scatter_stats(members) -> PointCluster:
    """Centroid, tight bounding box and within-cluster scatter matrix
    sum (p - mu)(p - mu)^T over the member points."""
    pts = np.asarray(list(members), dtype=np.float64)
    if pts.size == 0:
        raise InvalidInputError("scatter_stats requires at least one point")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scatter = centered.T @ centered
    bbox = RegionOfInterest(
        int(math.floor(pts[:, 0].min())), int(math.floor(pts[:, 1].min())),
        int(math.ceil(pts[:, 0].max())), int(math.ceil(pts[:, 1].max())),
    )
    ordered = tuple(sorted((float(x), float(y)) for x, y in pts))
    members_out = tuple(
        (int(x), int(y)) if float(x).is_integer() and float(y).is_integer() else (x, y)
        for x, y in ordered
    )
    return PointCluster(members_out, centroid, bbox, scatter)


def _neighbor_lists(pts, radius):
    cell = radius
    buckets = {}
    for i, (x, y) in enumerate(pts):
        buckets.setdefault((math.floor(x / cell), math.floor(y / cell)), []).append(i)
    r2 = radius * radius
    neigh = []
    for x, y in pts:
        cx, cy = math.floor(x / cell), math.floor(y / cell)
        found = []
        for bx in (cx - 1, cx, cx + 1):
            for by in (cy - 1, cy, cy + 1):
                for j in buckets.get((bx, by), ()):
                    dx, dy = x - pts[j][0], y - pts[j][1]
                    if dx * dx + dy * dy <= r2:
                        found.append(j)
        neigh.append(found)
    return neigh


def scda_cluster(points, params: ScdaParams) -> ScdaResult:
    """Cluster a micro-feature point set; see the module docstring for the
    chaining and tie rules. Duplicate points collapse to one."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    n = len(pts)
    if n == 0:
        return ScdaResult((), ())
    neigh = _neighbor_lists(pts, params.radius)
    core = [len(neigh[i]) >= params.alpha for i in range(n)]
    label = [-1] * n
    n_clusters = 0
    for i in range(n):  # lexicographic scan keeps cluster ids deterministic
        if label[i] != -1 or not core[i]:
            continue
        label[i] = n_clusters
        stack = [i]
        while stack:
            j = stack.pop()
            for m in neigh[j]:
                if core[m] and label[m] == -1:
                    label[m] = n_clusters
                    stack.append(m)
        n_clusters += 1
    # non-core points join the cluster of their nearest core point
    for i in range(n):
        if core[i]:
            continue
        best = None
        for j in neigh[i]:
            if not core[j]:
                continue
            d = math.dist(pts[i], pts[j])
            key = (d, pts[j])
            if best is None or key < best[0]:
                best = (key, j)
        if best is not None:
            label[i] = label[best[1]]
    groups = [[] for _ in range(n_clusters)]
    noise = []
    for i, lab in enumerate(label):
        (groups[lab] if lab != -1 else noise).append(pts[i])
    clusters = tuple(scatter_stats(g) for g in groups)
    noise_out = tuple((int(x), int(y)) if x.is_integer() and y.is_integer() else (x, y)
                      for x, y in noise)
    return ScdaResult(clusters, noise_out)


@dataclass(frozen=True)
class WindowRules:
    """Calibration constants for knowledge-based window assignment.

    All values are training placeholders kept in one record so they can be
    overridden from the pipeline configuration.
    """

    upper_band_frac: float = 0.55
    eye_top_k: int = 2
    row_tol_frac: float = 0.12
    nose_top_frac: float = 0.15
    nose_bottom_frac: float = 0.45
    mouth_bottom_frac: float = 0.75
    pad_frac: float = 0.10

    def __post_init__(self):
        if not 0 < self.upper_band_frac <= 1:
            raise InvalidInputError("upper_band_frac outside (0, 1]")
        if self.eye_top_k < 2:
            raise InvalidInputError("eye_top_k must be >= 2")
        if not (0 <= self.nose_top_frac < self.nose_bottom_frac < self.mouth_bottom_frac <= 1):
            raise InvalidInputError("window band fractions must be ordered")
        if self.row_tol_frac <= 0 or self.pad_frac < 0:
            raise InvalidInputError("row_tol_frac must be > 0 and pad_frac >= 0")


@dataclass(frozen=True)
class FeatureWindows:
    left_eye: RegionOfInterest
    right_eye: RegionOfInterest
    nose: RegionOfInterest
    mouth: RegionOfInterest

    def __post_init__(self):
        if self.left_eye.x0 >= self.right_eye.x0:
            raise InvalidInputError("left eye window must start left of right eye window")
        eye_row = (self.left_eye.center[1] + self.right_eye.center[1]) / 2.0
        if not eye_row < self.nose.center[1] < self.mouth.center[1]:
            raise InvalidInputError("windows must be ordered eyes above nose above mouth")

    def as_dict(self):
        return {
            "left_eye": self.left_eye, "right_eye": self.right_eye,
            "nose": self.nose, "mouth": self.mouth,
        }


def _mean_intensity(plane: np.ndarray, bbox: RegionOfInterest) -> float:
    return float(plane[bbox.y0:bbox.y1 + 1, bbox.x0:bbox.x1 + 1].mean())


def _padded_roi(x0, y0, x1, y1, pad, clip: RegionOfInterest) -> RegionOfInterest:
    roi = RegionOfInterest(
        max(clip.x0, math.floor(x0 - pad)), max(clip.y0, math.floor(y0 - pad)),
        min(clip.x1, math.ceil(x1 + pad)), min(clip.y1, math.ceil(y1 + pad)),
    )
    return roi


def assign_feature_windows(clusters, face_roi: RegionOfInterest, cb_plane: Raster,
                           rules: WindowRules = WindowRules()) -> FeatureWindows:
    """Locate the four feature windows from SCDA clusters.

    Eye candidates are the clusters whose centroid lies in the upper band of
    the face ROI, ranked by member count. The left eye is the leftmost of
    the top candidates; the right eye is the candidate on a similar row
    whose mean Cb intensity over its bbox is closest to the left eye's.
    Nose and mouth windows follow from eye row and ROI height fractions.
    """
    H = face_roi.height
    band_limit = face_roi.y0 + rules.upper_band_frac * H
    upper_half = [c for c in clusters
                  if face_roi.contains(c.centroid[0], c.centroid[1])
                  and c.centroid[1] <= face_roi.y0 + 0.5 * H]
    if len(upper_half) < 2:
        raise LocalizationFailureError(
            f"need >= 2 clusters in the upper half of the face ROI, found {len(upper_half)}",
            clusters)
    candidates = [c for c in clusters
                  if face_roi.contains(c.centroid[0], c.centroid[1])
                  and c.centroid[1] <= band_limit]
    candidates.sort(key=lambda c: (-c.size, c.centroid[0], c.centroid[1]))
    top = candidates[:rules.eye_top_k]
    left = min(top, key=lambda c: (c.centroid[0], c.centroid[1]))
    cb = cb_plane.plane(0)
    left_cb = _mean_intensity(cb, left.bbox)
    row_tol = rules.row_tol_frac * H
    eligible = [c for c in candidates
                if c is not left
                and abs(c.centroid[1] - left.centroid[1]) < row_tol
                and c.centroid[0] > left.centroid[0]]
    if not eligible:
        raise LocalizationFailureError("no right-eye candidate on the left eye's row", clusters)
    right = min(eligible, key=lambda c: (abs(_mean_intensity(cb, c.bbox) - left_cb),
                                         -c.size, c.centroid[0]))
    iod = float(np.hypot(*(right.centroid - left.centroid)))
    pad = rules.pad_frac * iod
    eye_row = (left.centroid[1] + right.centroid[1]) / 2.0
    lx, rx = left.centroid[0], right.centroid[0]
    left_win = _padded_roi(left.bbox.x0, left.bbox.y0, left.bbox.x1, left.bbox.y1, pad, face_roi)
    right_win = _padded_roi(right.bbox.x0, right.bbox.y0, right.bbox.x1, right.bbox.y1, pad, face_roi)
    nose = _padded_roi(lx, eye_row + rules.nose_top_frac * H,
                       rx, eye_row + rules.nose_bottom_frac * H, pad, face_roi)
    mouth = _padded_roi(lx, eye_row + rules.nose_bottom_frac * H,
                        rx, eye_row + rules.mouth_bottom_frac * H, pad, face_roi)
    return FeatureWindows(left_win, right_win, nose, mouth)


def clusters_to_json(result: ScdaResult) -> str:
    """Serialize an ScdaResult for the CLI's --dump-clusters flag."""
    payload = {
        "clusters": [
            {
                "members": [list(p) for p in c.members],
                "centroid": [round(float(v), 6) for v in c.centroid],
                "scatter": [[round(float(v), 6) for v in row] for row in c.scatter],
                "bbox": [c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1],
            }
            for c in result.clusters
        ],
        "noise": [list(p) for p in result.noise],
    }
    return json.dumps(payload, indent=2, sort_keys=True)

"""Depth assignment for frontal landmarks.

Visible-side depth comes from patch matching in the profile view: for a
landmark at (X, Y) the 3x3 frontal patch is compared (sum of squared
differences) against profile patches centered at (z, y') for y' inside an
adaptive row band [Y-d, Y+d]. The band half-width d starts at d_init and
grows by d_step while the global cost minimizer sits on the band boundary,
capped at d_max; "correlation result with minimum value" is read as SSD
minimization throughout. Ties break toward the smallest |y'-Y|, then the
smallest z.

Hidden-side depth uses the facial-symmetry relation: with the origin o at
the eye-center midpoint and d_or the distance from o to the visible mirror
partner,

    Z = sqrt(d_or^2 - (X - X_o)^2 - (Y - Y_o)^2) + Z_o

taking the positive branch; a negative radicand (measurement noise) clamps
to zero and flags the landmark instead of failing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AssemblyError, InvalidInputError
from .features import Window
from .imgproc import Raster


class Side(Enum):
    VISIBLE = "visible"
    HIDDEN = "hidden"
    MIDLINE = "midline"


@dataclass(frozen=True)
class Landmark3D:
    id: int
    x: float
    y: float
    z: float
    side: Side
    clamped: bool = False

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.z))):
            raise InvalidInputError(f"non-finite coordinates for landmark {self.id}")

    def xyz(self):
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class SoicParams:
    """3x3-kernel SSD search parameters; search_z is an inclusive column
    interval in the profile image (None = full width)."""

    d_init: int = 0
    d_step: int = 1
    d_max: int = 6
    search_z: tuple | None = None

    def __post_init__(self):
        if self.d_init < 0 or self.d_max < 0 or self.d_step < 1:
            raise InvalidInputError("need d_init >= 0, d_max >= 0, d_step >= 1")
        if self.search_z is not None:
            z0, z1 = self.search_z
            if z1 < z0:
                raise InvalidInputError(f"empty z search range {self.search_z}")


@dataclass(frozen=True)
class SymmetryFrame:
    """Origin landmark o plus the paired visible landmark's distance d_or."""

    origin: Landmark3D
    d_or: float

    def __post_init__(self):
        if self.d_or < 0:
            raise InvalidInputError(f"d_or must be >= 0, got {self.d_or}")


@dataclass(frozen=True)
class SoicResult:
    matches: dict
    failures: tuple


def _round_px(v: float) -> int:
    return int(math.floor(v + 0.5))


def soic_match(frontal: Raster, profile: Raster, landmarks, params: SoicParams) -> SoicResult:
    """Assign a profile-view column (depth) to each landmark; see module doc.

    Returns matches {id: z} and per-landmark failure records (id, reason)
    for landmarks whose frontal patch leaves the image.
    """
    if frontal.planes != 1 or profile.planes != 1:
        raise InvalidInputError("soic_match expects single-plane rasters")
    fr = frontal.data.astype(np.int64)
    pr = profile.data.astype(np.int64)
    ph, pw = pr.shape
    if params.search_z is None:
        z_lo, z_hi = 1, pw - 2
    else:
        z_lo = max(1, int(params.search_z[0]))
        z_hi = min(pw - 2, int(params.search_z[1]))
    if z_hi < z_lo:
        raise InvalidInputError("z search range does not intersect the profile image")
    windows = np.lib.stride_tricks.sliding_window_view(pr, (3, 3))
    matches, failures = {}, []
    for lm in landmarks:
        cx, cy = _round_px(lm.x), _round_px(lm.y)
        if not (1 <= cx <= frontal.width - 2 and 1 <= cy <= frontal.height - 2):
            failures.append((lm.id, f"3x3 patch at ({cx},{cy}) leaves the frontal image"))
            continue
        patch = fr[cy - 1:cy + 2, cx - 1:cx + 2]
        d = params.d_init
        while True:
            r_lo = max(1, cy - d)
            r_hi = min(ph - 2, cy + d)
            if r_hi < r_lo:
                failures.append((lm.id, f"row band around {cy} leaves the profile image"))
                break
            band = windows[r_lo - 1:r_hi, z_lo - 1:z_hi]
            cost = ((band - patch) ** 2).sum(axis=(2, 3))
            rows = np.arange(r_lo, r_hi + 1)
            zs = np.arange(z_lo, z_hi + 1)
            row_pen = np.broadcast_to(np.abs(rows - cy)[:, None], cost.shape)
            z_key = np.broadcast_to(zs[None, :], cost.shape)
            # primary key cost, then |row - cy|, then z (lexsort: last key first)
            flat = np.lexsort((z_key.ravel(), row_pen.ravel(), cost.ravel()))[0]
            ri, zi = np.unravel_index(flat, cost.shape)
            best_row = int(rows[ri])
            best_z = int(zs[zi])
            if abs(best_row - cy) == d and d < params.d_max:
                d += params.d_step
                continue
            matches[lm.id] = float(best_z)
            break
    return SoicResult(matches, tuple(failures))


def estimate_origin(left_eye: Landmark3D, right_eye: Landmark3D) -> Landmark3D:
    """Component-wise midpoint of the two eye centers."""
    return Landmark3D(-1, (left_eye.x + right_eye.x) / 2.0,
                      (left_eye.y + right_eye.y) / 2.0,
                      (left_eye.z + right_eye.z) / 2.0, Side.MIDLINE)


def pair_distance(visible: Landmark3D, origin: Landmark3D) -> float:
    """Euclidean distance from the origin to a visible-side landmark."""
    return float(np.linalg.norm(visible.xyz() - origin.xyz()))


def hidden_depth(xl: float, yl: float, frame: SymmetryFrame):
    """Depth of a hidden-side landmark from its mirror partner's d_or.

    Returns (z, clamped); a negative radicand clamps to the origin depth.
    """
    radicand = frame.d_or ** 2 - (xl - frame.origin.x) ** 2 - (yl - frame.origin.y) ** 2
    if radicand < 0.0:
        return frame.origin.z, True
    return math.sqrt(radicand) + frame.origin.z, False


def _eye_center(landmarks, window: Window, z_by_id, fallback_z=None):
    pts = [lm for lm in landmarks if lm.window is window]
    if not pts:
        raise AssemblyError(f"no landmarks in {window.value} window", [])
    cx = sum(lm.x for lm in pts) / len(pts)
    cy = sum(lm.y for lm in pts) / len(pts)
    zs = [z_by_id[lm.id] for lm in pts if lm.id in z_by_id]
    if zs:
        return Landmark3D(-1, cx, cy, sum(zs) / len(zs), Side.MIDLINE)
    if fallback_z is None:
        return None
    return Landmark3D(-1, cx, cy, fallback_z, Side.MIDLINE)


def build_3d_set(frontal60, soic_z, visible_ids, mirror_pairs):
    """Assemble the full 60-landmark 3D set.

    ``soic_z`` maps every id in ``visible_ids`` (visible + midline, the
    points matched in the profile view) to a depth; ``mirror_pairs`` maps
    each hidden id to its visible mirror partner. The symmetry origin is
    the midpoint of the two eye centers, a hidden eye's provisional depth
    being its visible twin's.
    """
    landmarks = {lm.id: lm for lm in frontal60}
    if sorted(landmarks) != list(range(60)):
        raise AssemblyError("frontal landmark ids must be exactly 0..59",
                            set(range(60)) ^ set(landmarks))
    visible_ids = set(visible_ids)
    mirror_pairs = dict(mirror_pairs)
    hidden_ids = set(mirror_pairs)
    if hidden_ids & visible_ids:
        raise AssemblyError("hidden and visible id sets overlap", hidden_ids & visible_ids)
    if hidden_ids | visible_ids != set(range(60)):
        raise AssemblyError("visible + hidden ids must cover 0..59",
                            set(range(60)) - (hidden_ids | visible_ids))
    if not set(mirror_pairs.values()) <= visible_ids:
        raise AssemblyError("mirror partners must be visible ids",
                            set(mirror_pairs.values()) - visible_ids)
    z_by_id = {int(i): float(z) for i, z in dict(soic_z).items()}
    missing = visible_ids - set(z_by_id)
    if missing:
        raise AssemblyError("missing depth matches for visible ids", missing)
    midline_ids = visible_ids - set(mirror_pairs.values())

    left_eye = _eye_center(frontal60, Window.LEFT_EYE, z_by_id, fallback_z=None)
    right_eye = _eye_center(frontal60, Window.RIGHT_EYE, z_by_id, fallback_z=None)
    if left_eye is None and right_eye is None:
        raise AssemblyError("neither eye window has a depth-matched landmark", [])
    if left_eye is None:
        left_eye = _eye_center(frontal60, Window.LEFT_EYE, z_by_id, fallback_z=right_eye.z)
    if right_eye is None:
        right_eye = _eye_center(frontal60, Window.RIGHT_EYE, z_by_id, fallback_z=left_eye.z)
    origin = estimate_origin(left_eye, right_eye)

    out = []
    for i in range(60):
        lm = landmarks[i]
        if i in visible_ids:
            side = Side.MIDLINE if i in midline_ids else Side.VISIBLE
            out.append(Landmark3D(i, lm.x, lm.y, z_by_id[i], side))
        else:
            partner = landmarks[mirror_pairs[i]]
            partner3d = Landmark3D(partner.id, partner.x, partner.y,
                                   z_by_id[partner.id], Side.VISIBLE)
            frame = SymmetryFrame(origin, pair_distance(partner3d, origin))
            z, clamped = hidden_depth(lm.x, lm.y, frame)
            out.append(Landmark3D(i, lm.x, lm.y, z, Side.HIDDEN, clamped))
    return out


def landmarks3d_to_json(landmarks) -> str:
    rows = [
        '  {"id": %d, "x": %.6f, "y": %.6f, "z": %.6f, "side": "%s", "clamped": %s}'
        % (lm.id, lm.x, lm.y, lm.z, lm.side.value, "true" if lm.clamped else "false")
        for lm in sorted(landmarks, key=lambda l: l.id)
    ]
    return "[\n" + ",\n".join(rows) + "\n]\n"


def landmarks3d_from_json(text: str):
    return [Landmark3D(r["id"], r["x"], r["y"], r["z"], Side(r["side"]), r["clamped"])
            for r in json.loads(text)]

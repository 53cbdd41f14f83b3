"""Synthetic two-view fixtures with known 3D ground truth.

Each of the 60 landmarks is rendered as a small three-level disk stamp
(25 pixels, radii < 1 / 2 / 3) with a per-landmark amplitude, on a flat
background. The frontal view renders every landmark at (x, y); the profile
view renders the 31 landmarks visible to both cameras at (z, y) with the
identical stamp, so at noise 0 every visible landmark's patch appears
verbatim at (z_true, y_true). Noise jitters the profile stamp centers.

Layout constraints the generator re-validates on every call:

* stamps pairwise disjoint in both views (Chebyshev distance >= 6);
* each feature's blobs chain into one cluster at the default clustering radius
  while distinct features stay separated;
* the eye depth is the scene minimum, shared by all 20 eye landmarks, so
  the symmetry origin plane sits behind every landmark;
* the foreground bounding box height is identical in both views and
  constant across seeds (the outline ring never jitters), which makes the
  default scale normalization the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .depth import Landmark3D, Side
from .errors import InvalidInputError
from .features import Landmark2D, Window
from .imgproc import Raster, Semantics

FRONTAL_SIZE = (230, 340)   # (width, height)
PROFILE_SIZE = (240, 340)
MIDLINE_X = 115
BACKGROUND = 20
EYE_Z = 40.0
ROI_HEIGHT = 275            # foreground bbox height + 2 px margin per side

# stamp: three-level disk, value = amp - 30 * ring(r)
_STAMP_OFFSETS = [(dx, dy) for dx in range(-2, 3) for dy in range(-2, 3)
                  if math.hypot(dx, dy) < 3.0]


def _stamp(img, cx, cy, amp):
    for dx, dy in _STAMP_OFFSETS:
        r = math.hypot(dx, dy)
        level = amp - 30 * (0 if r < 1 else 1 if r < 2 else 2)
        y, x = cy + dy, cx + dx
        if 0 <= y < img.shape[0] and 0 <= x < img.shape[1]:
            img[y, x] = max(img[y, x], level)


def _amplitude(lm_id: int) -> int:
    return 255 - lm_id


@dataclass(frozen=True)
class SyntheticFixture:
    seed: int
    noise: float
    frontal: Raster
    profile: Raster
    truth: tuple              # 60 ground-truth Landmark3D, id order
    visible_ids: frozenset    # the 31 ids rendered in the profile view
    mirror_pairs: dict        # hidden id -> visible id
    eye_row: float
    interocular: float

    def truth_by_id(self):
        return {lm.id: lm for lm in self.truth}

    def frontal_landmarks(self):
        """Ground-truth frontal 2D landmarks (for driving depth directly)."""
        return [Landmark2D(lm.id, _window_of(lm.id), lm.x, lm.y) for lm in self.truth]


def _window_of(lm_id: int) -> Window:
    if lm_id < 10:
        return Window.LEFT_EYE
    if lm_id < 20:
        return Window.RIGHT_EYE
    if lm_id < 32:
        return Window.NOSE
    if lm_id < 46:
        return Window.MOUTH
    return Window.OUTLINE


def _layout(rng):
    """Ground-truth (id -> (x, y, z, side)) for one seed."""
    jit = lambda: int(rng.integers(-1, 2))
    out = {}

    # eyes: vertical zigzag, all at the shared minimum depth EYE_Z
    for k in range(10):
        dx = (5 if k % 2 == 0 else -5) + jit()
        y = 53 + 6 * k
        xr = 145 + dx
        out[10 + k] = (float(xr), float(y), EYE_Z, Side.VISIBLE)
        out[k] = (float(2 * MIDLINE_X - xr), float(y), EYE_Z, Side.HIDDEN)

    def mirrored_block(hidden_base, visible_base, offsets, rows, z0):
        rows = [r + jit() for r in rows]
        offsets = [d + jit() for d in offsets]
        order = np.argsort(rows, kind="stable")
        zs = {int(order[i]): z0 + 8.0 * i for i in range(len(rows))}
        for j, (dx, y) in enumerate(zip(offsets, rows)):
            out[visible_base + j] = (float(MIDLINE_X + dx), float(y), zs[j], Side.VISIBLE)
            out[hidden_base + j] = (float(MIDLINE_X - dx), float(y), zs[j], Side.HIDDEN)

    # nose: 2 midline + 5 mirrored pairs; depth staircase 56..104 by row order
    mid_rows = [130 + jit(), 178 + jit()]
    out[20] = (float(MIDLINE_X), float(mid_rows[0]), 56.0, Side.MIDLINE)
    out[21] = (float(MIDLINE_X), float(mid_rows[1]), 104.0, Side.MIDLINE)
    mirrored_block(22, 27, [8, 14, 20, 14, 8], [138, 146, 154, 162, 170], 64.0)
    # mouth: 7 mirrored pairs, depths 112..160
    mirrored_block(32, 39, [5, 11, 17, 23, 28, 24, 18],
                   [216, 224, 232, 240, 248, 256, 264], 112.0)
    # outline: fixed ellipse ring (never jittered), depths 176..224
    angles = [-81, -53, -27, 0, 27, 53, 81]
    for j, deg in enumerate(angles):
        a = math.radians(deg)
        x = round(MIDLINE_X + 92.0 * math.cos(a))
        y = round(168.0 + 135.0 * math.sin(a))
        out[53 + j] = (float(x), float(y), 176.0 + 8.0 * j, Side.VISIBLE)
        out[46 + j] = (float(2 * MIDLINE_X - x), float(y), 176.0 + 8.0 * j, Side.HIDDEN)
    return out


MIRROR_PAIRS = {**{k: 10 + k for k in range(10)},
                **{22 + j: 27 + j for j in range(5)},
                **{32 + j: 39 + j for j in range(7)},
                **{46 + j: 53 + j for j in range(7)}}
VISIBLE_IDS = frozenset(sorted(set(MIRROR_PAIRS.values()) | {20, 21}))


def _validate(layout):
    pts = {i: layout[i] for i in range(60)}
    vis = [(i, pts[i]) for i in sorted(VISIBLE_IDS)]
    # disjoint stamps, frontal and profile
    for i in range(60):
        for j in range(i + 1, 60):
            dcheb = max(abs(pts[i][0] - pts[j][0]), abs(pts[i][1] - pts[j][1]))
            assert dcheb >= 6, f"frontal stamps {i},{j} too close ({dcheb})"
    for a in range(len(vis)):
        for b in range(a + 1, len(vis)):
            (_, pa), (_, pb) = vis[a], vis[b]
            dcheb = max(abs(pa[2] - pb[2]), abs(pa[1] - pb[1]))
            assert dcheb >= 6, f"profile stamps {vis[a][0]},{vis[b][0]} too close"
    # origin plane behind every landmark
    assert all(p[2] >= EYE_Z for p in pts.values()), "eye depth must be the minimum"
    # exact mirror symmetry
    for h, v in MIRROR_PAIRS.items():
        assert pts[h][1] == pts[v][1] and pts[h][2] == pts[v][2]
        assert pts[h][0] + pts[v][0] == 2 * MIDLINE_X
    # clustering geometry at the default radius (9): each feature chains into one
    # cluster (stamp gap <= radius  <=>  center distance <= radius + 5.66)
    # while distinct features stay clearly apart
    features = [list(range(0, 10)), list(range(10, 20)),
                list(range(20, 32)), list(range(32, 46))]
    link, apart = 14.5, 18.0
    for group in features:
        reached = {group[0]}
        frontier = [group[0]]
        while frontier:
            a = frontier.pop()
            for b in group:
                if b not in reached and math.dist(pts[a][:2], pts[b][:2]) <= link:
                    reached.add(b)
                    frontier.append(b)
        assert reached == set(group), f"feature blobs {sorted(set(group) - reached)} unchained"
    singles = [[i] for i in range(46, 60)]
    for ga in features + singles:
        for gb in features + singles:
            if ga is gb or (len(ga) == 1 and len(gb) == 1 and ga > gb):
                continue
            if ga is not gb:
                d = min(math.dist(pts[a][:2], pts[b][:2]) for a in ga for b in gb)
                assert d >= apart, f"features {ga[0]},{gb[0]} too close ({d:.1f})"


def synth_fixture(seed: int, noise: float = 0.0) -> SyntheticFixture:
    """Deterministic synthetic fixture; ``noise`` jitters profile stamp
    centers by a rounded Gaussian of that many pixels."""
    if noise < 0:
        raise InvalidInputError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    layout = _layout(rng)
    _validate(layout)

    wf, h = FRONTAL_SIZE
    wp, _ = PROFILE_SIZE
    frontal = np.full((h, wf), BACKGROUND, dtype=np.uint8)
    profile = np.full((h, wp), BACKGROUND, dtype=np.uint8)
    for i in range(60):
        x, y, z, _ = layout[i]
        _stamp(frontal, int(round(x)), int(round(y)), _amplitude(i))
    for i in sorted(VISIBLE_IDS):
        x, y, z, _ = layout[i]
        dz = dy = 0
        if noise > 0:
            dz = int(round(rng.normal(0.0, noise)))
            dy = int(round(rng.normal(0.0, noise)))
        _stamp(profile, int(round(z)) + dz, int(round(y)) + dy, _amplitude(i))

    truth = tuple(Landmark3D(i, *layout[i]) for i in range(60))
    eye_rows = [layout[i][1] for i in range(20)]
    left = np.mean([layout[i][:3] for i in range(10)], axis=0)
    right = np.mean([layout[i][:3] for i in range(10, 20)], axis=0)
    return SyntheticFixture(
        seed, noise,
        Raster.from_array(frontal, Semantics.GRAY),
        Raster.from_array(profile, Semantics.GRAY),
        truth, VISIBLE_IDS, dict(MIRROR_PAIRS),
        float(np.mean(eye_rows)), float(np.linalg.norm(right - left)),
    )


def truth_to_json(fx: SyntheticFixture) -> str:
    payload = {
        "seed": fx.seed,
        "noise": fx.noise,
        "interocular": round(fx.interocular, 6),
        "eye_row": round(fx.eye_row, 6),
        "visible_ids": sorted(fx.visible_ids),
        "mirror_pairs": {str(k): v for k, v in sorted(fx.mirror_pairs.items())},
        "landmarks": [
            {"id": lm.id, "x": lm.x, "y": lm.y, "z": lm.z, "side": lm.side.value}
            for lm in fx.truth
        ],
    }
    return json.dumps(payload, indent=1, sort_keys=True)

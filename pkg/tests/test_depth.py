import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from orthoface.depth import (
    Landmark3D,
    Side,
    SoicParams,
    SymmetryFrame,
    build_3d_set,
    estimate_origin,
    hidden_depth,
    landmarks3d_from_json,
    landmarks3d_to_json,
    pair_distance,
    soic_match,
)
from orthoface.errors import AssemblyError, InvalidInputError
from orthoface.features import Landmark2D, Window
from orthoface.imgproc import Raster, Semantics


def gray(arr):
    return Raster.from_array(np.asarray(arr, dtype=np.uint8), Semantics.GRAY)


def lm2(i, x, y, window=Window.NOSE):
    return Landmark2D(i, window, float(x), float(y))


def stamp(img, cx, cy, patch):
    img[cy - 1:cy + 2, cx - 1:cx + 2] = patch


# --- soic_match -----------------------------------------------------------------

def test_planted_patch_recovered_exactly():
    rng = np.random.default_rng(3)
    frontal = rng.integers(0, 200, size=(30, 30), dtype=np.uint8)
    cx, cy = 12, 15
    patch = frontal[cy - 1:cy + 2, cx - 1:cx + 2]
    profile = np.full((30, 40), 30, dtype=np.uint8)
    z_true = 27
    stamp(profile, z_true, cy, patch)
    res = soic_match(gray(frontal), gray(profile), [lm2(0, cx, cy)], SoicParams())
    assert res.matches == {0: float(z_true)}
    ref_z, ref_row, ref_cost = oracles.ssd_exhaustive(frontal, profile, cx, cy)
    assert (ref_z, ref_row, ref_cost) == (z_true, cy, 0)


def test_constant_profile_tie_breaks_to_smallest_z():
    frontal = np.zeros((20, 20), dtype=np.uint8)
    frontal[9:12, 9:12] = 50
    profile = np.full((20, 25), 80, dtype=np.uint8)
    res = soic_match(gray(frontal), gray(profile), [lm2(7, 10, 10)], SoicParams())
    assert res.matches == {7: 1.0}  # smallest in-range z, y' = Y


def test_margin_growth_reaches_offset_row():
    rng = np.random.default_rng(9)
    frontal = rng.integers(0, 200, size=(26, 26), dtype=np.uint8)
    cx, cy = 13, 12
    patch = frontal[cy - 1:cy + 2, cx - 1:cx + 2]
    profile = np.full((26, 34), 10, dtype=np.uint8)
    z_true, row_true = 24, cy + 2
    stamp(profile, z_true, row_true, patch)

    grown = soic_match(gray(frontal), gray(profile), [lm2(0, cx, cy)],
                       SoicParams(d_max=3))
    assert grown.matches == {0: float(z_true)}
    ref_z, _, _ = oracles.ssd_exhaustive(frontal, profile, cx, cy,
                                         row_range=(cy - 3, cy + 3))
    assert ref_z == z_true

    capped = soic_match(gray(frontal), gray(profile), [lm2(0, cx, cy)],
                        SoicParams(d_max=1))
    ref_z1, _, _ = oracles.ssd_exhaustive(frontal, profile, cx, cy,
                                          row_range=(cy - 1, cy + 1))
    assert capped.matches == {0: float(ref_z1)}
    assert capped.matches[0] != float(z_true) or ref_z1 == z_true


def test_soic_matches_exhaustive_oracle_when_margin_covers():
    # planted-patch fixtures: flat background so the band minimum walks
    # toward the planted row instead of stalling on background clutter
    # |offset| <= 1 guarantees the cost-0 row is in band once d reaches 1,
    # so the walk cannot stall on an interior background minimum
    rng = np.random.default_rng(17)
    for _ in range(15):
        frontal = rng.integers(0, 255, size=(24, 24), dtype=np.uint8)
        cx, cy = int(rng.integers(4, 20)), int(rng.integers(4, 20))
        profile = np.full((24, 28), int(rng.integers(0, 60)), dtype=np.uint8)
        offset = int(rng.integers(-1, 2))
        row = min(max(cy + offset, 1), 22)
        z_true = int(rng.integers(1, 27))
        stamp(profile, z_true, row, frontal[cy - 1:cy + 2, cx - 1:cx + 2])
        res = soic_match(gray(frontal), gray(profile), [lm2(0, cx, cy)],
                         SoicParams(d_max=6))
        ref_z, _, ref_cost = oracles.ssd_exhaustive(frontal, profile, cx, cy,
                                                    row_range=(cy - 6, cy + 6))
        if ref_cost == 0:
            assert res.matches[0] == float(ref_z)


def test_soic_invariant_to_shared_intensity_offset():
    rng = np.random.default_rng(21)
    frontal = rng.integers(0, 180, size=(20, 20), dtype=np.uint8)
    profile = rng.integers(0, 180, size=(20, 26), dtype=np.uint8)
    lms = [lm2(0, 9, 9), lm2(1, 14, 12)]
    base = soic_match(gray(frontal), gray(profile), lms, SoicParams())
    shifted = soic_match(gray(frontal + 40), gray(profile + 40), lms, SoicParams())
    assert base.matches == shifted.matches


def test_patch_out_of_bounds_recorded_not_raised():
    frontal = np.zeros((10, 10), dtype=np.uint8)
    profile = np.zeros((10, 12), dtype=np.uint8)
    res = soic_match(gray(frontal), gray(profile), [lm2(5, 0, 4), lm2(6, 5, 5)],
                     SoicParams())
    assert [f[0] for f in res.failures] == [5]
    assert 6 in res.matches


def test_empty_search_range_rejected():
    img = gray(np.zeros((10, 10)))
    with pytest.raises(InvalidInputError):
        SoicParams(search_z=(5, 4))
    with pytest.raises(InvalidInputError):
        soic_match(img, img, [lm2(0, 5, 5)], SoicParams(search_z=(50, 60)))


# --- origin / distance / hidden depth --------------------------------------------

def l3(x, y, z, side=Side.VISIBLE):
    return Landmark3D(0, float(x), float(y), float(z), side)


def test_origin_midpoint_examples():
    assert estimate_origin(l3(-10, 0, 5), l3(10, 0, 5)).xyz().tolist() == [0, 0, 5]
    p = l3(3, -2, 7)
    assert estimate_origin(p, p).xyz().tolist() == [3, -2, 7]
    assert estimate_origin(l3(1, 2, 3), l3(3, 6, 9)).xyz().tolist() == [2, 4, 6]


def test_pair_distance_examples():
    o = l3(0, 0, 0)
    assert pair_distance(o, o) == 0.0
    assert pair_distance(l3(3, 4, 12), o) == pytest.approx(13.0, abs=1e-12)


def test_pair_distance_random_vs_scalar():
    rng = np.random.default_rng(23)
    for _ in range(50):
        a, b = rng.uniform(-50, 50, size=(2, 3))
        d = pair_distance(l3(*a), l3(*b))
        ref = math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b)))
        assert abs(d - ref) <= 1e-12


def test_hidden_depth_at_origin_column():
    frame = SymmetryFrame(l3(2, 3, 4), 5.0)
    z, clamped = hidden_depth(2.0, 3.0, frame)
    assert (z, clamped) == (9.0, False)  # d_or + z_o


def test_hidden_depth_mirror_recovers_visible_z():
    origin = l3(0, 0, 0)
    visible = l3(3, 4, 12)
    frame = SymmetryFrame(origin, pair_distance(visible, origin))
    z, clamped = hidden_depth(-3.0, 4.0, frame)
    assert not clamped
    assert z == pytest.approx(12.0, abs=1e-9)


def test_hidden_depth_negative_radicand_clamps():
    frame = SymmetryFrame(l3(0, 0, 0), 5.0)
    z, clamped = hidden_depth(4.0, 4.0, frame)
    assert clamped and z == 0.0


@given(st.tuples(*[st.floats(-100, 100) for _ in range(3)]),
       st.floats(-100, 100), st.floats(-100, 100), st.floats(0.1, 100))
@settings(max_examples=200, deadline=None)
def test_hidden_depth_sphere_identity(o, dx, dy, dz):
    origin = l3(*o)
    # +Z branch: visible point strictly in front of the origin plane
    visible = l3(origin.x + dx, origin.y + dy, origin.z + dz)
    d_or = pair_distance(visible, origin)
    frame = SymmetryFrame(origin, d_or)
    mirror_x = 2 * origin.x - visible.x
    z, clamped = hidden_depth(mirror_x, visible.y, frame)
    assert not clamped
    lhs = (z - origin.z) ** 2 + (mirror_x - origin.x) ** 2 + (visible.y - origin.y) ** 2
    assert lhs == pytest.approx(d_or ** 2, rel=1e-9, abs=1e-9)
    assert z == pytest.approx(visible.z, rel=1e-9, abs=1e-9)


# --- build_3d_set ------------------------------------------------------------------

# Right-eye offsets from the eye midpoint (50, 40): exact Pythagorean pairs
# whose means are dyadic, so the origin and every eye radicand evaluate
# exactly (eye landmarks sit exactly on the origin depth plane).
EYE_OFFSETS = [(3, 4), (3, -4), (6, 8), (6, -8), (9, 12), (9, -12),
               (20, 21), (20, -21), (2, 1.5), (2, -1.5)]


def symmetric_config():
    """Tiny synthetic 60-landmark frontal set, mirror-symmetric about x=50.

    Eye depth (30) is the scene minimum so the origin plane sits behind
    every other landmark (positive square-root branch).
    """
    frontal, soic, visible, mirror = [], {}, set(), {}
    for k, (dx, dy) in enumerate(EYE_OFFSETS):
        frontal.append(lm2(k, 50 - dx, 40 + dy, Window.LEFT_EYE))
        frontal.append(lm2(10 + k, 50 + dx, 40 + dy, Window.RIGHT_EYE))
        soic[10 + k] = 30.0
        visible.add(10 + k)
        mirror[k] = 10 + k
    rng = np.random.default_rng(29)
    blocks = [(Window.NOSE, 20, 25, 5), (Window.MOUTH, 32, 39, 7),
              (Window.OUTLINE, 46, 53, 7)]
    for window, left_base, right_base, count in blocks:
        for k in range(count):
            xr = 58 + 3 * k % 25
            y = 60 + 9 * k + left_base
            z = 31 + float(rng.integers(0, 40))
            frontal.append(lm2(left_base + k, 100 - xr, y, window))
            frontal.append(lm2(right_base + k, xr, y, window))
            soic[right_base + k] = z
            visible.add(right_base + k)
            mirror[left_base + k] = right_base + k
    # two midline ids inside the nose block
    for mid_id, y, z in ((30, 55.0, 61.0), (31, 60.0, 64.0)):
        frontal.append(lm2(mid_id, 50.0, y, Window.NOSE))
        soic[mid_id] = z
        visible.add(mid_id)
    return frontal, soic, visible, mirror


def test_symmetric_set_hidden_z_equals_mirror_z():
    frontal, soic, visible, mirror = symmetric_config()
    out = build_3d_set(frontal, soic, visible, mirror)
    assert sorted(lm.id for lm in out) == list(range(60))
    by_id = {lm.id: lm for lm in out}
    for hid, vis in mirror.items():
        assert not by_id[hid].clamped
        assert by_id[hid].z == pytest.approx(by_id[vis].z, abs=1e-9)
    sides = {lm.id: lm.side for lm in out}
    assert all(sides[h] is Side.HIDDEN for h in mirror)
    assert all(sides[v] is Side.VISIBLE for v in mirror.values())
    midline = visible - set(mirror.values())
    assert all(sides[m] is Side.MIDLINE for m in midline)


def test_injected_asymmetry_flags_only_that_landmark():
    frontal, soic, visible, mirror = symmetric_config()
    # a hidden non-eye landmark: bumping an eye landmark would move the
    # origin and perturb every other eye mirror with it
    victim = min(h for h in mirror if h >= 20)
    bumped = []
    for lm in frontal:
        if lm.id == victim:
            bumped.append(lm2(lm.id, lm.x - 90.0, lm.y, lm.window))
        else:
            bumped.append(lm)
    out = build_3d_set(bumped, soic, visible, mirror)
    by_id = {lm.id: lm for lm in out}
    assert by_id[victim].clamped
    for hid, vis in mirror.items():
        if hid != victim:
            assert not by_id[hid].clamped
            assert by_id[hid].z == pytest.approx(by_id[vis].z, abs=1e-9)


def test_missing_visible_id_raises_assembly_error():
    frontal, soic, visible, mirror = symmetric_config()
    dropped = dict(soic)
    victim = sorted(visible)[0]
    del dropped[victim]
    with pytest.raises(AssemblyError) as err:
        build_3d_set(frontal, dropped, visible, mirror)
    assert victim in err.value.ids


def test_partition_mismatch_raises():
    frontal, soic, visible, mirror = symmetric_config()
    bad_mirror = dict(mirror)
    some_hidden = next(iter(bad_mirror))
    del bad_mirror[some_hidden]
    with pytest.raises(AssemblyError):
        build_3d_set(frontal, soic, visible, bad_mirror)


def test_landmarks3d_json_roundtrip():
    frontal, soic, visible, mirror = symmetric_config()
    out = build_3d_set(frontal, soic, visible, mirror)
    text = landmarks3d_to_json(out)
    back = landmarks3d_from_json(text)
    assert landmarks3d_to_json(back) == text
    assert '"side": "hidden"' in text and '"clamped": false' in text

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from orthoface.errors import InvalidInputError, LocalizationFailureError
from orthoface.imgproc import Raster, RegionOfInterest, Semantics
from orthoface.scda import (
    FeatureWindows,
    ScdaParams,
    WindowRules,
    assign_feature_windows,
    clusters_to_json,
    micro_features_from_mask,
    scatter_stats,
    scda_cluster,
)


def as_sets(result):
    return {frozenset(norm(c.members)) for c in result.clusters}


def oracle_sets(points, radius, alpha):
    pts = sorted({(float(x), float(y)) for x, y in points})
    clusters, noise = oracles.density_reachability_oracle(pts, radius, alpha)
    named = {frozenset(pts[i] for i in c) for c in clusters}
    return named, {pts[i] for i in noise}


def norm(points):
    return {(float(x), float(y)) for x, y in points}


# --- scda_cluster -------------------------------------------------------------

def test_empty_point_set():
    res = scda_cluster([], ScdaParams(radius=2, alpha=2))
    assert res.clusters == () and res.noise == ()


def test_fully_connected_blob_single_cluster():
    pts = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1)]
    res = scda_cluster(pts, ScdaParams(radius=3, alpha=3))
    assert len(res.clusters) == 1
    assert res.clusters[0].size == 5
    assert res.noise == ()


def test_two_blobs_and_stragglers_match_oracle():
    rng = np.random.default_rng(5)
    radius, alpha = 2.0, 4
    blob_a = [(int(x), int(y)) for x in range(5) for y in range(4)]
    blob_b = [(x + 40, y) for x, y in blob_a]
    stragglers = [(100, 100), (120, 5), (60, 60)]
    pts = blob_a + blob_b + stragglers
    rng.shuffle(pts)
    res = scda_cluster(pts, ScdaParams(radius=radius, alpha=alpha))
    ref_clusters, ref_noise = oracle_sets(pts, radius, alpha)
    assert sorted(c.size for c in res.clusters) == [20, 20]
    assert as_sets(res) == ref_clusters
    assert norm(res.noise) == ref_noise


def random_instance(rng, max_points=200):
    n = int(rng.integers(0, max_points + 1))
    pts = [(int(x), int(y)) for x, y in rng.integers(0, 60, size=(n, 2))]
    radius = float(rng.uniform(1.0, 8.0))
    alpha = int(rng.integers(1, 9))
    return pts, radius, alpha


def test_random_instances_match_reachability_oracle():
    rng = np.random.default_rng(11)
    for _ in range(15):
        pts, radius, alpha = random_instance(rng, max_points=120)
        res = scda_cluster(pts, ScdaParams(radius=radius, alpha=alpha))
        ref_clusters, ref_noise = oracle_sets(pts, radius, alpha)
        assert as_sets(res) == ref_clusters
        assert norm(res.noise) == ref_noise


def test_order_invariance_under_shuffles():
    rng = np.random.default_rng(13)
    pts, radius, alpha = random_instance(rng, max_points=80)
    base = scda_cluster(pts, ScdaParams(radius=radius, alpha=alpha))
    for _ in range(20):
        shuffled = list(pts)
        rng.shuffle(shuffled)
        res = scda_cluster(shuffled, ScdaParams(radius=radius, alpha=alpha))
        assert as_sets(res) == as_sets(base)
        assert norm(res.noise) == norm(base.noise)


def test_partition_covers_input_disjointly():
    rng = np.random.default_rng(17)
    for _ in range(10):
        pts, radius, alpha = random_instance(rng, max_points=100)
        res = scda_cluster(pts, ScdaParams(radius=radius, alpha=alpha))
        seen = set()
        for c in res.clusters:
            mem = norm(c.members)
            assert not (seen & mem)
            seen |= mem
        assert not (seen & norm(res.noise))
        assert seen | norm(res.noise) == norm(pts)


def test_scda_params_validated():
    with pytest.raises(InvalidInputError):
        ScdaParams(radius=0, alpha=1)
    with pytest.raises(InvalidInputError):
        ScdaParams(radius=1, alpha=0)


def test_micro_features_from_mask():
    m = np.zeros((4, 6), dtype=np.uint8)
    m[1, 2] = 255
    m[3, 5] = 255
    raster = Raster.from_array(m, Semantics.BINARY)
    assert sorted(micro_features_from_mask(raster)) == [(2, 1), (5, 3)]


# --- scatter_stats --------------------------------------------------------------

def test_scatter_single_point():
    c = scatter_stats([(3, 7)])
    assert np.allclose(c.centroid, [3, 7])
    assert np.allclose(c.scatter, np.zeros((2, 2)))
    assert (c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1) == (3, 7, 3, 7)


def test_scatter_two_points():
    c = scatter_stats([(0, 0), (2, 0)])
    assert np.allclose(c.centroid, [1, 0])
    assert np.allclose(c.scatter, [[2, 0], [0, 0]])


def test_scatter_unit_square_isotropic():
    c = scatter_stats([(0, 0), (1, 0), (0, 1), (1, 1)])
    assert np.allclose(c.scatter, [[1, 0], [0, 1]])


def test_scatter_empty_rejected():
    with pytest.raises(InvalidInputError):
        scatter_stats([])


@given(st.lists(st.tuples(st.integers(0, 300), st.integers(0, 300)), min_size=1, max_size=40),
       st.integers(0, 50), st.integers(0, 50))
@settings(max_examples=60, deadline=None)
def test_scatter_translation_equivariance(pts, dx, dy):
    base = scatter_stats(pts)
    moved = scatter_stats([(x + dx, y + dy) for x, y in pts])
    assert np.allclose(moved.centroid, base.centroid + [dx, dy], atol=1e-9)
    assert np.allclose(moved.scatter, base.scatter, atol=1e-6)


def test_scatter_eigenvalues_nonnegative():
    rng = np.random.default_rng(19)
    for _ in range(25):
        pts = rng.integers(0, 100, size=(int(rng.integers(1, 30)), 2))
        c = scatter_stats([tuple(p) for p in pts])
        assert np.linalg.eigvalsh(c.scatter).min() >= -1e-9


# --- assign_feature_windows -------------------------------------------------------

def blob(cx, cy, half=1):
    return [(x, y) for x in range(cx - half, cx + half + 1)
            for y in range(cy - half, cy + half + 1)]


def test_symmetric_eyes_give_mirror_windows():
    roi = RegionOfInterest(0, 0, 99, 99)
    left = scatter_stats(blob(30, 20))
    right = scatter_stats(blob(69, 20))
    cb = Raster.from_array(np.full((100, 100), 90), Semantics.GRAY)
    win = assign_feature_windows([left, right], roi, cb)
    assert win.left_eye.y0 == win.right_eye.y0 and win.left_eye.y1 == win.right_eye.y1
    assert win.left_eye.x0 - roi.x0 == roi.x1 - win.right_eye.x1
    assert win.left_eye.x1 - roi.x0 == roi.x1 - win.right_eye.x0


def test_windows_contain_generating_blobs():
    roi = RegionOfInterest(0, 0, 99, 99)
    eye_l = scatter_stats(blob(30, 20, half=1))
    eye_r = scatter_stats(blob(69, 20, half=1))
    nose = scatter_stats(blob(49, 50, half=0) + [(50, 50)])
    mouth = scatter_stats(blob(49, 80, half=0) + [(50, 80)])
    cb = Raster.from_array(np.full((100, 100), 90), Semantics.GRAY)
    win = assign_feature_windows([eye_l, eye_r, nose, mouth], roi, cb)
    assert win.left_eye.contains(*eye_l.centroid)
    assert win.right_eye.contains(*eye_r.centroid)
    assert win.nose.contains(*nose.centroid)
    assert win.mouth.contains(*mouth.centroid)


def test_single_blob_fails_localization():
    roi = RegionOfInterest(0, 0, 99, 99)
    only = scatter_stats(blob(40, 20))
    cb = Raster.from_array(np.full((100, 100), 90), Semantics.GRAY)
    with pytest.raises(LocalizationFailureError) as err:
        assign_feature_windows([only], roi, cb)
    assert err.value.clusters == [only]


def test_right_eye_chosen_by_cb_similarity():
    roi = RegionOfInterest(0, 0, 99, 99)
    left = scatter_stats(blob(25, 20))
    true_right = scatter_stats(blob(70, 21))
    impostor = scatter_stats(blob(50, 19))
    cb_img = np.full((100, 100), 200, dtype=np.uint8)
    cb_img[18:24, 23:28] = 90   # left eye region dark in Cb
    cb_img[18:24, 68:73] = 95   # true right eye close to left's mean
    win = assign_feature_windows(
        [left, true_right, impostor], roi,
        Raster.from_array(cb_img, Semantics.GRAY))
    assert win.right_eye.contains(*true_right.centroid)


def test_window_rules_validated():
    with pytest.raises(InvalidInputError):
        WindowRules(upper_band_frac=0.0)
    with pytest.raises(InvalidInputError):
        WindowRules(nose_top_frac=0.5, nose_bottom_frac=0.4)


def test_feature_windows_ordering_enforced():
    e = RegionOfInterest(10, 10, 20, 20)
    with pytest.raises(InvalidInputError):
        FeatureWindows(e, RegionOfInterest(30, 10, 40, 20),
                       RegionOfInterest(15, 0, 35, 5),   # nose above eyes
                       RegionOfInterest(15, 60, 35, 70))


def test_cluster_json_dump_roundtrips():
    res = scda_cluster([(0, 0), (1, 0), (0, 1), (40, 40)], ScdaParams(radius=2, alpha=3))
    payload = json.loads(clusters_to_json(res))
    assert len(payload["clusters"]) == 1
    assert payload["noise"] == [[40, 40]]
    c = payload["clusters"][0]
    assert set(c) == {"members", "centroid", "scatter", "bbox"}
    assert sorted(map(tuple, c["members"])) == [(0, 0), (0, 1), (1, 0)]

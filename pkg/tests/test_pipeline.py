import json

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from orthoface.cli import main
from orthoface.config import PipelineConfig
from orthoface.errors import StageError
from orthoface.fixtures import synth_fixture
from orthoface.imgproc import write_pnm
from orthoface.mesh import parse_obj
from orthoface.pipeline import infer_side_tables, outline_hull, run_pipeline


@pytest.fixture(scope="module")
def fixture_paths(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("fx")
    fx = synth_fixture(0)
    write_pnm(fx.frontal, tmp / "frontal.pgm")
    write_pnm(fx.profile, tmp / "profile.pgm")
    return fx, tmp / "frontal.pgm", tmp / "profile.pgm"


@pytest.fixture(scope="module")
def run_result(fixture_paths, tmp_path_factory):
    fx, f, p = fixture_paths
    out = tmp_path_factory.mktemp("out")
    return fx, run_pipeline(f, p, PipelineConfig(), out_dir=out,
                            dumps={"clusters", "windows", "edges", "mask"}), out


def hungarian_errors(landmarks3d, truth):
    C = np.array([[np.linalg.norm([e.x - g.x, e.y - g.y, e.z - g.z]) for g in truth]
                  for e in landmarks3d])
    ri, ci = linear_sum_assignment(C)
    return C[ri, ci]


def test_end_to_end_reconstruction_accuracy(run_result):
    fx, res, _ = run_result
    assert len(res.landmarks3d) == 60
    errs = hungarian_errors(res.landmarks3d, fx.truth)
    assert errs.max() < 2.0
    assert res.report.normalized_mse < 1e-8  # exact control interpolation


def test_report_counts_and_durations(run_result):
    _, res, _ = run_result
    r = res.report
    assert (r.visible_count, r.hidden_count, r.midline_count) == (29, 29, 2)
    assert r.landmark_count == 60
    assert all(v >= 0 for v in r.stage_seconds.values())
    assert abs(sum(r.stage_seconds.values()) - r.total_seconds) <= 0.1 * r.total_seconds
    assert r.method == "dffd"
    assert r.config_hash == PipelineConfig().config_hash()
    assert r.scale_frontal == 1.0 and r.scale_profile == 1.0


def test_output_files_written(run_result):
    _, res, out = run_result
    verts, faces = parse_obj((out / "model.obj").read_text())
    assert len(verts) == 140 and len(faces) == 264
    lm2 = json.loads((out / "landmarks2d.json").read_text())
    lm3 = json.loads((out / "landmarks3d.json").read_text())
    assert len(lm2) == 60 and len(lm3) == 60
    report = json.loads((out / "report.json").read_text())
    assert report["landmark_count"] == 60
    assert (out / "clusters.json").exists()
    assert (out / "windows.json").exists()
    assert (out / "edges.pgm").exists()
    assert (out / "mask.pgm").exists()


def test_determinism_byte_identical_outputs(fixture_paths, tmp_path):
    fx, f, p = fixture_paths
    a = run_pipeline(f, p, PipelineConfig(), out_dir=tmp_path / "a")
    b = run_pipeline(f, p, PipelineConfig(), out_dir=tmp_path / "b")
    for name in ("model.obj", "landmarks2d.json", "landmarks3d.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.obj_text == b.obj_text


def test_procrustes_only_method(fixture_paths):
    import dataclasses

    from orthoface.config import MeshConfig

    fx, f, p = fixture_paths
    cfg = dataclasses.replace(PipelineConfig(), mesh=MeshConfig("procrustes"))
    res = run_pipeline(f, p, cfg)
    assert res.report.method == "procrustes"
    assert res.report.normalized_mse > 1e-6  # rigid+scale cannot fit exactly
    assert len(res.landmarks3d) == 60


def test_noise_monotonicity_over_ensemble(tmp_path):
    errs = {0.0: [], 2.0: []}
    for noise in errs:
        for seed in range(10):
            fx = synth_fixture(seed, noise=noise)
            f, p = tmp_path / "f.pgm", tmp_path / "p.pgm"
            write_pnm(fx.frontal, f)
            write_pnm(fx.profile, p)
            res = run_pipeline(f, p)
            errs[noise].append(float(hungarian_errors(res.landmarks3d, fx.truth).mean()))
    assert np.mean(errs[2.0]) >= np.mean(errs[0.0])


def test_truncated_image_gives_io_exit_code(tmp_path, fixture_paths):
    _, f, p = fixture_paths
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n50 50\n255\n\x00\x00")
    rc = main(["run", "--frontal", str(bad), "--profile", str(p),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2


def test_bad_config_gives_config_exit_code(tmp_path, fixture_paths):
    _, f, p = fixture_paths
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[scda]\nalpha = 0\n")
    rc = main(["run", "--frontal", str(f), "--profile", str(p),
               "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
    assert rc == 1


def test_stage_failure_gives_stage_exit_code(tmp_path):
    blank = tmp_path / "blank.pgm"
    import numpy as np

    from orthoface.imgproc import Raster, Semantics

    write_pnm(Raster.from_array(np.full((40, 40), 20, dtype=np.uint8), Semantics.GRAY), blank)
    rc = main(["run", "--frontal", str(blank), "--profile", str(blank),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 3


def test_stage_error_carries_stage_name(tmp_path):
    import numpy as np

    from orthoface.imgproc import Raster, Semantics

    blank = tmp_path / "blank.pgm"
    write_pnm(Raster.from_array(np.full((40, 40), 20, dtype=np.uint8), Semantics.GRAY), blank)
    with pytest.raises(StageError) as err:
        run_pipeline(blank, blank)
    assert err.value.stage in ("roi", "scda", "windows")


def test_cli_synth_then_run(tmp_path):
    assert main(["synth", "--seed", "4", "--out-dir", str(tmp_path / "fx")]) == 0
    truth = json.loads((tmp_path / "fx" / "truth.json").read_text())
    assert truth["seed"] == 4
    rc = main(["run", "--frontal", str(tmp_path / "fx" / "frontal.pgm"),
               "--profile", str(tmp_path / "fx" / "profile.pgm"),
               "--out-dir", str(tmp_path / "out"), "--dump-clusters"])
    assert rc == 0
    assert (tmp_path / "out" / "model.obj").exists()
    assert (tmp_path / "out" / "clusters.json").exists()


def test_cli_dump_clusters(tmp_path):
    main(["synth", "--seed", "1", "--out-dir", str(tmp_path)])
    rc = main(["dump-clusters", "--image", str(tmp_path / "frontal.pgm"),
               "--out", str(tmp_path / "clusters.json")])
    assert rc == 0
    payload = json.loads((tmp_path / "clusters.json").read_text())
    assert len(payload["clusters"]) >= 4


def test_cli_convert_roundtrip(tmp_path):
    pytest.importorskip("PIL")
    from PIL import Image

    rng = np.random.default_rng(3)
    arr = rng.integers(0, 256, size=(20, 30), dtype=np.uint8)
    src = tmp_path / "img.png"
    Image.fromarray(arr, mode="L").save(src)
    rc = main(["convert", "--src", str(src), "--dst", str(tmp_path / "img.pgm")])
    assert rc == 0
    from orthoface.imgproc import read_pnm

    assert np.array_equal(read_pnm(tmp_path / "img.pgm").data, arr)


def test_sides_auto_inference_counts(run_result):
    _, res, _ = run_result
    visible, mirror, x_mid = infer_side_tables(res.landmarks2d, 2.5)
    assert len(visible) == 31 and len(mirror) == 29
    assert x_mid == pytest.approx(115.0, abs=1.0)
    assert set(mirror.values()) <= visible


def test_outline_hull_is_convex(run_result):
    _, res, _ = run_result
    hull = outline_hull(res.landmarks2d)
    assert 3 <= len(hull) <= 14

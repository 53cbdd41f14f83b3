"""End-to-end orchestration: image pair in, deformed head mesh plus 60
3D landmarks and a fit report out.

Stage sequence: load -> roi -> scale -> equalize -> binarize -> scda ->
windows -> edges -> landmarks -> sides -> soic -> depth -> fit -> export.
Any stage failure raises StageError with the stage name and a diagnostic
payload; the CLI maps error classes onto stable exit codes.

Conventions worth knowing:

* Micro-feature thresholding and the Cb similarity cue use the raw
  (scaled) chroma plane; equalization feeds edge detection and depth
  matching only.
* "joint" equalization builds one lookup table from the pooled histogram
  of both views so profile/frontal intensities stay comparable for SSD
  matching; "per-image" is the textbook per-view remap.
* Hidden left-eye landmarks mirror-pair into the right-eye window; all
  other windows pair within themselves.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgproc
from .config import PipelineConfig
from .depth import Side, build_3d_set, landmarks3d_to_json, soic_match
from .errors import ConfigError, ImageIOError, OrthofaceError, StageError
from .features import (
    Window,
    assemble_frontal_set,
    convex_hull,
    landmarks_to_json,
)
from .imgproc import (
    Raster,
    RegionOfInterest,
    Semantics,
    StructuringElement,
    binarize,
    canny_edges,
    equalization_lut,
    morph,
    normalize_scale,
    read_pnm,
    rgb_to_ycbcr,
    write_pnm,
)
from .mesh import (
    apply_transform,
    build_deform_field,
    build_generic_model,
    export_obj,
    fit_mse,
    procrustes_align,
)
from .scda import assign_feature_windows, clusters_to_json, micro_features_from_mask, scda_cluster

MIRROR_WINDOW = {Window.LEFT_EYE: Window.RIGHT_EYE}


@dataclass
class FitReport:
    stage_seconds: dict = field(default_factory=dict)
    total_seconds: float = 0.0
    landmark_count: int = 0
    visible_count: int = 0
    hidden_count: int = 0
    midline_count: int = 0
    clamped_ids: list = field(default_factory=list)
    normalized_mse: float = 0.0
    interocular: float = 0.0
    scale_frontal: float = 1.0
    scale_profile: float = 1.0
    method: str = ""
    config_hash: str = ""

    def to_json(self) -> str:
        payload = {
            "stage_seconds": {k: round(v, 6) for k, v in self.stage_seconds.items()},
            "total_seconds": round(self.total_seconds, 6),
            "landmark_count": self.landmark_count,
            "visible_count": self.visible_count,
            "hidden_count": self.hidden_count,
            "midline_count": self.midline_count,
            "clamped_ids": self.clamped_ids,
            "normalized_mse": self.normalized_mse,
            "interocular": round(self.interocular, 6),
            "scale_frontal": self.scale_frontal,
            "scale_profile": self.scale_profile,
            "method": self.method,
            "config_hash": self.config_hash,
        }
        return json.dumps(payload, indent=1, sort_keys=True)


@dataclass
class PipelineResult:
    landmarks2d: list
    landmarks3d: list
    vertices: np.ndarray
    faces: tuple
    obj_text: str
    report: FitReport
    windows: object
    clusters: object


@contextmanager
def _stage(report: FitReport, name: str):
    start = time.perf_counter()
    try:
        yield
    except (StageError, ImageIOError, ConfigError):
        raise  # keep the distinct I/O and config exit codes
    except OrthofaceError as exc:
        raise StageError(name, str(exc), payload=exc) from exc
    finally:
        report.stage_seconds[name] = report.stage_seconds.get(name, 0.0) \
            + time.perf_counter() - start


def _planes(img: Raster):
    """(luma, chroma_feature, chroma_similarity) planes for one view."""
    if img.semantics is Semantics.RGB:
        ycc = rgb_to_ycbcr(img)
        y = Raster.from_array(ycc.plane(0), Semantics.GRAY)
        cb = Raster.from_array(ycc.plane(1), Semantics.GRAY)
        cr = Raster.from_array(ycc.plane(2), Semantics.GRAY)
        return y, cr, cb
    gray = img if img.planes == 1 else Raster.from_array(img.plane(0), Semantics.GRAY)
    return gray, gray, gray


def detect_roi(chroma: Raster, cfg) -> RegionOfInterest:
    res = binarize(chroma, cfg.binarize_method,
                   cfg.fixed_threshold if cfg.binarize_method == "fixed" else None,
                   cfg.bright_foreground)
    ys, xs = np.nonzero(res.mask.data)
    if res.degenerate or len(ys) == 0:
        raise StageError("roi", "no foreground found for ROI detection")
    m = cfg.roi_margin
    return RegionOfInterest(
        max(0, int(xs.min()) - m), max(0, int(ys.min()) - m),
        min(chroma.width - 1, int(xs.max()) + m), min(chroma.height - 1, int(ys.max()) + m))


def infer_side_tables(landmarks, midline_band: float):
    """Classify extracted landmarks into visible/hidden/midline and pair
    each hidden landmark with its mirrored visible partner.

    The profile camera is assumed to see the +x (right) side; the face
    midline is the midpoint of the two eye-window centroids.
    """
    eye_l = [lm for lm in landmarks if lm.window is Window.LEFT_EYE]
    eye_r = [lm for lm in landmarks if lm.window is Window.RIGHT_EYE]
    if not eye_l or not eye_r:
        raise StageError("sides", "eye windows produced no landmarks")
    x_mid = (np.mean([l.x for l in eye_l]) + np.mean([l.x for l in eye_r])) / 2.0
    visible, hidden = set(), set()
    for lm in landmarks:
        if lm.window is Window.LEFT_EYE:
            hidden.add(lm.id)
        elif lm.window is Window.RIGHT_EYE:
            visible.add(lm.id)
        elif abs(lm.x - x_mid) <= midline_band:
            visible.add(lm.id)  # midline: matched in the profile view
        elif lm.x > x_mid:
            visible.add(lm.id)
        else:
            hidden.add(lm.id)
    by_id = {lm.id: lm for lm in landmarks}
    midline = {i for i in visible if abs(by_id[i].x - x_mid) <= midline_band
               and by_id[i].window not in (Window.LEFT_EYE, Window.RIGHT_EYE)}
    mirror, used = {}, set()
    for h in sorted(hidden):
        hlm = by_id[h]
        want = MIRROR_WINDOW.get(hlm.window, hlm.window)
        cands = [v for v in sorted(visible - midline - used) if by_id[v].window is want]
        if not cands:
            raise StageError("sides", f"no mirror candidate for hidden landmark {h}",
                             payload={"hidden": sorted(hidden), "visible": sorted(visible)})
        target = (2.0 * x_mid - hlm.x, hlm.y)
        v = min(cands, key=lambda v: (np.hypot(by_id[v].x - target[0], by_id[v].y - target[1]), v))
        mirror[h] = v
        used.add(v)
    return visible, mirror, x_mid


def run_pipeline(frontal_path, profile_path, config: PipelineConfig | None = None,
                 out_dir=None, dumps=()) -> PipelineResult:
    """Execute the full reconstruction; optionally write artifacts.

    dumps: iterable of {"clusters", "windows", "edges", "mask"} selecting
    intermediate files to write next to the main outputs.
    """
    cfg = config or PipelineConfig()
    report = FitReport(config_hash=cfg.config_hash(), method=cfg.mesh.method)
    t_start = time.perf_counter()
    dumps = set(dumps)
    artifacts = {}

    with _stage(report, "load"):
        frontal_img = read_pnm(frontal_path)
        profile_img = read_pnm(profile_path)
        luma_f, feat_f, cb_f = _planes(frontal_img)
        luma_p, feat_p, _ = _planes(profile_img)

    with _stage(report, "roi"):
        roi_f = detect_roi(feat_f, cfg.preprocess)
        roi_p = detect_roi(feat_p, cfg.preprocess)

    with _stage(report, "scale"):
        target = cfg.preprocess.target_roi_height
        luma_f, s_f = normalize_scale(luma_f, target, roi_f)
        feat_f = normalize_scale(feat_f, target, roi_f)[0]
        cb_f = normalize_scale(cb_f, target, roi_f)[0]
        luma_p, s_p = normalize_scale(luma_p, target, roi_p)
        report.scale_frontal, report.scale_profile = s_f, s_p
        roi = detect_roi(feat_f, cfg.preprocess) if s_f != 1.0 else roi_f

    with _stage(report, "equalize"):
        mode = cfg.preprocess.equalize
        if mode == "joint":
            hist = (np.bincount(luma_f.data.ravel(), minlength=256)
                    + np.bincount(luma_p.data.ravel(), minlength=256))
            lut = equalization_lut(hist)
            luma_f = Raster.from_array(lut[luma_f.data], Semantics.GRAY)
            luma_p = Raster.from_array(lut[luma_p.data], Semantics.GRAY)
        elif mode == "per-image":
            luma_f = imgproc.equalize_histogram(luma_f)
            luma_p = imgproc.equalize_histogram(luma_p)

    with _stage(report, "binarize"):
        pc = cfg.preprocess
        res = binarize(feat_f, pc.binarize_method,
                       pc.fixed_threshold if pc.binarize_method == "fixed" else None,
                       pc.bright_foreground)
        mask = res.mask
        se = StructuringElement.box(pc.se_size)
        if pc.morph_open:
            mask = morph(mask, se, "open")
        if pc.morph_close:
            mask = morph(mask, se, "close")
        artifacts["mask"] = mask

    with _stage(report, "scda"):
        points = micro_features_from_mask(mask)
        clusters = scda_cluster(points, cfg.scda)

    with _stage(report, "windows"):
        windows = assign_feature_windows(clusters.clusters, roi, feat_f, cfg.windows)

    with _stage(report, "edges"):
        edges = canny_edges(luma_f, cfg.canny.low, cfg.canny.high)
        artifacts["edges"] = edges

    with _stage(report, "landmarks"):
        landmarks2d = assemble_frontal_set(
            windows, edges, cfg.landmarks.quota, roi,
            cfg.landmarks.outline_band_frac, cfg.landmarks.max_edge_pixels)
        report.landmark_count = len(landmarks2d)

    with _stage(report, "sides"):
        if cfg.depth.sides_mode == "table":
            visible = set(cfg.depth.visible_ids)
            mirror = dict(cfg.depth.mirror_pairs)
        else:
            visible, mirror, _ = infer_side_tables(landmarks2d, cfg.depth.midline_band)

    with _stage(report, "soic"):
        by_id = {lm.id: lm for lm in landmarks2d}
        matched = soic_match(luma_f, luma_p, [by_id[i] for i in sorted(visible)], cfg.soic)
        if matched.failures:
            raise StageError("soic", f"unmatched landmarks: {matched.failures}",
                             payload=matched.failures)

    with _stage(report, "depth"):
        landmarks3d = build_3d_set(landmarks2d, matched.matches, visible, mirror)
        sides = {lm.id: lm.side for lm in landmarks3d}
        report.visible_count = sum(1 for s in sides.values() if s is Side.VISIBLE)
        report.hidden_count = sum(1 for s in sides.values() if s is Side.HIDDEN)
        report.midline_count = sum(1 for s in sides.values() if s is Side.MIDLINE)
        report.clamped_ids = sorted(lm.id for lm in landmarks3d if lm.clamped)

    with _stage(report, "fit"):
        model = build_generic_model()
        pts = np.array([[lm.x, lm.y, lm.z] for lm in sorted(landmarks3d, key=lambda l: l.id)])
        controls = model.control_positions()
        # translation + scaling pre-transform into the model's space
        c_pts, c_model = pts.mean(axis=0), controls.mean(axis=0)
        rms_pts = float(np.sqrt(((pts - c_pts) ** 2).sum(axis=1).mean()))
        rms_model = float(np.sqrt(((controls - c_model) ** 2).sum(axis=1).mean()))
        targets = (pts - c_pts) * (rms_model / rms_pts) + c_model
        transform, _ = procrustes_align(controls, targets)
        base_vertices = apply_transform(transform, model.vertices)
        base_controls = apply_transform(transform, controls)
        if cfg.mesh.method == "dffd":
            fld = build_deform_field(base_controls, targets - base_controls)
            vertices = fld.apply(base_vertices)
            final_controls = base_controls + fld.displacement(base_controls)
        else:
            vertices = base_vertices
            final_controls = base_controls
        eye_ids = [lm.id for lm in landmarks2d if lm.window is Window.LEFT_EYE]
        eye_ids_r = [lm.id for lm in landmarks2d if lm.window is Window.RIGHT_EYE]
        iod = float(np.linalg.norm(targets[eye_ids].mean(axis=0) - targets[eye_ids_r].mean(axis=0)))
        report.interocular = iod
        report.normalized_mse = fit_mse(final_controls, targets, iod)

    with _stage(report, "export"):
        obj_text = export_obj(vertices, model.faces)
        report.total_seconds = time.perf_counter() - t_start
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "model.obj").write_text(obj_text)
            (out / "landmarks2d.json").write_text(landmarks_to_json(landmarks2d))
            (out / "landmarks3d.json").write_text(landmarks3d_to_json(landmarks3d))
            (out / "report.json").write_text(report.to_json())
            if "clusters" in dumps:
                (out / "clusters.json").write_text(clusters_to_json(clusters))
            if "windows" in dumps:
                (out / "windows.json").write_text(_windows_json(windows, roi))
            if "edges" in dumps:
                write_pnm(artifacts["edges"].with_semantics(Semantics.GRAY), out / "edges.pgm")
            if "mask" in dumps:
                write_pnm(artifacts["mask"].with_semantics(Semantics.GRAY), out / "mask.pgm")

    return PipelineResult(landmarks2d, landmarks3d, vertices, model.faces,
                          obj_text, report, windows, clusters)


def _windows_json(windows, roi) -> str:
    def box(r):
        return [r.x0, r.y0, r.x1, r.y1]

    payload = {name: box(w) for name, w in windows.as_dict().items()}
    payload["face_roi"] = box(roi)
    return json.dumps(payload, indent=1, sort_keys=True)


def outline_hull(landmarks2d):
    """Convex hull of the outline landmarks (shape-detail helper)."""
    pts = [lm for lm in landmarks2d if lm.window is Window.OUTLINE]
    return convex_hull(pts)

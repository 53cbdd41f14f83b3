"""orthoface: 3D facial landmark reconstruction from one frontal and one
profile image, plus deformation of a generic head mesh onto the result.

The public surface mirrors the processing stages: pixel primitives
(imgproc), sequential cluster detection and window assignment (scda),
landmark extraction (features), depth assignment (depth), mesh fitting
(mesh), and the end-to-end pipeline with its configuration, synthetic
fixtures and benchmark harness.
"""

from .config import PipelineConfig, load_config
from .depth import Landmark3D, Side, SoicParams, build_3d_set, hidden_depth, soic_match
from .features import Landmark2D, LandmarkQuota, Window, convex_hull, extract_landmarks
from .fixtures import SyntheticFixture, synth_fixture
from .imgproc import Raster, RegionOfInterest, Semantics, read_pnm, write_pnm
from .mesh import (
    GenericModel,
    SimilarityTransform,
    build_generic_model,
    delaunay_triangulate,
    dffd_deform,
    export_obj,
    fit_mse,
    procrustes_align,
)
from .pipeline import FitReport, PipelineResult, run_pipeline
from .scda import FeatureWindows, PointCluster, ScdaParams, scda_cluster

__version__ = "0.1.0"

__all__ = [
    "FeatureWindows", "FitReport", "GenericModel", "Landmark2D", "Landmark3D",
    "LandmarkQuota", "PipelineConfig", "PipelineResult", "PointCluster",
    "Raster", "RegionOfInterest", "ScdaParams", "Semantics", "Side",
    "SimilarityTransform", "SoicParams", "SyntheticFixture", "Window",
    "build_3d_set", "build_generic_model", "convex_hull",
    "delaunay_triangulate", "dffd_deform", "export_obj", "extract_landmarks",
    "fit_mse", "hidden_depth", "load_config", "procrustes_align", "read_pnm",
    "run_pipeline", "scda_cluster", "soic_match", "synth_fixture", "write_pnm",
]

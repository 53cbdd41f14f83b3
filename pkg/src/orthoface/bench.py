"""Adaptation benchmark: ensemble-averaged normalized fit MSE and wall time
versus control-point count, for the procrustes-only and the full
deformation methods.

Reproduces the measurement protocol (not any particular published curve):
per seed, the fixture ground-truth landmarks are the deformation targets;
per (count, method) cell the control set is an evenly spaced id subsample.
MSE is measured at the subsampled control points, normalized by squared
interocular distance. With timing disabled the CSV is byte-identical for a
given seed set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .fixtures import synth_fixture
from .mesh import (
    apply_transform,
    build_deform_field,
    build_generic_model,
    fit_mse,
    procrustes_align,
)

METHODS = ("procrustes", "dffd")


@dataclass(frozen=True)
class BenchRow:
    count: int
    method: str
    mse_mean: float
    mse_std: float
    time_ms_mean: float


def subsample_ids(count: int):
    if not 3 <= count <= 60:
        raise InvalidInputError(f"control count must be in [3, 60], got {count}")
    ids = np.unique(np.round(np.linspace(0, 59, count)).astype(int))
    assert len(ids) == count, f"subsample collision for count {count}"
    return [int(i) for i in ids]


def _adapt(model, target_map, ids, method, timing):
    sources = model.control_positions(ids)
    targets = np.array([target_map[i] for i in ids])
    t0 = time.perf_counter() if timing else 0.0
    c_t, c_s = targets.mean(axis=0), sources.mean(axis=0)
    rms_t = float(np.sqrt(((targets - c_t) ** 2).sum(axis=1).mean()))
    rms_s = float(np.sqrt(((sources - c_s) ** 2).sum(axis=1).mean()))
    scaled = (targets - c_t) * (rms_s / rms_t) + c_s
    transform, _ = procrustes_align(sources, scaled)
    base_vertices = apply_transform(transform, model.vertices)
    base_controls = apply_transform(transform, sources)
    if method == "dffd":
        fld = build_deform_field(base_controls, scaled - base_controls)
        _ = fld.apply(base_vertices)
        final_controls = base_controls + fld.displacement(base_controls)
    else:
        final_controls = base_controls
    elapsed_ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
    return final_controls, scaled, elapsed_ms


def bench(seeds, counts=(29, 45, 60), methods=METHODS, timing=True):
    """Run the benchmark grid; returns BenchRow list sorted by (count, method)."""
    seeds = list(seeds)
    if not seeds:
        raise InvalidInputError("bench needs at least one seed")
    counts = [int(c) for c in counts]
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}")
    model = build_generic_model()
    rows = []
    for count in counts:
        ids = subsample_ids(count)
        for method in methods:
            mses, times = [], []
            for seed in seeds:
                fx = synth_fixture(seed)
                target_map = {lm.id: (lm.x, lm.y, lm.z) for lm in fx.truth}
                final_controls, scaled, ms = _adapt(model, target_map, ids, method, timing)
                eye_l = scaled[[i for i, lid in enumerate(ids) if lid < 10]]
                eye_r = scaled[[i for i, lid in enumerate(ids) if 10 <= lid < 20]]
                if len(eye_l) and len(eye_r):
                    iod = float(np.linalg.norm(eye_l.mean(axis=0) - eye_r.mean(axis=0)))
                else:
                    iod = float(np.linalg.norm(scaled.max(axis=0) - scaled.min(axis=0)))
                mses.append(fit_mse(final_controls, scaled, iod))
                times.append(ms)
            rows.append(BenchRow(count, method,
                                 float(np.mean(mses)), float(np.std(mses)),
                                 float(np.mean(times))))
    rows.sort(key=lambda r: (r.count, r.method))
    return rows


def rows_to_csv(rows) -> str:
    lines = ["count,method,mse_mean,mse_std,time_ms_mean"]
    for r in rows:
        lines.append("%d,%s,%.9e,%.9e,%.3f" % (r.count, r.method, r.mse_mean, r.mse_std,
                                               r.time_ms_mean))
    return "\n".join(lines) + "\n"

"""Generic 3D head model, Delaunay triangulation, procrustes alignment,
control-point deformation, OBJ export and fit-error metrics.

Triangulation is Bowyer-Watson with a float filter over the incircle and
orientation determinants and an exact rational fallback near zero, so
cocircular cases are decided exactly; cocircular quads are then
canonicalized to the lexicographically smallest diagonal by a flip pass.

The deformation field is an exact-interpolation radial kernel (phi(r) = r
plus an affine term) over the 60 control points: it reproduces every
control displacement exactly and blends smoothly off the controls, which
is the behavior the rest of the pipeline relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

import numpy as np

from .errors import (
    DegenerateInputError,
    IllConditionedError,
    InvalidInputError,
)
from .features import order_clockwise

MODEL_VERTEX_COUNT = 140
MODEL_FACE_COUNT = 264
MODEL_ASSET = "generic_model_v1.json"


# --- exact-filtered geometric predicates -------------------------------------

def _orient_sign(pa, pb, pc):
    """Sign of the cross product (pb-pa) x (pc-pa); exact near zero."""
    acx, acy = pb[0] - pa[0], pb[1] - pa[1]
    bcx, bcy = pc[0] - pa[0], pc[1] - pa[1]
    det = acx * bcy - acy * bcx
    m = max(abs(acx), abs(acy), abs(bcx), abs(bcy), 1.0)
    if abs(det) > 1e-12 * m * m:
        return 1 if det > 0 else -1
    ax, ay = Fraction(pa[0]), Fraction(pa[1])
    det = (Fraction(pb[0]) - ax) * (Fraction(pc[1]) - ay) \
        - (Fraction(pb[1]) - ay) * (Fraction(pc[0]) - ax)
    return (det > 0) - (det < 0)


def _incircle_sign(pa, pb, pc, pd):
    """+1 when pd lies strictly inside the circumcircle of CCW (pa,pb,pc),
    -1 strictly outside, 0 exactly on it (decided exactly)."""
    adx, ady = pa[0] - pd[0], pa[1] - pd[1]
    bdx, bdy = pb[0] - pd[0], pb[1] - pd[1]
    cdx, cdy = pc[0] - pd[0], pc[1] - pd[1]
    ad2 = adx * adx + ady * ady
    bd2 = bdx * bdx + bdy * bdy
    cd2 = cdx * cdx + cdy * cdy
    det = (adx * (bdy * cd2 - cdy * bd2)
           - ady * (bdx * cd2 - cdx * bd2)
           + ad2 * (bdx * cdy - cdx * bdy))
    m = max(abs(adx), abs(ady), abs(bdx), abs(bdy), abs(cdx), abs(cdy), 1.0)
    if abs(det) > 1e-11 * m ** 4:
        return 1 if det > 0 else -1
    fa = (Fraction(pa[0]) - Fraction(pd[0]), Fraction(pa[1]) - Fraction(pd[1]))
    fb = (Fraction(pb[0]) - Fraction(pd[0]), Fraction(pb[1]) - Fraction(pd[1]))
    fc = (Fraction(pc[0]) - Fraction(pd[0]), Fraction(pc[1]) - Fraction(pd[1]))
    a2 = fa[0] * fa[0] + fa[1] * fa[1]
    b2 = fb[0] * fb[0] + fb[1] * fb[1]
    c2 = fc[0] * fc[0] + fc[1] * fc[1]
    det = (fa[0] * (fb[1] * c2 - fc[1] * b2)
           - fa[1] * (fb[0] * c2 - fc[0] * b2)
           + a2 * (fb[0] * fc[1] - fc[0] * fb[1]))
    return (det > 0) - (det < 0)


def _ccw(tri, pts):
    a, b, c = tri
    if _orient_sign(pts[a], pts[b], pts[c]) < 0:
        return (a, c, b)
    return (a, b, c)


def _flip_canonicalize(tris, pts):
    """Repair any strict circumcircle violation and settle cocircular quads
    on the lexicographically smallest diagonal."""
    tris = set(tris)
    for _ in range(20 * max(len(tris), 1)):
        edge_map = {}
        for t in tris:
            for i in range(3):
                e = tuple(sorted((t[i], t[(i + 1) % 3])))
                edge_map.setdefault(e, []).append(t)
        flipped = False
        for (a, b), faces in edge_map.items():
            if len(faces) != 2:
                continue
            t1, t2 = faces
            u = next(v for v in t1 if v not in (a, b))
            v = next(w for w in t2 if w not in (a, b))
            # u, v must straddle edge (a, b) for the flip to be valid
            s_u = _orient_sign(pts[a], pts[b], pts[u])
            s_v = _orient_sign(pts[a], pts[b], pts[v])
            if s_u == 0 or s_v == 0 or s_u == s_v:
                continue
            s = _incircle_sign(*( [pts[i] for i in _ccw(t1, pts)] + [pts[v]] ))
            do_flip = s > 0
            if s == 0:
                cur = tuple(sorted((pts[a], pts[b])))
                alt = tuple(sorted((pts[u], pts[v])))
                do_flip = alt < cur
            if do_flip:
                tris.remove(t1)
                tris.remove(t2)
                tris.add(_ccw((u, v, a), pts))
                tris.add(_ccw((u, v, b), pts))
                flipped = True
                break
        if not flipped:
            return tris
    raise DegenerateInputError("triangulation flip pass did not converge")


def delaunay_triangulate(points):
    """Delaunay triangulation of 2D points; empty-circumcircle property,
    covering the convex hull. Returns canonical CCW index triples."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise InvalidInputError(f"triangulation needs >= 3 points, got {len(pts)}")
    if len(set(pts)) != len(pts):
        raise DegenerateInputError("duplicate points in triangulation input")
    if all(_orient_sign(pts[0], pts[1], p) == 0 for p in pts[2:]):
        raise DegenerateInputError("all points collinear")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    cx, cy = (max(xs) + min(xs)) / 2.0, (max(ys) + min(ys)) / 2.0
    big = 1e12 * span
    n = len(pts)
    allp = pts + [(cx - 2 * big, cy - big), (cx + 2 * big, cy - big), (cx, cy + 2 * big)]
    tris = {_ccw((n, n + 1, n + 2), allp)}
    for i in range(n):
        bad = [t for t in tris if _incircle_sign(allp[t[0]], allp[t[1]], allp[t[2]], allp[i]) > 0]
        edge_count = {}
        for t in bad:
            for k in range(3):
                e = tuple(sorted((t[k], t[(k + 1) % 3])))
                edge_count[e] = edge_count.get(e, 0) + 1
        tris.difference_update(bad)
        for (a, b), cnt in edge_count.items():
            if cnt == 1:
                tris.add(_ccw((a, b, i), allp))
    tris = {t for t in tris if max(t) < n}
    tris = _flip_canonicalize(tris, pts)
    out = []
    for t in tris:
        t = _ccw(t, pts)
        k = t.index(min(t))
        out.append((t[k], t[(k + 1) % 3], t[(k + 2) % 3]))
    return sorted(out)


# --- similarity alignment ------------------------------------------------------

@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.scale <= 0:
            raise InvalidInputError(f"scale must be > 0, got {self.scale}")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise InvalidInputError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InvalidInputError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))


def procrustes_align(source, target):
    """Least-squares similarity transform mapping source onto target.

    Reflections are excluded by flipping the axis of the smallest singular
    value when needed. Returns (SimilarityTransform, residual_mse).
    """
    X = np.asarray(source, dtype=np.float64)
    Y = np.asarray(target, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise InvalidInputError("procrustes expects equal-length Nx3 point sets")
    n = X.shape[0]
    if n < 3:
        raise InvalidInputError(f"procrustes needs >= 3 correspondences, got {n}")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    sv = np.linalg.svd(Xc, compute_uv=False)
    if sv[0] < 1e-12 or sv[1] < 1e-9 * sv[0]:
        raise IllConditionedError("source points are collinear or coincident")
    C = Yc.T @ Xc / n
    U, D, Vt = np.linalg.svd(C)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_x = (Xc ** 2).sum() / n
    scale = float(np.trace(np.diag(D) @ S) / var_x)
    t = my - scale * (R @ mx)
    transform = SimilarityTransform(scale, R, t)
    residual = apply_transform(transform, X) - Y
    return transform, float((residual ** 2).sum(axis=1).mean())


def apply_transform(t: SimilarityTransform, points):
    """p -> scale * R @ p + translation (this exact composition order)."""
    pts = np.asarray(points, dtype=np.float64)
    return t.scale * (pts @ t.rotation.T) + t.translation


# --- deformation field ----------------------------------------------------------

@dataclass(frozen=True)
class DeformField:
    """Radial-kernel displacement field interpolating control displacements."""

    sources: np.ndarray
    weights: np.ndarray
    affine: np.ndarray

    def displacement(self, points):
        pts = np.asarray(points, dtype=np.float64)
        r = np.linalg.norm(pts[:, None, :] - self.sources[None, :, :], axis=2)
        poly = np.hstack([np.ones((len(pts), 1)), pts])
        return r @ self.weights + poly @ self.affine

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) + self.displacement(points)


def build_deform_field(sources, displacements, tol: float = 1e-8) -> DeformField:
    src = np.asarray(sources, dtype=np.float64)
    disp = np.asarray(displacements, dtype=np.float64)
    m = len(src)
    if src.shape != (m, 3) or disp.shape != (m, 3) or m < 4:
        raise InvalidInputError("deformation needs >= 4 control source/displacement pairs")
    K = np.linalg.norm(src[:, None, :] - src[None, :, :], axis=2)
    P = np.hstack([np.ones((m, 1)), src])
    A = np.zeros((m + 4, m + 4))
    A[:m, :m] = K
    A[:m, m:] = P
    A[m:, :m] = P.T
    B = np.zeros((m + 4, 3))
    B[:m] = disp
    try:
        sol = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"singular interpolation system: {exc}") from exc
    field = DeformField(src, sol[:m], sol[m:])
    err = np.abs(field.displacement(src) - disp).max()
    if not np.isfinite(err) or err > tol:
        raise IllConditionedError(
            f"interpolation system ill-conditioned: control error {err:.3g} > {tol:g}")
    return field


# --- generic model ---------------------------------------------------------------

def _face_area(vertices, face):
    a, b, c = (np.asarray(vertices[i], dtype=np.float64) for i in face)
    return 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))


@dataclass(frozen=True)
class GenericModel:
    vertices: np.ndarray
    faces: tuple
    control_map: dict

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.shape != (MODEL_VERTEX_COUNT, 3):
            raise InvalidInputError(f"model must have exactly {MODEL_VERTEX_COUNT} vertices")
        faces = tuple(tuple(int(i) for i in f) for f in self.faces)
        if len(faces) != MODEL_FACE_COUNT:
            raise InvalidInputError(f"model must have exactly {MODEL_FACE_COUNT} faces")
        bbox2 = float(((v.max(axis=0) - v.min(axis=0)) ** 2).sum())
        for f in faces:
            if len(set(f)) != 3 or not all(0 <= i < MODEL_VERTEX_COUNT for i in f):
                raise InvalidInputError(f"bad face {f}")
            if _face_area(v, f) <= 1e-9 * bbox2:
                raise InvalidInputError(f"degenerate face {f}")
        cmap = {int(k): int(i) for k, i in self.control_map.items()}
        if sorted(cmap) != list(range(60)):
            raise InvalidInputError("control_map must cover landmark ids 0..59")
        if len(set(cmap.values())) != 60:
            raise InvalidInputError("control_map must be injective")
        if not all(0 <= i < MODEL_VERTEX_COUNT for i in cmap.values()):
            raise InvalidInputError("control_map indices out of range")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "control_map", cmap)

    def control_positions(self, ids=None):
        ids = range(60) if ids is None else ids
        return np.array([self.vertices[self.control_map[i]] for i in ids])


def _dome_z(x, y):
    base = 40.0 * math.sqrt(max(0.0, 1.0 - (x / 62.0) ** 2 - (y / 82.0) ** 2))
    nose = 16.0 * math.exp(-(x * x + (y - 10.0) ** 2) / 180.0)
    mouth = 6.0 * math.exp(-(x * x * 0.6 + (y - 38.0) ** 2) / 260.0)
    return base + nose + mouth


def _ring(cx, cy, rx, ry, count, phase=0.0, jitter=0.0):
    pts = []
    for k in range(count):
        a = phase + 2.0 * math.pi * k / count
        wob = 1.0 + jitter * math.sin(3.1 * a + 0.7)
        pts.append((cx + rx * wob * math.cos(a), cy + ry * wob * math.sin(a)))
    return pts


def generate_generic_model() -> GenericModel:
    """Author the fixed 140-vertex / 264-face head layout.

    Hull: 14 outline vertices on an ellipse (these are the outline control
    vertices). Interior: 46 feature control vertices (eye rings, nose,
    mouth) plus 80 filler vertices; faces come from a Delaunay
    triangulation of the frontal (x, y) projection.
    """
    outline = _ring(0.0, 0.0, 55.0, 75.0, 14, phase=math.pi + 0.13, jitter=0.004)
    eye_l = _ring(-22.0, -18.0, 8.0, 6.0, 10, phase=0.25)
    eye_r = _ring(22.0, -18.0, 8.0, 6.0, 10, phase=0.25)
    nose_side = _ring(0.0, 10.0, 9.0, 12.0, 10, phase=0.33)
    nose = [(0.0, -2.0), (0.0, 17.0)] + nose_side  # two midline + ring of 10
    mouth = _ring(0.0, 38.0, 13.0, 6.5, 14, phase=0.18)

    fillers = []
    fillers += _ring(0.0, 0.0, 47.5, 65.0, 18, phase=0.41, jitter=0.01)
    fillers += _ring(0.0, 0.0, 38.0, 52.5, 16, phase=1.03, jitter=0.01)
    fillers += _ring(0.0, -6.0, 29.5, 40.5, 14, phase=1.71, jitter=0.01)
    fillers += _ring(0.0, -29.0, 20.0, 6.0, 8, phase=0.52)        # brow arc
    fillers += [(0.37, -24.0 + 5.0 * k) for k in range(4)]        # nose bridge
    fillers += _ring(0.0, 56.0, 12.0, 7.0, 6, phase=0.61)         # chin
    fillers += _ring(-33.5, 12.0, 7.5, 10.0, 5, phase=0.8)        # cheeks
    fillers += _ring(33.5, 12.0, 7.5, 10.0, 5, phase=2.1)
    fillers += [(-9.0 + 6.0 * k, -47.0 + 0.37 * k) for k in range(4)]  # forehead

    def clockwise(points):
        return [points[i] for i in order_clockwise(points)]

    windows_2d = [clockwise(eye_l), clockwise(eye_r),
                  [nose[0], nose[1]] + clockwise(nose_side),
                  clockwise(mouth), clockwise(outline)]
    control_xy = [p for win in windows_2d for p in win]
    assert len(control_xy) == 60
    xy = control_xy + fillers
    assert len(xy) == MODEL_VERTEX_COUNT, f"layout has {len(xy)} vertices"
    vertices = np.array([(x, y, _dome_z(x, y)) for x, y in xy])
    faces = delaunay_triangulate(xy)
    control_map = {i: i for i in range(60)}
    return GenericModel(vertices, tuple(faces), control_map)


def model_to_json(model: GenericModel) -> str:
    payload = {
        "version": 1,
        "vertices": [[round(float(c), 6) for c in v] for v in model.vertices],
        "faces": [list(f) for f in model.faces],
        "control_map": {str(k): v for k, v in sorted(model.control_map.items())},
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def model_from_json(text: str) -> GenericModel:
    data = json.loads(text)
    return GenericModel(np.asarray(data["vertices"], dtype=np.float64),
                        tuple(tuple(f) for f in data["faces"]),
                        {int(k): v for k, v in data["control_map"].items()})


def build_generic_model() -> GenericModel:
    """Load the versioned generic-model asset shipped with the package."""
    text = resources.files("orthoface").joinpath("assets", MODEL_ASSET).read_text()
    return model_from_json(text)


def dffd_deform(model: GenericModel, targets):
    """Deform all model vertices so control vertices land on their targets.

    ``targets`` maps landmark id -> 3-vector (or is a list of objects with
    id/x/y/z); must cover every control_map id. Returns the deformed
    (140, 3) vertex array.
    """
    if not isinstance(targets, dict):
        targets = {t.id: (t.x, t.y, t.z) for t in targets}
    missing = set(model.control_map) - set(targets)
    if missing:
        raise InvalidInputError(f"targets missing control ids {sorted(missing)}")
    ids = sorted(model.control_map)
    sources = model.control_positions(ids)
    disp = np.array([targets[i] for i in ids], dtype=np.float64) - sources
    field = build_deform_field(sources, disp)
    return field.apply(model.vertices)


# --- export / metrics ---------------------------------------------------------------

def export_obj(vertices, faces) -> str:
    """Wavefront OBJ text: 6-decimal vertices, 1-based faces, byte-stable."""
    verts = np.asarray(vertices, dtype=np.float64)
    lines = ["v %.6f %.6f %.6f" % (v[0], v[1], v[2]) for v in verts]
    for f in faces:
        if not all(0 <= int(i) < len(verts) for i in f):
            raise InvalidInputError(f"face {tuple(f)} references missing vertex")
        lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
    return "\n".join(lines) + "\n"


def parse_obj(text: str):
    vertices, faces = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append(tuple(float(c) for c in parts[1:4]))
        elif parts[0] == "f":
            faces.append(tuple(int(c.split("/")[0]) - 1 for c in parts[1:4]))
    return np.asarray(vertices, dtype=np.float64), faces


def fit_mse(deformed_controls, targets, normalization: float) -> float:
    """Mean squared point distance divided by the squared normalization
    (interocular distance)."""
    a = np.asarray(deformed_controls, dtype=np.float64)
    b = np.asarray(targets, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError("fit_mse expects equal-shaped point sets")
    if normalization <= 0:
        raise InvalidInputError(f"normalization must be > 0, got {normalization}")
    return float(((a - b) ** 2).sum(axis=1).mean() / normalization ** 2)

"""Scene and solution files (JSON), tables (CSV) and surface meshes (OBJ/PLY)."""
from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .geometry import PlanarDomain, SourceDomain
from .refractor import PolyBlockRefractor, SceneConfig, screen_from_dict

SOLUTION_FORMAT = "refractor-forge-solution"


def _fmt(v: float) -> str:
    return "%.17g" % v


def polar_table_density(angles, values, axis):
    """Rotationally symmetric density, linear in the polar angle about ``axis``."""
    angles = np.asarray(angles, dtype=float)
    values = np.asarray(values, dtype=float)
    if angles.ndim != 1 or angles.shape != values.shape or len(angles) < 2:
        raise ConfigError("density table needs matching polar_angles and values", assumption="density")
    if np.any(np.diff(angles) <= 0) or np.any(values < 0):
        raise ConfigError("density table angles must increase and values be non-negative", assumption="density")
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)

    def f(x):
        th = np.arccos(np.clip(np.asarray(x) @ axis, -1.0, 1.0))
        return np.interp(th, angles, values)

    return f


def _linear_density(coeffs):
    c = np.asarray(coeffs, dtype=float)

    def f(x):
        return c[0] + np.asarray(x) @ c[1:]

    return f


def parse_scene(doc: dict) -> SceneConfig:
    """Build a SceneConfig from a scene document (already JSON-decoded)."""
    try:
        kappa = float(doc["kappa"])
        mode = doc["mode"]
        n = int(doc.get("dimension", 3))
        src = doc["source"]
        dens = src.get("density", "uniform")
        if mode == "ma_bvp":
            density = None
            if isinstance(dens, dict) and dens.get("type") == "linear":
                density = _linear_density(dens["coefficients"])
            elif dens != "uniform":
                raise ConfigError("planar sources support uniform or linear densities", assumption="density")
            domain = PlanarDomain(np.asarray(src["polygon"], dtype=float), density)
        else:
            axis = np.asarray(src["axis"], dtype=float)
            density = None
            if isinstance(dens, dict):
                density = polar_table_density(dens["polar_angles"], dens["values"], axis)
            elif dens != "uniform":
                raise ConfigError(f"unknown density {dens!r}", assumption="density")
            domain = SourceDomain(axis, float(src["half_angle"]), density, n)
        tg = doc["targets"]
        general = isinstance(tg, dict)
        if general:
            grid = tg["density_grid"]
            targets = np.asarray(grid["points"], dtype=float)
            weights = np.asarray(grid["weights"], dtype=float)
        else:
            targets = np.asarray([t["point"] for t in tg], dtype=float)
            weights = np.asarray([t["weight"] for t in tg], dtype=float)
        scene = SceneConfig(
            kappa=kappa,
            domain=domain,
            targets=targets,
            weights=weights,
            mode=mode,
            r0=None if doc.get("r0") is None else float(doc["r0"]),
            tau=None if doc.get("tau") is None else float(doc["tau"]),
            delta=float(doc.get("delta", 0.0)),
            screen=screen_from_dict(doc["screen"]) if doc.get("screen") else None,
            density_grid=general,
            solver=dict(doc.get("solver", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed scene: {exc!r}", assumption="scene") from exc
    if doc.get("normalize_weights"):
        scene.weights = scene.weights * (scene.total_energy() / scene.weights.sum())
    return scene


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def load_scene(path) -> SceneConfig:
    return parse_scene(load_json(path))


def solution_document(scene_doc: dict, refr: PolyBlockRefractor, report, extra: Optional[dict] = None) -> dict:
    doc = {
        "format": SOLUTION_FORMAT,
        "version": 1,
        "scene": scene_doc,
        "family": refr.family.kind,
        "targets": refr.targets.tolist(),
    }
    doc.update(report.to_dict())
    if extra:
        doc.update(extra)
    return doc


def is_solution(doc: dict) -> bool:
    return doc.get("format") == SOLUTION_FORMAT


def refractor_from_solution(doc: dict):
    """``(scene, refractor)`` rebuilt from a solution document."""
    scene = parse_scene(doc["scene"])
    targets = np.asarray(doc["targets"], dtype=float)
    params = np.asarray(doc["params"], dtype=float)
    sub = SceneConfig(
        kappa=scene.kappa,
        domain=scene.domain,
        targets=targets,
        weights=np.asarray(doc["weights"], dtype=float),
        mode=scene.mode,
        r0=scene.r0,
        tau=scene.tau,
        delta=scene.delta,
        screen=scene.screen,
        solver=scene.solver,
    )
    return sub, PolyBlockRefractor(sub.family(), targets, params, sub.domain)


def write_csv(path, header, rows) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def read_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- meshes ----------------------------------------------------------------


def ring_counts(resolution: int) -> tuple[int, int]:
    """Rings and segments giving about ``resolution`` vertices (1 + rings*segments)."""
    rings = max(1, int(round(np.sqrt(max(resolution - 1, 6) / 6.0))))
    segments = max(6, int(round((resolution - 1) / rings)))
    return rings, segments


def ring_faces(rings: int, segments: int) -> np.ndarray:
    """Triangles of a disc made of a centre vertex and concentric rings."""
    faces = []
    for s in range(segments):
        faces.append((0, 1 + s, 1 + (s + 1) % segments))
    for r in range(1, rings):
        a0 = 1 + (r - 1) * segments
        b0 = 1 + r * segments
        for s in range(segments):
            s1 = (s + 1) % segments
            faces.append((a0 + s, b0 + s, b0 + s1))
            faces.append((a0 + s, b0 + s1, a0 + s1))
    return np.asarray(faces, dtype=int)


def polygon_rings(vertices, rings: int, segments: int) -> np.ndarray:
    """Points of a convex polygon laid out like ``ring_faces`` expects."""
    v = np.asarray(vertices, dtype=float)
    c = v.mean(axis=0)
    closed = np.vstack([v, v[:1]])
    seg_len = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.arange(segments) / segments * cum[-1]
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(v) - 1)
    frac = (s - cum[k]) / seg_len[k]
    boundary = closed[k] + frac[:, None] * (closed[k + 1] - closed[k])
    pts = [c]
    for r in range(1, rings + 1):
        pts.extend(c + (r / rings) * (boundary - c))
    return np.asarray(pts)


def surface_mesh(refr: PolyBlockRefractor, resolution: int):
    """``(vertices, faces)`` of the refractor over its domain (graph of u for planar problems)."""
    if resolution < 7:
        raise ConfigError("mesh resolution must be at least 7", assumption="export")
    rings, segments = ring_counts(resolution)
    if isinstance(refr.domain, PlanarDomain):
        pts = polygon_rings(refr.domain.vertices, rings, segments)
        verts = np.column_stack([pts, refr.radius(pts)])
    else:
        if refr.domain.n != 3:
            raise ConfigError("meshes need n = 3; export 2D scenes as csv", assumption="export")
        x, _ = refr.domain.polar_grid(rings, segments)
        verts = refr.surface(x)
    return verts, ring_faces(rings, segments)


def write_obj(path, verts, faces) -> None:
    lines = ["# refractor-forge surface"]
    lines += ["v " + " ".join(_fmt(c) for c in v) for v in verts]
    lines += ["f " + " ".join(str(i + 1) for i in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
    return np.asarray(verts), np.asarray(faces, dtype=int)


def write_ply(path, verts, faces) -> None:
    head = [
        "ply",
        "format ascii 1.0",
        "comment refractor-forge surface",
        f"element vertex {len(verts)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    body = [" ".join(_fmt(c) for c in v) for v in verts]
    body += [f"{len(f)} " + " ".join(str(i) for i in f) for f in faces]
    Path(path).write_text("\n".join(head + body) + "\n", encoding="utf-8", newline="\n")


def read_ply(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    nv = nf = 0
    start = 0
    for i, line in enumerate(lines):
        if line.startswith("element vertex"):
            nv = int(line.split()[-1])
        elif line.startswith("element face"):
            nf = int(line.split()[-1])
        elif line == "end_header":
            start = i + 1
            break
    verts = np.array([[float(v) for v in lines[start + i].split()] for i in range(nv)])
    faces = np.array([[int(v) for v in lines[start + nv + i].split()[1:]] for i in range(nf)], dtype=int)
    return verts, faces


def surface_table(refr: PolyBlockRefractor, resolution: int):
    """``(header, rows)`` describing the surface; 2D rows are ordered by angle."""
    dom = refr.domain
    if isinstance(dom, PlanarDomain):
        verts, _ = surface_mesh(refr, resolution)
        return ["x1", "x2", "u"], verts.tolist()
    if dom.n == 2:
        rings = max(1, (resolution - 1) // 2)
        x, theta = dom.polar_grid(rings, 0)
        rho = refr.radius(x)
        return ["theta", "x1", "x2", "rho"], [[t, a, b, r] for t, (a, b), r in zip(theta, x, rho)]
    rings, segments = ring_counts(resolution)
    x, _ = dom.polar_grid(rings, segments)
    rho = refr.radius(x)
    return ["x1", "x2", "x3", "rho"], [[*xi, r] for xi, r in zip(x, rho)]

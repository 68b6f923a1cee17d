"""Mesh file I/O: OBJ (positions, UVs, faces), binary PLY, JSON sidecars.

Sidecar files carry landmark anchors (name -> {triangle, bary}), region
masks (name -> vertex index list), and optional per-vertex region weights.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .mesh import BarycentricAnchor, Mesh


def save_obj(path, mesh: Mesh) -> None:
    lines = ["# gsavatar mesh"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    if mesh.uv is not None:
        for tri_uv in mesh.uv:
            for uv in tri_uv:
                lines.append(f"vt {uv[0]:.9g} {uv[1]:.9g}")
        for i, t in enumerate(mesh.triangles):
            a, b, c = (int(x) + 1 for x in t)
            k = 3 * i + 1
            lines.append(f"f {a}/{k} {b}/{k + 1} {c}/{k + 2}")
    else:
        for t in mesh.triangles:
            lines.append(f"f {int(t[0]) + 1} {int(t[1]) + 1} {int(t[2]) + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> Mesh:
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[int]] = []
    face_uvs: list[list[int]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vt":
            uvs.append([float(x) for x in parts[1:3]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ValueError("only triangle faces are supported")
            vi, ti = [], []
            for token in parts[1:]:
                fields = token.split("/")
                vi.append(int(fields[0]) - 1)
                if len(fields) > 1 and fields[1]:
                    ti.append(int(fields[1]) - 1)
            faces.append(vi)
            if len(ti) == 3:
                face_uvs.append(ti)
    uv = None
    if face_uvs and len(face_uvs) == len(faces):
        uv_arr = np.asarray(uvs, dtype=np.float64)
        uv = uv_arr[np.asarray(face_uvs, dtype=np.int64)]
    return Mesh(np.asarray(verts), np.asarray(faces, dtype=np.int64), uv=uv)


def save_ply(path, mesh_or_points) -> None:
    """Binary little-endian PLY. Accepts a Mesh or an (N, 3) point array."""
    if isinstance(mesh_or_points, Mesh):
        verts = mesh_or_points.vertices
        tris = mesh_or_points.triangles
    else:
        verts = np.asarray(getattr(mesh_or_points, "points", mesh_or_points), dtype=np.float64)
        tris = np.zeros((0, 3), dtype=np.int64)
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {len(verts)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(tris)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(verts.astype("<f4").tobytes())
        for t in tris:
            f.write(struct.pack("<Biii", 3, int(t[0]), int(t[1]), int(t[2])))


def load_ply(path):
    """Load a binary little-endian PLY written by `save_ply`.

    Returns a Mesh when faces are present, else an (N, 3) float64 array.
    """
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    n_vert = n_face = 0
    for line in header:
        if line.startswith("element vertex"):
            n_vert = int(line.split()[-1])
        elif line.startswith("element face"):
            n_face = int(line.split()[-1])
    if "format binary_little_endian 1.0" not in header:
        raise ValueError("unsupported PLY format")
    off = end
    verts = np.frombuffer(data, dtype="<f4", count=3 * n_vert, offset=off).reshape(n_vert, 3).astype(np.float64)
    off += 12 * n_vert
    tris = np.empty((n_face, 3), dtype=np.int64)
    for i in range(n_face):
        cnt = data[off]
        if cnt != 3:
            raise ValueError("only triangle faces are supported")
        tris[i] = struct.unpack_from("<iii", data, off + 1)
        off += 13
    if n_face == 0:
        return verts
    return Mesh(verts, tris)


def save_sidecar(path, mesh: Mesh) -> None:
    doc = {
        "landmarks3d": {
            name: {"triangle": int(a.triangle), "bary": a.bary.tolist()} for name, a in mesh.landmarks3d.items()
        },
        "region_masks": {name: np.asarray(idx).tolist() for name, idx in mesh.region_masks.items()},
    }
    if mesh.region_weights is not None:
        doc["region_weights"] = mesh.region_weights.tolist()
    Path(path).write_text(json.dumps(doc))


def load_sidecar(path, mesh: Mesh) -> Mesh:
    """Attach landmarks/regions from a sidecar JSON to an existing mesh."""
    doc = json.loads(Path(path).read_text())
    landmarks = {
        name: BarycentricAnchor(int(a["triangle"]), np.asarray(a["bary"]))
        for name, a in doc.get("landmarks3d", {}).items()
    }
    masks = {name: np.asarray(idx, dtype=np.int64) for name, idx in doc.get("region_masks", {}).items()}
    weights = doc.get("region_weights")
    return Mesh(
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        uv=mesh.uv,
        landmarks3d=landmarks,
        region_masks=masks,
        region_weights=None if weights is None else np.asarray(weights),
    )

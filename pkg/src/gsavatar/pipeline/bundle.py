"""Avatar bundle: every fitted component of one subject in a directory,
indexed by a manifest that names the files and pins their hashes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..appearance.decoders import Decoder, load_decoder, save_decoder
from ..appearance.texels import TexelGaussianMap, load_texel_map, save_texel_map
from ..geometry.cameras import Camera
from ..geometry.mesh import Mesh
from ..geometry.meshio import load_obj, save_obj
from ..head.model import HeadModel, load_head_model, save_head_model
from ..skinning.character import CharacterRig, ConstantPredictor, DeformationPredictor, ZeroPredictor
from ..skinning.dqs import SkinningWeights
from ..skinning.graph import build_embedded_graph
from ..skinning.skeleton import Skeleton

FORMAT_VERSIONS = {"bundle": 1, "head": 1, "texmap": 1, "decoder": 1}


@dataclass
class StitchMeta:
    """How the stitched template derives from the rig template and the head.

    The slice mappings let per-frame rig/head vertices be transferred onto
    the constant stitched topology: kept vertices copy through, created
    (cut) vertices interpolate along their source edge.
    """

    body_kept: np.ndarray
    body_created_edges: np.ndarray
    body_created_t: np.ndarray
    head_kept: np.ndarray
    head_created_edges: np.ndarray
    head_created_t: np.ndarray
    body_vertex_count: int
    head_vertex_count: int
    body_triangle_count: int
    head_triangle_count: int
    seam_body: np.ndarray
    seam_head: np.ndarray

    def body_triangles(self) -> np.ndarray:
        return np.arange(self.body_triangle_count)

    def head_triangles(self) -> np.ndarray:
        return np.arange(self.body_triangle_count, self.body_triangle_count + self.head_triangle_count)

    def map_part(self, source_vertices: np.ndarray, kept, edges, t) -> np.ndarray:
        out = [source_vertices[kept]]
        if len(edges):
            a = source_vertices[edges[:, 0]]
            b = source_vertices[edges[:, 1]]
            out.append(a + t[:, None] * (b - a))
        return np.concatenate(out)

    def body_part(self, rig_vertices: np.ndarray) -> np.ndarray:
        return self.map_part(rig_vertices, self.body_kept, self.body_created_edges, self.body_created_t)

    def head_part(self, head_vertices: np.ndarray) -> np.ndarray:
        return self.map_part(head_vertices, self.head_kept, self.head_created_edges, self.head_created_t)

    def to_dict(self) -> dict:
        return {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in self.__dict__.items()
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StitchMeta":
        def arr(name, dtype=np.int64):
            return np.asarray(d[name], dtype=dtype).reshape(-1, 2) if name.endswith("edges") else np.asarray(d[name], dtype=dtype)

        return cls(
            body_kept=arr("body_kept"),
            body_created_edges=arr("body_created_edges"),
            body_created_t=np.asarray(d["body_created_t"], dtype=np.float64),
            head_kept=arr("head_kept"),
            head_created_edges=arr("head_created_edges"),
            head_created_t=np.asarray(d["head_created_t"], dtype=np.float64),
            body_vertex_count=int(d["body_vertex_count"]),
            head_vertex_count=int(d["head_vertex_count"]),
            body_triangle_count=int(d["body_triangle_count"]),
            head_triangle_count=int(d["head_triangle_count"]),
            seam_body=arr("seam_body"),
            seam_head=arr("seam_head"),
        )


@dataclass
class AvatarBundle:
    rig: CharacterRig
    head: HeadModel
    stitched: Mesh
    stitch_meta: StitchMeta
    stitched_weights: SkinningWeights
    body_texmap: TexelGaussianMap
    head_texmap: TexelGaussianMap
    body_decoder: Decoder
    head_decoder: Decoder
    cameras: dict[str, Camera] = field(default_factory=dict)
    versions: dict = field(default_factory=lambda: dict(FORMAT_VERSIONS))

    def __post_init__(self):
        n = self.stitch_meta.body_vertex_count + self.stitch_meta.head_vertex_count
        if self.stitched.num_vertices != n:
            raise ValueError("stitched mesh does not match its meta")
        if self.stitched_weights.num_vertices != n:
            raise ValueError("stitched skinning weights do not match the template")
        for texmap, tris in (
            (self.body_texmap, self.stitch_meta.body_triangles()),
            (self.head_texmap, self.stitch_meta.head_triangles()),
        ):
            if texmap.num_texels and not np.isin(texmap.triangles, tris).all():
                raise ValueError("texel map references triangles outside its region")
        if self.head.personalization is None:
            raise ValueError("bundle head model must be personalized")

    @property
    def d_body(self) -> int:
        return self.rig.d_body

    @property
    def k_gamma(self) -> int:
        return self.head.k_expression


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_bundle(directory, bundle: AvatarBundle, predictor: DeformationPredictor | None = None) -> None:
    """Write all component files plus manifest.json with their hashes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}

    bundle.rig.skeleton.save_json(directory / "skeleton.json")
    files["skeleton"] = "skeleton.json"
    bundle.rig.skin_weights.save_json(directory / "skinning_body.json")
    files["skinning_body"] = "skinning_body.json"
    save_obj(directory / "template_body.obj", bundle.rig.template)
    files["template_body"] = "template_body.obj"
    bundle.stitched_weights.save_json(directory / "skinning_stitched.json")
    files["skinning_stitched"] = "skinning_stitched.json"
    save_obj(directory / "stitched.obj", bundle.stitched)
    files["stitched"] = "stitched.obj"
    (directory / "stitch_meta.json").write_text(json.dumps(bundle.stitch_meta.to_dict()))
    files["stitch_meta"] = "stitch_meta.json"
    save_head_model(directory / "head.bin", bundle.head)
    files["head"] = "head.bin"
    files["head_sidecar"] = "head.bin.json"
    save_texel_map(directory / "body.texmap", bundle.body_texmap)
    files["body_texmap"] = "body.texmap"
    save_texel_map(directory / "head.texmap", bundle.head_texmap)
    files["head_texmap"] = "head.texmap"
    save_decoder(directory / "body.dec", bundle.body_decoder)
    files["body_decoder"] = "body.dec"
    save_decoder(directory / "head.dec", bundle.head_decoder)
    files["head_decoder"] = "head.dec"
    (directory / "cameras.json").write_text(
        json.dumps({name: cam.to_dict() for name, cam in bundle.cameras.items()})
    )
    files["cameras"] = "cameras.json"

    rig_cfg = {
        "graph_nodes": bundle.rig.graph.num_nodes,
        "graph_seed": 0,
        "hand_vertices": bundle.rig.hand_vertices.tolist(),
        "head_joint": bundle.rig.head_joint,
        "facing_axis": np.asarray(bundle.rig.facing_axis).tolist(),
        "predictor": "zero",
    }
    if isinstance(predictor, ConstantPredictor):
        rig_cfg["predictor"] = "constant"
        np.savez(
            directory / "predictor.npz",
            rotations=predictor.node_rotations,
            translations=predictor.node_translations,
            displacements=predictor.displacements,
        )
        files["predictor"] = "predictor.npz"
    (directory / "config.json").write_text(json.dumps({"rig": rig_cfg, "versions": bundle.versions}))
    files["config"] = "config.json"

    manifest = {
        "format": FORMAT_VERSIONS["bundle"],
        "files": files,
        "hashes": {key: _sha256(directory / name) for key, name in files.items()},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_bundle(directory, verify_hashes: bool = True):
    """Load a bundle directory. Returns (AvatarBundle, DeformationPredictor)."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    files = manifest["files"]
    if verify_hashes:
        for key, name in files.items():
            actual = _sha256(directory / name)
            if actual != manifest["hashes"][key]:
                raise ValueError(f"bundle component {name} does not match its manifest hash")

    cfg = json.loads((directory / files["config"]).read_text())
    skeleton = Skeleton.load_json(directory / files["skeleton"])
    template = load_obj(directory / files["template_body"])
    body_weights = SkinningWeights.load_json(directory / files["skinning_body"])
    rig_cfg = cfg["rig"]
    graph = build_embedded_graph(template, rig_cfg["graph_nodes"], seed=rig_cfg.get("graph_seed", 0))
    rig = CharacterRig(
        skeleton=skeleton,
        template=template,
        skin_weights=body_weights,
        graph=graph,
        hand_vertices=np.asarray(rig_cfg.get("hand_vertices", []), dtype=np.int64),
        head_joint=rig_cfg.get("head_joint"),
        facing_axis=np.asarray(rig_cfg.get("facing_axis", [0.0, 0.0, 1.0])),
    )
    predictor: DeformationPredictor = ZeroPredictor()
    if rig_cfg.get("predictor") == "constant":
        data = np.load(directory / files["predictor"])
        predictor = ConstantPredictor(data["rotations"], data["translations"], data["displacements"])

    bundle = AvatarBundle(
        rig=rig,
        head=load_head_model(directory / files["head"]),
        stitched=load_obj(directory / files["stitched"]),
        stitch_meta=StitchMeta.from_dict(json.loads((directory / files["stitch_meta"]).read_text())),
        stitched_weights=SkinningWeights.load_json(directory / files["skinning_stitched"]),
        body_texmap=load_texel_map(directory / files["body_texmap"]),
        head_texmap=load_texel_map(directory / files["head_texmap"]),
        body_decoder=load_decoder(directory / files["body_decoder"]),
        head_decoder=load_decoder(directory / files["head_decoder"]),
        cameras={
            name: Camera.from_dict(d)
            for name, d in json.loads((directory / files["cameras"]).read_text()).items()
        },
        versions=cfg.get("versions", dict(FORMAT_VERSIONS)),
    )
    return bundle, predictor

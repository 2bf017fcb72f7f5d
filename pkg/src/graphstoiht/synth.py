"""Synthetic recovery instances: Gaussian designs and graph-structured signals."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, random_walk_support
from .losses import Instance

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SynthSpec:
    graph: Graph
    s: int
    m: int
    noise_norm: float = 0.0
    seed: int = 0
    # entries of A are drawn with this standard deviation times 1/sqrt(m)
    design_scale: float = 1.0

    def __post_init__(self):
        if not 1 <= self.s <= self.graph.num_nodes:
            raise GraphError(f"need 1 <= s <= p, got s={self.s}")
        if self.m < 1:
            raise GraphError(f"m must be positive, got {self.m}")
        if not self.noise_norm >= 0:
            raise GraphError(f"noise_norm must be nonnegative, got {self.noise_norm}")


def gaussian_design(m: int, p: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """i.i.d. normal entries with standard deviation ``scale / sqrt(m)``."""
    if m < 1 or p < 1:
        raise GraphError(f"design dimensions must be positive, got {m}x{p}")
    return rng.normal(0.0, scale / math.sqrt(m), size=(m, p))


def _nonzero_normals(rng: np.random.Generator, k: int) -> np.ndarray:
    v = rng.standard_normal(k)
    while np.any(v == 0.0):
        zeros = v == 0.0
        v[zeros] = rng.standard_normal(int(zeros.sum()))
    return v


def synth_instance(spec: SynthSpec) -> Instance:
    """Signal on a random-walk support, Gaussian design, optional noise of exact norm."""
    rng = np.random.default_rng(spec.seed)
    p = spec.graph.num_nodes
    support = random_walk_support(spec.graph, spec.s, rng)
    x_star = np.zeros(p)
    x_star[support] = _nonzero_normals(rng, spec.s)
    A = gaussian_design(spec.m, p, rng, spec.design_scale)
    y = A @ x_star
    noise = np.zeros(spec.m)
    if spec.noise_norm > 0:
        e = rng.standard_normal(spec.m)
        noise = (spec.noise_norm / np.linalg.norm(e)) * e
        y = y + noise
    return Instance(A, y, x_star, noise)


# -- directory serialization ---------------------------------------------------
#
#   design.bin   int64 m, int64 p, then m*p float64, little endian, row major
#   y.txt, x_star.txt, noise.txt   one value per line, 17 significant digits
#   manifest.json  shapes and generation parameters

def _write_vector(path: Path, v: np.ndarray) -> None:
    path.write_text("".join(f"{x:.17g}\n" for x in v))


def _read_vector(path: Path) -> np.ndarray:
    return np.array([float(t) for t in path.read_text().split()], dtype=np.float64)


def write_matrix(path: str | Path, A: np.ndarray) -> None:
    A = np.ascontiguousarray(A, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array(A.shape, dtype="<i8").tobytes())
        fh.write(A.tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise GraphError(f"{path}: truncated header")
    m, p = np.frombuffer(raw[:16], dtype="<i8")
    body = np.frombuffer(raw[16:], dtype="<f8")
    if len(body) != m * p:
        raise GraphError(f"{path}: expected {m * p} values, found {len(body)}")
    return body.reshape(int(m), int(p)).astype(np.float64)


def save_instance(inst: Instance, directory: str | Path, meta: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "design.bin", inst.A)
    _write_vector(d / "y.txt", inst.y)
    files = {"design": "design.bin", "y": "y.txt"}
    for name in ("x_star", "noise"):
        v = getattr(inst, name)
        if v is not None:
            _write_vector(d / f"{name}.txt", v)
            files[name] = f"{name}.txt"
    manifest = {"version": FORMAT_VERSION, "m": inst.m, "p": inst.p,
                "classification": inst.classification, "files": files,
                "meta": meta or {}}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_instance(directory: str | Path) -> Instance:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    files = manifest["files"]
    A = read_matrix(d / files["design"])
    if A.shape != (manifest["m"], manifest["p"]):
        raise GraphError(f"{d}: design shape {A.shape} disagrees with manifest")
    extra = {k: _read_vector(d / files[k]) for k in ("x_star", "noise") if k in files}
    return Instance(A, _read_vector(d / files["y"]), classification=manifest["classification"],
                    **extra)

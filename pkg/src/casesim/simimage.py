"""Cluster-reordered cosine-similarity matrices rendered as grey-level images."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .clustering import select_epsilon, unit_rows
from .errors import DataError, EmptyCase, ZeroVector

DEFAULT_SIDE = 32


@dataclass
class CaseDisputes:
    """One case's disputes with their vectors and cluster codes."""

    case_id: str
    items: list[str]
    vectors: np.ndarray
    codes: list[int]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if not (len(self.items) == self.vectors.shape[0] == len(self.codes)):
            raise DataError(f"{self.case_id}: items, vectors and codes differ in length")


@dataclass
class SimilarityImage:
    pixels: np.ndarray
    raw_pixels: np.ndarray
    epsilon_used: float
    pair_id: str = ""
    label: int | None = None

    @property
    def side(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def raw_side(self) -> int:
        return int(self.raw_pixels.shape[0])


def cosine_similarity(v_a, v_b) -> float:
    a = np.asarray(getattr(v_a, "values", v_a), dtype=np.float64)
    b = np.asarray(getattr(v_b, "values", v_b), dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("vectors differ in dims")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def reorder_by_cluster(codes: Sequence[int]) -> list[int]:
    """Indices that stably sort the disputes by ascending cluster code."""
    return sorted(range(len(codes)), key=lambda i: codes[i])


def reordered(case: CaseDisputes) -> CaseDisputes:
    order = reorder_by_cluster(case.codes)
    return CaseDisputes(case.case_id, [case.items[i] for i in order], case.vectors[order],
                        [case.codes[i] for i in order])


def build_z(case_i: CaseDisputes, case_j: CaseDisputes, reorder: bool = True) -> np.ndarray:
    """Pairwise cosine similarities over the concatenated (reordered) disputes."""
    if reorder:
        case_i, case_j = reordered(case_i), reordered(case_j)
    u = unit_rows(np.vstack([case_i.vectors, case_j.vectors]))
    z = np.clip(u @ u.T, -1.0, 1.0)
    z = (z + z.T) / 2
    np.fill_diagonal(z, 1.0)
    return z


def image_epsilon(z: np.ndarray) -> float:
    return select_epsilon(float(z.min()), float(z.max()))


def project_grey(z: np.ndarray, epsilon: float) -> np.ndarray:
    """Piecewise-linear map of similarities to 0..255 with the knee at ``epsilon``.

    [z_min, eps] covers 0..127 and (eps, z_max] covers 127..255.
    """
    z = np.asarray(z, dtype=np.float64)
    return kernels.project_grey(z, float(z.min()), float(epsilon), float(z.max()))


def round_half_away(x: np.ndarray) -> np.ndarray:
    r = np.floor(x)
    return r + (x - r >= 0.5)


def resize_grey(grey: np.ndarray, side: int = DEFAULT_SIDE) -> np.ndarray:
    grey = np.asarray(grey)
    if grey.shape == (side, side):
        return grey.astype(np.uint8, copy=True)
    out = kernels.bilinear_resize(grey.astype(np.float64), side, side)
    return np.clip(round_half_away(out), 0, 255).astype(np.uint8)


def make_image(case_i: CaseDisputes, case_j: CaseDisputes, side: int = DEFAULT_SIDE,
               pair_id: str = "", label: int | None = None) -> SimilarityImage:
    if not case_i.items or not case_j.items:
        raise EmptyCase(f"empty dispute list in pair {case_i.case_id}/{case_j.case_id}")
    z = build_z(case_i, case_j)
    eps = image_epsilon(z)
    raw = project_grey(z, eps)
    return SimilarityImage(resize_grey(raw, side), raw, eps, pair_id or f"{case_i.case_id}|{case_j.case_id}", label)


# --------------------------------------------------------------------------
# on-disk format

def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos].decode("ascii"))
    if fields[0] != "P5" or fields[3] != "255":
        raise DataError(f"{path}: not an 8-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    body = data[pos + 1:pos + 1 + w * h]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def save_image(stem, img: SimilarityImage) -> None:
    stem = Path(stem)
    write_pgm(stem.with_suffix(".pgm"), img.pixels)
    stem.with_suffix(".json").write_text(json.dumps({
        "pair_id": img.pair_id, "raw_side": img.raw_side, "side": img.side,
        "epsilon_used": img.epsilon_used, "label": img.label,
    }, ensure_ascii=False))


def load_image(stem) -> SimilarityImage:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    pixels = read_pgm(stem.with_suffix(".pgm"))
    # the pre-resize matrix is not persisted; keep a placeholder of the right size
    raw = np.zeros((meta["raw_side"], meta["raw_side"]), dtype=np.uint8)
    return SimilarityImage(pixels, raw, meta["epsilon_used"], meta["pair_id"], meta["label"])


class ImageCache:
    """Images on disk keyed by (pair id, model tag, clustering id)."""

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _stem(self, pair_id, model_tag, clustering_id):
        key = hashlib.sha256(f"{pair_id}\x1f{model_tag}\x1f{clustering_id}".encode()).hexdigest()[:24]
        return self.root / key[:2] / key

    def get(self, pair_id, model_tag, clustering_id) -> SimilarityImage | None:
        stem = self._stem(pair_id, model_tag, clustering_id)
        if stem.with_suffix(".json").exists() and stem.with_suffix(".pgm").exists():
            return load_image(stem)
        return None

    def put(self, img: SimilarityImage, model_tag, clustering_id) -> None:
        stem = self._stem(img.pair_id, model_tag, clustering_id)
        with self._lock:
            stem.parent.mkdir(parents=True, exist_ok=True)
            save_image(stem, img)

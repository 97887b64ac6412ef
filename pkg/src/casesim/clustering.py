"""Density-based clustering of dispute vectors with the 0.8 selection-epsilon rule."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import DataError, ZeroVector

EPSILON_FRACTION = 0.8


@dataclass(frozen=True)
class ClusterAssignment:
    sentence_id: str
    cluster_code: int


@dataclass
class Clustering:
    assignments: list[ClusterAssignment]
    gamma: int
    epsilon: float
    params: dict = field(default_factory=dict)

    def codes(self) -> dict[str, int]:
        return {a.sentence_id: a.cluster_code for a in self.assignments}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"gamma": self.gamma, "epsilon": self.epsilon, "params": self.params}) + "\n")
            for a in self.assignments:
                fh.write(json.dumps({"sentence_id": a.sentence_id, "cluster_code": a.cluster_code},
                                    ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path) -> "Clustering":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            rows = [json.loads(line) for line in fh if line.strip()]
        return cls([ClusterAssignment(r["sentence_id"], r["cluster_code"]) for r in rows],
                   header["gamma"], header["epsilon"], header.get("params", {}))


def _as_matrix(vectors) -> np.ndarray:
    rows = [getattr(v, "values", v) for v in vectors]
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("vectors must share one dimensionality")
    return x


def unit_rows(vectors) -> np.ndarray:
    x = _as_matrix(vectors)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroVector(f"zero-norm vector at index {int(np.argmax(norms == 0))}")
    return x / norms[:, None]


def distance_matrix(vectors) -> np.ndarray:
    """Cosine distance 1 - cos(a, b); symmetric with an exact zero diagonal."""
    u = unit_rows(vectors)
    if u.shape[0] < 2:
        raise DataError("need at least two vectors")
    d = 1.0 - np.clip(u @ u.T, -1.0, 1.0)
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def select_epsilon(values_min: float, values_max: float, fraction: float = EPSILON_FRACTION) -> float:
    if values_min > values_max:
        raise ValueError("values_min > values_max")
    return values_min + fraction * (values_max - values_min)


def off_diagonal_range(m: np.ndarray) -> tuple[float, float]:
    mask = ~np.eye(m.shape[0], dtype=bool)
    vals = m[mask]
    return float(vals.min()), float(vals.max())


class ClusterEngine(Protocol):
    def labels(self, distances: np.ndarray, min_cluster_size: int, epsilon: float) -> np.ndarray:
        """Raw labels over a precomputed distance matrix; -1 marks noise."""


class HdbscanEngine:
    """scikit-learn's HDBSCAN on a precomputed distance matrix."""

    def labels(self, distances, min_cluster_size, epsilon):
        from sklearn.cluster import HDBSCAN

        model = HDBSCAN(min_cluster_size=min_cluster_size, metric="precomputed",
                        cluster_selection_epsilon=float(epsilon), copy=True)
        return model.fit_predict(distances)


@dataclass
class ClusterParams:
    min_cluster_size: int = 10
    epsilon_fraction: float = EPSILON_FRACTION
    # an explicit epsilon overrides the range rule
    epsilon: float | None = None


def renumber(raw_labels: Sequence[int]) -> list[int]:
    """Map engine labels to 1..gamma in first-appearance order; noise becomes 0."""
    mapping: dict[int, int] = {}
    out = []
    for lab in raw_labels:
        lab = int(lab)
        if lab < 0:
            out.append(0)
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out.append(mapping[lab])
    return out


def cluster(vectors, params: ClusterParams | None = None, sentence_ids: Sequence[str] | None = None,
            engine: ClusterEngine | None = None) -> Clustering:
    params = params or ClusterParams()
    engine = engine or HdbscanEngine()
    dist = distance_matrix(vectors)
    n = dist.shape[0]
    ids = list(sentence_ids) if sentence_ids is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise DataError("sentence_ids and vectors differ in length")
    lo, hi = off_diagonal_range(dist)
    eps = params.epsilon if params.epsilon is not None else select_epsilon(lo, hi, params.epsilon_fraction)
    if hi == 0.0:
        # all points coincide: one maximally dense cluster
        raw = np.zeros(n, dtype=int)
    elif n < max(params.min_cluster_size, 2):
        raw = -np.ones(n, dtype=int)
    else:
        raw = engine.labels(dist, params.min_cluster_size, eps)
    codes = renumber(raw)
    record = {"min_cluster_size": params.min_cluster_size, "epsilon_fraction": params.epsilon_fraction,
              "engine": type(engine).__name__}
    return Clustering([ClusterAssignment(i, c) for i, c in zip(ids, codes)], max(codes, default=0), eps, record)

"""Sentence-embedding providers, the vector cache, and fine-tuning pair generation."""

from __future__ import annotations

import base64
import copy
import hashlib
import json
import logging
import math
import threading
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Protocol, Sequence

import numpy as np

from . import kernels
from .errors import BackendUnavailable, DataError, DimensionMismatch, EmptyTrainingSet
from .evaluation import char_tokens

log = logging.getLogger(__name__)

SAME, DIFF = "same", "diff"


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    model_tag: str

    @property
    def dims(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class FinetunePair:
    sentence_a: str
    sentence_b: str
    category: str
    a_id: str = ""
    b_id: str = ""

    def to_record(self) -> dict:
        return {"sentence_a": self.sentence_a, "sentence_b": self.sentence_b, "category": self.category}


class EmbeddingProvider(Protocol):
    model_tag: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...

    def finetune(self, pairs: Sequence[FinetunePair]) -> "EmbeddingProvider": ...


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hashed_features(text: str, n_features: int, salt: str) -> list[tuple[int, float]]:
    toks = char_tokens(text)
    grams = toks + [a + b for a, b in zip(toks, toks[1:])]
    feats = []
    for g in grams:
        h = hashlib.blake2b((salt + "\x1f" + g).encode("utf-8"), digest_size=8).digest()
        v = int.from_bytes(h, "little")
        feats.append((v % n_features, 1.0 if (v >> 63) & 1 else -1.0))
    return feats


class HashEmbedder:
    """Deterministic offline stand-in for a sentence encoder.

    Character uni- and bi-grams are hashed into ``dims`` signed buckets and
    the result is L2-normalized, so texts sharing n-grams get nearby
    vectors. Fine-tuning is a no-op that only changes the tag.
    """

    def __init__(self, backend_id: str = "lf", dims: int = 64, finetuned: bool = False):
        self.backend_id = backend_id
        self.dims = dims
        self.finetuned = finetuned
        self.model_tag = f"hash:{backend_id}:{dims}" + (":ft" if finetuned else "")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dims))
        for i, t in enumerate(texts):
            for j, s in _hashed_features(t, self.dims, self.backend_id):
                out[i, j] += s
            norm = np.linalg.norm(out[i])
            if norm == 0.0:
                out[i, 0] = 1.0
            else:
                out[i] /= norm
        return out

    def finetune(self, pairs: Sequence[FinetunePair]) -> "HashEmbedder":
        return HashEmbedder(self.backend_id, self.dims, finetuned=True)


class ProjectionEmbedder:
    """Hashed n-gram features followed by a trainable linear projection.

    Small enough to fine-tune on CPU in seconds; training pulls "same"
    pairs towards cosine 1 and "diff" pairs towards cosine 0.
    """

    def __init__(self, backend_id: str = "lf", dims: int = 64, n_features: int = 2048,
                 seed: int = 0, weights: np.ndarray | None = None, generation: int = 0):
        self.backend_id = backend_id
        self.dims = dims
        self.n_features = n_features
        self.seed = seed
        self.generation = generation
        if weights is None:
            rng = np.random.default_rng(seed)
            weights = rng.standard_normal((n_features, dims)) / math.sqrt(dims)
        self.weights = weights
        digest = hashlib.sha256(weights.tobytes()).hexdigest()[:12]
        self.model_tag = f"proj:{backend_id}:{dims}:{digest}"

    def _features(self, texts: Sequence[str]) -> np.ndarray:
        x = np.zeros((len(texts), self.n_features))
        for i, t in enumerate(texts):
            for j, s in _hashed_features(t, self.n_features, self.backend_id):
                x[i, j] += s
        return x

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        y = self._features(texts) @ self.weights
        norms = np.linalg.norm(y, axis=1, keepdims=True)
        y[:, :1][norms[:, 0] == 0] = 1.0
        norms[norms == 0] = 1.0
        return y / norms

    def finetune(self, pairs: Sequence[FinetunePair], epochs: int = 3, lr: float = 1e-2,
                 batch_size: int = 64) -> "ProjectionEmbedder":
        import torch

        gen = torch.Generator().manual_seed(self.seed + self.generation + 1)
        a = torch.tensor(self._features([p.sentence_a for p in pairs]), dtype=torch.float32)
        b = torch.tensor(self._features([p.sentence_b for p in pairs]), dtype=torch.float32)
        target = torch.tensor([1.0 if p.category == SAME else 0.0 for p in pairs])
        w = torch.nn.Parameter(torch.tensor(self.weights, dtype=torch.float32))
        opt = torch.optim.Adam([w], lr=lr)
        for _ in range(epochs):
            order = torch.randperm(len(pairs), generator=gen)
            for start in range(0, len(pairs), batch_size):
                idx = order[start:start + batch_size]
                cos = torch.nn.functional.cosine_similarity(a[idx] @ w, b[idx] @ w, dim=1, eps=1e-8)
                loss = torch.mean((cos - target[idx]) ** 2)
                opt.zero_grad()
                loss.backward()
                opt.step()
        return ProjectionEmbedder(self.backend_id, self.dims, self.n_features, self.seed,
                                  w.detach().numpy().astype(np.float64), self.generation + 1)


class SentenceTransformerEmbedder:
    """Adapter for a sentence-transformers model (weights fetched by the library)."""

    KNOWN = {"lf": "thunlp/Lawformer", "rob": "hfl/chinese-roberta-wwm-ext-large"}

    def __init__(self, backend_id: str, model_name: str | None = None, model=None):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackendUnavailable("sentence-transformers is not installed") from exc
        self.backend_id = backend_id
        self.model_name = model_name or self.KNOWN.get(backend_id, backend_id)
        try:
            self.model = model or SentenceTransformer(self.model_name)
        except Exception as exc:  # network / weights errors come in many types
            raise BackendUnavailable(f"cannot load {self.model_name}: {exc}") from exc
        self.tuned = model is not None
        self.model_tag = f"st:{backend_id}:{self.model_name}" + (":ft" if self.tuned else "")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(self.model.encode(list(texts), convert_to_numpy=True), dtype=np.float64)

    def finetune(self, pairs: Sequence[FinetunePair], epochs: int = 1, batch_size: int = 16):
        from sentence_transformers import InputExample, losses
        from torch.utils.data import DataLoader

        examples = [InputExample(texts=[p.sentence_a, p.sentence_b],
                                 label=1.0 if p.category == SAME else 0.0) for p in pairs]
        loader = DataLoader(examples, shuffle=True, batch_size=batch_size)
        # train a copy so the base provider keeps its original weights
        model = copy.deepcopy(self.model)
        loss = losses.CosineSimilarityLoss(model)
        model.fit(train_objectives=[(loader, loss)], epochs=epochs, show_progress_bar=False)
        return SentenceTransformerEmbedder(self.backend_id, self.model_name, model)


def make_provider(backend_id: str, kind: str = "hash", **kwargs) -> EmbeddingProvider:
    if kind == "hash":
        return HashEmbedder(backend_id, **kwargs)
    if kind == "projection":
        return ProjectionEmbedder(backend_id, **kwargs)
    if kind == "sentence-transformers":
        return SentenceTransformerEmbedder(backend_id, **kwargs)
    raise BackendUnavailable(f"unknown embedding provider kind {kind!r}")


# --------------------------------------------------------------------------
# vector store

class VectorStore:
    """Append-only cache of vectors keyed by (model_tag, content hash).

    Values are stored as base64 little-endian float64, so reads are
    bit-exact.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._mem: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        continue
                    vals = np.frombuffer(base64.b64decode(rec["values"]), dtype="<f8").copy()
                    if vals.shape[0] != rec["dims"]:
                        continue
                    self._mem[(rec["model_tag"], rec["hash"])] = vals

    def get(self, model_tag: str, h: str):
        return self._mem.get((model_tag, h))

    def put_many(self, model_tag: str, entries: list[tuple[str, np.ndarray]]) -> None:
        with self._lock:
            lines = []
            for h, v in entries:
                v = np.asarray(v, dtype="<f8")
                self._mem[(model_tag, h)] = v
                lines.append(json.dumps({"model_tag": model_tag, "hash": h, "dims": int(v.shape[0]),
                                         "values": base64.b64encode(v.tobytes()).decode("ascii")}))
            if self.path and lines:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")

    def __len__(self):
        return len(self._mem)


def embed_batch(statements: Sequence[str], backend: EmbeddingProvider | None,
                store: VectorStore | None = None) -> list[EmbeddingVector]:
    """Embed in input order, serving cached vectors where possible."""
    if backend is None:
        raise BackendUnavailable("no embedding backend")
    if not statements:
        raise DataError("nothing to embed")
    store = store if store is not None else VectorStore()
    tag = backend.model_tag
    hashes = [content_hash(s) for s in statements]
    missing = {}
    for h, s in zip(hashes, statements):
        if store.get(tag, h) is None and h not in missing:
            missing[h] = s
    if missing:
        try:
            raw = backend.embed(list(missing.values()))
        except ImportError as exc:
            raise BackendUnavailable(str(exc)) from exc
        rows = [np.asarray(r, dtype=np.float64).ravel() for r in raw]
        if len({r.shape[0] for r in rows}) > 1:
            raise DimensionMismatch(f"backend returned lengths {sorted({r.shape[0] for r in rows})}")
        for r in rows:
            if not np.all(np.isfinite(r)):
                raise DataError("backend returned non-finite values")
        store.put_many(tag, list(zip(missing.keys(), rows)))
    vecs = [EmbeddingVector(store.get(tag, h), tag) for h in hashes]
    if len({v.dims for v in vecs}) > 1:
        raise DimensionMismatch("cached vectors disagree on dims")
    return vecs


# --------------------------------------------------------------------------
# fine-tuning data

def sentence_ids(all_statements: dict[str, Sequence[str]]) -> list[tuple[str, str]]:
    return [(f"{cid}#{k}", s) for cid, items in all_statements.items() for k, s in enumerate(items)]


def heldout_split(all_statements: dict[str, Sequence[str]], labeled_case_ids) -> tuple[list, list]:
    """Partition (sentence_id, text) pairs into fine-tuning and reserved sets.

    Statements of labeled cases are reserved for the classifier.
    """
    labeled = set(labeled_case_ids)
    finetune_set, reserved = [], []
    for cid, items in all_statements.items():
        target = reserved if cid in labeled else finetune_set
        target.extend((f"{cid}#{k}", s) for k, s in enumerate(items))
    return finetune_set, reserved


def prune_small_clusters(assignments: dict[str, int], min_size: int = 10) -> set[str]:
    """Sentences whose (non-noise) cluster has at least ``min_size`` members."""
    sizes: dict[int, int] = {}
    for code in assignments.values():
        sizes[code] = sizes.get(code, 0) + 1
    return {sid for sid, code in assignments.items() if code != 0 and sizes[code] >= min_size}


def pair_counts(cluster_sizes: Iterable[int]) -> tuple[int, int]:
    """(same, diff) pair counts implied by cluster sizes."""
    sizes = list(cluster_sizes)
    n = sum(sizes)
    same = sum(math.comb(s, 2) for s in sizes)
    return same, math.comb(n, 2) - same


def generate_pairs(assignments: Sequence[tuple[str, int]],
                   texts: dict[str, str] | None = None) -> Iterator[FinetunePair]:
    """Every unordered pair of distinct entries, labeled same/diff by cluster.

    Pairs are produced lazily in (a, b) index order with a < b.
    """
    items = list(assignments)
    for a in range(len(items)):
        ida, ca = items[a]
        ta = texts[ida] if texts else ida
        for b in range(a + 1, len(items)):
            idb, cb = items[b]
            yield FinetunePair(ta, texts[idb] if texts else idb, SAME if ca == cb else DIFF, ida, idb)


def sample_pairs(pairs: Iterable[FinetunePair], per_category: int = 50000, seed: int = 0) -> list[FinetunePair]:
    """Uniform sample without replacement of up to ``per_category`` pairs per category.

    Reservoir sampling over the stream with a single generator; the
    result matches ``sample_cluster_pairs`` on the same input.
    """
    rng = kernels.pure.SplitMix64(seed)
    res = {SAME: [], DIFF: []}
    seen = {SAME: 0, DIFF: 0}
    for p in pairs:
        bucket = res[p.category]
        c = seen[p.category]
        if c < per_category:
            bucket.append(p)
        else:
            j = rng.below(c + 1)
            if j < per_category:
                bucket[j] = p
        seen[p.category] = c + 1
    for cat in (SAME, DIFF):
        if seen[cat] < per_category:
            warnings.warn(f"only {seen[cat]} {cat!r} pairs available (wanted {per_category})")
    return res[SAME] + res[DIFF]


def sample_cluster_pairs(assignments: Sequence[tuple[str, int]], per_category: int = 50000,
                         seed: int = 0, texts: dict[str, str] | None = None) -> list[FinetunePair]:
    """Fast path for ``sample_pairs(generate_pairs(assignments))`` using the kernel."""
    items = list(assignments)
    labels = np.array([c for _, c in items], dtype=np.int64)
    same, diff, n_same, n_diff = kernels.reservoir_cluster_pairs(labels, per_category, per_category, seed)
    for cat, n in ((SAME, n_same), (DIFF, n_diff)):
        if n < per_category:
            warnings.warn(f"only {n} {cat!r} pairs available (wanted {per_category})")

    def mk(a, b, cat):
        ida, idb = items[a][0], items[b][0]
        return FinetunePair(texts[ida] if texts else ida, texts[idb] if texts else idb, cat, ida, idb)

    return [mk(a, b, SAME) for a, b in same] + [mk(a, b, DIFF) for a, b in diff]


def write_pairs(path, pairs: Iterable[FinetunePair]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_pairs(path) -> list[FinetunePair]:
    with open(path, encoding="utf-8") as fh:
        return [FinetunePair(r["sentence_a"], r["sentence_b"], r["category"])
                for r in map(json.loads, filter(str.strip, fh))]


class EmbeddingRegistry:
    """Providers addressable by model tag."""

    def __init__(self):
        self._providers: dict[str, EmbeddingProvider] = {}

    def add(self, provider: EmbeddingProvider) -> str:
        self._providers[provider.model_tag] = provider
        return provider.model_tag

    def get(self, tag: str) -> EmbeddingProvider:
        try:
            return self._providers[tag]
        except KeyError:
            raise BackendUnavailable(f"no provider registered for {tag!r}") from None

    def __contains__(self, tag):
        return tag in self._providers


def finetune(backend: EmbeddingProvider | None, pairs: Sequence[FinetunePair],
             registry: EmbeddingRegistry | None = None) -> str:
    """Fine-tune ``backend`` on labeled pairs; returns the tuned model's tag."""
    if backend is None or not hasattr(backend, "finetune"):
        raise BackendUnavailable("backend does not support fine-tuning")
    if not pairs:
        raise EmptyTrainingSet("no fine-tuning pairs")
    try:
        tuned = backend.finetune(list(pairs))
    except ImportError as exc:
        raise BackendUnavailable(str(exc)) from exc
    if registry is not None:
        registry.add(tuned)
    log.info("fine-tuned %s -> %s on %d pairs", backend.model_tag, tuned.model_tag, len(pairs))
    return tuned.model_tag

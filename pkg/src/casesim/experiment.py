"""Stage orchestration and the repeated-split experiment harness."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .classifier import (CnnSpec, LabeledPair, binarize, build_model, predict_scores,
                         read_labeled_pairs, stratified_split, train)
from .clustering import cluster
from .config import PipelineConfig
from .embedding import (EmbeddingRegistry, HashEmbedder, ProjectionEmbedder, SentenceTransformerEmbedder, VectorStore,
                        embed_batch, heldout_split, make_provider, prune_small_clusters,
                        sample_cluster_pairs, write_pairs)
from .errors import ConfigError, DegenerateClass, EmptySplit, MissingArtifact
from .evaluation import (BoxplotStats, RunMetrics, boxplot_stats, classification_metrics, rouge_report,
                         write_rouge_report)
from .llm_disputes import (CannedReplyProvider, Journal, OpenAIChatProvider, extract_party_claims,
                           outcomes_to_dispute_sets, run_corpus)
from .simimage import CaseDisputes, ImageCache, make_image

log = logging.getLogger(__name__)

SOURCES = ("court", "llm_a", "llm_b")
SOURCE_PREFIX = {"court": "ns", "llm_a": "gpt35", "llm_b": "gpt4"}


@dataclass(frozen=True)
class ExperimentCode:
    source: str
    backend: str
    finetuned: bool

    def __str__(self):
        return f"{SOURCE_PREFIX[self.source]}_{'ft' if self.finetuned else ''}{self.backend}"

    @classmethod
    def parse(cls, text: str) -> "ExperimentCode":
        prefix, _, rest = text.partition("_")
        by_prefix = {v: k for k, v in SOURCE_PREFIX.items()}
        by_prefix["gtp35"], by_prefix["gtp4"] = "llm_a", "llm_b"
        if prefix not in by_prefix or not rest:
            raise ConfigError(f"bad experiment code {text!r}")
        ft = rest.startswith("ft")
        return cls(by_prefix[prefix], rest[2:] if ft else rest, ft)


def all_codes(backends=("lf", "rob")) -> list[ExperimentCode]:
    return [ExperimentCode(s, b, ft) for s in SOURCES for b in backends for ft in (True, False)]


@dataclass
class ExperimentRun:
    code: ExperimentCode
    metrics: list[RunMetrics] = field(default_factory=list)
    n_pairs: int = 0

    @property
    def f1_stats(self) -> BoxplotStats:
        return boxplot_stats([m.f1 for m in self.metrics])

    @property
    def accuracy_stats(self) -> BoxplotStats:
        return boxplot_stats([m.accuracy for m in self.metrics])

    def summary(self) -> dict:
        return {"experiment_code": str(self.code), "repeats": len(self.metrics), "pairs": self.n_pairs,
                "f1": self.f1_stats.to_record(), "accuracy": self.accuracy_stats.to_record()}


def repeat_seed(global_seed: int, repeat: int) -> int:
    """Seed of one repeat; shared by every experiment code."""
    return int(np.random.SeedSequence([global_seed, repeat]).generate_state(1)[0])


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(stage_dir: Path, stage: str, inputs: dict[str, Path], extra: dict | None = None) -> None:
    stage_dir.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, p in inputs.items():
        p = Path(p)
        if p.is_file():
            hashes[name] = file_hash(p)
        elif p.is_dir():
            hashes[name] = hashlib.sha256("".join(
                file_hash(q) for q in sorted(p.rglob("*")) if q.is_file()).encode()).hexdigest()
    (stage_dir / "manifest.json").write_text(json.dumps(
        {"stage": stage, "inputs": hashes, "created": time.time(), **(extra or {})}, indent=2))


def is_stale(stage_dir: Path, inputs: dict[str, Path]) -> bool:
    mf = stage_dir / "manifest.json"
    if not mf.exists():
        return True
    recorded = json.loads(mf.read_text()).get("inputs", {})
    for name, p in inputs.items():
        if Path(p).is_file() and recorded.get(name) != file_hash(p):
            return True
    return False


class Pipeline:
    """Runs the stages against one configuration and output directory."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = config.output
        self.out.mkdir(parents=True, exist_ok=True)
        self.store = VectorStore(self.out / "embed" / "vectors.jsonl")
        self.registry = EmbeddingRegistry()
        self._tuned: dict[str, str] = {}
        self.finetune_calls = 0
        self._sets_cache: dict[str, dict] = {}
        self._prep_cache: dict = {}

    # ---------------------------------------------------------------- ingest
    def ingest(self) -> dict:
        src = self.config.path("corpus")
        if src is None or not src.exists():
            raise ConfigError(f"corpus path not found: {src}")
        flt = corpus_mod.CaseFilter(**{k: tuple(v) if isinstance(v, list) else v
                                       for k, v in self.config.raw.get("filter", {}).items()})
        docs, sets, rejects = corpus_mod.load_corpus(src, flt)
        d = self.out / "ingest"
        d.mkdir(parents=True, exist_ok=True)
        corpus_mod.write_dispute_sets(d / "disputes.jsonl", sets.values())
        with open(d / "claims.jsonl", "w", encoding="utf-8") as fh:
            for doc in docs:
                c = extract_party_claims(doc)
                if c is not None:
                    fh.write(json.dumps(c.__dict__, ensure_ascii=False) + "\n")
        stats = corpus_mod.corpus_stats(docs, sets)
        (d / "stats.json").write_text(json.dumps(stats.to_record(), ensure_ascii=False, indent=2))
        (d / "rejects.json").write_text(json.dumps(rejects, ensure_ascii=False, indent=2))
        write_manifest(d, "ingest", {"corpus": src})
        self._sets_cache.pop("court", None)
        return stats.to_record()

    # ------------------------------------------------------------ llm stage
    def _llm_provider(self, source: str):
        conf = self.config.llm_provider_conf(source)
        kind = conf.pop("kind", "openai")
        if kind == "canned":
            p = Path(conf["path"])
            return CannedReplyProvider.from_file(p if p.is_absolute() else self.config.base_dir / p)
        if kind == "openai":
            profile = self.config.llm_profile(source)
            return OpenAIChatProvider(conf.pop("model", profile.model_id), **conf)
        raise ConfigError(f"unknown llm provider kind {kind!r}")

    def llm_disputes(self, source: str, provider=None) -> dict:
        claims_path = self.out / "ingest" / "claims.jsonl"
        if not claims_path.exists():
            raise MissingArtifact("ingest", str(claims_path))
        from .llm_disputes import PartyClaims

        with open(claims_path, encoding="utf-8") as fh:
            claims = [PartyClaims(**json.loads(line)) for line in fh if line.strip()]
        profile = self.config.llm_profile(source)
        d = self.out / "llm-disputes" / source
        journal = Journal(d / "journal.jsonl")
        outcomes = run_corpus(claims, profile, provider or self._llm_provider(source), journal,
                              workers=int(self.config.raw.get("workers", 1)))
        sets = outcomes_to_dispute_sets(outcomes, profile.model_id)
        corpus_mod.write_dispute_sets(d / "disputes.jsonl", sets.values())
        write_manifest(d, "llm-disputes", {"claims": claims_path})
        self._sets_cache.pop(source, None)
        counts: dict[str, int] = {}
        for o in outcomes.values():
            counts[o.status] = counts.get(o.status, 0) + 1
        return counts

    def dispute_sets(self, source: str) -> dict:
        if source not in self._sets_cache:
            if source == "court":
                p, stage = self.out / "ingest" / "disputes.jsonl", "ingest"
            else:
                p, stage = self.out / "llm-disputes" / source / "disputes.jsonl", "llm_disputes"
            if not p.exists():
                raise MissingArtifact(stage, f"no dispute sets for {source}")
            self._sets_cache[source] = corpus_mod.read_dispute_sets(p)
        return self._sets_cache[source]

    def labeled_pairs(self) -> list[LabeledPair]:
        p = self.config.path("labeled_pairs")
        if p is None or not p.exists():
            raise ConfigError(f"labeled pairs file not found: {p}")
        return read_labeled_pairs(p)

    # ------------------------------------------------------------ embedding
    def base_provider(self, backend: str):
        conf = dict(self.config.raw["backends"].get(backend) or {})
        if not conf and backend not in self.config.raw["backends"]:
            raise ConfigError(f"unknown backend {backend!r}")
        kind = conf.pop("kind", "hash")
        provider = make_provider(backend, kind, **conf)
        self.registry.add(provider)
        return provider

    def finetune_pairs(self, backend: str):
        """Cluster held-out court sentences and sample same/diff pairs."""
        sets = self.dispute_sets("court")
        labeled = {c for p in self.labeled_pairs() for c in (p.case_a, p.case_b)}
        ft_sents, _ = heldout_split({cid: s.items for cid, s in sets.items()}, labeled)
        d = self.out / "finetune-pairs" / backend
        d.mkdir(parents=True, exist_ok=True)
        if len(ft_sents) < 2:
            raise MissingArtifact("ingest", "fewer than two held-out sentences for fine-tuning")
        provider = self.base_provider(backend)
        vecs = embed_batch([s for _, s in ft_sents], provider, self.store)
        fconf = self.config.raw["finetune"]
        params = self.config.cluster_params()
        params.min_cluster_size = int(fconf.get("min_cluster_size", 10))
        clus = cluster(vecs, params, [sid for sid, _ in ft_sents])
        clus.save(d / "clustering.jsonl")
        keep = prune_small_clusters(clus.codes(), int(fconf.get("min_cluster_size", 10)))
        surviving = [(a.sentence_id, a.cluster_code) for a in clus.assignments if a.sentence_id in keep]
        texts = dict(ft_sents)
        pairs = sample_cluster_pairs(surviving, int(fconf.get("per_category", 50000)), self.config.seed, texts) \
            if len(surviving) >= 2 else []
        write_pairs(d / "pairs.jsonl", pairs)
        write_manifest(d, "finetune-pairs", {"disputes": self.out / "ingest" / "disputes.jsonl"},
                       {"heldout": len(ft_sents), "surviving": len(surviving), "pairs": len(pairs)})
        return pairs

    def provider(self, backend: str, finetuned: bool):
        base = self.base_provider(backend)
        if not finetuned:
            return base
        if backend not in self._tuned:
            tuned = self._load_tuned(backend, base)
            if tuned is None:
                pairs = self.finetune_pairs(backend)
                if not pairs:
                    raise MissingArtifact("finetune-pairs", f"no fine-tuning pairs for {backend}")
                self.finetune_calls += 1
                tuned = base.finetune(pairs)
                self._save_tuned(backend, base, tuned)
            self.registry.add(tuned)
            self._tuned[backend] = tuned.model_tag
        return self.registry.get(self._tuned[backend])

    def _save_tuned(self, backend, base, provider) -> None:
        d = self.out / "finetune"
        d.mkdir(parents=True, exist_ok=True)
        rec = {"backend": backend, "base_tag": base.model_tag, "model_tag": provider.model_tag,
               "kind": type(provider).__name__}
        if isinstance(provider, ProjectionEmbedder):
            np.save(d / f"{backend}.npy", provider.weights)
            rec.update(n_features=provider.n_features, seed=provider.seed, generation=provider.generation)
        elif isinstance(provider, HashEmbedder):
            rec["dims"] = provider.dims
        else:
            provider.model.save(str(d / backend))
        (d / f"{backend}.json").write_text(json.dumps(rec, indent=2))

    def _load_tuned(self, backend, base):
        """A previously fine-tuned provider for ``backend``, if one matches the current base."""
        meta_path = self.out / "finetune" / f"{backend}.json"
        if not meta_path.exists():
            return None
        rec = json.loads(meta_path.read_text())
        if rec.get("base_tag") != base.model_tag:
            return None
        d = meta_path.parent
        if rec["kind"] == "HashEmbedder":
            return HashEmbedder(backend, rec["dims"], finetuned=True)
        if rec["kind"] == "ProjectionEmbedder":
            return ProjectionEmbedder(backend, base.dims, rec["n_features"], rec["seed"],
                                      np.load(d / f"{backend}.npy"), rec["generation"])
        from sentence_transformers import SentenceTransformer

        return SentenceTransformerEmbedder(backend, base.model_name, SentenceTransformer(str(d / backend)))

    def embed(self, source: str, backend: str, finetuned: bool = False) -> int:
        """Embed every dispute of ``source`` into the shared vector store."""
        sets = self.dispute_sets(source)
        texts = [s for ds in sets.values() for s in ds.items]
        if not texts:
            raise MissingArtifact("ingest" if source == "court" else "llm_disputes", f"{source} has no disputes")
        embed_batch(texts, self.provider(backend, finetuned), self.store)
        return len(texts)

    def rouge(self, sources=("llm_a", "llm_b"), segmenter=None) -> dict:
        """ROUGE of each LLM source's disputes against the court-listed ones."""
        refs = {cid: ds.items for cid, ds in self.dispute_sets("court").items()}
        reports = {}
        for source in sources:
            cands = {cid: ds.items for cid, ds in self.dispute_sets(source).items()}
            reports[source] = rouge_report(cands, refs, segmenter)
        d = self.out / "rouge"
        d.mkdir(parents=True, exist_ok=True)
        write_rouge_report(d / "report.json", reports)
        return reports

    # ------------------------------------------------------- per-code prep
    def prepare(self, code: ExperimentCode):
        """Vectors and cluster codes for every case of the code's source."""
        key = (code.source, code.backend, code.finetuned)
        if key in self._prep_cache:
            return self._prep_cache[key]
        sets = self.dispute_sets(code.source)
        provider = self.provider(code.backend, code.finetuned)
        ids, texts = [], []
        for cid, ds in sets.items():
            for k, s in enumerate(ds.items):
                ids.append(f"{cid}#{k}")
                texts.append(s)
        vecs = embed_batch(texts, provider, self.store)
        clus = cluster(vecs, self.config.cluster_params(), ids)
        cdir = self.out / "cluster" / str(code)
        cdir.mkdir(parents=True, exist_ok=True)
        clus.save(cdir / "clustering.jsonl")
        codes = clus.codes()
        matrix = np.vstack([v.values for v in vecs])
        row = {sid: i for i, sid in enumerate(ids)}
        cases = {}
        for cid, ds in sets.items():
            idx = [row[f"{cid}#{k}"] for k in range(len(ds.items))]
            cases[cid] = CaseDisputes(cid, list(ds.items), matrix[idx], [codes[ids[i]] for i in idx])
        clustering_id = hashlib.sha256(
            "".join(f"{a.sentence_id}:{a.cluster_code};" for a in clus.assignments).encode()).hexdigest()[:16]
        self._prep_cache[key] = (cases, provider.model_tag, clustering_id, clus)
        return self._prep_cache[key]

    def images(self, code: ExperimentCode, pairs: list[tuple[LabeledPair, int]]):
        cases, tag, clustering_id, _ = self.prepare(code)
        cache = ImageCache(self.out / "images" / str(code))
        side = int(self.config.raw["image_side"])
        out = {}
        for p, y in pairs:
            if p.case_a not in cases or p.case_b not in cases:
                continue
            img = cache.get(p.pair_id, tag, clustering_id)
            if img is None or img.side != side:
                img = make_image(cases[p.case_a], cases[p.case_b], side, p.pair_id, y)
                cache.put(img, tag, clustering_id)
            out[p.key] = img.pixels
        return out

    # ------------------------------------------------------------ experiments
    def run_repeat(self, code: ExperimentCode, repeat: int, labeled=None, images=None):
        """Train and test once on the split of ``repeat``; returns (model, RunMetrics)."""
        labeled = labeled if labeled is not None else binarize(self.labeled_pairs(), self.config.raw.get("barely_as"))
        images = images if images is not None else self.images(code, labeled)
        spec: CnnSpec = self.config.cnn_spec()
        seed = repeat_seed(self.config.seed, repeat)
        try:
            # split the full labeled list so every code sees the same partition
            tr, va, te = stratified_split(labeled, self.config.split_spec(seed), label_of=lambda t: t[1])
        except DegenerateClass as exc:
            raise MissingArtifact("labeled_pairs", str(exc)) from exc

        def arrays(part):
            kept = [(p, y) for p, y in part if p.key in images]
            x = np.array([images[p.key] for p, _ in kept], dtype=np.uint8)
            return x.reshape(-1, spec.input_side, spec.input_side), np.array([y for _, y in kept], dtype=np.int64)

        (xtr, ytr), (xva, yva), (xte, yte) = arrays(tr), arrays(va), arrays(te)
        if not len(yte):
            raise EmptySplit(f"{code}: empty test split at repeat {repeat}")
        model = build_model(spec, seed=seed)
        model, _ = train(model, (xtr, ytr), (xva, yva), self.config.train_hyper(seed))
        preds = (predict_scores(model, xte) >= 0.5).astype(int)
        return model, classification_metrics(preds, yte)

    def overlap_baseline(self, code: ExperimentCode, repeat: int) -> RunMetrics:
        """Cluster-overlap rule on the same split as ``run_repeat``.

        A pair is called similar when its cases share at least ``t`` cluster
        codes; ``t`` is chosen by exhaustive search on train + validation.
        """
        cases = self.prepare(code)[0]
        labeled = binarize(self.labeled_pairs(), self.config.raw.get("barely_as"))
        seed = repeat_seed(self.config.seed, repeat)
        tr, va, te = stratified_split(labeled, self.config.split_spec(seed), label_of=lambda t: t[1])

        def feats(part):
            return [(overlap_size(cases[p.case_a].codes, cases[p.case_b].codes), y) for p, y in part
                    if p.case_a in cases and p.case_b in cases]

        fit, test = feats(tr + va), feats(te)
        if not test:
            raise EmptySplit(f"{code}: empty test split at repeat {repeat}")
        best_t, best_f1 = 0, -1.0
        for t in range(0, max(o for o, _ in fit + test) + 2):
            f1 = classification_metrics([int(o >= t) for o, _ in fit], [y for _, y in fit]).f1
            if f1 > best_f1:
                best_t, best_f1 = t, f1
        return classification_metrics([int(o >= best_t) for o, _ in test], [y for _, y in test])

    def run_experiment(self, code: ExperimentCode, repeats: int | None = None) -> ExperimentRun:
        repeats = repeats or self.config.repeats
        labeled = binarize(self.labeled_pairs(), self.config.raw.get("barely_as"))
        images = self.images(code, labeled)
        run = ExperimentRun(code, n_pairs=len(images))
        for r in range(repeats):
            _, m = self.run_repeat(code, r, labeled, images)
            run.metrics.append(m)
            log.info("%s repeat %d: f1=%.3f acc=%.3f", code, r, m.f1, m.accuracy)
        self._write_run(run)
        return run

    def _write_run(self, run: ExperimentRun) -> None:
        d = self.out / "matrix"
        d.mkdir(parents=True, exist_ok=True)
        with open(d / f"{run.code}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["repeat_index", "f1", "accuracy", "tp", "fp", "fn", "tn"])
            for i, m in enumerate(run.metrics):
                w.writerow([i, repr(m.f1), repr(m.accuracy), m.tp, m.fp, m.fn, m.tn])
        (d / f"{run.code}.summary.json").write_text(json.dumps(run.summary(), indent=2))

    def run_matrix(self, codes: list[ExperimentCode] | None = None, repeats: int | None = None):
        """Run every code; cells with missing prerequisites are reported, not fatal."""
        codes = codes or all_codes(tuple(self.config.raw["backends"]))
        # fine-tune once per backend before fanning out
        for b in sorted({c.backend for c in codes if c.finetuned}):
            try:
                self.provider(b, True)
            except MissingArtifact as exc:
                log.warning("fine-tuning %s unavailable: %s", b, exc)

        def cell(code):
            try:
                return self.run_experiment(code, repeats)
            except MissingArtifact as exc:
                log.warning("%s skipped: %s", code, exc)
                return exc

        workers = int(self.config.raw.get("workers", 1))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(cell, codes))
        else:
            results = [cell(c) for c in codes]
        runs = [r for r in results if isinstance(r, ExperimentRun)]
        missing = {str(c): r.stage for c, r in zip(codes, results) if isinstance(r, MissingArtifact)}
        emit_plots(runs, self.out / "matrix")
        (self.out / "matrix" / "missing.json").write_text(json.dumps(missing, indent=2))
        return runs, missing


def overlap_size(codes_a, codes_b) -> int:
    """Number of cluster codes two cases share; noise (code 0) is not a cluster."""
    return len((set(codes_a) - {0}) & (set(codes_b) - {0}))


def emit_plots(runs: list[ExperimentRun], out_dir, render: bool = False) -> Path:
    """Boxplot data (five-number summary + mean per code and metric), optionally a chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "boxplot_data.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "experiment_code", "min", "q1", "median", "q3", "max", "mean", "n"])
        for metric in ("f1", "accuracy"):
            for run in runs:
                s = run.f1_stats if metric == "f1" else run.accuracy_stats
                w.writerow([metric, str(run.code), s.min, s.q1, s.median, s.q3, s.max, s.mean, s.n])
    (out_dir / "summary.json").write_text(json.dumps([r.summary() for r in runs], indent=2))
    if render:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        for metric in ("f1", "accuracy"):
            fig, ax = plt.subplots(figsize=(max(6, len(runs)), 4))
            data = [[getattr(m, metric) for m in r.metrics] for r in runs]
            ax.boxplot(data, showmeans=True)
            ax.set_xticks(range(1, len(runs) + 1), [str(r.code) for r in runs], rotation=45)
            ax.set_ylabel(metric)
            fig.tight_layout()
            fig.savefig(out_dir / f"boxplot_{metric}.png", dpi=120)
            plt.close(fig)
    return path

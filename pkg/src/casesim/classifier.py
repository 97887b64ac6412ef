"""Small CNN that classifies similarity images, plus stratified splitting."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .errors import DataError, DegenerateClass, EmptySplit, InvalidSpec, ShapeMismatch
from .evaluation import classification_metrics

log = logging.getLogger(__name__)

SIMILAR, NOT_SIMILAR, BARELY_SIMILAR = "similar", "not_similar", "barely_similar"
LABELS = (SIMILAR, NOT_SIMILAR, BARELY_SIMILAR)


@dataclass(frozen=True)
class LabeledPair:
    case_a: str
    case_b: str
    label: str

    def __post_init__(self):
        if self.case_a == self.case_b:
            raise DataError(f"pair of a case with itself: {self.case_a}")
        if self.label not in LABELS:
            raise DataError(f"unknown label {self.label!r}")

    @property
    def key(self) -> tuple[str, str]:
        return tuple(sorted((self.case_a, self.case_b)))

    @property
    def pair_id(self) -> str:
        return f"{self.case_a}|{self.case_b}"


def read_labeled_pairs(path) -> list[LabeledPair]:
    pairs, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            p = LabeledPair(r["case_a"], r["case_b"], r["label"])
            if p.key in seen:
                raise DataError(f"duplicate pair {p.key}")
            seen.add(p.key)
            pairs.append(p)
    return pairs


def write_labeled_pairs(path, pairs: Sequence[LabeledPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(asdict(p), ensure_ascii=False) + "\n")


def binarize(pairs: Sequence[LabeledPair], barely_as: str | None = None) -> list[tuple[LabeledPair, int]]:
    """(pair, 0/1) with "barely similar" dropped or merged into ``barely_as``."""
    out = []
    for p in pairs:
        label = p.label
        if label == BARELY_SIMILAR:
            if barely_as is None:
                continue
            label = barely_as
        out.append((p, 1 if label == SIMILAR else 0))
    return out


# --------------------------------------------------------------------------
# splitting

@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.64
    val_frac: float = 0.16
    test_frac: float = 0.20
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidSpec(f"split fractions must be positive and sum to 1, got {fr}")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(items: Sequence, spec: SplitSpec, label_of: Callable = lambda p: p.label):
    """Per-class shuffled split into (train, val, test).

    Per class, the test and validation counts are the rounded fractional
    targets and training takes the remainder.
    """
    by_class: dict = {}
    for i, it in enumerate(items):
        by_class.setdefault(label_of(it), []).append(i)
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for cls in sorted(by_class, key=str):
        idx = by_class[cls]
        if len(idx) < 3:
            raise DegenerateClass(f"class {cls!r} has {len(idx)} members, need at least 3")
        idx = [idx[k] for k in rng.permutation(len(idx))]
        n_test = _round_half_up(len(idx) * spec.test_frac)
        n_val = _round_half_up(len(idx) * spec.val_frac)
        test += idx[:n_test]
        val += idx[n_test:n_test + n_val]
        train += idx[n_test + n_val:]
    return tuple([items[int(i)] for i in rng.permutation(np.asarray(part, dtype=np.int64))]
                 for part in (train, val, test))


# --------------------------------------------------------------------------
# model

@dataclass(frozen=True)
class CnnSpec:
    input_side: int = 32
    stages: int = 2
    filters: int = 32
    kernel: int = 3
    dropout: float = 0.2
    pool: int = 2
    hidden: int = 64
    n_classes: int = 2

    def feature_sides(self) -> list[int]:
        sides = [self.input_side]
        for _ in range(self.stages):
            sides.append(sides[-1] // self.pool)
        return sides

    @property
    def flatten_length(self) -> int:
        return self.feature_sides()[-1] ** 2 * self.filters

    def validate(self) -> None:
        if self.stages < 1 or self.filters < 1 or self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidSpec(f"bad CNN spec {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidSpec("dropout must be in [0, 1)")
        if self.input_side % (self.pool ** self.stages):
            raise InvalidSpec(f"input side {self.input_side} not divisible by {self.pool}^{self.stages}")


class SimilarityCNN(nn.Module):
    def __init__(self, spec: CnnSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        layers: list[nn.Module] = []
        channels = 1
        for _ in range(spec.stages):
            layers += [
                nn.Conv2d(channels, spec.filters, spec.kernel, padding=spec.kernel // 2),
                nn.ReLU(),
                nn.Dropout(spec.dropout),
                nn.MaxPool2d(spec.pool),
            ]
            channels = spec.filters
        self.features = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(spec.flatten_length, spec.hidden),
            nn.ReLU(),
            nn.Linear(spec.hidden, spec.n_classes),
        )

    def forward(self, x):
        return self.head(self.features(x))


def build_model(spec: CnnSpec | None = None, seed: int | None = None) -> SimilarityCNN:
    spec = spec or CnnSpec()
    if seed is not None:
        torch.manual_seed(seed)
    return SimilarityCNN(spec)


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# --------------------------------------------------------------------------
# training

@dataclass
class TrainHyper:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _tensor(images) -> torch.Tensor:
    x = np.asarray(images, dtype=np.float32) / 255.0
    return torch.from_numpy(x).unsqueeze(1)


def _check_shape(model: SimilarityCNN, images: np.ndarray):
    side = model.spec.input_side
    if images.ndim != 3 or images.shape[1:] != (side, side):
        raise ShapeMismatch(f"expected images of {side}x{side}, got {images.shape[1:]}")


def train(model: SimilarityCNN, train_set, val_set, hyper: TrainHyper | None = None):
    """Fit with Adam on cross-entropy; keep the weights of the best validation-F1 epoch.

    ``train_set`` and ``val_set`` are (images, labels) with images shaped
    (n, side, side) in 0..255. Returns (model, history).
    """
    hyper = hyper or TrainHyper()
    x_tr, y_tr = np.asarray(train_set[0]), np.asarray(train_set[1], dtype=np.int64)
    x_va, y_va = np.asarray(val_set[0]), np.asarray(val_set[1], dtype=np.int64)
    if len(y_tr) == 0:
        raise EmptySplit("empty training set")
    if len(y_va) == 0:
        raise EmptySplit("empty validation set")
    _check_shape(model, x_tr)
    _check_shape(model, x_va)
    torch.manual_seed(hyper.seed)
    gen = torch.Generator().manual_seed(hyper.seed)
    xt, yt = _tensor(x_tr), torch.from_numpy(y_tr)
    xv, yv = _tensor(x_va), torch.from_numpy(y_va)
    opt = torch.optim.Adam(model.parameters(), lr=hyper.lr)
    loss_fn = nn.CrossEntropyLoss()
    hist = History()
    best_key, best_state, stale = None, None, 0
    for epoch in range(hyper.max_epochs):
        model.train()
        order = torch.randperm(len(yt), generator=gen)
        total = 0.0
        for start in range(0, len(yt), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        hist.train_loss.append(total / len(yt))
        model.eval()
        with torch.no_grad():
            logits = model(xv)
            vloss = float(loss_fn(logits, yv))
            preds = (torch.softmax(logits, 1)[:, 1] >= 0.5).long().numpy()
        vf1 = classification_metrics(preds, y_va).f1
        hist.val_f1.append(vf1)
        hist.val_loss.append(vloss)
        key = (vf1, -vloss)
        if best_key is None or key > best_key:
            best_key, stale, hist.best_epoch = key, 0, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, hist


def predict_scores(model: SimilarityCNN, images) -> np.ndarray:
    images = np.asarray(images)
    _check_shape(model, images)
    model.eval()
    with torch.no_grad():
        return torch.softmax(model(_tensor(images)), 1)[:, 1].numpy().astype(np.float64)


def predict(model: SimilarityCNN, image) -> tuple[str, float]:
    """(label, positive-class probability) for one image."""
    pixels = np.asarray(getattr(image, "pixels", image))
    if pixels.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D image, got shape {pixels.shape}")
    score = float(predict_scores(model, pixels[None])[0])
    return (SIMILAR if score >= 0.5 else NOT_SIMILAR), score


def save_checkpoint(path, model: SimilarityCNN, hyper: TrainHyper, metrics: dict | None = None) -> None:
    path = Path(path)
    torch.save(model.state_dict(), path.with_suffix(".pt"))
    path.with_suffix(".json").write_text(json.dumps({
        "cnn_spec": asdict(model.spec), "hyper": asdict(hyper), "seed": hyper.seed,
        "metrics": metrics or {},
    }, indent=2))


def load_checkpoint(path) -> SimilarityCNN:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    model = SimilarityCNN(CnnSpec(**meta["cnn_spec"]))
    model.load_state_dict(torch.load(path.with_suffix(".pt"), weights_only=True))
    model.eval()
    return model

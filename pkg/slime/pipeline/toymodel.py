"""Embedding-bag logistic classifier used to exercise the attribution engine.

Architecture: embedding lookup -> mean pool over tokens -> linear head ->
logistic. Inputs to ``forward``/``grad_embeddings`` are already-embedded
token matrices, so any leading batch axes are allowed: shape (..., n, d).
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from slime.errors import ModelError
from slime.models import TrainConfig
from slime.pipeline.corpus import Corpus, Document, FoldPlan
from slime.utils import substream_rng

logger = logging.getLogger("toymodel")

UNK = "[UNK]"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    vocab: Dict[str, int]
    embeddings: np.ndarray
    head_weights: np.ndarray
    head_bias: float

    def __post_init__(self):
        if self.embeddings.ndim != 2 or self.embeddings.shape[1] < 1:
            raise ModelError(f"embeddings must be a V x d matrix, got shape {self.embeddings.shape}")
        if self.head_weights.shape != (self.d,):
            raise ModelError(f"head_weights must have shape ({self.d},), got {self.head_weights.shape}")
        if self.vocab.get(UNK) != 0:
            raise ModelError(f"vocabulary must reserve index 0 for {UNK}")
        if max(self.vocab.values()) >= self.embeddings.shape[0]:
            raise ModelError("vocabulary index beyond the embedding table")
        if not (np.all(np.isfinite(self.embeddings)) and np.all(np.isfinite(self.head_weights))
                and np.isfinite(self.head_bias)):
            raise ModelError("parameters must be finite")

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def equals(self, other: "ModelParams") -> bool:
        """Bit-for-bit equality of every parameter."""
        return (
            self.vocab == other.vocab
            and np.array_equal(self.embeddings, other.embeddings)
            and np.array_equal(self.head_weights, other.head_weights)
            and self.head_bias == other.head_bias
        )


@dataclass
class FoldResult:
    fold: int
    params: ModelParams
    val_accuracy: float
    losses: List[float] = field(default_factory=list)


def _check_input(token_embeddings: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(token_embeddings, dtype=float)
    if x.ndim < 2 or x.shape[-1] != d:
        raise ModelError(f"expected (..., n, {d}) embeddings, got shape {x.shape}")
    if x.shape[-2] == 0:
        raise ModelError("cannot score an empty token sequence")
    return x


def _logit(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return x.mean(axis=-2) @ params.head_weights + params.head_bias


def forward(params: ModelParams, token_embeddings: np.ndarray, target: str = "probability"):
    """F(x) for one (n, d) input or a batch of them."""
    x = _check_input(token_embeddings, params.d)
    z = _logit(params, x)
    out = z if target == "logit" else expit(z)
    return float(out) if np.ndim(out) == 0 else out


def grad_embeddings(params: ModelParams, token_embeddings: np.ndarray, target: str = "probability") -> np.ndarray:
    """dF/dx for every embedding entry: F(1-F) * w / n (or w / n for the logit)."""
    x = _check_input(token_embeddings, params.d)
    n = x.shape[-2]
    if target == "logit":
        scale = np.ones(x.shape[:-2])
    else:
        p = expit(_logit(params, x))
        scale = p * (1.0 - p)
    g = np.asarray(scale)[..., None, None] * (params.head_weights / n)
    return np.broadcast_to(g, x.shape).copy()


class ToyClassifier:
    """Adapter exposing the toy model through the attribution model protocol."""

    def __init__(self, params: ModelParams):
        self.params = params

    def forward(self, token_embeddings, target: str = "probability"):
        return forward(self.params, token_embeddings, target)

    def gradient(self, token_embeddings, target: str = "probability"):
        return grad_embeddings(self.params, token_embeddings, target)

    def embed(self, tokens: Sequence[str], max_tokens: Optional[int] = None) -> np.ndarray:
        return embed(self.params, tokens, max_tokens)


def encode(params: ModelParams, tokens: Sequence[str], max_tokens: Optional[int] = None) -> np.ndarray:
    if max_tokens is not None:
        tokens = tokens[:max_tokens]
    return np.array([params.vocab.get(t, 0) for t in tokens], dtype=int)


def embed(params: ModelParams, tokens: Sequence[str], max_tokens: Optional[int] = None) -> np.ndarray:
    return params.embeddings[encode(params, tokens, max_tokens)]


def build_vocab(documents: Sequence[Document]) -> Dict[str, int]:
    words = sorted({t for doc in documents for t in doc.tokens} - {UNK})
    vocab = {UNK: 0}
    vocab.update({w: i for i, w in enumerate(words, start=1)})
    return vocab


def init_params(vocab: Dict[str, int], d: int, rng: np.random.Generator) -> ModelParams:
    """Uniform embeddings in +-1/sqrt(d), zero head (F = 0.5 everywhere)."""
    bound = 1.0 / np.sqrt(d)
    return ModelParams(
        vocab=vocab,
        embeddings=rng.uniform(-bound, bound, size=(len(vocab), d)),
        head_weights=np.zeros(d),
        head_bias=0.0,
    )


def _bce_with_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z) - y * z


def _mean_loss(params: ModelParams, encoded: List[np.ndarray], labels: np.ndarray) -> float:
    z = np.array([_logit(params, params.embeddings[idx]) for idx in encoded])
    return float(np.mean(_bce_with_logits(z, labels)))


class _AdamW:
    """Adaptive-moment updates with decoupled weight decay."""

    def __init__(self, shapes: List[tuple], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, values: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        cfg = self.cfg
        b1, b2 = cfg.adam_betas
        self.t += 1
        out = []
        for i, (theta, g) in enumerate(zip(values, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            update = m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * theta
            out.append(theta - cfg.learning_rate * update)
        return out


def fit_params(
    documents: Sequence[Document], cfg: TrainConfig, rng: np.random.Generator
) -> Tuple[ModelParams, List[float]]:
    """Train one model on ``documents``; returns params and the per-epoch training loss."""
    documents = [d for d in documents if d.tokens]
    if not documents:
        raise ModelError("empty training fold")
    vocab = build_vocab(documents)
    params = init_params(vocab, cfg.embedding_dim, rng)
    if cfg.learning_rate == 0:
        logger.warning("learning_rate is 0: parameters stay at initialization")

    encoded = [encode(params, d.tokens, cfg.max_tokens) for d in documents]
    labels = np.array([d.label for d in documents], dtype=float)
    emb, w, b = params.embeddings.copy(), params.head_weights.copy(), np.array(params.head_bias)
    optimizer = _AdamW([emb.shape, w.shape, b.shape], cfg)
    losses = []

    for _ in range(cfg.epochs):
        order = rng.permutation(len(documents))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            g_emb, g_w, g_b = np.zeros_like(emb), np.zeros_like(w), np.zeros_like(b)
            for j in batch:
                idx = encoded[j]
                pooled = emb[idx].mean(axis=0)
                err = expit(pooled @ w + b) - labels[j]  # dL/dz of BCE with logits
                g_w += err * pooled
                g_b += err
                np.add.at(g_emb, idx, err * w / len(idx))
            scale = 1.0 / len(batch)
            emb, w, b = optimizer.step([emb, w, b], [g_emb * scale, g_w * scale, g_b * scale])
        losses.append(_mean_loss(
            ModelParams(vocab=vocab, embeddings=emb, head_weights=w, head_bias=float(b)), encoded, labels
        ))

    trained = ModelParams(vocab=vocab, embeddings=emb, head_weights=w, head_bias=float(b))
    return trained, losses


def predict(params: ModelParams, document: Document, max_tokens: Optional[int] = None) -> float:
    return forward(params, embed(params, document.tokens, max_tokens))


def accuracy(params: ModelParams, documents: Sequence[Document], max_tokens: Optional[int] = None) -> float:
    """Share of documents where F(x) >= 0.5 agrees with the label (1 = AD)."""
    scored = [d for d in documents if d.tokens]
    if not scored:
        return 0.0
    hits = sum(int(predict(params, d, max_tokens) >= 0.5) == d.label for d in scored)
    return hits / len(scored)


def train(corpus: Corpus, folds: FoldPlan, cfg: TrainConfig) -> List[FoldResult]:
    by_id = corpus.by_id()
    missing = set(folds.assignments) ^ set(by_id)
    if missing:
        raise ModelError(f"fold plan does not match the corpus ({len(missing)} ids differ)")
    results = []
    for fold in range(folds.k):
        started = time.time()
        train_docs = [by_id[i] for i in folds.training_ids(fold)]
        val_docs = [by_id[i] for i in folds.validation_ids(fold)]
        rng = substream_rng(cfg.seed, "train", fold)
        params, losses = fit_params(train_docs, cfg, rng)
        acc = accuracy(params, val_docs, cfg.max_tokens)
        logger.info(
            f"Fold {fold}: {len(train_docs)} train / {len(val_docs)} val, "
            f"val_accuracy={acc:.3f}, final loss={losses[-1]:.4f} ({time.time() - started:.1f}s)"
        )
        results.append(FoldResult(fold=fold, params=params, val_accuracy=acc, losses=losses))
    return results


def select_best_fold(results: Sequence[FoldResult]) -> Tuple[int, ModelParams]:
    """Highest validation accuracy; ties go to the lowest fold index."""
    if not results:
        raise ModelError("no fold results to select from")
    best = min(results, key=lambda r: (-r.val_accuracy, r.fold))
    return best.fold, best.params


def save_checkpoint(params: ModelParams, path) -> Path:
    path = Path(path)
    payload = {
        "version": CHECKPOINT_VERSION,
        "vocab": params.vocab,
        "embeddings": params.embeddings.tolist(),
        "head_weights": params.head_weights.tolist(),
        "head_bias": params.head_bias,
    }
    path.write_text(json.dumps(payload, allow_nan=False) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ModelError(f"cannot read checkpoint {path}: {e}") from None
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    try:
        return ModelParams(
            vocab={str(k): int(v) for k, v in payload["vocab"].items()},
            embeddings=np.array(payload["embeddings"], dtype=float),
            head_weights=np.array(payload["head_weights"], dtype=float),
            head_bias=float(payload["head_bias"]),
        )
    except KeyError as e:
        raise ModelError(f"{path}: missing field {e.args[0]!r}") from None

"""Integrated Gradients over token embeddings and the attribution interchange format.

IG_{i,dim} = (x - x')_{i,dim} * integral_0^1 dF(x' + a(x - x'))/dx_{i,dim} da,
approximated with an m-step quadrature rule. Token scores are row sums,
which keeps completeness: sum of scores ~= F(x) - F(x').
"""

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Tuple

import numpy as np
from pydantic import ValidationError

from slime.config import COMPLETENESS_ATOL, COMPLETENESS_RTOL
from slime.errors import AttributionError, InterchangeError
from slime.models import AttributedCorpus, AttributedDocument, IGConfig
from slime.pipeline.corpus import Corpus, Document
from slime.pipeline.toymodel import ModelParams, ToyClassifier
from slime.utils import run_bounded

logger = logging.getLogger("attribution")


class DifferentiableModel(Protocol):
    """Anything with F and dF/dx over (..., n, d) embedding arrays."""

    def forward(self, token_embeddings: np.ndarray, target: str = "probability"): ...

    def gradient(self, token_embeddings: np.ndarray, target: str = "probability") -> np.ndarray: ...


@dataclass
class AttributionResult:
    per_dim: np.ndarray
    per_token: np.ndarray
    f_x: float
    f_baseline: float
    completeness_residual: float


def make_baseline(n: int, d: int) -> np.ndarray:
    """All-zero embeddings: the absence of every token."""
    if n < 1 or d < 1:
        raise AttributionError(f"baseline needs n >= 1 and d >= 1, got ({n}, {d})")
    return np.zeros((n, d))


def quadrature(steps: int, rule: str) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes in [0, 1] and weights summing to one."""
    m = steps
    if rule == "left":
        return np.arange(m) / m, np.full(m, 1.0 / m)
    if rule == "right":
        return np.arange(1, m + 1) / m, np.full(m, 1.0 / m)
    if rule == "midpoint":
        return (np.arange(m) + 0.5) / m, np.full(m, 1.0 / m)
    if rule == "trapezoid":
        weights = np.full(m + 1, 1.0 / m)
        weights[0] = weights[-1] = 0.5 / m
        return np.arange(m + 1) / m, weights
    raise AttributionError(f"unknown quadrature rule {rule!r}")


def reduce_token_attribution(per_dim: np.ndarray) -> np.ndarray:
    """Signed sum over embedding dimensions, one score per token."""
    return np.asarray(per_dim, dtype=float).sum(axis=1)


def integrated_gradients(
    model: DifferentiableModel, x: np.ndarray, baseline: np.ndarray, cfg: IGConfig
) -> AttributionResult:
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if x.shape != baseline.shape or x.ndim != 2:
        raise AttributionError(f"input {x.shape} and baseline {baseline.shape} must be matching n x d matrices")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(baseline))):
        raise AttributionError("input and baseline must be finite")

    alphas, weights = quadrature(cfg.steps, cfg.rule)
    diff = x - baseline
    avg_grad = np.zeros_like(x)
    for start in range(0, len(alphas), cfg.batch_size):
        a = alphas[start:start + cfg.batch_size]
        path = baseline + a[:, None, None] * diff
        grads = model.gradient(path, cfg.target)
        avg_grad += np.tensordot(weights[start:start + cfg.batch_size], grads, axes=1)

    per_dim = diff * avg_grad
    per_token = reduce_token_attribution(per_dim)
    f_x = float(model.forward(x, cfg.target))
    f_baseline = float(model.forward(baseline, cfg.target))
    residual = abs(float(per_token.sum()) - (f_x - f_baseline))
    return AttributionResult(per_dim, per_token, f_x, f_baseline, residual)


def attribute_document(
    params: ModelParams, document: Document, cfg: IGConfig, max_tokens: Optional[int] = None
) -> AttributionResult:
    model = ToyClassifier(params)
    x = model.embed(document.tokens, max_tokens)
    return integrated_gradients(model, x, make_baseline(*x.shape), cfg)


def attribute_corpus(
    params: ModelParams,
    corpus: Corpus,
    cfg: IGConfig,
    max_tokens: Optional[int] = None,
    max_workers: int = 1,
) -> AttributedCorpus:
    """Attribute every non-empty document, in corpus order."""
    started = time.time()
    warnings = []
    documents = []
    for doc in corpus.documents:
        if not doc.tokens:
            warnings.append(f"{doc.id}: empty document skipped")
            logger.warning(f"Skipping empty document {doc.id}")
            continue
        documents.append(doc)

    results = run_bounded(lambda d: attribute_document(params, d, cfg, max_tokens), documents, max_workers)

    attributed = []
    for doc, result in zip(documents, results):
        tokens = doc.tokens[:max_tokens] if max_tokens else doc.tokens
        if len(tokens) < len(doc.tokens):
            warnings.append(f"{doc.id}: truncated from {len(doc.tokens)} to {len(tokens)} tokens")
        tolerance = COMPLETENESS_RTOL * abs(result.f_x - result.f_baseline) + COMPLETENESS_ATOL
        if result.completeness_residual > tolerance:
            logger.warning(
                f"{doc.id}: completeness residual {result.completeness_residual:.2e} above {tolerance:.2e}; "
                f"consider more steps"
            )
        attributed.append(AttributedDocument(
            id=doc.id, label=doc.label, tokens=tokens,
            attributions=result.per_token.tolist(), f_x=result.f_x,
        ))
    logger.info(f"Attributed {len(attributed)} documents in {time.time() - started:.1f}s")
    return AttributedCorpus(documents=attributed, warnings=warnings)


def export_attributions(attributed: AttributedCorpus, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in attributed.documents:
            obj = {"id": doc.id, "label": doc.label, "tokens": doc.tokens, "attributions": doc.attributions}
            if doc.f_x is not None:
                obj["f_x"] = doc.f_x
            f.write(json.dumps(obj, ensure_ascii=False, allow_nan=False) + "\n")
    return path


def import_attributions(path) -> AttributedCorpus:
    """Load interchange jsonl written by this package or by any external model."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise InterchangeError(f"cannot read {path}: {e}") from None

    documents = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise InterchangeError(f"{path}: line {lineno}: malformed json ({e.msg})") from None
        if not isinstance(obj, dict):
            raise InterchangeError(f"{path}: line {lineno}: expected an object")
        if "label" not in obj:
            raise InterchangeError(f"{path}: line {lineno}: missing label")
        try:
            doc = AttributedDocument.model_validate(obj)
        except ValidationError as e:
            err = e.errors()[0]
            field = ".".join(str(p) for p in err["loc"])
            detail = f"{field}: {err['msg']}" if field else err["msg"]
            raise InterchangeError(f"{path}: line {lineno}: {detail}") from None
        if doc.id in seen:
            raise InterchangeError(f"{path}: line {lineno}: duplicate id {doc.id!r}")
        seen.add(doc.id)
        documents.append(doc)

    if not documents:
        raise InterchangeError(f"{path}: no documents")
    logger.info(f"Imported attributions for {len(documents)} documents from {path}")
    return AttributedCorpus(documents=documents)

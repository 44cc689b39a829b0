"""Subsample significance of category attributions and per-category AUC.

For a category with n_f tagged tokens the null is built from random token
sets of the same size drawn without replacement from all tokens:

* attribution significance compares the category's mean attribution with
  the means of the random sets (AD above ``high_pct``, control below
  ``low_pct``);
* AUC significance scores every document by the mean attribution of its
  tokens in the set (0 when it has none) and compares the category's AUC
  with the AUCs of the random sets.

Both tests draw from per-category generators derived from the master seed:
stream 0 for attributions, stream 1 (``AUC_STREAM``) for AUCs.
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.stats import percentileofscore, rankdata

from slime.errors import StatsError
from slime.models import CategoryDictionary, FeatureStats, Group, Impact, StatsConfig, TokenRecord
from slime.utils import run_bounded, substream_rng

logger = logging.getLogger("slime_stats")

ATTR_STREAM = 0
AUC_STREAM = 1
# Random keys held in memory at once when sampling by argpartition.
_SAMPLE_CHUNK = 4_000_000


@dataclass
class TokenTable:
    """Columnar view of tagged tokens."""

    attrs: np.ndarray
    doc_index: np.ndarray
    doc_ids: List[str]
    doc_labels: np.ndarray
    masks: Dict[str, np.ndarray]

    @classmethod
    def from_records(cls, records: Sequence[TokenRecord]) -> "TokenTable":
        if not records:
            raise StatsError("no token records to analyze")
        doc_pos: Dict[str, int] = {}
        doc_labels: List[int] = []
        doc_index = np.empty(len(records), dtype=np.int64)
        attrs = np.empty(len(records))
        members: Dict[str, List[int]] = {}
        for i, record in enumerate(records):
            j = doc_pos.get(record.doc_id)
            if j is None:
                j = doc_pos[record.doc_id] = len(doc_labels)
                doc_labels.append(record.doc_label)
            doc_index[i] = j
            attrs[i] = record.attribution
            for name in record.categories:
                members.setdefault(name, []).append(i)
        masks = {}
        for name, rows in members.items():
            mask = np.zeros(len(records), dtype=bool)
            mask[rows] = True
            masks[name] = mask
        return cls(attrs, doc_index, list(doc_pos), np.array(doc_labels, dtype=int), masks)

    @property
    def n_tokens(self) -> int:
        return len(self.attrs)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def mask(self, category: str) -> np.ndarray:
        found = self.masks.get(category)
        return found if found is not None else np.zeros(self.n_tokens, dtype=bool)


class AttributionSignificance(NamedTuple):
    group: Group
    percentile: Optional[float]
    mean_attr: Optional[float]
    n_tokens: int
    note: Optional[str] = None


class AucSignificance(NamedTuple):
    feature_auc: Optional[float]
    null_auc_mean: Optional[float]
    delta_auc: Optional[float]
    auc_impact: Impact


RecordsLike = Union[TokenTable, Sequence[TokenRecord]]


def _as_table(records: RecordsLike) -> TokenTable:
    return records if isinstance(records, TokenTable) else TokenTable.from_records(records)


def _draw_subsets(rng: np.random.Generator, population: int, size: int, n: int) -> np.ndarray:
    """``n`` rows of ``size`` distinct indices in ``range(population)``."""
    if size * size < 2 * population:
        # Collisions are rare: draw with replacement and redraw offending rows.
        idx = rng.integers(0, population, size=(n, size))
        while True:
            ordered = np.sort(idx, axis=1)
            bad = np.flatnonzero((ordered[:, 1:] == ordered[:, :-1]).any(axis=1))
            if bad.size == 0:
                return idx
            idx[bad] = rng.integers(0, population, size=(bad.size, size))
    rows = max(1, _SAMPLE_CHUNK // population)
    out = np.empty((n, size), dtype=np.int64)
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        keys = rng.random((stop - start, population))
        out[start:stop] = np.argpartition(keys, size - 1, axis=1)[:, :size]
    return out


def _gate(statistic: float, null: np.ndarray, cfg: StatsConfig) -> int:
    """+1 above the high percentile, -1 below the low one, else 0."""
    low, high = np.percentile(null, [cfg.low_pct, cfg.high_pct])
    if statistic > high:
        return 1
    if statistic < low:
        return -1
    return 0


def attribution_significance(records: RecordsLike, category: str, cfg: StatsConfig) -> AttributionSignificance:
    table = _as_table(records)
    mask = table.mask(category)
    n_f = int(mask.sum())
    if n_f == 0:
        return AttributionSignificance("none", None, None, 0, "absent")
    statistic = float(table.attrs[mask].mean())
    if n_f == table.n_tokens:
        note = "category covers every token; the null is degenerate"
        logger.info(f"{category}: {note}")
        return AttributionSignificance("none", 50.0, statistic, n_f, note)

    rng = substream_rng(cfg.seed, category, ATTR_STREAM)
    idx = _draw_subsets(rng, table.n_tokens, n_f, cfg.n_subsamples)
    null = table.attrs[idx].mean(axis=1)
    gate = _gate(statistic, null, cfg)
    group: Group = "AD" if gate > 0 else "control" if gate < 0 else "none"
    percentile = float(percentileofscore(null, statistic, kind="mean"))
    return AttributionSignificance(group, percentile, statistic, n_f)


def _doc_scores(table: TokenTable, idx: np.ndarray) -> np.ndarray:
    """Per-document mean attribution over the selected tokens of each row of ``idx``."""
    n_rows = idx.shape[0]
    keys = (np.arange(n_rows)[:, None] * table.n_docs + table.doc_index[idx]).ravel()
    length = n_rows * table.n_docs
    sums = np.bincount(keys, weights=table.attrs[idx].ravel(), minlength=length)
    counts = np.bincount(keys, minlength=length)
    scores = np.divide(sums, counts, out=np.zeros(length), where=counts > 0)
    return scores.reshape(n_rows, table.n_docs)


def _auc_rows(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Mann-Whitney AUC of every row of ``scores``; ties count one half."""
    positive = labels == 1
    n1 = int(positive.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise StatsError("AUC needs documents from both classes")
    ranks = rankdata(scores, axis=1)
    u = ranks[:, positive].sum(axis=1) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def document_feature_score(records: Sequence[TokenRecord], category: str) -> float:
    attrs = [r.attribution for r in records if category in r.categories]
    if not attrs:
        return 0.0
    return float(np.mean(attrs))


def roc_auc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise StatsError("scores and labels must be equal-length vectors")
    return float(_auc_rows(scores[None, :], labels)[0])


def auc_significance(records: RecordsLike, category: str, cfg: StatsConfig) -> AucSignificance:
    table = _as_table(records)
    mask = table.mask(category)
    n_f = int(mask.sum())
    if n_f == 0:
        return AucSignificance(None, None, None, "none")
    feature_auc = float(_auc_rows(_doc_scores(table, np.flatnonzero(mask)[None, :]), table.doc_labels)[0])
    if n_f == table.n_tokens:
        return AucSignificance(feature_auc, feature_auc, 0.0, "none")

    rng = substream_rng(cfg.seed, category, AUC_STREAM)
    idx = _draw_subsets(rng, table.n_tokens, n_f, cfg.n_subsamples)
    rows = max(1, _SAMPLE_CHUNK // max(table.n_docs, n_f))
    null = np.concatenate([
        _auc_rows(_doc_scores(table, idx[start:start + rows]), table.doc_labels)
        for start in range(0, len(idx), rows)
    ])
    gate = _gate(feature_auc, null, cfg)
    impact: Impact = "positive" if gate > 0 else "negative" if gate < 0 else "none"
    null_mean = float(null.mean())
    return AucSignificance(feature_auc, null_mean, feature_auc - null_mean, impact)


def _verdict(group: Group, impact: Impact) -> str:
    if group == "none":
        return "irrelevant"
    return "improves" if impact == "positive" else "contributes"


def analyze_category(table: TokenTable, category: str, cfg: StatsConfig) -> FeatureStats:
    attr = attribution_significance(table, category, cfg)
    if attr.n_tokens == 0:
        return FeatureStats(category=category, n_tokens=0, verdict="absent")
    auc = auc_significance(table, category, cfg)
    stats = FeatureStats(
        category=category,
        n_tokens=attr.n_tokens,
        mean_attr=attr.mean_attr,
        attr_group=attr.group,
        attr_pctile=attr.percentile,
        feature_auc=auc.feature_auc,
        null_auc_mean=auc.null_auc_mean,
        delta_auc=auc.delta_auc,
        auc_impact=auc.auc_impact,
        verdict=_verdict(attr.group, auc.auc_impact),
    )
    logger.debug(
        f"{category}: n={stats.n_tokens} mean_attr={stats.mean_attr:.4g} group={stats.attr_group} "
        f"auc={stats.feature_auc:.3f} delta={stats.delta_auc:+.3f} -> {stats.verdict}"
    )
    return stats


def _sort_key(stats: FeatureStats):
    if stats.verdict == "absent":
        return (1, 0.0, stats.category)
    return (0, -abs(stats.delta_auc), stats.category)


def analyze_all(
    records: RecordsLike, dictionary: CategoryDictionary, cfg: StatsConfig, max_workers: int = 1
) -> List[FeatureStats]:
    """One FeatureStats per non-excluded category, largest |delta_auc| first, absent last."""
    started = time.time()
    table = _as_table(records)
    if len(set(table.doc_labels.tolist())) < 2:
        raise StatsError("feature AUCs need documents from both classes")
    categories = dictionary.category_names()
    results = run_bounded(lambda name: analyze_category(table, name, cfg), categories, max_workers)
    results.sort(key=_sort_key)

    verdicts: Dict[str, int] = {}
    for stats in results:
        verdicts[stats.verdict] = verdicts.get(stats.verdict, 0) + 1
    logger.info(
        f"Analyzed {len(results)} categories over {table.n_tokens} tokens / {table.n_docs} documents "
        f"in {time.time() - started:.1f}s: {dict(sorted(verdicts.items()))}"
    )
    return results

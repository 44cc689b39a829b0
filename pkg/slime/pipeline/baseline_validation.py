"""Count-based category validation and its comparison with attribution AUCs."""

import logging
import time
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import mannwhitneyu, pearsonr, rankdata

from slime.config import EXACT_MWU_BELOW
from slime.errors import StatsError
from slime.models import AucPair, CategoryDictionary, CountStats, FeatureStats, MethodComparison
from slime.pipeline.corpus import Corpus, Document
from slime.pipeline.tagging import tag_token
from slime.utils import run_bounded

logger = logging.getLogger("baseline_validation")


def category_proportions(document: Document, dictionary: CategoryDictionary) -> Dict[str, float]:
    """Percent of the document's tokens tagged with each non-excluded category."""
    if not document.tokens:
        raise StatsError(f"{document.id}: cannot compute proportions of an empty document")
    counts = dict.fromkeys(dictionary.category_names(), 0)
    for token in document.tokens:
        for name in tag_token(dictionary, token):
            counts[name] = counts.get(name, 0) + 1
    total = len(document.tokens)
    return {name: 100.0 * count / total for name, count in counts.items()}


def _exact_two_sided_p(x: np.ndarray, y: np.ndarray, u_x: float) -> float:
    """P(|U - E[U]| >= |u_x - E[U]|) over all splits of the pooled ranks, ties kept as midranks."""
    pooled = np.concatenate([x, y])
    doubled = np.rint(2 * rankdata(pooled)).astype(np.int64)
    n_small = min(len(x), len(y))
    # no subset of n_small ranks can sum past the n_small largest
    top = int(np.sort(doubled)[len(doubled) - n_small:].sum())
    # ways[k, s]: subsets of k pooled items whose doubled rank sum is s
    ways = np.zeros((n_small + 1, top + 1))
    ways[0, 0] = 1.0
    for seen, r in enumerate(doubled, start=1):
        for k in range(min(seen, n_small), 0, -1):
            ways[k, r:] += ways[k - 1, :top + 1 - r]

    mean2 = len(x) * len(y)  # 2 * E[U]
    u2 = np.arange(top + 1) - n_small * (n_small + 1)
    observed = abs(2 * u_x - mean2)
    counts = ways[n_small]
    extreme = counts[np.abs(u2 - mean2) >= observed - 1e-9].sum()
    return float(min(1.0, extreme / counts.sum()))


def mann_whitney_u(x, y) -> Tuple[float, float]:
    """U for ``x`` and the two-sided p-value.

    Exact enumeration when the smaller sample is below ``EXACT_MWU_BELOW``,
    otherwise the normal approximation with tie and continuity correction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise StatsError("Mann-Whitney U needs two non-empty samples")
    ranks = rankdata(np.concatenate([x, y]))
    u_x = float(ranks[:x.size].sum() - x.size * (x.size + 1) / 2.0)
    if np.all(ranks == ranks[0]):
        return u_x, 1.0
    if min(x.size, y.size) < EXACT_MWU_BELOW:
        return u_x, _exact_two_sided_p(x, y, u_x)
    result = mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)
    return u_x, float(result.pvalue)


def count_based_auc(u_control: float, n_control: int, n_ad: int) -> Tuple[float, float]:
    if n_control < 1 or n_ad < 1:
        raise StatsError(f"sample sizes must be positive, got {n_control} and {n_ad}")
    pairs = n_control * n_ad
    if not 0 <= u_control <= pairs:
        raise StatsError(f"U={u_control} outside [0, {pairs}]")
    auc_control = u_control / pairs
    return auc_control, 1.0 - auc_control


def bonferroni_threshold(alpha: float, m: int) -> float:
    if not 0 < alpha < 1:
        raise StatsError(f"alpha must lie in (0, 1), got {alpha}")
    if m < 1:
        raise StatsError("Bonferroni correction needs at least one category")
    return alpha / m


def count_based_analysis(
    corpus: Corpus, dictionary: CategoryDictionary, alpha: float, max_workers: int = 1
) -> List[CountStats]:
    started = time.time()
    documents = [d for d in corpus.documents if d.tokens]
    if len(documents) < len(corpus.documents):
        logger.warning(f"Skipping {len(corpus.documents) - len(documents)} empty documents")
    labels = np.array([d.label for d in documents], dtype=int)
    if len(set(labels.tolist())) < 2:
        raise StatsError("count-based validation needs documents from both classes")

    categories = dictionary.analyzed_categories()
    threshold = bonferroni_threshold(alpha, len(categories))
    proportions = [category_proportions(d, dictionary) for d in documents]

    def analyze(name: str) -> CountStats:
        values = np.array([p[name] for p in proportions])
        control, ad = values[labels == 0], values[labels == 1]
        u_control, p_value = mann_whitney_u(control, ad)
        auc_control, auc_ad = count_based_auc(u_control, control.size, ad.size)
        return CountStats(
            category=name,
            proportions_control=control.tolist(),
            proportions_ad=ad.tolist(),
            u_control=u_control,
            p_value=p_value,
            auc_control=auc_control,
            auc_ad=auc_ad,
            significant=p_value < threshold,
        )

    results = run_bounded(analyze, categories, max_workers)
    logger.info(
        f"Count-based validation of {len(categories)} categories (threshold {threshold:.3g}): "
        f"{sum(r.significant for r in results)} significant ({time.time() - started:.1f}s)"
    )
    return results


def compare_methods(slime: Sequence[FeatureStats], counts: Sequence[CountStats]) -> MethodComparison:
    """Correlate attribution AUCs with count AUCs, each oriented toward the group the feature supports."""
    by_name = {c.category: c for c in counts}
    pairs: List[AucPair] = []
    for stats in slime:
        count = by_name.get(stats.category)
        if count is None or stats.verdict == "absent" or stats.feature_auc is None:
            continue
        if stats.attr_group == "control":
            count_auc, slime_auc = count.auc_control, 1.0 - stats.feature_auc
        else:
            count_auc, slime_auc = count.auc_ad, stats.feature_auc
        relative = (slime_auc - count_auc) / count_auc if count_auc != 0 else None
        pairs.append(AucPair(
            category=stats.category, count_auc=count_auc, slime_auc=slime_auc, relative_diff=relative,
            count_significant=count.significant, attr_group=stats.attr_group, verdict=stats.verdict,
        ))

    if len(pairs) < 3:
        raise StatsError(f"need at least 3 shared categories to compare methods, got {len(pairs)}")
    count_values = np.array([p.count_auc for p in pairs])
    slime_values = np.array([p.slime_auc for p in pairs])
    if np.ptp(count_values) == 0 or np.ptp(slime_values) == 0:
        raise StatsError("correlation undefined: one AUC vector is constant")

    r = float(pearsonr(count_values, slime_values)[0])
    statistic, p_value = mann_whitney_u(slime_values, count_values)
    logger.info(f"Method comparison over {len(pairs)} categories: r={r:.3f}, U={statistic}, p={p_value:.3g}")
    return MethodComparison(pearson_r=r, mwu_statistic=statistic, mwu_p=p_value, pairs=pairs)

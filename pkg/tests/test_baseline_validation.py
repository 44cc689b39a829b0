import itertools

import numpy as np
import pytest
from scipy.stats import rankdata

from slime.errors import StatsError
from slime.models import CountStats, FeatureStats
from slime.pipeline.baseline_validation import (
    _exact_two_sided_p,
    bonferroni_threshold,
    category_proportions,
    compare_methods,
    count_based_analysis,
    count_based_auc,
    mann_whitney_u,
)
from slime.pipeline.corpus import Corpus, Document
from slime.pipeline.slime_stats import roc_auc
from slime.pipeline.tagging import parse_dictionary

from conftest import write_dic


def pair_count_u(x, y):
    return sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in itertools.product(x, y))


def feature(name, auc, group="AD"):
    return FeatureStats(
        category=name, n_tokens=10, mean_attr=0.1 if group == "AD" else -0.1, attr_group=group,
        attr_pctile=99.0, feature_auc=auc, null_auc_mean=0.5, delta_auc=auc - 0.5,
        auc_impact="positive", verdict="improves",
    )


def count(name, auc_control):
    return CountStats(
        category=name, u_control=auc_control * 100, p_value=0.5,
        auc_control=auc_control, auc_ad=1 - auc_control, significant=False,
    )


# ---- proportions ----


def test_category_proportions(tmp_path):
    d = parse_dictionary(write_dic(tmp_path / "d.dic", "%\n1\tSocial\n2\tfiller\n3\tWC\n%\nmother\t1\num\t2\nthe\t3\n"))
    props = category_proportions(Document(id="a", label=0, text="the mother laughs"), d)
    assert props["Social"] == pytest.approx(100 / 3)
    assert props["filler"] == 0.0
    assert "WC" not in props
    assert category_proportions(Document(id="b", label=1, text="um um"), d)["filler"] == 100.0
    with pytest.raises(StatsError, match="empty"):
        category_proportions(Document(id="c", label=1, text=""), d)


# ---- Mann-Whitney U ----


def test_mann_whitney_examples():
    assert mann_whitney_u([1, 2], [3, 4])[0] == 0.0
    assert mann_whitney_u([1, 2], [2, 3])[0] == 0.5
    u, p = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert u == 4.5 and p >= 0.99
    with pytest.raises(StatsError):
        mann_whitney_u([], [1.0])


def test_u_matches_pair_counting(rng):
    for _ in range(500):
        nx, ny = int(rng.integers(1, 15)), int(rng.integers(1, 15))
        x = rng.integers(0, 6, size=nx).astype(float)
        y = rng.integers(0, 6, size=ny).astype(float)
        assert mann_whitney_u(x, y)[0] == pytest.approx(pair_count_u(x, y), abs=1e-9)


def test_exact_p_matches_enumeration(rng):
    for _ in range(40):
        nx, ny = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        x = rng.integers(0, 4, size=nx).astype(float)
        y = rng.integers(0, 4, size=ny).astype(float)
        pooled = np.concatenate([x, y])
        if np.all(pooled == pooled[0]):
            continue
        ranks = rankdata(pooled)
        mean = nx * ny / 2
        u_obs = ranks[:nx].sum() - nx * (nx + 1) / 2
        extreme = total = 0
        for subset in itertools.combinations(range(nx + ny), nx):
            u = ranks[list(subset)].sum() - nx * (nx + 1) / 2
            total += 1
            extreme += abs(u - mean) >= abs(u_obs - mean) - 1e-9
        assert _exact_two_sided_p(x, y, u_obs) == pytest.approx(extreme / total, abs=1e-12)
        assert mann_whitney_u(x, y)[1] == pytest.approx(extreme / total, abs=1e-12)


def test_exact_p_with_one_small_class(rng):
    from scipy.stats import mannwhitneyu

    for n_big in (40, 400, 1600):
        x, y = rng.normal(0.3, size=7), rng.normal(size=n_big)
        u, p = mann_whitney_u(x, y)
        ref = mannwhitneyu(x, y, alternative="two-sided", method="exact")
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)


def test_large_samples_use_normal_approximation(rng):
    from scipy.stats import mannwhitneyu

    x, y = rng.normal(size=20), rng.normal(0.8, size=25)
    u, p = mann_whitney_u(x, y)
    ref = mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert u == pytest.approx(ref.statistic)
    assert p == pytest.approx(ref.pvalue)


# ---- AUC conversion and Bonferroni ----


def test_count_based_auc_examples():
    assert count_based_auc(6, 2, 3) == (1.0, 0.0)
    assert count_based_auc(3, 2, 3) == (0.5, 0.5)
    assert count_based_auc(0, 2, 2) == (0.0, 1.0)
    with pytest.raises(StatsError):
        count_based_auc(7, 2, 3)
    with pytest.raises(StatsError):
        count_based_auc(0, 0, 3)


def test_count_based_auc_equals_roc_auc(rng):
    for _ in range(200):
        n1, n2 = int(rng.integers(1, 20)), int(rng.integers(1, 20))
        control = rng.integers(0, 8, size=n1) * 12.5
        ad = rng.integers(0, 8, size=n2) * 12.5
        u, _ = mann_whitney_u(control, ad)
        auc_control, auc_ad = count_based_auc(u, n1, n2)
        scores = np.concatenate([control, ad])
        control_is_positive = np.r_[np.ones(n1), np.zeros(n2)].astype(int)
        assert auc_control == pytest.approx(roc_auc(scores, control_is_positive), abs=1e-12)
        assert auc_ad == pytest.approx(1 - auc_control, abs=1e-15)


def test_bonferroni():
    assert bonferroni_threshold(0.05, 111) == pytest.approx(0.05 / 111)
    assert f"{bonferroni_threshold(0.05, 111):.3e}" == "4.505e-04"
    assert bonferroni_threshold(0.05, 1) == 0.05
    assert bonferroni_threshold(0.01, 10) == pytest.approx(0.001)
    thresholds = [bonferroni_threshold(0.05, m) for m in range(1, 50)]
    assert all(b < a for a, b in zip(thresholds, thresholds[1:]))
    with pytest.raises(StatsError):
        bonferroni_threshold(0.05, 0)


# ---- count-based analysis ----


def test_fixture_count_analysis(fixture_corpus, fixture_dictionary):
    results = {c.category: c for c in count_based_analysis(fixture_corpus, fixture_dictionary, 0.05)}
    assert len(results) == 7
    assert results["filler"].significant and results["filler"].auc_ad > 0.5
    assert results["family"].significant and results["family"].auc_control > 0.5
    leisure = results["leisure"]
    assert leisure.auc_control == 0.5 and leisure.p_value == 1.0 and not leisure.significant
    assert len(leisure.proportions_control) == 30 and len(leisure.proportions_ad) == 30
    for c in results.values():
        assert c.auc_ad == pytest.approx(1 - c.auc_control)
        assert c.significant == (c.p_value < 0.05 / 7)


def test_planted_zzz_category(tmp_path):
    docs = []
    for i in range(12):
        docs.append(Document(id=f"ad{i:02d}", label=1, text="zzz zzz zzz the cookie jar " + "boy " * (i % 3)))
        docs.append(Document(id=f"ct{i:02d}", label=0, text="zzz the cookie jar falls " + "girl " * (i % 3)))
    d = parse_dictionary(write_dic(tmp_path / "d.dic", "%\n1\tzcat\n2\tobject\n%\nzzz\t1\njar\t2\n"))
    results = {c.category: c for c in count_based_analysis(Corpus(documents=docs), d, 0.05)}
    assert results["zcat"].significant and results["zcat"].auc_ad > 0.5


def test_single_class_corpus(fixture_dictionary):
    corpus = Corpus(documents=[Document(id=f"d{i}", label=1, text="um the jar") for i in range(4)])
    with pytest.raises(StatsError, match="both classes"):
        count_based_analysis(corpus, fixture_dictionary, 0.05)


# ---- method comparison ----


def test_identical_auc_vectors_correlate_perfectly():
    aucs = [0.55, 0.6, 0.72, 0.81]
    slime = [feature(f"c{i}", a) for i, a in enumerate(aucs)]
    counts = [count(f"c{i}", 1 - a) for i, a in enumerate(aucs)]
    result = compare_methods(slime, counts)
    assert result.pearson_r == pytest.approx(1.0)
    assert [p.relative_diff for p in result.pairs] == pytest.approx([0.0] * 4)


def test_orientation_follows_attribution_group():
    slime = [feature("a", 0.2, "control"), feature("b", 0.7), feature("c", 0.9)]
    counts = [count("a", 0.75), count("b", 0.4), count("c", 0.2)]
    pairs = {p.category: p for p in compare_methods(slime, counts).pairs}
    assert pairs["a"].slime_auc == pytest.approx(0.8) and pairs["a"].count_auc == 0.75
    assert pairs["b"].slime_auc == 0.7 and pairs["b"].count_auc == pytest.approx(0.6)


def test_constant_vector_and_too_few_categories():
    slime = [feature(f"c{i}", 0.6 + 0.1 * i) for i in range(3)]
    with pytest.raises(StatsError, match="constant"):
        compare_methods(slime, [count(f"c{i}", 0.3) for i in range(3)])
    with pytest.raises(StatsError, match="at least 3"):
        compare_methods(slime[:2], [count(f"c{i}", 0.3 + 0.1 * i) for i in range(2)])


def test_absent_categories_are_skipped():
    absent = FeatureStats(category="x", n_tokens=0, verdict="absent")
    slime = [feature(f"c{i}", 0.6 + 0.1 * i) for i in range(3)] + [absent]
    counts = [count(f"c{i}", 0.5 - 0.1 * i) for i in range(3)] + [count("x", 0.5)]
    assert [p.category for p in compare_methods(slime, counts).pairs] == ["c0", "c1", "c2"]


def test_shifted_aucs_are_detected():
    count_aucs = [0.50 + 0.01 * i for i in range(12)]
    slime = [feature(f"c{i}", min(1.0, a + 0.1)) for i, a in enumerate(count_aucs)]
    counts = [count(f"c{i}", 1 - a) for i, a in enumerate(count_aucs)]
    result = compare_methods(slime, counts)
    assert result.pearson_r > 0.95
    assert result.mwu_p < 0.05

    slime_values = np.array([p.slime_auc for p in result.pairs])
    count_values = np.array([p.count_auc for p in result.pairs])
    assert _exact_two_sided_p(slime_values, count_values, result.mwu_statistic) < 0.05

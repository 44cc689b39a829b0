import json
import logging

import pytest

from slime.main import main
from slime.pipeline.attribution import export_attributions
from slime.pipeline.corpus import FoldPlan
from slime.services.artifacts import ArtifactStore
from slime.services.report import REPORT_FILES, read_feature_stats

from conftest import FIXTURE_DIR, planted_attributions

CONFIG = FIXTURE_DIR / "slime.toml"
COMPARED = ("feature_stats.csv", "count_stats.csv", "comparison.json", "attributions.jsonl", "scatter.svg", "bars.svg")


def write_config(path, **extra_sections):
    lines = [
        "seed = 7",
        f'[corpus]\npath = "{FIXTURE_DIR / "corpus.jsonl"}"',
        f'[dictionary]\npath = "{extra_sections.pop("dictionary", FIXTURE_DIR / "mini.dic")}"',
        "[stats]\nn_subsamples = 500",
    ]
    for section, body in extra_sections.items():
        lines.append(f"[{section}]\n{body}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("full") / "out"
    assert main(["all", "--config", str(CONFIG), "--out", str(out)]) == 0
    return out


@pytest.mark.slow
def test_all_writes_every_report_file(full_run):
    for name in REPORT_FILES:
        assert (full_run / name).stat().st_size > 0
    assert (full_run / "best_model.json").exists()
    assert len(list((full_run / "checkpoints").glob("fold_*.json"))) == 5


@pytest.mark.slow
def test_trained_model_ranks_filler_words(full_run):
    stats = {s.category: s for s in read_feature_stats(full_run / "feature_stats.csv")}
    filler = stats["filler"]
    assert (filler.verdict, filler.attr_group, filler.auc_impact) == ("improves", "AD", "positive")
    assert filler.delta_auc > 0
    assert stats["leisure"].verdict == "absent"


@pytest.mark.slow
def test_fold_accuracy_table(full_run):
    rows = ArtifactStore(full_run).load_fold_accuracy()
    assert [fold for fold, _, _ in rows] == [0, 1, 2, 3, 4]
    assert sum(selected for _, _, selected in rows) == 1
    assert all(0.0 <= acc <= 1.0 for _, acc, _ in rows)


@pytest.mark.slow
def test_runs_are_deterministic(full_run, tmp_path):
    assert main(["all", "--config", str(CONFIG), "--out", str(tmp_path)]) == 0
    for name in COMPARED:
        assert (tmp_path / name).read_bytes() == (full_run / name).read_bytes(), name


@pytest.mark.slow
def test_stagewise_matches_all(full_run, tmp_path):
    for stage in ("train", "attribute", "analyze", "validate", "report"):
        assert main([stage, "--config", str(CONFIG), "--out", str(tmp_path)]) == 0
    for name in COMPARED:
        assert (tmp_path / name).read_bytes() == (full_run / name).read_bytes(), name


@pytest.mark.slow
def test_seed_from_environment(full_run, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SLIME_SEED", "7")
    assert main(["train", "--config", str(CONFIG), "--out", str(tmp_path), "--format", "json"]) == 0
    assert (tmp_path / "folds.json").read_bytes() == (full_run / "folds.json").read_bytes()
    groups = json.loads(capsys.readouterr().out)["corpus"]["groups"]
    assert set(groups) == {"0", "1"}
    for group in groups.values():
        assert (group["n"], group["sex_f"], group["sex_m"]) == (30, 15, 15)
        assert group["age_mean"] is not None


def test_missing_dictionary_exits_with_config_error(tmp_path, caplog):
    config = write_config(tmp_path / "run.toml", dictionary=tmp_path / "nope.dic")
    with caplog.at_level(logging.ERROR):
        assert main(["all", "--config", str(config), "--out", str(tmp_path / "out")]) == 1
    assert "dictionary.path" in caplog.text
    assert not (tmp_path / "out" / "feature_stats.csv").exists()


def test_unknown_subcommand_and_missing_config(tmp_path):
    assert main(["explain", "--config", str(CONFIG)]) == 1
    assert main(["all"]) == 1
    assert main([]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == 1


def test_stage_without_inputs_asks_for_earlier_stage(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        assert main(["analyze", "--config", str(CONFIG), "--out", str(tmp_path)]) == 1
    assert "run the `attribute` stage first" in caplog.text


def test_import_then_analyze(tmp_path, capsys, fixture_corpus):
    weights = {"um": 1.0, "uh": 1.0, "mother": -1.0, "family": -1.0}
    attr_path = export_attributions(planted_attributions(fixture_corpus, weights), tmp_path / "planted.jsonl")
    config = write_config(tmp_path / "run.toml", attribution=f'import_path = "{attr_path}"')
    out = tmp_path / "out"

    assert main(["import-attr", "--config", str(config), "--out", str(out), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out) == {"documents": 60, "stage": "import-attr"}
    assert main(["analyze", "--config", str(config), "--out", str(out), "--format", "json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["stage"] == "analyze" and summary["categories"] == 8
    assert summary["token_counts"]["filler"] == 60
    assert "leisure" not in summary["token_counts"]

    stats = {s.category: s for s in read_feature_stats(out / "feature_stats.csv")}
    filler = stats["filler"]
    assert (filler.verdict, filler.attr_group, filler.auc_impact) == ("improves", "AD", "positive")
    assert filler.delta_auc > 0 and filler.feature_auc == 1.0
    assert stats["family"].attr_group == "control"
    assert stats["number"].verdict == "irrelevant"
    assert stats["leisure"].verdict == "absent"


def test_import_bad_file_exits_with_data_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "label": 1, "tokens": ["x", "y"], "attributions": [0.1]}\n', encoding="utf-8")
    config = write_config(tmp_path / "run.toml", attribution=f'import_path = "{bad}"')
    assert main(["import-attr", "--config", str(config), "--out", str(tmp_path / "out")]) == 2


def test_attribute_rejects_split_from_another_corpus(tmp_path, caplog):
    out = tmp_path / "out"
    ArtifactStore(out).save_folds(FoldPlan(k=2, assignments={"other_a": 0, "other_b": 1}))
    with caplog.at_level(logging.ERROR):
        assert main(["attribute", "--config", str(CONFIG), "--out", str(out)]) == 2
    assert "run the `train` stage again" in caplog.text

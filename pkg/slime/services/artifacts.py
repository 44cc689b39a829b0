import csv
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from slime.errors import ConfigError, ReportError
from slime.models import AttributedCorpus, CountStats, FeatureStats, MethodComparison
from slime.pipeline.attribution import export_attributions, import_attributions
from slime.pipeline.corpus import FoldPlan
from slime.pipeline.toymodel import FoldResult, ModelParams, load_checkpoint, save_checkpoint
from slime.services import report
from slime.utils import format_float

logger = logging.getLogger("artifacts")


class ArtifactStore:
    """Owns the output directory layout shared by all pipeline stages.

    out/
      folds.json                  fold assignment per document id
      checkpoints/fold_<i>.json   one toy model per fold
      fold_accuracy.csv           fold,val_accuracy,final_loss,selected
      best_model.json             checkpoint of the selected fold
      attributions.jsonl          interchange format
      feature_stats.csv, count_stats.csv, comparison.json, *.svg
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)

    @property
    def folds_path(self) -> Path:
        return self.out_dir / "folds.json"

    @property
    def checkpoint_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    @property
    def accuracy_path(self) -> Path:
        return self.out_dir / "fold_accuracy.csv"

    @property
    def best_model_path(self) -> Path:
        return self.out_dir / "best_model.json"

    @property
    def attributions_path(self) -> Path:
        return self.out_dir / "attributions.jsonl"

    @property
    def feature_stats_path(self) -> Path:
        return self.out_dir / "feature_stats.csv"

    @property
    def count_stats_path(self) -> Path:
        return self.out_dir / "count_stats.csv"

    @property
    def comparison_path(self) -> Path:
        return self.out_dir / "comparison.json"

    def _write(self, path: Path, writer) -> Path:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            writer(path)
        except OSError as e:
            raise ReportError(f"cannot write {path}: {e.strerror or e}") from None
        logger.debug(f"Wrote {path}")
        return path

    def _require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise ConfigError(f"{path} not found; run the `{stage}` stage first")
        return path

    # ---- folds and models ----

    def save_folds(self, plan: FoldPlan) -> Path:
        payload = json.dumps(plan.model_dump(), indent=2, sort_keys=True) + "\n"
        return self._write(self.folds_path, lambda p: p.write_text(payload, encoding="utf-8"))

    def load_folds(self) -> FoldPlan:
        return FoldPlan.model_validate_json(self._require(self.folds_path, "train").read_text(encoding="utf-8"))

    def checkpoint_path(self, fold: int) -> Path:
        return self.checkpoint_dir / f"fold_{fold}.json"

    def save_fold_results(self, results: Sequence[FoldResult], best_fold: int) -> List[Path]:
        paths = [self._write(self.checkpoint_path(r.fold), lambda p, r=r: save_checkpoint(r.params, p)) for r in results]

        def write_table(path: Path) -> None:
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["fold", "val_accuracy", "final_loss", "selected"])
                for r in results:
                    writer.writerow([
                        r.fold, format_float(r.val_accuracy),
                        format_float(r.losses[-1] if r.losses else None),
                        "true" if r.fold == best_fold else "false",
                    ])

        paths.append(self._write(self.accuracy_path, write_table))
        best = next(r for r in results if r.fold == best_fold)
        paths.append(self._write(self.best_model_path, lambda p: save_checkpoint(best.params, p)))
        return paths

    def load_fold_accuracy(self) -> List[Tuple[int, float, bool]]:
        with open(self._require(self.accuracy_path, "train"), newline="", encoding="utf-8") as f:
            return [
                (int(row["fold"]), float(row["val_accuracy"]), row["selected"] == "true")
                for row in csv.DictReader(f)
            ]

    def load_best_model(self) -> ModelParams:
        return load_checkpoint(self._require(self.best_model_path, "train"))

    # ---- attributions ----

    def save_attributions(self, attributed: AttributedCorpus) -> Path:
        return self._write(self.attributions_path, lambda p: export_attributions(attributed, p))

    def load_attributions(self) -> AttributedCorpus:
        return import_attributions(self._require(self.attributions_path, "attribute"))

    # ---- statistics ----

    def save_feature_stats(self, stats: Sequence[FeatureStats]) -> Path:
        return self._write(self.feature_stats_path, lambda p: report.write_feature_stats(stats, p))

    def load_feature_stats(self) -> List[FeatureStats]:
        return report.read_feature_stats(self._require(self.feature_stats_path, "analyze"))

    def save_count_stats(self, counts: Sequence[CountStats]) -> Path:
        return self._write(self.count_stats_path, lambda p: report.write_count_stats(counts, p))

    def load_count_stats(self) -> List[CountStats]:
        return report.read_count_stats(self._require(self.count_stats_path, "validate"))

    def save_comparison(self, comparison: MethodComparison) -> Path:
        return self._write(self.comparison_path, lambda p: report.write_comparison(comparison, p))

    def load_comparison(self) -> Optional[MethodComparison]:
        return report.read_comparison(self._require(self.comparison_path, "validate"))

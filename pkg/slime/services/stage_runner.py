import logging
import time
from typing import Any, Callable, Dict, Optional

from slime.config import PipelineConfig, check_paths
from slime.errors import ConfigError, DataError
from slime.models import CategoryDictionary
from slime.pipeline.attribution import attribute_corpus, import_attributions
from slime.pipeline.baseline_validation import compare_methods, count_based_analysis
from slime.pipeline.corpus import Corpus, kfold_split, load_corpus, summarize_corpus
from slime.pipeline.slime_stats import analyze_all
from slime.pipeline.tagging import category_token_counts, parse_dictionary, tag_corpus
from slime.pipeline.toymodel import select_best_fold, train
from slime.services import report as report_writer
from slime.services.artifacts import ArtifactStore

logger = logging.getLogger("stage_runner")

CORPUS = (("corpus", "path"),)
DICTIONARY = (("dictionary", "path"),)
IMPORT = (("attribution", "import_path"),)


class StageRunner:
    """Runs pipeline stages against one config and one artifact directory.

    Every stage reads its inputs from the store, so running the stages one by
    one produces the same files as ``all``.
    """

    def __init__(self, cfg: PipelineConfig, store: Optional[ArtifactStore] = None):
        self.cfg = cfg
        self.store = store or ArtifactStore(cfg.output.dir)
        self._corpus: Optional[Corpus] = None
        self._dictionary: Optional[CategoryDictionary] = None

    @property
    def corpus(self) -> Corpus:
        if self._corpus is None:
            check_paths(self.cfg, CORPUS)
            self._corpus = load_corpus(self.cfg.corpus.path, self.cfg.corpus.format)
        return self._corpus

    @property
    def dictionary(self) -> CategoryDictionary:
        if self._dictionary is None:
            check_paths(self.cfg, DICTIONARY)
            self._dictionary = parse_dictionary(self.cfg.dictionary.path, self.cfg.dictionary.excluded)
        return self._dictionary

    def stages(self) -> Dict[str, Callable[[], Dict[str, Any]]]:
        return {
            "train": self.train,
            "attribute": self.attribute,
            "import-attr": self.import_attr,
            "analyze": self.analyze,
            "validate": self.validate,
            "report": self.report,
            "all": self.run_all,
        }

    def run(self, stage: str) -> Dict[str, Any]:
        handler = self.stages().get(stage)
        if handler is None:
            raise ConfigError(f"unknown subcommand {stage!r}")
        started = time.time()
        logger.info(f"Running stage {stage} (seed {self.cfg.seed}, output {self.store.out_dir})")
        summary = handler()
        logger.info(f"Stage {stage} finished in {time.time() - started:.1f}s")
        return summary

    def train(self) -> Dict[str, Any]:
        corpus = self.corpus
        plan = kfold_split(corpus, self.cfg.folds, self.cfg.seed)
        self.store.save_folds(plan)
        results = train(corpus, plan, self.cfg.train)
        best_fold, _ = select_best_fold(results)
        self.store.save_fold_results(results, best_fold)
        return {
            "stage": "train",
            "folds": plan.k,
            "fold_accuracy": [r.val_accuracy for r in results],
            "best_fold": best_fold,
            "corpus": summarize_corpus(corpus).model_dump(mode="json"),
        }

    def attribute(self) -> Dict[str, Any]:
        plan = self.store.load_folds()
        ids = {d.id for d in self.corpus.documents}
        if set(plan.assignments) != ids:
            raise DataError(
                f"{self.store.folds_path} was split from a different corpus than {self.cfg.corpus.path}; "
                "run the `train` stage again"
            )
        params = self.store.load_best_model()
        attributed = attribute_corpus(
            params, self.corpus, self.cfg.ig, self.cfg.train.max_tokens, self.cfg.max_workers
        )
        self.store.save_attributions(attributed)
        return {"stage": "attribute", "documents": len(attributed.documents), "warnings": attributed.warnings}

    def import_attr(self) -> Dict[str, Any]:
        check_paths(self.cfg, IMPORT)
        attributed = import_attributions(self.cfg.attribution.import_path)
        self.store.save_attributions(attributed)
        return {"stage": "import-attr", "documents": len(attributed.documents)}

    def analyze(self) -> Dict[str, Any]:
        attributed = self.store.load_attributions()
        records = tag_corpus(attributed, self.dictionary)
        stats = analyze_all(records, self.dictionary, self.cfg.stats, self.cfg.max_workers)
        self.store.save_feature_stats(stats)
        verdicts: Dict[str, int] = {}
        for s in stats:
            verdicts[s.verdict] = verdicts.get(s.verdict, 0) + 1
        return {
            "stage": "analyze",
            "categories": len(stats),
            "verdicts": dict(sorted(verdicts.items())),
            "token_counts": category_token_counts(records),
        }

    def validate(self) -> Dict[str, Any]:
        stats = self.store.load_feature_stats()
        counts = count_based_analysis(self.corpus, self.dictionary, self.cfg.validation.alpha, self.cfg.max_workers)
        self.store.save_count_stats(counts)
        comparison = compare_methods(stats, counts)
        self.store.save_comparison(comparison)
        return {
            "stage": "validate",
            "significant": sum(c.significant for c in counts),
            "pearson_r": comparison.pearson_r,
            "mwu_statistic": comparison.mwu_statistic,
            "mwu_p": comparison.mwu_p,
        }

    def report(self) -> Dict[str, Any]:
        paths = report_writer.export_results(
            self.store.load_feature_stats(),
            self.store.load_count_stats(),
            self.store.load_comparison(),
            self.store.out_dir,
        )
        return {"stage": "report", "files": [str(p) for p in paths]}

    def run_all(self) -> Dict[str, Any]:
        check_paths(self.cfg, CORPUS + DICTIONARY)
        if self.cfg.attribution.import_path is not None:
            summaries = [self.import_attr()]
        else:
            summaries = [self.train(), self.attribute()]
        summaries += [self.analyze(), self.validate(), self.report()]
        return {"stage": "all", "stages": summaries}

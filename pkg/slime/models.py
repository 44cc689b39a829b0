import math
from functools import cached_property
from typing import Dict, FrozenSet, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Label = Literal[0, 1]
Group = Literal["AD", "control", "none"]
Impact = Literal["positive", "negative", "none"]
Verdict = Literal["improves", "contributes", "irrelevant", "absent"]

# Context-dependent metrics that have no meaning for a single token.
DEFAULT_EXCLUDED = frozenset({"WC", "Analytic", "Clout", "Authentic", "Tone", "WPS"})


class TrainConfig(BaseModel):
    """Optimizer and schedule for the toy classifier.

    Transformer fine-tuning values (lr 2e-5, 50 epochs, eps 1e-8) can be
    passed explicitly; the defaults suit a model trained from scratch.
    A learning rate of 0 is accepted and leaves the initialization untouched.
    """

    learning_rate: float = Field(1e-2, ge=0)
    weight_decay: float = Field(0.0, ge=0)
    adam_eps: float = Field(1e-8, gt=0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(1, ge=1)
    max_tokens: int = Field(512, ge=1)
    embedding_dim: int = Field(16, ge=1)
    seed: int = 0

    @field_validator("adam_betas")
    @classmethod
    def _betas_in_range(cls, v):
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError("adam betas must lie in [0, 1)")
        return v


class IGConfig(BaseModel):
    steps: int = Field(512, ge=1)
    rule: Literal["left", "right", "midpoint", "trapezoid"] = "trapezoid"
    target: Literal["probability", "logit"] = "probability"
    # Path points evaluated per gradient call.
    batch_size: int = Field(256, ge=1)


class StatsConfig(BaseModel):
    n_subsamples: int = Field(5000, ge=100)
    low_pct: float = 5.0
    high_pct: float = 95.0
    seed: int = 0

    @model_validator(mode="after")
    def _ordered_percentiles(self):
        if not 0.0 < self.low_pct < self.high_pct < 100.0:
            raise ValueError("percentiles must satisfy 0 < low_pct < high_pct < 100")
        return self


class AttributedDocument(BaseModel):
    """One line of the attribution interchange format."""

    model_config = ConfigDict(extra="ignore")

    id: str
    label: Label
    tokens: List[str]
    attributions: List[float]
    f_x: Optional[float] = None

    @field_validator("label", mode="before")
    @classmethod
    def _integer_label(cls, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"label {value!r} is not the integer 0 or 1")
        return value

    @model_validator(mode="after")
    def _aligned(self):
        if len(self.tokens) != len(self.attributions):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.attributions)} attributions"
            )
        if not all(math.isfinite(a) for a in self.attributions):
            raise ValueError("attributions must be finite")
        if self.f_x is not None and not math.isfinite(self.f_x):
            raise ValueError("f_x must be finite")
        return self


class AttributedCorpus(BaseModel):
    documents: List[AttributedDocument]
    warnings: List[str] = []


class TokenRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    doc_id: str
    position: int = Field(ge=0)
    surface: str
    attribution: float
    categories: FrozenSet[str] = frozenset()
    doc_label: Label

    @field_validator("attribution")
    @classmethod
    def _finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("attribution must be finite")
        return v


class CategoryDictionary(BaseModel):
    """Category ids/names plus word and stem entries.

    ``entries`` maps a lowercase pattern to its category ids; a trailing
    ``*`` makes the pattern a prefix match.
    """

    categories: Dict[int, str]
    entries: Dict[str, FrozenSet[int]]
    excluded: FrozenSet[str] = DEFAULT_EXCLUDED

    @model_validator(mode="after")
    def _consistent(self):
        for pattern, ids in self.entries.items():
            if not pattern or pattern == "*":
                raise ValueError("empty pattern")
            if pattern != pattern.lower():
                raise ValueError(f"pattern {pattern!r} is not lowercase")
            if "*" in pattern[:-1]:
                raise ValueError(f"pattern {pattern!r} has a wildcard before the end")
            unknown = sorted(i for i in ids if i not in self.categories)
            if unknown:
                raise ValueError(f"pattern {pattern!r} references unknown category ids {unknown}")
        return self

    @cached_property
    def excluded_folded(self) -> FrozenSet[str]:
        return frozenset(name.casefold() for name in self.excluded)

    def is_excluded(self, name: str) -> bool:
        return name.casefold() in self.excluded_folded

    @cached_property
    def literal_index(self) -> Dict[str, FrozenSet[str]]:
        return {
            p: frozenset(self.categories[i] for i in ids)
            for p, ids in self.entries.items()
            if not p.endswith("*")
        }

    @cached_property
    def prefix_index(self) -> Dict[str, FrozenSet[str]]:
        return {
            p[:-1]: frozenset(self.categories[i] for i in ids)
            for p, ids in self.entries.items()
            if p.endswith("*")
        }

    def category_names(self) -> List[str]:
        """Non-excluded category names in header order."""
        return [name for _, name in sorted(self.categories.items()) if not self.is_excluded(name)]

    def analyzed_categories(self) -> List[str]:
        """Non-excluded categories with at least one entry."""
        used = {self.categories[i] for ids in self.entries.values() for i in ids}
        return [name for name in self.category_names() if name in used]


class FeatureStats(BaseModel):
    category: str
    n_tokens: int
    mean_attr: Optional[float] = None
    attr_group: Group = "none"
    attr_pctile: Optional[float] = None
    feature_auc: Optional[float] = None
    null_auc_mean: Optional[float] = None
    delta_auc: Optional[float] = None
    auc_impact: Impact = "none"
    verdict: Verdict


class CountStats(BaseModel):
    category: str
    proportions_control: List[float] = []
    proportions_ad: List[float] = []
    u_control: float
    p_value: float
    auc_control: float
    auc_ad: float
    significant: bool


class AucPair(BaseModel):
    category: str
    count_auc: float
    slime_auc: float
    relative_diff: Optional[float] = None
    count_significant: bool = False
    attr_group: Group = "none"
    verdict: Optional[Verdict] = None


class MethodComparison(BaseModel):
    pearson_r: float
    mwu_statistic: float
    mwu_p: float
    pairs: List[AucPair] = []


class PlotSpec(BaseModel):
    width: int = Field(800, gt=0)
    height: int = Field(560, gt=0)
    margin: int = Field(70, ge=0)
    palette: Dict[str, str] = {"AD": "#d62728", "control": "#2ca02c", "none": "#7f7f7f"}
    impact_fill: Dict[str, str] = {"positive": "#2ca02c", "negative": "#d62728", "none": "#ffffff"}
    # Method comparison markers, highest priority first.
    method_colors: Dict[str, str] = {
        "improves": "#1f77b4", "attributed": "#d62728", "count": "#000000", "none": "#999999",
    }
    # Opacity for features without a significant AUC impact.
    faded_opacity: float = Field(0.35, gt=0, lt=1)

    @model_validator(mode="after")
    def _fits(self):
        if 2 * self.margin >= min(self.width, self.height):
            raise ValueError("margin leaves no room for the plot area")
        return self

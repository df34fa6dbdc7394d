"""Model-agnostic feature attribution for binary classifiers.

The pipeline explains a scorer f(x) -> [0, 1] on one sample by selecting the
features that drive the score to the decision borderline, keeping those with
positive individual contributions toward the prediction, and fitting a Ridge
surrogate over presence-masks of the selection; the fitted weights are the
attributions. An add-only genetic evasion attack and fidelity evaluation
protocols (good-explanation rate, deduction and augmentation tests) round out
the experiment harness.
"""

from .adversarial import (
    AdversarialSample,
    AttackConfig,
    AttackFailedError,
    NotPositiveSeedError,
    build_attack_set,
    generate,
)
from .data import (
    Dataset,
    DatasetFormatError,
    FeatureVector,
    TfIdfEncoder,
    fit_tfidf,
    load_dataset,
    save_numeric_csv,
    save_token_lists,
    train_test_split,
)
from .evaluation import (
    BaselineExplainer,
    EvaluationCurve,
    augmentation_test,
    curves_to_csv,
    curves_to_json,
    deduction_test,
    good_explanation_curve,
    good_explanation_rate,
    make_method,
    pcr_curve,
)
from .explainer import (
    AttributionReport,
    ExplainerConfig,
    NothingToAttributeError,
    SelectionTrace,
    SurrogateTrainingSet,
    build_surrogate_set,
    explain,
    ridge_fit,
    select_core_features,
    select_positive_contributors,
)
from .models import (
    DimensionMismatchError,
    ExternalModel,
    LogisticModel,
    ModelBundle,
    RandomForestModel,
    ScoreModel,
    ScoringProtocolError,
    load_model,
    save_model,
    train_logistic,
    train_random_forest,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialSample",
    "AttackConfig",
    "AttackFailedError",
    "AttributionReport",
    "BaselineExplainer",
    "Dataset",
    "DatasetFormatError",
    "DimensionMismatchError",
    "EvaluationCurve",
    "ExplainerConfig",
    "ExternalModel",
    "FeatureVector",
    "LogisticModel",
    "ModelBundle",
    "NotPositiveSeedError",
    "NothingToAttributeError",
    "RandomForestModel",
    "ScoreModel",
    "ScoringProtocolError",
    "SelectionTrace",
    "SurrogateTrainingSet",
    "TfIdfEncoder",
    "augmentation_test",
    "build_attack_set",
    "build_surrogate_set",
    "curves_to_csv",
    "curves_to_json",
    "deduction_test",
    "explain",
    "fit_tfidf",
    "generate",
    "good_explanation_curve",
    "good_explanation_rate",
    "load_dataset",
    "load_model",
    "make_method",
    "pcr_curve",
    "ridge_fit",
    "save_model",
    "save_numeric_csv",
    "save_token_lists",
    "select_core_features",
    "select_positive_contributors",
    "train_logistic",
    "train_random_forest",
    "train_test_split",
]

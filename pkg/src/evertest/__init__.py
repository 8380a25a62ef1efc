"""Sequential power-one tests built from a trained classifier's label stream."""

from .bounds import (
    QuadraticFit,
    TauBoundReport,
    lorden_delay_lower,
    min_training_size,
    minimax_log_psi_lower,
    mismatch_tolerance,
    quadratic_fit,
    tau_upper_bound,
    tilde_delta_envelope,
    vc_sample_size,
)
from .classifiers import (
    GaussianTupleSpec,
    LabelStream,
    NearestCentroidClassifier,
    OfflineDataset,
    ThresholdClassifier,
    erm_max_gap,
    estimate_confusion,
    multinomial_stream,
    sample,
    train_centroid,
)
from .detector import DetectorState, detector_step, run_detector
from .eprocess import (
    BetCounts,
    EngineState,
    initial_state,
    log_wealth_exact,
    mixture_wealth,
    select_j,
    step,
    wealth_exact,
    wealth_grid,
)
from .sequential import TestConfig, TestResult, identification_trace, run_mixture_test, run_test
from .stats import (
    ConfusionMatrix,
    GapReport,
    LabelPMF,
    gaps,
    is_separable,
    j_symmetrized,
    kl_gaussian_diag,
    kl_pmf,
    mismatch_within,
    tv_pmf,
)

__version__ = "0.1.0"

from .estimators import ChangePointDetector, SequentialClassifierTest  # noqa: E402
from .harness import ExperimentConfig, derive_trial_rng, recipe, run_experiment  # noqa: E402

__all__ = [
    "BetCounts",
    "ChangePointDetector",
    "ConfusionMatrix",
    "derive_trial_rng",
    "detector_step",
    "DetectorState",
    "EngineState",
    "erm_max_gap",
    "estimate_confusion",
    "ExperimentConfig",
    "GapReport",
    "gaps",
    "GaussianTupleSpec",
    "identification_trace",
    "initial_state",
    "is_separable",
    "j_symmetrized",
    "kl_gaussian_diag",
    "kl_pmf",
    "LabelPMF",
    "LabelStream",
    "log_wealth_exact",
    "lorden_delay_lower",
    "min_training_size",
    "minimax_log_psi_lower",
    "mismatch_tolerance",
    "mismatch_within",
    "mixture_wealth",
    "multinomial_stream",
    "NearestCentroidClassifier",
    "OfflineDataset",
    "quadratic_fit",
    "QuadraticFit",
    "recipe",
    "run_detector",
    "run_experiment",
    "run_mixture_test",
    "run_test",
    "sample",
    "select_j",
    "SequentialClassifierTest",
    "step",
    "tau_upper_bound",
    "TauBoundReport",
    "TestConfig",
    "TestResult",
    "ThresholdClassifier",
    "tilde_delta_envelope",
    "train_centroid",
    "tv_pmf",
    "vc_sample_size",
    "wealth_exact",
    "wealth_grid",
]

"""PAC robustness verification for black-box stochastic trajectory predictors."""

from .analysis import (
    Counterexample,
    GradMode,
    Outcome,
    Verdict,
    box_max,
    exceedance_frequency,
    linear_adversary,
    pgd_attack,
    replay_delta,
    verify,
)
from .config import RunConfig, read_config_file, resolve_config
from .core import (
    FlatInput,
    FlatLayout,
    Scene,
    SceneMeta,
    Trajectory,
    Unit,
    ade,
    ade_k,
    flatten,
    scene_with_past,
    unflatten,
)
from .datasets import (
    RawRecord,
    SceneQuery,
    TrajectoryStore,
    extract_scene,
    load_dataset,
)
from .errors import (
    BudgetError,
    DatasetError,
    InvalidArgumentError,
    NumericError,
    PredictorError,
    ProtocolError,
    SceneExtractionError,
    VerifierError,
)
from .external import ExternalPredictor, ExternalPredictorPool, WireClient
from .interpret import PathRank, SensitivityMap, render, sensitivity
from .learning import (
    AffineSurrogate,
    ChebyshevRegressor,
    LeastSquaresRegressor,
    LpSolution,
    PacBudget,
    SurrogateProvenance,
    chebyshev_lp,
    learn_surrogate,
    least_squares_fit,
    max_key_features,
    required_samples,
)
from .predictors import (
    AffineDistanceFixture,
    AffinePredictor,
    ConstantVelocityPredictor,
    NeighborSensitivePredictor,
    PredictionBatch,
    PredictionRequest,
    Predictor,
)
from .sampling import (
    DeltaKind,
    LabeledSample,
    PerturbationSpec,
    PureMode,
    clamp_to_ball,
    collect_samples,
    dump_samples_csv,
    eval_delta_label,
    eval_delta_pure,
    max_sample,
    sample_flat_inputs,
    sample_inputs,
)
from .seeding import derive_seed, rng_for

__version__ = "0.1.0"

__all__ = [
    # core
    "FlatInput",
    "FlatLayout",
    "Scene",
    "SceneMeta",
    "Trajectory",
    "Unit",
    "ade",
    "ade_k",
    "flatten",
    "scene_with_past",
    "unflatten",
    # errors
    "BudgetError",
    "DatasetError",
    "InvalidArgumentError",
    "NumericError",
    "PredictorError",
    "ProtocolError",
    "SceneExtractionError",
    "VerifierError",
    # datasets
    "RawRecord",
    "SceneQuery",
    "TrajectoryStore",
    "extract_scene",
    "load_dataset",
    # predictors
    "AffineDistanceFixture",
    "AffinePredictor",
    "ConstantVelocityPredictor",
    "NeighborSensitivePredictor",
    "PredictionBatch",
    "PredictionRequest",
    "Predictor",
    # sampling
    "DeltaKind",
    "LabeledSample",
    "PerturbationSpec",
    "PureMode",
    "clamp_to_ball",
    "collect_samples",
    "dump_samples_csv",
    "eval_delta_label",
    "eval_delta_pure",
    "max_sample",
    "sample_flat_inputs",
    "sample_inputs",
    # learning
    "AffineSurrogate",
    "ChebyshevRegressor",
    "LeastSquaresRegressor",
    "LpSolution",
    "PacBudget",
    "SurrogateProvenance",
    "chebyshev_lp",
    "learn_surrogate",
    "least_squares_fit",
    "max_key_features",
    "required_samples",
    # analysis
    "Counterexample",
    "GradMode",
    "Outcome",
    "Verdict",
    "box_max",
    "exceedance_frequency",
    "linear_adversary",
    "pgd_attack",
    "replay_delta",
    "verify",
    # interpretation
    "PathRank",
    "SensitivityMap",
    "render",
    "sensitivity",
    # external predictors
    "ExternalPredictor",
    "ExternalPredictorPool",
    "WireClient",
    # configuration
    "RunConfig",
    "read_config_file",
    "resolve_config",
    # seeding
    "derive_seed",
    "rng_for",
]

"""Hardmax attention dynamics: token clustering and a sentiment classifier.

Tokens evolve by repeatedly averaging each one with the tokens it attends
to; under hardmax attention they organize into clusters anchored at
vertices of the convex hull of the initial configuration.  The package
simulates the dynamics, verifies the cluster geometry with projection
certificates, and trains a small attention-based sentiment classifier
whose interpretability rests on the same leader structure.
"""

from .clusters import (
    AmbiguousClusteringError,
    ClusterPoint,
    ClusterReport,
    LeaderRecord,
    NotConvergedError,
    PersistenceViolationError,
    ProjectionCertificate,
    SingularSystemError,
    Verdicts,
    check_projection,
    detect_leaders,
    extract_clusters,
    verify_clustering,
)
from .dynamics import (
    CONVERGED,
    MAX_STEPS,
    MergeEvent,
    RunConfig,
    StepOutcome,
    TrajectoryRecord,
    run,
    step_hardmax,
    step_softmax,
)
from .geometry import (
    DEFAULT_TIE_TOL,
    HARDMAX,
    SOFTMAX,
    AttentionSet,
    AttentionSpec,
    NotPositiveDefiniteError,
    NotSymmetricError,
    SingularMatrixError,
    SpdMatrix,
    TokenConfiguration,
    a_inner,
    attention_scores,
    attention_set,
    attention_sets,
    convex_hull_2d,
    factorize_spd,
    hull_contains_2d,
    similarity_matrix,
    transform_configuration,
)
from .sentiment import (
    EmptyCorpusError,
    EpochStats,
    EvalReport,
    Gradients,
    LeaderStats,
    NonFiniteLossError,
    Review,
    SentimentModel,
    TrainConfig,
    Vocabulary,
    build_vocabulary,
    encode_review,
    evaluate,
    forward,
    gradient,
    loss,
    new_model,
    predicted_label,
    tokenize,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousClusteringError",
    "AttentionSet",
    "AttentionSpec",
    "CONVERGED",
    "ClusterPoint",
    "ClusterReport",
    "DEFAULT_TIE_TOL",
    "EmptyCorpusError",
    "EpochStats",
    "EvalReport",
    "Gradients",
    "HARDMAX",
    "LeaderRecord",
    "LeaderStats",
    "MAX_STEPS",
    "MergeEvent",
    "NonFiniteLossError",
    "NotConvergedError",
    "NotPositiveDefiniteError",
    "NotSymmetricError",
    "PersistenceViolationError",
    "ProjectionCertificate",
    "Review",
    "RunConfig",
    "SOFTMAX",
    "SentimentModel",
    "SingularMatrixError",
    "SingularSystemError",
    "SpdMatrix",
    "StepOutcome",
    "TokenConfiguration",
    "TrainConfig",
    "TrajectoryRecord",
    "Verdicts",
    "Vocabulary",
    "a_inner",
    "attention_scores",
    "attention_set",
    "attention_sets",
    "build_vocabulary",
    "check_projection",
    "convex_hull_2d",
    "detect_leaders",
    "encode_review",
    "evaluate",
    "extract_clusters",
    "factorize_spd",
    "forward",
    "gradient",
    "hull_contains_2d",
    "loss",
    "new_model",
    "predicted_label",
    "run",
    "similarity_matrix",
    "step_hardmax",
    "step_softmax",
    "tokenize",
    "train",
    "transform_configuration",
    "verify_clustering",
]

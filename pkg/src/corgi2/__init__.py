"""Two-phase partial data shuffling with exact storage-query accounting.

Library layout:

    storage     block-sharded store, query ledger, on-disk format
    shuffling   offline re-mix pass, online buffered stream, baselines
    objective   synthetic quadratics with exact constants
    statistics  variance measurement, reduction predictors, uniformity
    trainer     SGD over a stream, schedule, rate reports
    complexity  closed-form query predictions and reconciliation
    cli         `corgi2` command-line front end
"""

from .complexity import QueryPrediction, ReconciliationReport, predict_queries, reconcile
from .errors import (
    BlockNotFoundError,
    ConfigError,
    ContractError,
    Corgi2Error,
    DimensionError,
    DivergenceError,
    EmptyStoreError,
    InsufficientDataError,
    PhaseError,
    StoreFormatError,
    UndefinedRatioError,
)
from .objective import (
    HomogeneitySpec,
    ProblemConstants,
    QuadraticProblem,
    constants,
    full_grad,
    grad,
    loss,
    make_clustered_dataset,
    make_ladder_dataset,
    problem_from_store,
    suboptimality,
)
from .shuffling import (
    ShuffleConfig,
    ShuffleStream,
    StreamItem,
    baseline_streams,
    corgi2_stream,
    corgipile_stream,
    offline_corgi_shuffle,
)
from .statistics import (
    UniformityReport,
    VarianceReport,
    blockwise_variance,
    generalized_variance,
    improves,
    measure_h_D,
    monte_carlo_offline_variance,
    predict_h_prime,
    uniformity_metrics,
    variance_ratio,
)
from .storage import (
    Block,
    BlockStore,
    ExampleRecord,
    QueryLedger,
    create_store,
    deserialize_store,
    serialize_store,
)
from .trainer import (
    RateReport,
    SGDConfig,
    TrainResult,
    a_lower_bound,
    lr_schedule,
    rate_report,
    run_sgd,
)

__version__ = "0.1.0"

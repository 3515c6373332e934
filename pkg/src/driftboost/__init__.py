"""Gradient boosted regression trees plus the seismic-damage benchmark harness."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402,F401
    CellError,
    ColumnStats,
    Dataset,
    FeatureSchema,
    FeatureSpec,
    RangeWarning,
    SchemaError,
    SplitSpec,
    canonical_schema,
    feature_stats,
    load_csv,
    planted_midr,
    synth_generate,
    train_test_split,
    validate_ranges,
    write_csv,
)
from .tree import (  # noqa: F401
    Histogram,
    Internal,
    Leaf,
    RegressionTree,
    SplitCandidate,
    best_split_exact,
    best_split_histogram,
    build_histogram,
    fit_cart,
    predict_tree,
    predict_tree_batch,
    prune_ccp,
)
from .boosting import (  # noqa: F401
    Ensemble,
    GbdtParams,
    GossConfig,
    GossSample,
    GradHess,
    SplitRecord,
    fit_gbdt,
    fit_residual_boosting,
    goss_sample,
    leaf_weight,
    predict,
    regularized_objective,
    split_gain,
    squared_loss_grad_hess,
    staged_predict,
    structure_score,
)
from .baselines import (  # noqa: F401
    ConvergenceError,
    ForestModel,
    KnnModel,
    LinearModel,
    RankDeficiencyError,
    fit_elastic_net,
    fit_forest,
    fit_knn,
    fit_lasso,
    fit_ols,
    fit_ridge,
    predict_knn,
)
from .metrics import (  # noqa: F401
    MetricsReport,
    evaluate,
    mae,
    mape,
    mse,
    r2,
    rank_models,
    rmse,
)

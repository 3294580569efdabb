"""Exploited-level augmentation (ELA) for offline learning in zero-sum games.

The package generates offline trajectory datasets from mixed-skill
demonstrators, learns per-trajectory strategy representations with a
conditioned variational recurrent model, estimates each trajectory's
exploited level, filters the dataset by it, and trains and evaluates
offline policies against exact game-theoretic oracles.
"""

from .el import (
    ElSample,
    ExploitedLevelRegressor,
    RecurrentExploitedLevelEstimator,
    default_delta,
    el_delta,
    el_delta_all,
    normalize_el,
)
from .offline import (
    BehaviorCloningPolicy,
    FilterConfig,
    bc_train,
    cross_evaluate,
    evaluate_avg_score,
    evaluate_vs_pool,
    exact_average_score,
    filter_dataset,
    supported_exploitability,
)
from .pvrnn import (
    PvrnnHyper,
    PvrnnNetworks,
    RepresentationTable,
    TrajectoryRepresentationLearner,
    infer_representations,
    train_pvrnn,
    trajectory_loss,
)

__version__ = "0.1.0"

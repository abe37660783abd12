"""mzsel: pick which pre-trained model to fine-tune, without fine-tuning.

Scores candidate models from per-sample features, gradients, or source-model
probabilities on the target task; simulates linearized fine-tuning dynamics;
and benchmarks ranking quality against ground-truth fine-tuning accuracies.
"""

from . import errors
from .data import (
    EmbeddingSet,
    Kind,
    METHOD_NAMES,
    ModelEntry,
    ScoreEntry,
    ZooManifest,
    load_embeddings,
    load_manifest,
    save_embeddings,
    save_manifest,
    stratified_subsample,
)
from .dynamics import (
    DynamicsTrace,
    EigenDecomposition,
    gd_oracle,
    generalization_score,
    jensen_gap,
    loss_trajectory,
    sym_eig,
    training_speed,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    gen_synthetic_zoo,
    rank_models,
    run_benchmark,
    spearman_to_accuracy,
    topk_gain,
    trials_to_best,
)
from .kernels import (
    KernelKind,
    KernelMatrix,
    gram_kernel,
    label_kernel,
    load_kernel,
    matrix_pearson,
    random_projection,
    save_kernel,
)
from .scores import (
    TransportPlan,
    class_means,
    domain_similarity_score,
    emd,
    feature_metrics_score,
    leep,
    leep_score,
    lfc_score,
    lgc_score,
    random_scores,
    rdm,
    rsa_score,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

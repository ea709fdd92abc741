"""Multi-view representation learning by hybrid contrastive fusion.

The pipeline: per-view MLP encoders produce view-specific embeddings, a
residual fusion block maps their concatenation into a shared embedding, and
two contrastive terms train everything jointly -- an instance-level
redundancy-reduction loss anchored on the fused embedding and a class-level
soft-label consistency loss with Sinkhorn-balanced assignments.  Evaluation
is k-means clustering with Hungarian-matched accuracy, NMI and ARI, plus a
linear probe for classification.

Everything runs on a small self-contained reverse-mode autodiff core over
float64 numpy arrays; see ``mvfuse.autodiff``.
"""

from .autodiff import Var, backward, constant, grad_check, parameter
from .data import (MultiViewBatch, MultiViewDataset, SplitSpec, batches,
                   load_dataset, save_dataset, split, synth_gaussian)
from .errors import (ConfigError, ContractError, DataError, DimensionError,
                     NumericError)
from .evaluate import (ClassificationReport, ClusteringReport,
                       active_dimension_fraction, adjusted_rand_index,
                       cluster_embedding, clustering_accuracy,
                       clustering_metrics, hungarian, kmeans, linear_probe,
                       normalized_mutual_info, pca_top2)
from .losses import (LossToggles, LossWeights, class_loss, cross_correlation,
                     instance_loss, instance_pairs, sinkhorn, total_loss)
from .model import (ArchConfig, ModelParams, embed_dataset, encode, fuse,
                    init_params, load_checkpoint, project, prototype_scores,
                    save_checkpoint)
from .train import (AdamState, RunResult, TrainConfig, adam_step, multi_seed,
                    train_run, write_loss_history)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ArchConfig", "ClassificationReport", "ClusteringReport",
    "ConfigError", "ContractError", "DataError", "DimensionError",
    "LossToggles", "LossWeights", "ModelParams", "MultiViewBatch",
    "MultiViewDataset", "NumericError", "RunResult", "SplitSpec", "Var",
    "active_dimension_fraction", "adam_step", "adjusted_rand_index",
    "backward", "batches", "class_loss", "cluster_embedding",
    "clustering_accuracy", "clustering_metrics", "constant",
    "cross_correlation", "embed_dataset", "encode", "fuse", "grad_check",
    "hungarian", "init_params", "instance_loss", "instance_pairs", "kmeans",
    "linear_probe", "load_checkpoint", "load_dataset", "multi_seed",
    "normalized_mutual_info", "parameter", "pca_top2", "project",
    "prototype_scores", "save_checkpoint", "save_dataset", "sinkhorn",
    "split", "synth_gaussian", "total_loss", "train_run", "write_loss_history",
]

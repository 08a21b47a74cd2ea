"""Gradient leakage attacks, transformation defenses, and policy search.

The package implements the full loop: differentiable models on a tiny
autodiff core, gradient-inversion attacks against shared gradients,
image-transformation policies with privacy/accuracy scores, random policy
search with hybrid assembly, baseline gradient defenses, and a desk-scale
collaborative-training simulator, all tied together by a YAML-driven CLI.

Sign convention worth knowing up front: the accuracy score S_acc is the
NEGATED Jacobian-spectrum statistic, so larger (closer to -1) means the
transformed data trains better, and the search threshold t_acc is a lower
bound.  The privacy score S_pri is a mean gradient cosine in [-1, 1];
smaller means more private.
"""

from .attack import (AttackConfig, AttackResult, lbfgs_preset, make_init,
                     reconstruct, total_variation)
from .config import ExperimentConfig, build_config, dump_config, load_config
from .data import (DatasetSpec, FolderSpec, load_dataset, load_image_folder,
                   stack_dataset, synth_dataset)
from .defenses import (DefenseSpec, apply_defense, noise_gradients,
                       prune_gradients)
from .federated import (AdversaryHook, RoundLog, TrainConfig, TrainState,
                        run_round, run_training, shard_dataset)
from .io import (load_image, load_tensor, save_image, save_tensor,
                 side_by_side)
from .metrics import (GradSimCurve, ScoredPolicy, accuracy_score, grad_sim,
                      grad_sim_curve, jacobian_score, layerwise_gradsim_trace,
                      pearson, policy_accuracy_score, privacy_score, psnr,
                      spectrum_score, transform_batch)
from .models import (GradientVector, ModelConfig, ModelParams, accuracy,
                     init_model, logits, loss_gradients, param_count, predict)
from .optim import LBFGS, SGD, Adam, minimize_lbfgs, step_lr
from .search import (PolicySet, SearchConfig, assemble_hybrid,
                     exhaustive_policies, hybrid_apply, sample_policy,
                     search, semi_train)
from .tensor import Graph, Tensor
from .transforms import (Policy, TransformSpec, apply_policy, default_table,
                         parse_policy, sample_seed)

__version__ = "0.1.0"

__all__ = [
    "AdversaryHook", "Adam", "AttackConfig", "AttackResult", "DatasetSpec",
    "DefenseSpec", "ExperimentConfig", "FolderSpec", "GradSimCurve",
    "GradientVector", "Graph", "LBFGS", "ModelConfig", "ModelParams",
    "Policy", "PolicySet", "RoundLog", "SGD", "ScoredPolicy", "SearchConfig",
    "Tensor", "TrainConfig", "TrainState", "TransformSpec", "accuracy",
    "accuracy_score", "apply_defense", "apply_policy", "assemble_hybrid",
    "build_config", "default_table", "dump_config", "exhaustive_policies",
    "grad_sim", "grad_sim_curve", "hybrid_apply", "init_model",
    "jacobian_score", "layerwise_gradsim_trace", "lbfgs_preset",
    "load_config", "load_dataset", "load_image", "load_image_folder",
    "load_tensor", "logits", "loss_gradients", "make_init", "minimize_lbfgs",
    "noise_gradients", "param_count", "parse_policy", "pearson",
    "policy_accuracy_score", "predict", "privacy_score", "prune_gradients",
    "psnr", "reconstruct", "run_round", "run_training", "sample_policy",
    "sample_seed", "save_image", "save_tensor", "search", "semi_train",
    "shard_dataset", "side_by_side", "spectrum_score", "stack_dataset",
    "step_lr", "synth_dataset", "total_variation", "transform_batch",
]

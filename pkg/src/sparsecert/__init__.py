"""Sparse-code classifiers with certified adversarial robustness.

The package covers the full pipeline: coherence analysis of dictionaries,
a verified Lasso encoder with gap profiles, linear classification with
certified radii and a generalization-bound calculator, PGD attacks, a
randomized-smoothing baseline, unrolled-encoder training, and synthetic /
image data handling with bit-exact persistence.
"""

__version__ = "0.1.0"

from .dictionary import (CoherenceProfile, Dictionary, babel,
                         coherence_profile, mutual_coherence,
                         normalize_columns, rip_exact_small, rip_upper_bound,
                         spectral_upper_bound)
from .encoder import (EncodeResult, EncoderConfig, GapProfile, encode,
                      encode_batch, fista, gap_profile, min_gap_over_set)
from .model import (BoundInputs, BoundReport, Certificate, Hypothesis,
                    certified_accuracy, certified_radius,
                    generalization_bound, min_certified_radius,
                    multiclass_margin, predict)
from .attack import (AttackConfig, input_gradient, pgd_l2, robust_accuracy,
                     sphere_search)
from .smoothing import (ABSTAIN, SmoothingConfig, SmoothResult,
                        clopper_pearson_lower, normal_quantile,
                        smooth_certify, smooth_certify_full,
                        smoothed_certified_accuracy)
from .train import (TrainConfig, TrainReport, pretrain_dictionary,
                    reconstruction_loss_grad, supervised_loss,
                    train_supervised, unrolled_loss_grads)
from .data import (Dataset, gen_approx_sparse, gen_dictionary,
                   gen_separable_binary, load_dataset, load_idx, load_model,
                   save_dataset, save_idx, save_model, write_results)
from . import errors

__all__ = [
    "ABSTAIN", "AttackConfig", "BoundInputs", "BoundReport", "Certificate",
    "CoherenceProfile", "Dataset", "Dictionary", "EncodeResult",
    "EncoderConfig", "GapProfile", "Hypothesis", "SmoothingConfig",
    "SmoothResult", "TrainConfig", "TrainReport", "babel",
    "certified_accuracy", "certified_radius", "clopper_pearson_lower",
    "coherence_profile", "encode", "encode_batch", "errors", "fista",
    "gap_profile", "gen_approx_sparse", "gen_dictionary",
    "gen_separable_binary", "generalization_bound", "input_gradient",
    "load_dataset", "load_idx", "load_model", "min_certified_radius",
    "min_gap_over_set", "multiclass_margin", "mutual_coherence",
    "normal_quantile", "normalize_columns", "pgd_l2", "predict",
    "pretrain_dictionary", "reconstruction_loss_grad", "rip_exact_small",
    "rip_upper_bound", "robust_accuracy", "save_dataset", "save_idx",
    "save_model", "smooth_certify", "smooth_certify_full",
    "smoothed_certified_accuracy", "spectral_upper_bound", "sphere_search",
    "supervised_loss", "train_supervised", "unrolled_loss_grads",
    "write_results",
]

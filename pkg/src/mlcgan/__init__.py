"""Multilabel-conditioned image synthesis: scalewise label encoding on a
style-based generator, a dual-branch discriminator, and the training,
evaluation and serving machinery around them."""

from .classifier import (average_precision, mean_average_precision,
                         ClassifierConfig, MultilabelClassifier,
                         load_classifier, save_classifier, train_classifier)
from .data import (Dataset, IngredientVocabulary, ToyDatasetConfig,
                   VocabularyError, encode_labels, load_dataset_dir,
                   load_vocabulary, synth_toy_dataset)
from .discriminator import (DiscriminatorConfig, DualBranchDiscriminator,
                            ScorePair)
from .evaluate import (FeatureStats, empirical_label_sampler, feature_stats,
                       fid, interpolate_condition, label_noise_grid,
                       map_on_generated, median_rank, render_grid)
from .generator import (ConditionalGenerator, GeneratorConfig, MappingNetwork,
                        SynthesisNetwork, truncate)
from .losses import (LossWeights, adversarial_g_loss, classification_regularizer,
                     discriminator_loss, generator_loss, r1_penalty)
from .service import create_app, load_generator, serve
from .sle import ScalewiseLabelEncoder, scale_list
from .trainer import (Trainer, TrainingConfig, apply_ablation,
                      load_training_config)

__version__ = "0.1.0"

__all__ = [
    "ClassifierConfig", "ConditionalGenerator", "Dataset", "DiscriminatorConfig",
    "DualBranchDiscriminator", "FeatureStats", "GeneratorConfig",
    "IngredientVocabulary", "LossWeights", "MappingNetwork",
    "MultilabelClassifier", "ScalewiseLabelEncoder", "ScorePair",
    "SynthesisNetwork", "ToyDatasetConfig", "Trainer", "TrainingConfig",
    "VocabularyError", "adversarial_g_loss", "apply_ablation",
    "average_precision", "classification_regularizer", "create_app",
    "discriminator_loss", "empirical_label_sampler", "encode_labels",
    "feature_stats", "fid", "generator_loss", "interpolate_condition",
    "label_noise_grid", "load_classifier", "load_dataset_dir", "load_generator",
    "load_training_config", "load_vocabulary", "map_on_generated",
    "mean_average_precision", "median_rank", "r1_penalty", "render_grid",
    "save_classifier", "scale_list", "serve", "synth_toy_dataset",
    "train_classifier", "truncate",
]

"""Label-preserving color space adaptation for synthetic image datasets."""

from .colorops import (
    AdjustParams,
    adjust_brightness,
    adjust_contrast,
    adjust_saturation,
    compose,
    compose_with_alpha_grads,
)
from .dataset import DatasetManifest, load_image, save_image, scan_manifest
from .metrics import SwdConfig, classifier_accuracy, swd
from .networks import (
    Checkpoint,
    Discriminator,
    Generator,
    NetworkSpec,
    discriminator_spec,
    generator_spec,
    load_checkpoint,
    save_checkpoint,
)
from .sampler import SamplerConfig, make_adversarial_set, sample_params, sigma_from_p
from .trainer import TrainConfig, adapt_dataset, train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "AdjustParams",
    "adjust_brightness",
    "adjust_contrast",
    "adjust_saturation",
    "compose",
    "compose_with_alpha_grads",
    "DatasetManifest",
    "load_image",
    "save_image",
    "scan_manifest",
    "SwdConfig",
    "classifier_accuracy",
    "swd",
    "Checkpoint",
    "Discriminator",
    "Generator",
    "NetworkSpec",
    "discriminator_spec",
    "generator_spec",
    "load_checkpoint",
    "save_checkpoint",
    "SamplerConfig",
    "make_adversarial_set",
    "sample_params",
    "sigma_from_p",
    "TrainConfig",
    "adapt_dataset",
    "train_stage1",
    "train_stage2",
    "__version__",
]

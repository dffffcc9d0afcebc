import numpy as np
import pytest
import torch

from mlcgan.classifier import ClassifierConfig, train_classifier
from mlcgan.data import ToyDatasetConfig, load_dataset_dir, synth_toy_dataset
from mlcgan.discriminator import DiscriminatorConfig, DualBranchDiscriminator
from mlcgan.generator import ConditionalGenerator, GeneratorConfig


def tiny_generator_config(**kw) -> GeneratorConfig:
    base = dict(resolution=16, label_dim=4, embed_dim=8, latent_dim=8,
                mapping_layers=2, channel_base=128, channel_max=32)
    base.update(kw)
    return GeneratorConfig(**base)


def tiny_discriminator_config(**kw) -> DiscriminatorConfig:
    base = dict(resolution=16, embed_dim=8, channel_base=128, channel_max=32)
    base.update(kw)
    return DiscriminatorConfig(**base)


@pytest.fixture
def tiny_generator() -> ConditionalGenerator:
    return ConditionalGenerator(tiny_generator_config(), seed=0)


@pytest.fixture
def tiny_discriminator() -> DualBranchDiscriminator:
    return DualBranchDiscriminator(tiny_discriminator_config(), seed=1)


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy") / "data"
    cfg = ToyDatasetConfig(num_images=64, resolution=32, num_labels=4, seed=7,
                           max_ingredients_per_image=2)
    synth_toy_dataset(cfg, out)
    return out


@pytest.fixture(scope="session")
def toy_dataset(toy_dir):
    return load_dataset_dir(toy_dir, 32)


@pytest.fixture(scope="session")
def toy_classifier_run(toy_dataset):
    cfg = ClassifierConfig(resolution=32, num_labels=4, width=8, epochs=3,
                           batch_size=16, seed=0)
    return train_classifier(toy_dataset, cfg)


@pytest.fixture(scope="session")
def toy_classifier(toy_classifier_run):
    return toy_classifier_run[0]


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    np.random.seed(0)

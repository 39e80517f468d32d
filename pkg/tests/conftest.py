import numpy as np
import pytest

from vidadapt.data import SynthSpec, generate_dataset
from vidadapt.model import ViTConfig, init_params
from vidadapt.rng import derive_rng


@pytest.fixture(scope="session")
def tiny_vit():
    return ViTConfig(image_size=16, patch_size=8, embed_dim=16, depth=2, num_heads=2,
                     mlp_ratio=2.0, head_hidden_dim=32, head_bottleneck_dim=16,
                     num_prototypes=16)


@pytest.fixture(scope="session")
def tiny_params(tiny_vit):
    return init_params(tiny_vit, derive_rng(7, 0), np.float64)


@pytest.fixture(scope="session")
def small_clips():
    """3 classes x 4 videos x 12 frames at 32px (fast to generate)."""
    spec = SynthSpec(num_classes=3, videos_per_class=4, frames_per_video=12,
                     image_size=32, domain_tag="source", seed=11)
    return generate_dataset(spec)


@pytest.fixture()
def rng():
    return derive_rng(1234, 0)

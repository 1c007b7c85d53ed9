import numpy as np
import pytest

from smalldata import heightfield as hf


@pytest.fixture(scope="session")
def noise_free_config() -> hf.SynthesisConfig:
    return hf.SynthesisConfig(noise_sigma_gray=0.0, seed=99)


@pytest.fixture(scope="session")
def small_dataset():
    """300 patches, imbalanced 84/12/4, sigma 3, with manifest."""
    cfg = hf.SynthesisConfig(seed=7)
    counts = hf.imbalanced_counts(300)
    patches, manifest = hf.synthesize_dataset(cfg, counts)
    return patches, manifest


def random_image(rng: np.random.Generator, width: int, height: int) -> hf.HeightImage:
    pixels = rng.integers(0, 65536, size=(height, width), dtype=np.uint16)
    return hf.HeightImage(width, height, pixels)

import numpy as np
import pytest

from avdiar import SynthSpec, generate_corpus


@pytest.fixture(scope="session")
def small_corpus():
    """4 characters, 80 segments, clean VAS; fast enough for most tests."""
    spec = SynthSpec(characters=4, segments_per_character=20, rng_seed=11)
    return generate_corpus(spec)


@pytest.fixture(scope="session")
def noisy_vas_corpus():
    """4 characters with 10% VAS noise for the profile-matching tests."""
    spec = SynthSpec(characters=4, segments_per_character=20, vas_noise=0.1,
                     rng_seed=23)
    return generate_corpus(spec)


@pytest.fixture(scope="session")
def acceptance_corpus_c4():
    """Acceptance-grade corpus: C=4, 220 segments, separable, clean VAS."""
    spec = SynthSpec(characters=4, segments_per_character=55,
                     min_centroid_distance=0.8, intra_spread=0.05,
                     background_fraction=0.1, vas_noise=0.0, rng_seed=7)
    return generate_corpus(spec)


@pytest.fixture(scope="session")
def acceptance_corpus_c6():
    """Acceptance-grade corpus: C=6, 216 segments."""
    spec = SynthSpec(characters=6, segments_per_character=36,
                     min_centroid_distance=0.8, intra_spread=0.05,
                     background_fraction=0.1, vas_noise=0.0, rng_seed=7)
    return generate_corpus(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

"""Shared fixtures: the two deterministic corpora and a known-good model."""

from __future__ import annotations

import pytest

from berrysmith import toydata
from berrysmith.tuner import TunedDced


@pytest.fixture(scope="session")
def tuner_corpus():
    """40 flat normal + 40 speckled anomalous 64x64 patches, interleaved."""
    return toydata.make_tuner_corpus()


@pytest.fixture(scope="session")
def gen_corpus(tmp_path_factory):
    """On-disk berry corpus: (train manifest path, dataset root, mask root)."""
    root = tmp_path_factory.mktemp("gen_corpus")
    return toydata.write_generation_corpus(root)


@pytest.fixture(scope="session")
def toy_model() -> TunedDced:
    """A model wrapping the parameter tuple the fixtures are built around."""
    return TunedDced(
        params=toydata.KNOWN_GOOD_PARAMS,
        count_threshold=0.5,
        train_balanced_accuracy=1.0,
        val_balanced_accuracy=1.0,
    )

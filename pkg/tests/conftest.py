"""Shared fixtures: small graphs and small model configurations."""

import numpy as np
import pytest

from gath.config import (
    DecoderConfig,
    EncoderConfig,
    RunConfig,
    TrainConfig,
    validate,
)
from gath.kgdata import build_index
from gath.model import GathModel
from gath.synthetic import toy_kg


def small_run_cfg(**train_overrides) -> RunConfig:
    """A dim-8 config that keeps every forward pass tiny."""
    enc = EncoderConfig(dim=8, d_k=4, d_v=4)
    dec = DecoderConfig(d_w=2, d_h=4, channels=4)
    tr = TrainConfig(**train_overrides)
    return validate(RunConfig(encoder=enc, decoder=dec, train=tr))


@pytest.fixture
def run_cfg():
    return small_run_cfg()


@pytest.fixture
def tiny_kg():
    """8 entities, 3 relations, 16 triples — the grad-check graph."""
    return toy_kg(8, 3, 16, seed=13)


@pytest.fixture(scope="session")
def toy50():
    """The 50-entity learning benchmark graph."""
    return toy_kg(50, 5, 300, seed=7)


@pytest.fixture
def tiny_model(tiny_kg, run_cfg):
    return GathModel(
        tiny_kg.num_entities,
        tiny_kg.num_relations_aug,
        run_cfg.encoder,
        run_cfg.decoder,
        "full",
        seed=3,
    )


@pytest.fixture
def tiny_index(tiny_kg):
    return build_index(
        tiny_kg.train_aug, tiny_kg.num_entities, tiny_kg.num_relations_aug
    )


def rng_of(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)

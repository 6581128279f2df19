"""Shared fixtures: small corpora and cheap trained artifacts reused
across test modules (training even a toy pipeline is not free)."""

import pytest

from cn_sentinel.pipeline import PipelineConfig, train_pipeline
from cn_sentinel.semantic import EmbeddingParams, fit_semantic_encoder
from cn_sentinel.traffic_gen import ScenarioConfig, generate_scenario


@pytest.fixture(scope="session")
def small_corpus():
    cfg = ScenarioConfig(
        duration=80.0,
        rates={"registration": 0.4, "pdu_session": 0.4, "nf_discovery": 0.6},
        seed=1001,
    )
    return generate_scenario(cfg)


@pytest.fixture(scope="session")
def small_encoder(small_corpus):
    return fit_semantic_encoder(
        small_corpus, seed=7, params=EmbeddingParams(epochs=3)
    )


@pytest.fixture(scope="session")
def tiny_pipeline_config():
    return PipelineConfig(
        embed=EmbeddingParams(epochs=2), ae_epochs=6, gru_epochs=6
    )


@pytest.fixture(scope="session")
def tiny_model(small_corpus, tiny_pipeline_config):
    return train_pipeline(small_corpus, tiny_pipeline_config, seed=42)

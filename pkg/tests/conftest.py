"""Shared fixtures: tiny corpora, toy models, and a reusable training setup."""

from __future__ import annotations

import numpy as np
import pytest

from fedqsim.data.samples import build_watch_histories
from fedqsim.data.synthetic import generate_synthetic
from fedqsim.data.types import InteractionTable
from fedqsim.models import CandidateGeneratorConfig, build_candidate_generator
from fedqsim.nn.network import init_parameters
from fedqsim.seeds import substream


def make_interactions(rows: list[tuple[int, int, float, int]], num_users=None, num_movies=None) -> InteractionTable:
    """InteractionTable from (user, movie, rating, timestamp) rows."""
    users = np.array([r[0] for r in rows], dtype=np.int32)
    movies = np.array([r[1] for r in rows], dtype=np.int32)
    ratings = np.array([r[2] for r in rows], dtype=np.float64)
    times = np.array([r[3] for r in rows], dtype=np.int64)
    table = InteractionTable(
        users, movies, ratings, times,
        num_users=num_users if num_users is not None else int(users.max()) + 1,
        num_movies=num_movies if num_movies is not None else int(movies.max()) + 1,
    )
    table.validate()
    return table


@pytest.fixture(scope="session")
def toy_corpus():
    """Small synthetic corpus shared by read-only tests."""
    return generate_synthetic(
        num_users=80, num_movies=40, num_genres=5, cluster_count=3,
        lognormal_mu=2.0, lognormal_sigma=0.6, zipf_s=1.1, seed=7,
    )


@pytest.fixture(scope="session")
def toy_cg(toy_corpus):
    """(model_spec, params, dataset) for a small candidate generator."""
    interactions, _ = toy_corpus
    dataset = build_watch_histories(interactions, window=7)
    spec = build_candidate_generator(CandidateGeneratorConfig(
        input_vocab_size=interactions.num_movies + 1,
        output_vocab_size=interactions.num_movies,
        embedding_dim=8, hidden_sizes=(16, 8), groupnorm_groups=4,
    ))
    params = init_parameters(spec, substream(3, "init"))
    return spec, params, dataset

"""Deterministic simulator for federated training of a two-model movie recommender.

The package is organised around six concerns:

* :mod:`fedqsim.nn` -- a small float64 neural-network core (layers, losses,
  SGD, finite-difference checking, parameter containers).
* :mod:`fedqsim.models` -- the candidate-generator and ranker architectures.
* :mod:`fedqsim.data` -- MovieLens-style loading, preprocessing, partitioning
  and a synthetic corpus generator.
* :mod:`fedqsim.federation` -- plain federated averaging and queue-chained
  federated training in a strictly sequential, memory-bounded simulator.
* :mod:`fedqsim.compression` -- uniform quantization plus a context-adaptive
  binary arithmetic codec for model payloads.
* :mod:`fedqsim.runner` -- experiment configs, metrics, CLI and reporting.
"""

from __future__ import annotations

__version__ = "0.1.0"

from fedqsim.errors import (
    ConfigurationError,
    DataError,
    DecodingError,
    EncodingError,
    FedqsimError,
)

__all__ = [
    "__version__",
    "FedqsimError",
    "ConfigurationError",
    "DataError",
    "EncodingError",
    "DecodingError",
]

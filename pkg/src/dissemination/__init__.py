"""Markov-modulated dissemination of discrete units among interacting agents.

The package computes transient and stationary moments of agent holdings,
checks them against a truncated master equation and Monte Carlo ensembles,
and ships the wealth, opinion and storage applications built on top.
"""

from .kernels import (
    Amplified,
    Deterministic,
    FiniteTable,
    UnitMultinomialWithLeak,
)
from .model import (
    ArrivalClass,
    BackgroundChain,
    ModelSpec,
    ShockStream,
    make_spec,
    stationary_distribution,
    transient_distribution,
    validate,
)
from .moments import (
    reduce_exchangeable,
    stability,
    stationary_means,
    stationary_second_moments,
    transient_means,
    transient_second_moments,
)

__all__ = [
    "Amplified",
    "Deterministic",
    "FiniteTable",
    "UnitMultinomialWithLeak",
    "ArrivalClass",
    "BackgroundChain",
    "ModelSpec",
    "ShockStream",
    "make_spec",
    "stationary_distribution",
    "transient_distribution",
    "validate",
    "reduce_exchangeable",
    "stability",
    "stationary_means",
    "stationary_second_moments",
    "transient_means",
    "transient_second_moments",
]

__version__ = "0.1.0"

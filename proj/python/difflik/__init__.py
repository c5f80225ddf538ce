"""Closed-form transition density expansions and approximate maximum likelihood for diffusions."""

from ._difflik import (
    Error,
    Expansion,
    Model,
    approx_loglik,
    benchmark_model,
    benchmark_preset,
    exact_log_density,
    exact_mle,
    expand,
    fit,
    load_model,
    parse_model,
    set_thread_count,
    simulate,
    thread_count,
)

__all__ = [
    "Error",
    "Expansion",
    "Model",
    "approx_loglik",
    "benchmark_model",
    "benchmark_preset",
    "exact_log_density",
    "exact_mle",
    "expand",
    "fit",
    "load_model",
    "parse_model",
    "set_thread_count",
    "simulate",
    "thread_count",
]

"""Federated kernel-gate LSTM: quantum-fidelity-kernel recurrent cells with a
temporal-conv front end, trained standalone or under synchronous federated
averaging. The heavy lifting lives in the compiled `_fqkl` extension."""

from fqkl._fqkl import (
    Model,
    compute_metrics,
    gen_synthetic,
    gram_matrix,
    kernel_grad,
    kernel_value,
    run_federated,
    __version__,
)

__all__ = [
    "Model",
    "compute_metrics",
    "gen_synthetic",
    "gram_matrix",
    "kernel_grad",
    "kernel_value",
    "run_federated",
    "__version__",
]

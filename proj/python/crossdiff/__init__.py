"""Structure-preserving JKO solver for cross-diffusion systems with matrix mobility."""

from ._core import (
    GeometryError,
    Grid,
    Model,
    ModelError,
    action,
    energy,
    make_model,
    model_names,
    project_cone,
    reference_run,
    relative_error,
    run_flow,
)

__all__ = [
    "GeometryError",
    "Grid",
    "Model",
    "ModelError",
    "action",
    "energy",
    "make_model",
    "model_names",
    "project_cone",
    "reference_run",
    "relative_error",
    "run_flow",
]

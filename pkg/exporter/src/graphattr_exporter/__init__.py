"""Torch-checkpoint conversion into the graphattr model JSON format."""

from .export import (
    DEVIATION_LIMIT,
    ExportError,
    ExportManifest,
    export,
    validate_export,
)
from .torch_models import GCNStack, GINStack, SAGEStack, build_stack

__all__ = [
    "DEVIATION_LIMIT",
    "ExportError",
    "ExportManifest",
    "GCNStack",
    "GINStack",
    "SAGEStack",
    "build_stack",
    "export",
    "validate_export",
]

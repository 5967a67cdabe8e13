"""Exception types shared across the package."""


class GraphFormatError(ValueError):
    """A graph or dataset file failed to parse or violates a graph invariant."""


class ModelFormatError(ValueError):
    """A model file is malformed, uses an unsupported kind, or chains badly."""


class SizeGuardError(RuntimeError):
    """The exhaustive expansion was asked to run beyond its size guard."""

from .numerics.autodiff import ContractError, ShapeError


class ConfigError(ValueError):
    """Invalid or contradictory configuration."""


class DatasetFormatError(ValueError):
    """A dataset file violates the line-delimited conversation format."""


DimensionError = ShapeError

__all__ = ["ConfigError", "ContractError", "DatasetFormatError", "DimensionError", "ShapeError"]

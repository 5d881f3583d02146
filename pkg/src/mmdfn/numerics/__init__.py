from .autodiff import (
    ContractError,
    ShapeError,
    Tensor,
    activation,
    backward,
    linear,
)
from .gradcheck import finite_difference_check, group_max, relative_error
from .rng import Rng

__all__ = [
    "ContractError", "ShapeError", "Tensor", "activation", "backward", "linear",
    "finite_difference_check", "group_max", "relative_error", "Rng",
]

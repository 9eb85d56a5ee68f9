"""Midprice movement classification on limit order books with a temporal convolutional network."""

__version__ = "0.1.0"

from lobcast.errors import (  # noqa: E402
    DimensionError,
    DivergenceError,
    InputError,
    LobcastError,
    OutOfRangeError,
)

__all__ = ["__version__", "LobcastError", "InputError", "DimensionError", "DivergenceError",
           "OutOfRangeError"]

"""Utility functions for SemiStatic."""

import logging
from typing import Any, Iterable, List

import msgpack
import numpy as np
from scipy import linalg

from .errors import DimensionMismatchError


def setup_logging(level: int = logging.INFO) -> None:
    """Set up logging configuration."""
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def _encode_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Cannot serialize object of type {type(obj).__name__}")


def serialize(obj: Any) -> bytes:
    """Serialize an object to bytes using msgpack."""
    return msgpack.packb(obj, use_bin_type=True, default=_encode_default)


def deserialize(data: bytes) -> Any:
    """Deserialize bytes to an object using msgpack."""
    return msgpack.unpackb(data, raw=False, strict_map_key=False)


def format_float(value: float) -> str:
    """Format a float with 12 significant digits for CSV output."""
    return format(float(value), '.12g')


def format_vector(values: Iterable[float]) -> List[str]:
    return [format_float(v) for v in values]


def as_vector(values: Any, length: int, name: str) -> np.ndarray:
    """Coerce to a 1-D float array of the given length."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.shape[0] != length:
        raise DimensionMismatchError(
            f"{name} must have length {length}, got shape {arr.shape}"
        )
    return arr


def null_space(matrix: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the null space (columns), empty matrices allowed."""
    if matrix.shape[0] == 0:
        return np.eye(matrix.shape[1])
    if matrix.shape[1] == 0:
        return np.zeros((0, 0))
    return linalg.null_space(matrix, rcond=rtol)

"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""
import numbers

import numpy as np

from .exceptions import InvalidArgumentError


def check_finite(value, name):
    arr = np.asarray(value)
    if arr.dtype == object or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    return value


def check_nonnegative(value, name):
    check_finite(value, name)
    if np.any(np.asarray(value) < 0):
        raise InvalidArgumentError(f"{name} must be >= 0, got {value!r}")
    return value


def check_positive(value, name):
    check_finite(value, name)
    if np.any(np.asarray(value) <= 0):
        raise InvalidArgumentError(f"{name} must be > 0, got {value!r}")
    return value


def check_in_range(value, name, low, high, *, closed=(True, True)):
    check_finite(value, name)
    v = np.asarray(value)
    lo_ok = v >= low if closed[0] else v > low
    hi_ok = v <= high if closed[1] else v < high
    if not np.all(lo_ok & hi_ok):
        lb = "[" if closed[0] else "("
        rb = "]" if closed[1] else ")"
        raise InvalidArgumentError(
            f"{name} must lie in {lb}{low}, {high}{rb}, got {value!r}")
    return value


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise InvalidArgumentError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def as_float_array(x, name, ndim=None, min_length=None, allow_nan=False):
    """Convert ``x`` to a float64 array and check its shape and contents."""
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name} is not numeric: {exc}") from None
    if ndim is not None and arr.ndim != ndim:
        raise InvalidArgumentError(
            f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if min_length is not None and arr.shape[-1] < min_length:
        raise InvalidArgumentError(
            f"{name} needs at least {min_length} samples, got {arr.shape[-1]}")
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or infinite values")
    return arr

"""Small argument checks shared by the simulator modules.

They mirror the ``check_*`` helpers of scikit-learn: each returns the
validated value (as a float or array) and raises ``ValueError`` with the
offending name and the permitted interval otherwise.
"""

import numpy as np


def check_fraction(value, name, *, allow_zero=True):
    """Return ``value`` as a float (or array) in ``[0, 1]``."""
    if type(value) is float and (0.0 < value <= 1.0 or (allow_zero and value == 0.0)):
        return value
    arr = np.asarray(value, dtype=float)
    low_ok = arr >= 0.0 if allow_zero else arr > 0.0
    if not np.all(np.isfinite(arr)) or not np.all(low_ok & (arr <= 1.0)):
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        raise ValueError(f"{name} must lie in {interval}, got {value!r}")
    return float(arr) if arr.ndim == 0 else arr


def check_nonnegative(value, name):
    if type(value) is float and value >= 0.0:
        return value
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return float(arr) if arr.ndim == 0 else arr


def check_positive(value, name):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return float(arr) if arr.ndim == 0 else arr


def check_bounds(bounds, names):
    """Validate a ``{name: (low, high)}`` box and return it as a float array.

    The result has shape ``(len(names), 2)`` in the order of ``names``.
    """
    if not bounds:
        raise ValueError("bounds must be a non-empty box")
    missing = [n for n in names if n not in bounds]
    if missing:
        raise ValueError(f"bounds missing for parameters: {', '.join(missing)}")
    box = np.array([[float(bounds[n][0]), float(bounds[n][1])] for n in names])
    if not np.all(np.isfinite(box)):
        raise ValueError("bounds must be finite")
    bad = [n for n, (lo, hi) in zip(names, box) if lo > hi]
    if bad:
        raise ValueError(f"empty bounds (low > high) for: {', '.join(bad)}")
    return box

"""Shared exceptions and input validation helpers."""

import numpy as np
from sklearn.utils.validation import check_array


class FormatError(ValueError):
    """Raised when a text document (RTTM, UEM, embedding table, ...) is malformed.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int, optional
        1-based line number of the offending line.
    field : str, optional
        Name or position of the offending field.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DegenerateRecordingError(ValueError):
    """Raised when a recording carries no usable variance (e.g. identical vectors)."""


def check_vectors(X, *, min_samples=1, dim=None, name="X"):
    """Validate a 2-D float array of row vectors.

    Returns a C-contiguous float64 copy-or-view.
    """
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples,
                    input_name=name)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(
            f"{name} has {X.shape[1]} features, expected {dim}")
    return X


def check_vector(v, *, dim=None, name="v"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {dim}")
    return v


def check_symmetric(M, *, tol=1e-8, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if M.size and np.max(np.abs(M - M.T)) > tol:
        raise ValueError(f"{name} is not symmetric within {tol}")
    return M

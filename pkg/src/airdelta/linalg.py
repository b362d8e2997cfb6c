"""Small dense linear-algebra helpers shared by inference and prediction."""

from __future__ import annotations

import numpy as np


def psd_factor(mat: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Factor F with F F' = mat for a symmetric PSD matrix.

    Eigendecomposition-based, so exactly-singular directions (e.g. a
    prediction point coincident with a station) get exactly zero noise
    instead of a Cholesky breakdown.  Eigenvalues below rel_tol times the
    largest are treated as zero.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return mat.reshape(mat.shape)
    w, V = np.linalg.eigh(0.5 * (mat + mat.T))
    cut = rel_tol * max(w[-1], 0.0)
    w = np.where(w > cut, w, 0.0)
    return V * np.sqrt(w)

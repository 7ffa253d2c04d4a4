"""Pure-numpy implementations of the solver's hot per-cell kernels."""

import numpy as np


def group_magnitude(s: np.ndarray) -> np.ndarray:
    """Euclidean magnitude per location of a (ncomp, nloc) component array."""
    return np.sqrt(np.einsum("ij,ij->j", s, s))


def shrink(s: np.ndarray, threshold: float, scale: float) -> np.ndarray:
    """Tensor soft-thresholding: q = max(0, 1 - threshold/|s|) * s / scale.

    `s` has shape (ncomp, nloc); the magnitude is taken per location over
    the component axis.  Locations with |s| <= threshold map to exactly 0.
    """
    if threshold == 0.0:
        return s / scale
    mag = group_magnitude(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(mag > threshold, 1.0 - threshold / mag, 0.0)
    return (factor / scale) * s


def shrink_smoothed(s: np.ndarray, threshold: float, scale: float,
                    delta: float) -> np.ndarray:
    """Shrinkage with a smoothed magnitude, used only for diagnostics."""
    mag = np.sqrt(np.einsum("ij,ij->j", s, s) + delta * delta)
    factor = np.maximum(0.0, 1.0 - threshold / mag)
    return (factor / scale) * s

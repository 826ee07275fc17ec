"""Covariant least-square refitting of image and signal restorations.

The package solves restoration problems (total variation, Lasso-type
analysis penalties, Tikhonov, thresholding, non-local means), then
re-enhances the biased solution by moving it back toward the data along
the directions the estimator itself preserves: the refit keeps the
Jacobian structure of the original map while rescaling its amplitude.
"""

__version__ = "0.1.0"

from . import operators  # noqa: F401

__all__ = ["operators", "__version__"]

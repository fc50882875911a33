"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .errors import DimensionMismatch
from .imagecore import INK_THRESHOLD, GrayImage, ink_bbox


def check_image(img, require_ink=False, threshold=INK_THRESHOLD):
    """Coerce ``img`` to a GrayImage; optionally insist it contains ink."""
    if not isinstance(img, GrayImage):
        img = GrayImage(np.asarray(img))
    if require_ink:
        ink_bbox(img, threshold)
    return img


def check_images(images, **kwargs):
    if isinstance(images, GrayImage):
        images = [images]
    return [check_image(im, **kwargs) for im in images]


def check_features(X, n_features=None):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_vector(x, n_features=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D feature vector, got shape {x.shape}")
    if n_features is not None and x.shape[0] != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature vector contains non-finite values")
    return x


def check_is_fitted_attr(estimator, attr):
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )

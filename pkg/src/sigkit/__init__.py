"""Offline signature identification.

Rotation/scale/translation correction by correlation search, low-frequency
DCT descriptors, and a Gaussian RBF network classifier, with scikit-learn
style estimators wrapping each stage.
"""

from .errors import SigkitError
from .features import DctFeatureExtractor, FeatureVector, dct2, extract_features, idct2
from .imagecore import GrayImage, InkBox, crop, ink_bbox, load_image, resize, rotate, save_image
from .pipeline import SignatureIdentifier, identify
from .rbfn import REJECTED, RBFNClassifier, RbfnModel, classify, fit_exact, train_gradient
from .rst import RstCorrector, RstParams, correct_rst, estimate_rotation, ncc

__version__ = "0.1.0"

__all__ = [
    "REJECTED",
    "DctFeatureExtractor",
    "FeatureVector",
    "GrayImage",
    "InkBox",
    "RBFNClassifier",
    "RbfnModel",
    "RstCorrector",
    "RstParams",
    "SigkitError",
    "SignatureIdentifier",
    "classify",
    "correct_rst",
    "crop",
    "dct2",
    "estimate_rotation",
    "extract_features",
    "fit_exact",
    "identify",
    "idct2",
    "ink_bbox",
    "load_image",
    "ncc",
    "resize",
    "rotate",
    "save_image",
    "train_gradient",
]

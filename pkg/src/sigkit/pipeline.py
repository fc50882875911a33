"""Identification: align a probe to each enrolled reference, describe it, and
let the RBF network score the hypothesis that matches the alignment.

For every enrolled subject k the probe is RST-corrected against k's reference
and its features are fed to the network; the evidence for k is output k of
that pass. The subject with the strongest evidence wins, unless even that
falls below the rejection threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .features import extract_features
from .imagecore import INK_THRESHOLD, GrayImage
from .rbfn import (
    DEFAULT_RATES,
    DEFAULT_REJECT,
    DEFAULT_RIDGE,
    DEFAULT_SPREAD,
    REJECTED,
    RbfnModel,
    fit_exact,
    hidden_layer,
    train_gradient,
)
from .rst import FRAME_SIZE, ProbeFrames, Reference, RstParams, correct_rst
from .validation import check_image, check_images, check_is_fitted_attr


@dataclass
class Identification:
    label: object
    evidence: np.ndarray           # one score per class, aligned to that class
    params: list[RstParams]        # alignment against each class reference


def identify(probe: GrayImage, references: dict, model: RbfnModel, *,
             reject_threshold: float = DEFAULT_REJECT, feature_mode: str = "dct",
             frame_size: int = FRAME_SIZE, threshold: int = INK_THRESHOLD) -> Identification:
    """``references`` maps each class label of ``model`` to a GrayImage or
    prebuilt :class:`Reference`."""
    frames = ProbeFrames(probe, frame_size, threshold)
    labels = model.class_labels
    feats, params = [], []
    for label in labels:
        ref = references[label]
        if not isinstance(ref, Reference):
            ref = Reference.build(ref, frame_size, threshold)
        aligned, p = correct_rst(ref, probe, frame_size=frame_size, threshold=threshold,
                                 frames=frames)
        feats.append(extract_features(aligned, mode=feature_mode, threshold=threshold).values)
        params.append(p)
    out = hidden_layer(model, np.vstack(feats)) @ model.weights
    evidence = out[np.arange(len(labels)), np.arange(len(labels))]
    best = int(np.argmax(evidence))
    label = labels[best] if evidence[best] >= reject_threshold else REJECTED
    return Identification(label, evidence, params)


class SignatureIdentifier(ClassifierMixin, BaseEstimator):
    """End-to-end identifier over raw signature images.

    ``fit(images, subject_ids)`` enrolls: the first image of each subject is
    its alignment reference and every image becomes a training sample of the
    network. ``predict`` returns subject ids, or ``REJECTED`` when no subject
    reaches ``reject_threshold``.
    """

    def __init__(self, spread=DEFAULT_SPREAD, ridge=DEFAULT_RIDGE, n_centers=None,
                 epochs=0, rates=DEFAULT_RATES, reject_threshold=DEFAULT_REJECT,
                 feature_mode="dct", frame_size=FRAME_SIZE, threshold=INK_THRESHOLD):
        self.spread = spread
        self.ridge = ridge
        self.n_centers = n_centers
        self.epochs = epochs
        self.rates = rates
        self.reject_threshold = reject_threshold
        self.feature_mode = feature_mode
        self.frame_size = frame_size
        self.threshold = threshold

    def fit(self, X, y):
        images = check_images(X, require_ink=True, threshold=self.threshold)
        y = list(y)
        if len(images) != len(y):
            raise ValueError(f"{len(images)} images but {len(y)} labels")
        refs, samples = {}, []
        for img, label in zip(images, y):
            ref = Reference.build(img, self.frame_size, self.threshold)
            refs.setdefault(label, ref)
            fv = extract_features(ref.cropped, mode=self.feature_mode, threshold=self.threshold)
            samples.append((fv.values, label))
        model = fit_exact(samples, self.spread, ridge=self.ridge, n_centers=self.n_centers)
        self.train_state_ = None
        if self.epochs:
            model, self.train_state_ = train_gradient(model, samples, self.rates, self.epochs)
        self.model_ = model
        self.references_ = refs
        self.classes_ = np.array(model.class_labels)
        return self

    @classmethod
    def from_parts(cls, model: RbfnModel, references: dict, **params) -> SignatureIdentifier:
        """Wrap an already trained network and its reference images."""
        est = cls(**params)
        est.model_ = model
        est.references_ = {
            k: v if isinstance(v, Reference) else Reference.build(v, est.frame_size, est.threshold)
            for k, v in references.items()
        }
        est.classes_ = np.array(model.class_labels)
        est.train_state_ = None
        return est

    def identify(self, X) -> list[Identification]:
        check_is_fitted_attr(self, "model_")
        return [
            identify(check_image(p), self.references_, self.model_,
                     reject_threshold=self.reject_threshold, feature_mode=self.feature_mode,
                     frame_size=self.frame_size, threshold=self.threshold)
            for p in check_images(X)
        ]

    def decision_function(self, X):
        return np.vstack([r.evidence for r in self.identify(X)])

    def predict(self, X):
        return np.array([r.label for r in self.identify(X)], dtype=object)

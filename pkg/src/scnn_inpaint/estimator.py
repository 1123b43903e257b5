"""Scikit-learn style front door for the inpainting network.

``SpikingConvInpainter`` behaves like an imputer for image batches: ``fit``
trains on clean images (synthesising the masks itself), and ``transform``
fills pixels marked missing with NaN.  Parameters follow sklearn
conventions (stored verbatim in ``__init__``, learned state in trailing-
underscore attributes), so the estimator composes with ``clone``,
``get_params``/``set_params``, and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data import MaskSpec
from .errors import ConfigurationError, ShapeMismatchError
from .lif import LifParams
from .network import NetConfig, build
from .seeding import derive_seed
from .tensor_ops import DTYPE
from .training import TrainConfig, evaluate_arrays, inpaint, train_on_arrays


def check_image_batch(X, name: str = "X", allow_nan: bool = False) -> np.ndarray:
    """Validate a (n, channels, h, w) float image batch with values in [0, 1].

    NaN marks a missing pixel when ``allow_nan`` is set; Inf is always
    rejected.
    """
    X = np.asarray(X, dtype=DTYPE)
    if X.ndim != 4:
        raise ShapeMismatchError(f"{name} must have shape (n, channels, h, w), got {X.shape}")
    if X.shape[0] < 1:
        raise ConfigurationError(f"{name} must contain at least one image")
    if np.isinf(X).any():
        raise ConfigurationError(f"{name} contains Inf")
    has_nan = np.isnan(X).any()
    if has_nan and not allow_nan:
        raise ConfigurationError(f"{name} contains NaN (only transform input may)")
    finite = X[~np.isnan(X)] if has_nan else X
    if finite.size and (finite.min() < 0 or finite.max() > 1):
        raise ConfigurationError(f"{name} values must lie in [0, 1]")
    return X


class SpikingConvInpainter(TransformerMixin, BaseEstimator):
    """Image inpainter backed by the hybrid spiking-convolutional network.

    Parameters mirror the network, mask, and optimizer defaults.  ``fit``
    expects clean images shaped (n, channels, h, w) in [0, 1]; ``transform``
    expects the same shape with missing pixels set to ``numpy.nan`` and
    returns the batch with holes filled.
    """

    def __init__(
        self,
        hidden_channels: int = 32,
        kernel_size: int = 3,
        snn_position: int = 1,
        spike_threshold: float = 1.0,
        noise_std: float = 0.1,
        surrogate_width: float = 0.5,
        lr: float = 0.001,
        batch_size: int = 8,
        epochs: int = 20,
        loss_on: str = "full_image",
        val_fraction: float = 0.25,
        mask_spec: MaskSpec | None = None,
        seed: int = 0,
    ):
        self.hidden_channels = hidden_channels
        self.kernel_size = kernel_size
        self.snn_position = snn_position
        self.spike_threshold = spike_threshold
        self.noise_std = noise_std
        self.surrogate_width = surrogate_width
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.loss_on = loss_on
        self.val_fraction = val_fraction
        self.mask_spec = mask_spec
        self.seed = seed

    def _net_config(self, in_channels: int) -> NetConfig:
        lif = LifParams(v_th=self.spike_threshold, noise_std=self.noise_std)
        return NetConfig(
            in_channels=in_channels,
            hidden_channels=self.hidden_channels,
            kernel_size=self.kernel_size,
            snn_position=self.snn_position,
            lif=lif,
            surrogate_width=self.surrogate_width,
            seed=self.seed,
        )

    def _mask_spec(self) -> MaskSpec:
        if self.mask_spec is not None:
            return self.mask_spec
        return MaskSpec(seed=derive_seed(self.seed, "estimator-masks"))

    def fit(self, X, y=None):
        """Train the network on clean images, holding out a validation share."""
        X = check_image_batch(X, "X")
        if not 0 < self.val_fraction < 1:
            raise ConfigurationError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        n = X.shape[0]
        n_val = min(max(1, round(n * self.val_fraction)), n - 1) if n > 1 else 0
        if n_val == 0:
            raise ConfigurationError("fit needs at least 2 images (one train, one validation)")
        images = [X[i:i + 1] for i in range(n)]
        val_images, train_images = images[:n_val], images[n_val:]
        self.model_ = build(self._net_config(in_channels=X.shape[1]))
        config = TrainConfig(
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
            seed=self.seed, loss_on=self.loss_on,
        )
        _, self.history_ = train_on_arrays(
            self.model_, train_images, val_images, self._mask_spec(), config
        )
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "This SpikingConvInpainter instance is not fitted yet; call fit first."
            )

    def transform(self, X) -> np.ndarray:
        """Fill NaN-marked pixels; all other pixels are returned unchanged."""
        self._check_fitted()
        X = check_image_batch(X, "X", allow_nan=True)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatchError(
                f"X has {X.shape[1]} channels, fit saw {self.n_features_in_}"
            )
        mask = np.isnan(X).any(axis=1, keepdims=True).astype(DTYPE)
        corrupted = np.nan_to_num(X, nan=0.0) * (1 - mask)
        if not mask.any():
            return corrupted.astype(DTYPE)
        return inpaint(self.model_, corrupted.astype(DTYPE), mask)

    def predict(self, X) -> np.ndarray:
        """Alias of :meth:`transform`."""
        return self.transform(X)

    def score(self, X, y=None) -> float:
        """Negative mean validation-style MSE on clean images (higher is better)."""
        self._check_fitted()
        X = check_image_batch(X, "X")
        images = [X[i:i + 1] for i in range(X.shape[0])]
        return -evaluate_arrays(self.model_, images, self._mask_spec())

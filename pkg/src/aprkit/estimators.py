"""scikit-learn style wrappers around conversion, filtering and deconvolution.

``X`` is always a single 3D pixel volume (converters) or a 1D vector of
particle values aligned with the fitted APR (filters).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .build import BuildParams, ConstantSigma, build_apr, sample_particles
from .conv import StencilPyramid, convolve_apr, gaussian_stencil, nonempty_row_index
from .core import APR, computational_ratio
from .deconv import RLConfig, rl_apr
from .reconstruct import reconstruct_full
from .tree import fill_tree
from .validation import check_values, check_volume


class APRConverter(TransformerMixin, BaseEstimator):
    """Learn an APR from a pixel volume; transform volumes into particle values.

    Parameters
    ----------
    E : float
        Relative reconstruction error bound.
    sigma_policy : ConstantSigma or LocalRangeSigma, optional
    gradient_policy : {'central_diff', 'sobel'}
    smoothing_passes : int

    Attributes
    ----------
    apr_ : APR
    values_ : ndarray
        Particle values of the volume passed to ``fit``.
    cr_ : float
    """

    def __init__(self, E=0.1, sigma_policy=None, gradient_policy="central_diff",
                 smoothing_passes=0):
        self.E = E
        self.sigma_policy = sigma_policy
        self.gradient_policy = gradient_policy
        self.smoothing_passes = smoothing_passes

    def fit(self, X, y=None):
        params = BuildParams(E=self.E, sigma_policy=self.sigma_policy or ConstantSigma(),
                             gradient_policy=self.gradient_policy,
                             smoothing_passes=self.smoothing_passes)
        self.apr_, self.values_ = build_apr(X, params)
        self.cr_ = computational_ratio(self.apr_)
        return self

    def transform(self, X):
        """Sample a volume of the fitted dims onto the fitted particle cells."""
        check_is_fitted(self, "apr_")
        v = check_volume(X)
        if v.shape != tuple(self.apr_.source_dims):
            raise ValueError(f"expected dims {self.apr_.source_dims}, got {v.shape}")
        return sample_particles(v, self.apr_.access)

    def inverse_transform(self, X):
        check_is_fitted(self, "apr_")
        return reconstruct_full(self.apr_, X)


class _APRValueEstimator(TransformerMixin, BaseEstimator):
    def _check_apr(self, apr):
        if not isinstance(apr, APR):
            raise TypeError(f"fit expects an APR, got {type(apr).__name__}")
        return apr


class APRFilter(_APRValueEstimator):
    """Convolve particle values of a fixed APR.

    ``fit(apr)`` builds the stencil pyramid and row index once; ``transform``
    filters value vectors.

    Parameters
    ----------
    stencil : Stencil, optional
        Defaults to a 3-cubed Gaussian with sigma 1.
    pyramid : {'restricted', 'rescaled', 'uniform'}
    pad_mode : {'reflect', 'zero'}
    threads : int, optional
    """

    def __init__(self, stencil=None, pyramid="restricted", pad_mode="reflect", threads=None):
        self.stencil = stencil
        self.pyramid = pyramid
        self.pad_mode = pad_mode
        self.threads = threads

    def fit(self, X, y=None):
        apr = self._check_apr(X)
        w = self.stencil if self.stencil is not None else gaussian_stencil(1.0, 3)
        makers = {"restricted": StencilPyramid.restricted, "rescaled": StencilPyramid.rescaled,
                  "uniform": StencilPyramid.uniform}
        if self.pyramid not in makers:
            raise ValueError(f"unknown pyramid mode {self.pyramid!r}")
        self.apr_ = apr
        self.pyramid_ = makers[self.pyramid](w, apr.l_min, apr.l_max)
        self.row_index_ = nonempty_row_index(apr)
        return self

    def transform(self, X):
        check_is_fitted(self, "apr_")
        values = check_values(X, self.apr_.n_particles)
        tree = fill_tree(self.apr_, values, self.threads)
        return convolve_apr(self.apr_, values, self.pyramid_, tree, self.pad_mode,
                            self.threads, row_index=self.row_index_)


class RichardsonLucy(_APRValueEstimator):
    """Richardson-Lucy deconvolution of particle values on a fixed APR.

    Parameters
    ----------
    psf : Stencil, optional
        Defaults to a 13-cubed Gaussian with sigma 2.
    iterations : int
    epsilon : float, optional
    threads : int, optional
    """

    def __init__(self, psf=None, iterations=100, epsilon=None, threads=None):
        self.psf = psf
        self.iterations = iterations
        self.epsilon = epsilon
        self.threads = threads

    def fit(self, X, y=None):
        self.apr_ = self._check_apr(X)
        psf = self.psf if self.psf is not None else gaussian_stencil(2.0, 13)
        self.config_ = RLConfig(self.iterations, psf, self.epsilon, record_metrics_every=0)
        return self

    def transform(self, X):
        check_is_fitted(self, "apr_")
        return rl_apr(self.apr_, X, self.config_, threads=self.threads)

    def predict(self, X):
        return self.transform(X)

"""
Principal component projection of feature stacks, retaining a target fraction
of the total variance.
"""

__classification__ = "UNCLASSIFIED"


import json
import logging

import numpy
from sklearn.decomposition import PCA

from hsi_layers.cube import FeatureStack, as_feature_stack

logger = logging.getLogger(__name__)

DEFAULT_TARGET_VARIANCE = 0.999
_RATIO_TOLERANCE = 1e-12


class PcaModel(object):
    """
    A fitted principal component projection. Pixels are samples and channels
    are variables. The sign of each component is fixed so that its entry of
    largest magnitude is positive.
    """

    __slots__ = ('_mean', '_components', '_explained_variance', '_total_variance', '_target')

    def __init__(self, mean, components, explained_variance, total_variance, target=DEFAULT_TARGET_VARIANCE):
        """

        Parameters
        ----------
        mean : numpy.ndarray
            The `d` channel means.
        components : numpy.ndarray
            The `(k, d)` array of orthonormal components.
        explained_variance : numpy.ndarray
            The `k` non-increasing component variances.
        total_variance : float
            The total variance of the fitted data.
        target : float
            The target variance ratio the model was fitted for.
        """

        mean = numpy.array(mean, dtype='float64')
        components = numpy.array(components, dtype='float64')
        explained_variance = numpy.array(explained_variance, dtype='float64')
        if mean.ndim != 1 or components.ndim != 2 or components.shape[1] != mean.size:
            raise ValueError('Inconsistent PCA model shapes, mean {} and components {}'.format(
                mean.shape, components.shape))
        if explained_variance.shape != (components.shape[0], ):
            raise ValueError('Expected {} explained variances, got {}'.format(
                components.shape[0], explained_variance.size))
        if total_variance <= 0:
            raise ValueError('The total variance must be positive, got {}'.format(total_variance))
        for entry in (mean, components, explained_variance):
            entry.flags.writeable = False
        self._mean = mean
        self._components = components
        self._explained_variance = explained_variance
        self._total_variance = float(total_variance)
        self._target = float(target)

    @property
    def mean(self):
        return self._mean

    @property
    def components(self):
        return self._components

    @property
    def explained_variance(self):
        return self._explained_variance

    @property
    def total_variance(self):
        return self._total_variance

    @property
    def target(self):
        return self._target

    @property
    def n_components(self):
        return self._components.shape[0]

    @property
    def dimension(self):
        return self._mean.size

    @property
    def retained_ratio(self):
        """
        float: The fraction of the total variance retained by the components.
        """

        return float(self._explained_variance.sum()/self._total_variance)

    def to_dict(self):
        return {
            'mean': self._mean.tolist(),
            'components': self._components.tolist(),
            'explained_variance': self._explained_variance.tolist(),
            'total_variance': self._total_variance,
            'target': self._target}

    @classmethod
    def from_dict(cls, the_dict):
        return cls(the_dict['mean'], the_dict['components'], the_dict['explained_variance'],
                   the_dict['total_variance'], target=the_dict.get('target', DEFAULT_TARGET_VARIANCE))

    def to_json_file(self, fname):
        """
        Write the model as json.

        Parameters
        ----------
        fname : str
        """

        with open(fname, 'w') as fi:
            json.dump(self.to_dict(), fi, indent=1)

    @classmethod
    def from_json_file(cls, fname):
        with open(fname, 'r') as fi:
            return cls.from_dict(json.load(fi))

    def __repr__(self):
        return 'PcaModel(dimension={}, n_components={}, retained_ratio={:.6f})'.format(
            self.dimension, self.n_components, self.retained_ratio)


def _samples(stack, mask=None):
    pixels = numpy.asarray(as_feature_stack(stack).pixels(), dtype='float64')
    if mask is not None:
        mask = numpy.asarray(mask, dtype='bool')
        if mask.shape != stack.spatial_shape:
            raise ValueError('Mask shape {} does not match the image shape {}'.format(mask.shape, stack.spatial_shape))
        pixels = pixels[mask.ravel()]
    return pixels


def fit_pca(stack, target_variance=DEFAULT_TARGET_VARIANCE, mask=None, max_components=None):
    """
    Fit the principal components, keeping the smallest number whose
    cumulative variance ratio reaches the target.

    Parameters
    ----------
    stack : HsiCube|FeatureStack
    target_variance : float
        In (0, 1].
    mask : None|numpy.ndarray
        Boolean `(rows, cols)` array of the pixels to fit on. All pixels by default.
    max_components : None|int
        Optional cap on the number of components, which may leave the
        retained ratio below the target.

    Returns
    -------
    PcaModel
    """

    if not (0 < target_variance <= 1):
        raise ValueError('target_variance must lie in (0, 1], got {}'.format(target_variance))
    samples = _samples(stack, mask=mask)
    if samples.shape[0] < 2:
        raise ValueError('PCA requires at least 2 samples, got {}'.format(samples.shape[0]))
    if numpy.all(numpy.ptp(samples, axis=0) == 0):
        raise ValueError('PCA is undefined for constant data with zero total variance')

    pca = PCA(svd_solver='full')
    pca.fit(samples)
    total_variance = float(numpy.var(samples, axis=0, ddof=1).sum())
    cumulative = numpy.cumsum(pca.explained_variance_)/total_variance
    k = int(numpy.searchsorted(cumulative, target_variance - _RATIO_TOLERANCE)) + 1
    k = min(k, cumulative.size)
    if max_components is not None and k > max_components:
        logger.warning('Capping PCA at {} components, retaining {:.6f} of the variance (target {})'.format(
            max_components, cumulative[max_components - 1], target_variance))
        k = int(max_components)

    components = pca.components_[:k].copy()
    largest = numpy.argmax(numpy.abs(components), axis=1)
    signs = numpy.sign(components[numpy.arange(k), largest])
    components *= signs[:, numpy.newaxis]

    model = PcaModel(pca.mean_, components, pca.explained_variance_[:k], total_variance, target=target_variance)
    logger.info('Fitted PCA on {} samples of dimension {}, keeping {} components ({:.6f} of the variance)'.format(
        samples.shape[0], samples.shape[1], k, model.retained_ratio))
    return model


def transform_pca(stack, model):
    """
    Project every pixel onto the model components, as `(x - mean) . components^T`.

    Parameters
    ----------
    stack : HsiCube|FeatureStack
    model : PcaModel

    Returns
    -------
    FeatureStack
        With channels named `pc_001, ...`.
    """

    stack = as_feature_stack(stack)
    if stack.channels != model.dimension:
        raise ValueError('The stack has {} channels, the model dimension is {}'.format(
            stack.channels, model.dimension))
    projected = (numpy.asarray(stack.pixels(), dtype='float64') - model.mean).dot(model.components.T)
    names = ['pc_{0:03d}'.format(i + 1) for i in range(model.n_components)]
    chain = 'pca({:g})'.format(model.target)
    if stack.chain is not None:
        chain = '{} -> {}'.format(stack.chain, chain)
    return FeatureStack.from_pixels(projected, stack.rows, stack.cols, names=names, chain=chain)


def inverse_transform_pca(stack, model, names=None):
    """
    Reconstruct pixels from their component values.

    Parameters
    ----------
    stack : FeatureStack
        The output of :func:`transform_pca`.
    model : PcaModel
    names : None|Sequence[str]
        The channel names of the reconstruction.

    Returns
    -------
    FeatureStack
    """

    stack = as_feature_stack(stack)
    if stack.channels != model.n_components:
        raise ValueError('The stack has {} channels, the model has {} components'.format(
            stack.channels, model.n_components))
    reconstructed = numpy.asarray(stack.pixels(), dtype='float64').dot(model.components) + model.mean
    return FeatureStack.from_pixels(reconstructed, stack.rows, stack.cols, names=names, chain=stack.chain)

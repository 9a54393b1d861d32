"""
The hyper-hue, saturation and intensity transform of n-dimensional pixels.

A pixel `x` is split into its component along the achromatic axis
`(1, ..., 1)/sqrt(n)` and its projection `c` onto the chromatic hyperplane
orthogonal to that axis. The hyper-hue is the direction `c/|c|`, the
saturation is `max(x) - min(x)` and the intensity is `mean(x)`.
"""

__classification__ = "UNCLASSIFIED"


import functools
import logging

import numpy

from hsi_layers.cube import FeatureStack

logger = logging.getLogger(__name__)

ACHROMATIC_EPSILON = 1e-12


class ChromaticBasis(object):
    """
    The orthonormal basis `u_1, ..., u_{n-1}` of the chromatic hyperplane. Row
    `i` (0-based) has `i` leading zeros, then `m = n - i` nonzero entries, the
    first being `(m-1)/sqrt(m(m-1))` and the rest `-1/sqrt(m(m-1))`.
    """

    __slots__ = ('_n', '_vectors')

    def __init__(self, n):
        """

        Parameters
        ----------
        n : int
            The pixel dimension, at least 2.
        """

        n = int(n)
        if n < 2:
            raise ValueError('The chromatic basis requires dimension at least 2, got {}'.format(n))
        vectors = numpy.zeros((n - 1, n), dtype='float64')
        for i in range(n - 1):
            m = n - i
            scale = numpy.sqrt(m*(m - 1.0))
            vectors[i, i] = (m - 1)/scale
            vectors[i, i+1:] = -1.0/scale
        vectors.flags.writeable = False
        self._n = n
        self._vectors = vectors

    @property
    def n(self):
        return self._n

    @property
    def vectors(self):
        """
        numpy.ndarray: The `(n-1, n)` read-only array of basis vectors.
        """

        return self._vectors

    @property
    def achromatic_axis(self):
        return numpy.full((self._n, ), 1.0/numpy.sqrt(self._n))

    def __repr__(self):
        return 'ChromaticBasis(n={})'.format(self._n)


@functools.lru_cache(maxsize=32)
def build_basis(n):
    """
    Gets the (cached) chromatic basis for dimension `n`.

    Parameters
    ----------
    n : int

    Returns
    -------
    ChromaticBasis
    """

    return ChromaticBasis(n)


def project_chromatic(x, basis=None):
    """
    Project pixel(s) onto the chromatic hyperplane, as the sum of the
    components along the basis vectors.

    Parameters
    ----------
    x : numpy.ndarray
        A pixel of length `n`, or an `(N, n)` array of pixels.
    basis : None|ChromaticBasis
        Built for the last dimension of `x` if not provided.

    Returns
    -------
    numpy.ndarray
        Of the same shape as `x`.
    """

    x = numpy.asarray(x, dtype='float64')
    if x.ndim not in (1, 2):
        raise ValueError('Expected a pixel or an array of pixels, got shape {}'.format(x.shape))
    if basis is None:
        basis = build_basis(x.shape[-1])
    if x.shape[-1] != basis.n:
        raise ValueError('Pixel length {} does not match the basis dimension {}'.format(x.shape[-1], basis.n))
    return (x.dot(basis.vectors.T)).dot(basis.vectors)


def hsi_components(pixels, epsilon=ACHROMATIC_EPSILON):
    """
    Gets the hyper-hue, saturation and intensity of each pixel.

    Parameters
    ----------
    pixels : numpy.ndarray
        Array of shape `(N, n)`.
    epsilon : float
        Pixels whose chromatic projection has norm below this are flagged as
        achromatic, and given the zero hue.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray, numpy.ndarray, numpy.ndarray)
        The `(N, n)` hue, the saturation, the intensity and the boolean
        achromatic flag.
    """

    pixels = numpy.asarray(pixels, dtype='float64')
    if pixels.ndim != 2:
        raise ValueError('Expected an (N, n) array of pixels, got shape {}'.format(pixels.shape))
    if not numpy.all(numpy.isfinite(pixels)):
        raise ValueError('Pixel values must be finite')
    basis = build_basis(pixels.shape[1])
    projected = project_chromatic(pixels, basis)
    norms = numpy.linalg.norm(projected, axis=1)
    achromatic = norms < epsilon
    hue = numpy.zeros_like(projected)
    chromatic = ~achromatic
    hue[chromatic] = projected[chromatic]/norms[chromatic, numpy.newaxis]
    saturation = pixels.max(axis=1) - pixels.min(axis=1)
    intensity = pixels.mean(axis=1)
    return hue, saturation, intensity, achromatic


def hsi_transform(stack, epsilon=ACHROMATIC_EPSILON, return_achromatic=False):
    """
    Gets the feature stack of hyper-hue channels `hue_001..hue_n`, followed by
    `saturation` and `intensity`.

    Parameters
    ----------
    stack : HsiCube|FeatureStack
    epsilon : float
    return_achromatic : bool
        Also return the `(rows, cols)` boolean mask of the achromatic pixels,
        whose hue channels are all zero.

    Returns
    -------
    FeatureStack|(FeatureStack, numpy.ndarray)
    """

    hue, saturation, intensity, achromatic = hsi_components(stack.pixels(), epsilon=epsilon)
    count = int(achromatic.sum())
    if count > 0:
        logger.info('{} of {} pixels are achromatic'.format(count, achromatic.size))
    names = ['hue_{0:03d}'.format(i + 1) for i in range(hue.shape[1])] + ['saturation', 'intensity']
    samples = numpy.concatenate([hue, saturation[:, numpy.newaxis], intensity[:, numpy.newaxis]], axis=1)
    chain = 'hsi_transform' if stack.chain is None else '{} -> hsi_transform'.format(stack.chain)
    features = FeatureStack.from_pixels(samples, stack.rows, stack.cols, names=names, chain=chain)
    if return_achromatic:
        return features, achromatic.reshape((stack.rows, stack.cols))
    return features

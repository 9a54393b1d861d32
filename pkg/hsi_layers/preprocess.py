"""
Sensor sensitivity normalization, illumination field correction and spectral
focus stacking.

Both sensor corrections are estimated from a white reference cube, which is
a capture of a uniformly reflective target under the same acquisition setup.
"""

__classification__ = "UNCLASSIFIED"


import logging

import numpy
import pandas
from scipy import ndimage

from hsi_layers.cube import HsiCube

logger = logging.getLogger(__name__)

DENOMINATOR_EPSILON = 1e-6
DEFAULT_SPLIT_BAND = 75
DEFAULT_SIGMA_FRACTION = 0.02


def _append_chain(cube, step):
    return step if cube.chain is None else '{} -> {}'.format(cube.chain, step)


def _guard_denominator(values, what):
    """
    Clamp denominator values below at :data:`DENOMINATOR_EPSILON`, with a
    warning giving the number of clamped entries.

    Parameters
    ----------
    values : numpy.ndarray
    what : str
        Description for the log message.

    Returns
    -------
    numpy.ndarray
    """

    values = numpy.asarray(values, dtype='float64')
    count = int(numpy.count_nonzero(values < DENOMINATOR_EPSILON))
    if count > 0:
        logger.warning(
            'Clamped {} {} denominator entries below {} to {}'.format(
                count, what, DENOMINATOR_EPSILON, DENOMINATOR_EPSILON))
        values = numpy.maximum(values, DENOMINATOR_EPSILON)
    return values


def _validate_region(region, rows, cols):
    """
    Validate a white reference region `(row_start, row_end, col_start, col_end)`,
    given as 0-based half open pixel ranges.

    Returns
    -------
    Tuple[slice, slice]
    """

    if len(region) != 4:
        raise ValueError('A region requires four entries (row_start, row_end, col_start, col_end)')
    row_start, row_end, col_start, col_end = [int(entry) for entry in region]
    if not (0 <= row_start < row_end <= rows and 0 <= col_start < col_end <= cols):
        raise ValueError(
            'Region {} is empty or exceeds the {} x {} image'.format(region, rows, cols))
    return slice(row_start, row_end), slice(col_start, col_end)


class SpectralSensitivity(object):
    """
    Per-band normalized sensor sensitivity, with maximum entry 1.
    """

    __slots__ = ('_weights', )

    def __init__(self, weights):
        """

        Parameters
        ----------
        weights : numpy.ndarray|Sequence[float]
            Positive per-band values, normalized here by their maximum.
        """

        weights = numpy.array(weights, dtype='float64')
        if weights.ndim != 1 or weights.size < 1:
            raise ValueError('Sensitivity weights must be a non-empty one dimensional array')
        if not numpy.all(numpy.isfinite(weights)) or numpy.any(weights <= 0):
            raise ValueError('Sensitivity weights must be finite and positive')
        weights /= weights.max()
        weights.flags.writeable = False
        self._weights = weights

    @property
    def weights(self):
        """
        numpy.ndarray: The read-only weights.
        """

        return self._weights

    @property
    def bands(self):
        return self._weights.size

    def __repr__(self):
        return 'SpectralSensitivity(bands={}, min={:.4g})'.format(self.bands, self._weights.min())


class IlluminationField(object):
    """
    Per-pixel normalized illumination, with maximum entry 1.
    """

    __slots__ = ('_field', )

    def __init__(self, field):
        """

        Parameters
        ----------
        field : numpy.ndarray
            Positive `(rows, cols)` values, normalized here by their maximum.
        """

        field = numpy.array(field, dtype='float64')
        if field.ndim != 2 or field.size < 1:
            raise ValueError('An illumination field must be a non-empty two dimensional array')
        if not numpy.all(numpy.isfinite(field)) or numpy.any(field <= 0):
            raise ValueError('Illumination field values must be finite and positive')
        field /= field.max()
        field.flags.writeable = False
        self._field = field

    @property
    def field(self):
        return self._field

    @property
    def shape(self):
        return self._field.shape

    def __repr__(self):
        return 'IlluminationField(shape={}, min={:.4g})'.format(self.shape, self._field.min())


def band_means(cube, region=None):
    """
    Gets the spatial mean of every band, optionally over a region only.

    Parameters
    ----------
    cube : HsiCube
    region : None|Sequence[int]
        `(row_start, row_end, col_start, col_end)`, 0-based and half open.

    Returns
    -------
    numpy.ndarray
    """

    data = cube.data
    if region is not None:
        row_slice, col_slice = _validate_region(region, cube.rows, cube.cols)
        data = data[:, row_slice, col_slice]
    # contiguous rows reduce with numpy's pairwise summation
    return numpy.ascontiguousarray(data, dtype='float64').reshape((data.shape[0], -1)).mean(axis=1)


def estimate_sensitivity(white_ref, region=None):
    """
    Estimate the sensor sensitivity from a white reference cube, as the band
    means divided by their maximum.

    Parameters
    ----------
    white_ref : HsiCube
    region : None|Sequence[int]
        The white reference region `(row_start, row_end, col_start, col_end)`.
        The whole image is used by default.

    Returns
    -------
    SpectralSensitivity
    """

    if numpy.any(white_ref.data < 0):
        logger.warning('The white reference contains negative values')
    means = band_means(white_ref, region=region)
    bad = numpy.nonzero(means <= 0)[0]
    if bad.size > 0:
        msg = 'Sensitivity is undefined for white reference bands {} with zero mean'.format(
            [int(entry) + 1 for entry in bad])
        logger.error(msg)
        raise ValueError(msg)
    sensitivity = SpectralSensitivity(means)
    logger.info('Estimated sensitivity over {} bands, minimum {:.4f}'.format(
        sensitivity.bands, sensitivity.weights.min()))
    return sensitivity


def normalize_sensitivity(cube, sensitivity):
    """
    Divide every band by its sensitivity weight.

    Parameters
    ----------
    cube : HsiCube
    sensitivity : SpectralSensitivity

    Returns
    -------
    HsiCube
    """

    if sensitivity.bands != cube.bands:
        raise ValueError('Sensitivity has {} bands, the cube has {}'.format(sensitivity.bands, cube.bands))
    weights = _guard_denominator(sensitivity.weights, 'sensitivity')
    return cube.replace_data(cube.data/weights[:, numpy.newaxis, numpy.newaxis],
                             chain=_append_chain(cube, 'normalize_sensitivity'))


def estimate_illumination(white_ref, sigma=None):
    """
    Estimate the illumination field from a white reference cube, as the
    per-pixel band mean, low-pass filtered and normalized to maximum 1.

    Parameters
    ----------
    white_ref : HsiCube
    sigma : None|float
        The Gaussian smoothing standard deviation in pixels. The default is 2%
        of the image diagonal, and `0` disables smoothing.

    Returns
    -------
    IlluminationField
    """

    mean_image = numpy.mean(white_ref.data, axis=0, dtype='float64')
    bad = int(numpy.count_nonzero(mean_image <= 0))
    if bad > 0:
        msg = 'Illumination is undefined for {} white reference pixels with zero mean'.format(bad)
        logger.error(msg)
        raise ValueError(msg)

    if sigma is None:
        sigma = DEFAULT_SIGMA_FRACTION*float(numpy.hypot(white_ref.rows, white_ref.cols))
    if sigma < 0:
        raise ValueError('sigma must be non-negative, got {}'.format(sigma))
    if sigma > 0:
        mean_image = ndimage.gaussian_filter(mean_image, sigma, mode='nearest')
    field = IlluminationField(mean_image)
    logger.info('Estimated illumination field with sigma {:.3f}, minimum {:.4f}'.format(sigma, field.field.min()))
    return field


def correct_illumination(cube, illumination):
    """
    Divide every pixel by the illumination field.

    Parameters
    ----------
    cube : HsiCube
    illumination : IlluminationField

    Returns
    -------
    HsiCube
    """

    if illumination.shape != cube.spatial_shape:
        raise ValueError('Illumination field shape {} does not match the cube shape {}'.format(
            illumination.shape, cube.spatial_shape))
    field = _guard_denominator(illumination.field, 'illumination')
    return cube.replace_data(cube.data/field[numpy.newaxis, :, :],
                             chain=_append_chain(cube, 'correct_illumination'))


def _check_pair(h1, h2):
    if h1.data.shape != h2.data.shape:
        raise ValueError('Focus stacking requires identical dimensions, got {} and {}'.format(
            h1.data.shape, h2.data.shape))


def focus_stack(h1, h2, split_band=DEFAULT_SPLIT_BAND):
    """
    Assemble one cube from two differently focused captures, channels
    `1..split_band` from `h1` and the rest from `h2`.

    Parameters
    ----------
    h1 : HsiCube
        The capture focused for the short wavelengths.
    h2 : HsiCube
        The capture focused for the long wavelengths.
    split_band : int
        The last (1-based) channel taken from `h1`.

    Returns
    -------
    HsiCube
    """

    _check_pair(h1, h2)
    if not (1 <= split_band < h1.bands):
        raise ValueError('split_band must lie in [1, {}), got {}'.format(h1.bands, split_band))
    if h1.data.dtype != h2.data.dtype:
        logger.warning('Focus stacking inputs of differing data types {} and {}'.format(
            h1.data.dtype, h2.data.dtype))
    data = numpy.concatenate([h1.data[:split_band], h2.data[split_band:]], axis=0)
    wavelengths = h1.wavelengths if h1.wavelengths is not None else h2.wavelengths
    return HsiCube(data, wavelengths=wavelengths, chain='focus_stack(split={})'.format(split_band))


def band_sharpness(cube):
    """
    Gets the per-band sharpness, as the variance of the Laplacian.

    Parameters
    ----------
    cube : HsiCube

    Returns
    -------
    numpy.ndarray
    """

    return numpy.array(
        [ndimage.laplace(numpy.asarray(band, dtype='float64')).var() for band in cube.data], dtype='float64')


def select_sharpest_channels(h1, h2):
    """
    Focus stacking by per-channel sharpness: each channel is taken wholly from
    whichever input has the larger variance of the Laplacian, preferring `h1`
    on ties.

    Parameters
    ----------
    h1 : HsiCube
    h2 : HsiCube

    Returns
    -------
    (HsiCube, numpy.ndarray)
        The stacked cube, and the boolean per-band array which is `True` where
        the channel came from `h1`.
    """

    _check_pair(h1, h2)
    from_h1 = band_sharpness(h1) >= band_sharpness(h2)
    data = numpy.where(from_h1[:, numpy.newaxis, numpy.newaxis], h1.data, h2.data)
    logger.info('Sharpness focus stacking took {} channels from h1 and {} from h2'.format(
        int(from_h1.sum()), int((~from_h1).sum())))
    wavelengths = h1.wavelengths if h1.wavelengths is not None else h2.wavelengths
    return HsiCube(data, wavelengths=wavelengths, chain='focus_stack(sharpness)'), from_h1


def band_means_table(before, after, region=None):
    """
    Gets the per-band spatial means of a cube before and after correction.

    Parameters
    ----------
    before : HsiCube
    after : HsiCube
    region : None|Sequence[int]

    Returns
    -------
    pandas.DataFrame
        With columns `band`, `wavelength` (if known), `mean_before`, `mean_after`.
    """

    if before.bands != after.bands:
        raise ValueError('Band counts differ, {} and {}'.format(before.bands, after.bands))
    table = pandas.DataFrame({'band': numpy.arange(1, before.bands + 1)})
    if before.wavelengths is not None:
        table['wavelength'] = before.wavelengths
    table['mean_before'] = band_means(before, region=region)
    table['mean_after'] = band_means(after, region=region)
    return table


class CorrectedCubes(object):
    """
    The intermediate products of :func:`preprocess_cube`.
    """

    __slots__ = ('stacked', 'normalized', 'corrected', 'sensitivity', 'illumination')

    def __init__(self, stacked, normalized, corrected, sensitivity, illumination):
        """

        Parameters
        ----------
        stacked : HsiCube
            The focus stacked cube.
        normalized : HsiCube
            The sensitivity normalized cube.
        corrected : HsiCube
            The sensitivity normalized and illumination corrected cube.
        sensitivity : SpectralSensitivity
        illumination : IlluminationField
        """

        self.stacked = stacked
        self.normalized = normalized
        self.corrected = corrected
        self.sensitivity = sensitivity
        self.illumination = illumination


def preprocess_cube(h1, h2, white_ref, split_band=DEFAULT_SPLIT_BAND, focus_mode='fixed',
                    region=None, sigma=None):
    """
    Run focus stacking, then sensitivity normalization, then illumination correction.

    Parameters
    ----------
    h1 : HsiCube
    h2 : None|HsiCube
        If `None`, `h1` is used alone, without focus stacking.
    white_ref : HsiCube
    split_band : int
    focus_mode : str
        One of `'fixed'` (split at `split_band`) or `'sharpness'`.
    region : None|Sequence[int]
        The white reference region for the sensitivity estimate.
    sigma : None|float
        The illumination smoothing.

    Returns
    -------
    CorrectedCubes
    """

    if white_ref.data.shape != h1.data.shape:
        raise ValueError('The white reference shape {} does not match the cube shape {}'.format(
            white_ref.data.shape, h1.data.shape))
    if h2 is None:
        stacked = h1
    elif focus_mode == 'fixed':
        stacked = focus_stack(h1, h2, split_band=split_band)
    elif focus_mode == 'sharpness':
        stacked, _ = select_sharpest_channels(h1, h2)
    else:
        raise ValueError('Unknown focus mode `{}`'.format(focus_mode))

    sensitivity = estimate_sensitivity(white_ref, region=region)
    normalized = normalize_sensitivity(stacked, sensitivity)
    illumination = estimate_illumination(normalize_sensitivity(white_ref, sensitivity), sigma=sigma)
    corrected = correct_illumination(normalized, illumination)
    return CorrectedCubes(stacked, normalized, corrected, sensitivity, illumination)

"""
The hyperspectral cube data model, ENVI style file input/output and the
simulated RGB derivation.

Channel numbers in all public arguments are 1-based, as in "channel 20" of a
cube; internal array indices are 0-based. Arrays are held band-sequential,
i.e. with shape `(bands, rows, cols)`.
"""

__classification__ = "UNCLASSIFIED"


import logging
import os
from typing import List

import numpy
from spectral.io import envi

from hsi_layers.base_elements import ConfigBase, IntegerTupleDescriptor
from hsi_layers.file_types import raw_path_for_header, header_path_for

logger = logging.getLogger(__name__)

# ENVI data type codes which we handle
_ENVI_TYPES = {4: numpy.dtype('float32'), 5: numpy.dtype('float64')}
_BYTE_ORDERS = {0: '<', 1: '>'}


def _read_only(data):
    """
    Gets a C-contiguous floating point read-only view of the input.

    Parameters
    ----------
    data : numpy.ndarray

    Returns
    -------
    numpy.ndarray
    """

    data = numpy.asarray(data)
    if not numpy.issubdtype(data.dtype, numpy.floating):
        data = data.astype('float64')
    out = numpy.ascontiguousarray(data).view()
    out.flags.writeable = False
    return out


class _ChannelStack(object):
    """
    Common base for multi-channel per-pixel images held band-sequential.
    """

    __slots__ = ('_data', '_chain')

    def __init__(self, data, chain=None):
        """

        Parameters
        ----------
        data : numpy.ndarray
            Array of shape `(channels, rows, cols)`.
        chain : None|str
            Description of the processing chain which produced the data.
        """

        data = _read_only(data)
        if data.ndim != 3:
            raise ValueError('Expected a three dimensional (channels, rows, cols) array, '
                             'got shape {}'.format(data.shape))
        if min(data.shape) < 1:
            raise ValueError('All dimensions must be at least 1, got shape {}'.format(data.shape))
        self._data = data
        self._chain = chain

    @property
    def data(self):
        """
        numpy.ndarray: The read-only `(channels, rows, cols)` array.
        """

        return self._data

    @property
    def chain(self):
        """
        None|str: Description of the producing processing chain.
        """

        return self._chain

    @property
    def channels(self):
        return self._data.shape[0]

    @property
    def rows(self):
        return self._data.shape[1]

    @property
    def cols(self):
        return self._data.shape[2]

    @property
    def spatial_shape(self):
        # type: () -> (int, int)
        return self._data.shape[1:]

    @property
    def channel_names(self):
        raise NotImplementedError

    def pixels(self):
        """
        Gets the pixels as samples, of shape `(rows*cols, channels)`. This is
        a (non-contiguous) view of the data.

        Returns
        -------
        numpy.ndarray
        """

        return self._data.reshape((self.channels, -1)).T

    def channel(self, index):
        """
        Gets a single 2-d channel, by 1-based channel number.

        Parameters
        ----------
        index : int

        Returns
        -------
        numpy.ndarray
        """

        if not (1 <= index <= self.channels):
            raise ValueError('Channel number {} outside of 1..{}'.format(index, self.channels))
        return self._data[index - 1]


class HsiCube(_ChannelStack):
    """
    A reflectance cube with optional per-band wavelength (nm) metadata. The
    wavelengths are carried for labeling only; no algorithm depends on them.
    """

    __slots__ = ('_wavelengths', )

    def __init__(self, data, wavelengths=None, chain=None):
        """

        Parameters
        ----------
        data : numpy.ndarray
            Array of shape `(bands, rows, cols)`.
        wavelengths : None|numpy.ndarray|Sequence[float]
            Strictly increasing, one entry per band.
        chain : None|str
        """

        super(HsiCube, self).__init__(data, chain=chain)
        if wavelengths is not None:
            wavelengths = numpy.array(wavelengths, dtype='float64')
            if wavelengths.ndim != 1 or wavelengths.size != self.bands:
                raise ValueError(
                    'Got {} wavelengths for a cube with {} bands'.format(wavelengths.size, self.bands))
            if wavelengths.size > 1 and numpy.any(numpy.diff(wavelengths) <= 0):
                raise ValueError('Wavelengths must be strictly increasing')
            wavelengths.flags.writeable = False
        self._wavelengths = wavelengths

    @classmethod
    def from_image(cls, image, wavelengths=None, chain=None):
        """
        Construct from an image array of shape `(rows, cols, bands)`.

        Parameters
        ----------
        image : numpy.ndarray
        wavelengths : None|Sequence[float]
        chain : None|str

        Returns
        -------
        HsiCube
        """

        image = numpy.asarray(image)
        if image.ndim != 3:
            raise ValueError('Expected a (rows, cols, bands) array, got shape {}'.format(image.shape))
        return cls(numpy.moveaxis(image, 2, 0), wavelengths=wavelengths, chain=chain)

    @property
    def bands(self):
        return self.channels

    @property
    def wavelengths(self):
        """
        None|numpy.ndarray: The per-band wavelengths in nm.
        """

        return self._wavelengths

    @property
    def channel_names(self):
        return ['band_{0:03d}'.format(i + 1) for i in range(self.bands)]

    def replace_data(self, data, chain=None):
        """
        Gets a new cube with the given data of the same band count, carrying
        over the wavelengths.

        Parameters
        ----------
        data : numpy.ndarray
        chain : None|str

        Returns
        -------
        HsiCube
        """

        return HsiCube(data, wavelengths=self._wavelengths, chain=chain)

    def __repr__(self):
        return 'HsiCube(rows={}, cols={}, bands={}, chain={!r})'.format(
            self.rows, self.cols, self.bands, self.chain)


class FeatureStack(_ChannelStack):
    """
    A named multi-channel per-pixel feature image.
    """

    __slots__ = ('_names', )

    def __init__(self, data, names=None, chain=None):
        """

        Parameters
        ----------
        data : numpy.ndarray
            Array of shape `(channels, rows, cols)`, or `(rows, cols)` for a single channel.
        names : None|Sequence[str]
        chain : None|str
        """

        data = numpy.asarray(data)
        if data.ndim == 2:
            data = data[numpy.newaxis, :, :]
        super(FeatureStack, self).__init__(data, chain=chain)
        if names is None:
            names = ['ch_{0:03d}'.format(i + 1) for i in range(self.channels)]
        names = [str(entry) for entry in names]
        if len(names) != self.channels:
            raise ValueError('Got {} names for {} channels'.format(len(names), self.channels))
        self._names = tuple(names)

    @classmethod
    def from_pixels(cls, pixels, rows, cols, names=None, chain=None):
        """
        Construct from samples of shape `(rows*cols, channels)`.

        Parameters
        ----------
        pixels : numpy.ndarray
        rows : int
        cols : int
        names : None|Sequence[str]
        chain : None|str

        Returns
        -------
        FeatureStack
        """

        pixels = numpy.asarray(pixels)
        if pixels.ndim == 1:
            pixels = pixels[:, numpy.newaxis]
        if pixels.shape[0] != rows*cols:
            raise ValueError('Got {} pixels for a {}x{} image'.format(pixels.shape[0], rows, cols))
        return cls(pixels.T.reshape((pixels.shape[1], rows, cols)), names=names, chain=chain)

    @property
    def channel_names(self):
        return list(self._names)

    @property
    def names(self):
        return self._names

    def select(self, names=None, prefix=None):
        """
        Gets the sub-stack of the named channels, or of channels whose name
        starts with the given prefix.

        Parameters
        ----------
        names : None|Sequence[str]
        prefix : None|str

        Returns
        -------
        FeatureStack
        """

        if (names is None) == (prefix is None):
            raise ValueError('Exactly one of names or prefix must be provided')
        if prefix is not None:
            indices = [i for i, name in enumerate(self._names) if name.startswith(prefix)]
        else:
            lookup = {name: i for i, name in reversed(list(enumerate(self._names)))}
            missing = [name for name in names if name not in lookup]
            if len(missing) > 0:
                raise ValueError('Unknown channel names {}'.format(missing))
            indices = [lookup[name] for name in names]
        if len(indices) == 0:
            raise ValueError('No channels selected')
        return FeatureStack(self._data[indices], names=[self._names[i] for i in indices], chain=self.chain)

    def with_chain(self, chain):
        return FeatureStack(self._data, names=self._names, chain=chain)

    def __repr__(self):
        return 'FeatureStack(rows={}, cols={}, channels={}, chain={!r})'.format(
            self.rows, self.cols, self.channels, self.chain)


class RgbImage(FeatureStack):
    """
    A three channel (R, G, B) image. The values are not clipped, since simulated
    RGB from corrected cubes may exceed 1; :meth:`to_uint8` clips for display.
    """

    __slots__ = ()

    def __init__(self, data, chain=None):
        data = numpy.asarray(data)
        if data.ndim != 3 or data.shape[0] != 3:
            raise ValueError('Expected an array of shape (3, rows, cols), got shape {}'.format(data.shape))
        if not numpy.all(numpy.isfinite(data)):
            raise ValueError('RGB values must be finite')
        super(RgbImage, self).__init__(data, names=('R', 'G', 'B'), chain=chain)

    @property
    def r(self):
        return self._data[0]

    @property
    def g(self):
        return self._data[1]

    @property
    def b(self):
        return self._data[2]

    def to_uint8(self):
        """
        Gets the `(rows, cols, 3)` 8-bit display image, clipped to [0, 1] first.

        Returns
        -------
        numpy.ndarray
        """

        scaled = numpy.floor(numpy.clip(self._data, 0, 1)*255 + 0.5).astype('uint8')
        return numpy.moveaxis(scaled, 0, 2)


def as_feature_stack(part):
    """
    Gets the FeatureStack version of a cube or feature stack.

    Parameters
    ----------
    part : HsiCube|FeatureStack

    Returns
    -------
    FeatureStack
    """

    if isinstance(part, FeatureStack):
        return part
    if isinstance(part, HsiCube):
        return FeatureStack(part.data, names=part.channel_names, chain=part.chain)
    raise TypeError('Expected HsiCube or FeatureStack, got type {}'.format(type(part)))


###########
# simulated RGB

class RgbBands(ConfigBase):
    """
    The 1-based inclusive channel ranges averaged for each simulated RGB channel.
    """

    _fields = ('red', 'green', 'blue')
    red = IntegerTupleDescriptor('red', length=2, default_value=(108, 156), docstring='Red channel range.')
    green = IntegerTupleDescriptor('green', length=2, default_value=(57, 87), docstring='Green channel range.')
    blue = IntegerTupleDescriptor('blue', length=2, default_value=(24, 56), docstring='Blue channel range.')

    def ranges(self):
        # type: () -> List[tuple]
        out = [self.red, self.green, self.blue]
        for lower, upper in out:
            if not (1 <= lower <= upper):
                raise ValueError('Invalid channel range ({}, {})'.format(lower, upper))
        return out


def simulate_rgb(cube, bands=None):
    """
    Simulate an RGB image by averaging channel ranges of the cube. The default
    ranges are channels 108-156 (R), 57-87 (G) and 24-56 (B), inclusive and 1-based.

    Parameters
    ----------
    cube : HsiCube
    bands : None|RgbBands

    Returns
    -------
    RgbImage
    """

    if bands is None:
        bands = RgbBands()
    ranges = bands.ranges()
    needed = max(upper for _, upper in ranges)
    if cube.bands < needed:
        raise ValueError(
            'Simulated RGB requires at least {} bands, the cube has {}'.format(needed, cube.bands))
    planes = [cube.data[lower - 1:upper].mean(axis=0) for lower, upper in ranges]
    chain = 'simulate_rgb' if cube.chain is None else '{} -> simulate_rgb'.format(cube.chain)
    return RgbImage(numpy.stack(planes, axis=0), chain=chain)


def stack_features(parts):
    """
    Concatenate cubes and/or feature stacks channel-wise, in argument order.

    Parameters
    ----------
    parts : Sequence[HsiCube|FeatureStack]

    Returns
    -------
    FeatureStack
    """

    parts = [as_feature_stack(part) for part in parts]
    if len(parts) == 0:
        raise ValueError('At least one part is required')
    shape = parts[0].spatial_shape
    for part in parts[1:]:
        if part.spatial_shape != shape:
            raise ValueError(
                'All parts must share rows x cols, got {} and {}'.format(shape, part.spatial_shape))
    if len(parts) == 1:
        return parts[0]

    names = []
    for part in parts:
        names.extend(part.names)
    chains = [part.chain for part in parts if part.chain is not None]
    chain = ' (+) '.join(chains) if len(chains) > 0 else None
    return FeatureStack(numpy.concatenate([part.data for part in parts], axis=0), names=names, chain=chain)


###########
# ENVI style input/output

def _write_envi(header_path, data, extra_header):
    """
    Write a `(bands, rows, cols)` array as an ENVI header plus little-endian BSQ raw file.

    Parameters
    ----------
    header_path : str
    data : numpy.ndarray
    extra_header : dict
    """

    codes = {value: key for key, value in _ENVI_TYPES.items()}
    dtype = numpy.dtype(data.dtype.name)
    if dtype not in codes:
        raise ValueError('Unsupported data type {}'.format(data.dtype))
    header_path = header_path_for(header_path)
    raw_path = raw_path_for_header(header_path, must_exist=False)

    header = {
        'samples': data.shape[2],
        'lines': data.shape[1],
        'bands': data.shape[0],
        'header offset': 0,
        'file type': 'ENVI Standard',
        'data type': codes[dtype],
        'interleave': 'bsq',
        'byte order': 0}
    header.update(extra_header)

    directory = os.path.dirname(os.path.abspath(header_path))
    os.makedirs(directory, exist_ok=True)
    envi.write_envi_header(header_path, header)
    numpy.ascontiguousarray(data, dtype=dtype.newbyteorder('<')).tofile(raw_path)
    logger.info('Wrote {} x {} x {} {} data to {}'.format(
        data.shape[1], data.shape[2], data.shape[0], dtype.name, raw_path))


def _parse_int(header, key, header_path):
    if key not in header:
        raise ValueError('Malformed header {}: missing required key `{}`'.format(header_path, key))
    try:
        return int(header[key])
    except (TypeError, ValueError):
        raise ValueError(
            'Malformed header {}: key `{}` has non-integer value {}'.format(header_path, key, header[key]))


def _read_envi(header_path, allowed_types):
    """
    Read an ENVI header and its BSQ raw data.

    Parameters
    ----------
    header_path : str
    allowed_types : Sequence[int]
        The ENVI data type codes accepted.

    Returns
    -------
    (numpy.ndarray, dict)
        The `(bands, rows, cols)` array in native byte order, and the parsed header.
    """

    if not os.path.isfile(header_path):
        raise FileNotFoundError('Header file {} does not exist'.format(header_path))
    try:
        header = envi.read_envi_header(header_path)
    except Exception as err:
        raise ValueError('Malformed ENVI header {}: {}'.format(header_path, err))

    samples = _parse_int(header, 'samples', header_path)
    lines = _parse_int(header, 'lines', header_path)
    bands = _parse_int(header, 'bands', header_path)
    data_type = _parse_int(header, 'data type', header_path)
    offset = _parse_int(header, 'header offset', header_path) if 'header offset' in header else 0
    byte_order = _parse_int(header, 'byte order', header_path) if 'byte order' in header else 0
    interleave = str(header.get('interleave', 'bsq')).strip().lower()

    if min(samples, lines, bands) < 1:
        raise ValueError('Malformed header {}: non-positive dimensions'.format(header_path))
    if data_type not in allowed_types:
        raise ValueError('Unsupported data type {} in header {}'.format(data_type, header_path))
    if interleave != 'bsq':
        raise ValueError('Unsupported interleave `{}` in header {}, only bsq is handled'.format(
            interleave, header_path))
    if byte_order not in _BYTE_ORDERS:
        raise ValueError('Malformed header {}: byte order {}'.format(header_path, byte_order))

    raw_path = raw_path_for_header(header_path)
    dtype = _ENVI_TYPES[data_type].newbyteorder(_BYTE_ORDERS[byte_order])
    expected = samples*lines*bands*dtype.itemsize
    actual = os.path.getsize(raw_path) - offset
    if actual != expected:
        raise ValueError(
            'Size mismatch for {}: header declares {} x {} x {} values ({} bytes), but the file '
            'holds {} bytes'.format(raw_path, lines, samples, bands, expected, actual))

    data = numpy.fromfile(raw_path, dtype=dtype, count=samples*lines*bands, offset=offset)
    data = data.astype(dtype.newbyteorder('='), copy=False)
    return data.reshape((bands, lines, samples)), header


def save_cube(cube, header_path):
    """
    Write the cube as an ENVI header plus little-endian float32 BSQ raw file
    of the same basename with `.raw` extension.

    Parameters
    ----------
    cube : HsiCube
    header_path : str
    """

    if not isinstance(cube, HsiCube):
        raise TypeError('Expected HsiCube, got type {}'.format(type(cube)))
    extra = {}
    if cube.wavelengths is not None:
        extra['wavelength units'] = 'nm'
        extra['wavelength'] = [repr(float(entry)) for entry in cube.wavelengths]
    data = cube.data.astype('float32', copy=False)
    if cube.data.dtype != data.dtype:
        changed = numpy.count_nonzero(data.astype(cube.data.dtype) != cube.data)
        if changed > 0:
            logger.warning(
                'Writing {} as float32 changes {} of {} {} values'.format(
                    header_path, changed, cube.data.size, cube.data.dtype))
    _write_envi(header_path, data, extra)


def load_cube(header_path):
    """
    Read a cube written in the ENVI float32 BSQ layout.

    Parameters
    ----------
    header_path : str

    Returns
    -------
    HsiCube
    """

    data, header = _read_envi(header_path, allowed_types=(4, ))
    wavelengths = None
    if 'wavelength' in header:
        values = header['wavelength']
        if isinstance(values, str):
            values = values.strip('{} ').split(',')
        try:
            wavelengths = [float(entry) for entry in values]
        except ValueError:
            raise ValueError('Malformed wavelength list in header {}'.format(header_path))
    return HsiCube(data, wavelengths=wavelengths)


def save_feature_stack(stack, header_path):
    """
    Write a feature stack in the ENVI BSQ layout, with channel names as band
    names. float64 data is kept as float64.

    Parameters
    ----------
    stack : FeatureStack
    header_path : str
    """

    stack = as_feature_stack(stack)
    data = stack.data
    if data.dtype not in (numpy.dtype('float32'), numpy.dtype('float64')):
        data = data.astype('float64')
    extra = {'band names': list(stack.names)}
    if stack.chain is not None:
        extra['description'] = stack.chain
    _write_envi(header_path, data, extra)


def load_feature_stack(header_path):
    """
    Read a feature stack written by :func:`save_feature_stack`.

    Parameters
    ----------
    header_path : str

    Returns
    -------
    FeatureStack
    """

    data, header = _read_envi(header_path, allowed_types=(4, 5))
    names = header.get('band names', None)
    if isinstance(names, str):
        names = [entry.strip() for entry in names.strip('{} ').split(',')]
    chain = header.get('description', None)
    if chain is not None:
        chain = chain.strip()
    return FeatureStack(data, names=names, chain=chain)

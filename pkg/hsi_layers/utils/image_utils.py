"""
Pillow based writers and readers for label maps, quicklooks and band animations.
"""

__classification__ = "UNCLASSIFIED"


import logging

import numpy
import PIL.Image

from hsi_layers.cube import as_feature_stack
from hsi_layers.utils.color_utils import get_label_palette, palette_bytes

logger = logging.getLogger(__name__)


def render_label_map(labels, palette='layers'):
    """
    Render an integer label map as a palette ('P' mode) image, where label `i`
    is drawn with palette entry `i`.

    Parameters
    ----------
    labels : numpy.ndarray
        Two dimensional array of non-negative integer labels.
    palette : str|Sequence
        Palette name or sequence of matplotlib colors.

    Returns
    -------
    PIL.Image.Image
    """

    labels = numpy.asarray(labels)
    if labels.ndim != 2:
        raise ValueError('Expected a two dimensional label map, got shape {}'.format(labels.shape))
    if labels.size > 0 and not numpy.issubdtype(labels.dtype, numpy.integer):
        if not numpy.all(numpy.equal(numpy.mod(labels, 1), 0)):
            raise ValueError('Label maps must hold integer values')
    rgb_palette = get_label_palette(palette)
    if labels.size > 0 and (labels.min() < 0 or labels.max() >= len(rgb_palette)):
        raise ValueError(
            'Labels must lie in [0, {}] for the given palette, got range [{}, {}]'.format(
                len(rgb_palette) - 1, labels.min(), labels.max()))

    image = PIL.Image.fromarray(labels.astype('uint8'), mode='P')
    image.putpalette(palette_bytes(rgb_palette))
    return image


def save_label_map(labels, fname, palette='layers'):
    """
    Save an integer label map as a palette PNG.

    Parameters
    ----------
    labels : numpy.ndarray
    fname : str
    palette : str|Sequence
    """

    render_label_map(labels, palette=palette).save(fname, format='PNG')
    logger.info('Wrote label map {}'.format(fname))


def load_label_map(fname):
    """
    Read a label map image. Palette images give their palette indices, and
    grayscale images their gray levels.

    Parameters
    ----------
    fname : str

    Returns
    -------
    numpy.ndarray
    """

    with PIL.Image.open(fname) as image:
        if image.mode not in ('P', 'L', 'I', 'I;16'):
            raise ValueError(
                'Label map {} has image mode {}, expected a palette or grayscale image'.format(fname, image.mode))
        return numpy.array(image).astype('int64')


def to_display_uint8(image, lower_percentile=1.0, upper_percentile=99.0):
    """
    Linearly stretch a float image between percentiles to 8 bits, for display.

    Parameters
    ----------
    image : numpy.ndarray
    lower_percentile : float
    upper_percentile : float

    Returns
    -------
    numpy.ndarray
    """

    image = numpy.asarray(image, dtype='float64')
    lower, upper = numpy.percentile(image, [lower_percentile, upper_percentile])
    if upper <= lower:
        return numpy.zeros(image.shape, dtype='uint8')
    scaled = numpy.clip((image - lower)/(upper - lower), 0, 1)
    return numpy.floor(scaled*255 + 0.5).astype('uint8')


def save_quicklook(rgb, fname):
    """
    Save a `(rows, cols, 3)` uint8 image as PNG.

    Parameters
    ----------
    rgb : numpy.ndarray
    fname : str
    """

    PIL.Image.fromarray(numpy.asarray(rgb, dtype='uint8'), mode='RGB').save(fname, format='PNG')
    logger.info('Wrote quicklook {}'.format(fname))


def save_band_animation(stack, fname, fps=15, step=1):
    """
    Save the channels of a cube or feature stack as an animated, looping gif,
    one grayscale frame per channel, with a common display stretch for all frames.

    Parameters
    ----------
    stack : HsiCube|FeatureStack
    fname : str
    fps : float|int
        The frames per second.
    step : int
        Use every `step`-th channel.

    Returns
    -------
    List[str]
        The names of the channels written, in frame order.
    """

    stack = as_feature_stack(stack)
    if step < 1:
        raise ValueError('step must be positive, got {}'.format(step))
    if fps <= 0:
        raise ValueError('fps must be positive, got {}'.format(fps))

    indices = numpy.arange(0, stack.channels, step)
    stretched = to_display_uint8(stack.data[indices])
    frames = [PIL.Image.fromarray(frame, mode='L') for frame in stretched]
    frames[0].save(fname, format='GIF', save_all=True, append_images=frames[1:], optimize=True,
                   duration=int(round(1000.0/fps)), loop=0)
    names = [stack.names[index] for index in indices]
    logger.info('Wrote {} frame animation {}, channels {} to {}'.format(len(frames), fname, names[0], names[-1]))
    return names

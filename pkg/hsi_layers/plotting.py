"""
Diagnostic figures of the sensor corrections and focus stacking, rendered
off-screen with the matplotlib Agg canvas.
"""

__classification__ = "UNCLASSIFIED"


import logging

import numpy
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from hsi_layers.utils.color_utils import PLOT_COLORS

DEFAULT_CMAP = 'bone'
logger = logging.getLogger(__name__)


class DiagnosticFigure(object):
    """
    A single axis figure attached to an Agg canvas, saved to file.
    """

    def __init__(self, title, xlabel=None, ylabel=None, figsize=(6.4, 4.0)):
        self.fig = Figure(figsize=figsize)
        self.canvas = FigureCanvasAgg(self.fig)
        self.axes = self.fig.add_subplot(111)
        self.axes.set_title(title)
        if xlabel is not None:
            self.axes.set_xlabel(xlabel)
        if ylabel is not None:
            self.axes.set_ylabel(ylabel)

    def save(self, fname, dpi=100):
        """
        Render and write the figure.

        Parameters
        ----------
        fname : str
        dpi : int
        """

        self.fig.tight_layout()
        self.fig.savefig(fname, dpi=dpi)
        logger.info('Wrote figure {}'.format(fname))


def _band_axis(count, wavelengths):
    if wavelengths is None:
        return numpy.arange(1, count + 1), 'Channel'
    return numpy.asarray(wavelengths), 'Wavelength (nm)'


def plot_sensitivity(sensitivity, fname, wavelengths=None):
    """
    Plot the normalized sensor sensitivity.

    Parameters
    ----------
    sensitivity : SpectralSensitivity
    fname : str
    wavelengths : None|numpy.ndarray
    """

    x, xlabel = _band_axis(sensitivity.bands, wavelengths)
    figure = DiagnosticFigure('Normalized sensitivity', xlabel=xlabel, ylabel='Sensitivity')
    figure.axes.plot(x, sensitivity.weights, color=PLOT_COLORS[0])
    figure.axes.set_ylim(0, 1.05)
    figure.save(fname)


def plot_illumination(illumination, fname, cmap=DEFAULT_CMAP):
    """
    Plot the normalized illumination field.

    Parameters
    ----------
    illumination : IlluminationField
    fname : str
    cmap : str
    """

    figure = DiagnosticFigure('Normalized illumination field')
    image = figure.axes.imshow(illumination.field, cmap=cmap, vmin=0, vmax=1)
    figure.fig.colorbar(image, ax=figure.axes)
    figure.save(fname)


def plot_band_sharpness(sharpness, fname, wavelengths=None, split_band=None):
    """
    Plot the per-band sharpness of several cubes.

    Parameters
    ----------
    sharpness : dict
        Per-band sharpness arrays, by label.
    fname : str
    wavelengths : None|numpy.ndarray
    split_band : None|int
        Marked with a vertical line when given.
    """

    figure = DiagnosticFigure('Band sharpness', ylabel='Variance of the Laplacian')
    for i, (label, values) in enumerate(sharpness.items()):
        x, xlabel = _band_axis(len(values), wavelengths)
        figure.axes.semilogy(x, values, label=label, color=PLOT_COLORS[i % len(PLOT_COLORS)])
        figure.axes.set_xlabel(xlabel)
    if split_band is not None:
        x, _ = _band_axis(len(next(iter(sharpness.values()))), wavelengths)
        figure.axes.axvline(x[split_band - 1], color='gray', linestyle='--')
    figure.axes.legend()
    figure.save(fname)

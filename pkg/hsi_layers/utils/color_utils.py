"""
A collection of basic color utils, for label map palettes and plot colors.
"""

__classification__ = "UNCLASSIFIED"



import numpy

from matplotlib import colors

# label 0 (background) first
LABEL_PALETTES = {
    'layers': ['black', 'red', 'green', 'blue'],
    'deep': ["#000000", "#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3",
             "#937860", "#DA8BC3", "#8C8C8C", "#CCB974", "#64B5CD"],
    'colorblind': ["#000000", "#0173B2", "#DE8F05", "#029E73", "#D55E00", "#CC78BC",
                   "#CA9161", "#FBAFE4", "#949494", "#ECE133", "#56B4E9"]}

PLOT_COLORS = ["#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3", "#937860"]


##############
# utility conversion functions

def to_rgb(color_value):
    """
    Convert any matplotlib color specification to a float rgb triple.

    Parameters
    ----------
    color_value : str|tuple

    Returns
    -------
    Tuple[float, float, float]
    """

    return colors.to_rgb(color_value)


def to_rgb_uint8(color_value):
    """
    Convert any matplotlib color specification to an 8-bit rgb triple.

    Parameters
    ----------
    color_value : str|tuple

    Returns
    -------
    Tuple[int, int, int]
    """

    return tuple(int(numpy.floor(entry*255 + 0.5)) for entry in to_rgb(color_value))


#######
# palette functions

def get_label_palette(palette, n_labels=None):
    """
    Gets the list of 8-bit rgb triples for a label palette, where entry `i` is
    the color of label `i`.

    Parameters
    ----------
    palette : str|Sequence
        Either the name of one of :data:`LABEL_PALETTES`, or a sequence of
        matplotlib color specifications.
    n_labels : None|int
        If provided, the palette must hold at least this many entries and it
        is truncated to this length.

    Returns
    -------
    List[Tuple[int, int, int]]
    """

    if isinstance(palette, str):
        if palette not in LABEL_PALETTES:
            raise ValueError('Unknown palette `{}`, expected one of {}'.format(palette, list(LABEL_PALETTES)))
        palette = LABEL_PALETTES[palette]
    out = [to_rgb_uint8(entry) for entry in palette]
    if n_labels is not None:
        if n_labels > len(out):
            raise ValueError('The palette holds {} colors, but {} labels are required'.format(len(out), n_labels))
        out = out[:n_labels]
    return out


def palette_bytes(rgb_palette):
    """
    Gets the flat 768 entry list expected by `PIL.Image.Image.putpalette`,
    padding unused entries with black.

    Parameters
    ----------
    rgb_palette : Sequence[Tuple[int, int, int]]

    Returns
    -------
    List[int]
    """

    if len(rgb_palette) > 256:
        raise ValueError('A palette image holds at most 256 colors')
    out = []
    for entry in rgb_palette:
        out.extend(int(value) for value in entry)
    out.extend([0]*(768 - len(out)))
    return out

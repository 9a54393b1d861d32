"""
Component tree attribute filters, attribute profiles and the extended
multi-attribute profile (EMAP) of a multi-channel image.

Gray level images are quantized to 256 levels before a component tree is
built. A max-tree holds the connected components of the upper level sets
`{f >= t}`, and attribute thinning removes bright components failing the
criterion `A(component) >= threshold` by giving their pixels the level of the
nearest surviving ancestor. A min-tree holds the components of lower level
sets, and attribute thickening is the dual operation on dark components.

Node attributes:

* `area` - the pixel count.
* `stddev` - the standard deviation of the member quantized gray levels.
* `moment` - the first Hu moment invariant of the member pixel coordinates,
  `(mu20 + mu02)/area**2` with `mu20`, `mu02` the second central moments
  along rows and columns.
"""

__classification__ = "UNCLASSIFIED"


import logging
from concurrent.futures import ThreadPoolExecutor

import numpy
from skimage.morphology import max_tree

from hsi_layers.base_elements import ConfigBase, FloatTupleDescriptor, IntegerDescriptor, \
    StringEnumDescriptor
from hsi_layers.cube import FeatureStack, as_feature_stack

logger = logging.getLogger(__name__)

LEVELS = 256
ATTRIBUTE_KINDS = ('area', 'stddev', 'moment')
FILTER_RULES = ('min', 'direct')
POLARITIES = ('max', 'min')
_CONNECTIVITY = {4: 1, 8: 2}


###########
# quantization

class QuantizedChannel(object):
    """
    A channel linearly mapped to the integer levels 0..255, remembering the
    original value range for de-quantization.
    """

    __slots__ = ('_levels', '_minimum', '_maximum')

    def __init__(self, levels, minimum, maximum):
        """

        Parameters
        ----------
        levels : numpy.ndarray
            Two dimensional integer array with values in [0, 255].
        minimum : float
        maximum : float
        """

        levels = numpy.asarray(levels)
        if levels.ndim != 2 or min(levels.shape) < 1:
            raise ValueError('Expected a non-empty two dimensional array, got shape {}'.format(levels.shape))
        if levels.min() < 0 or levels.max() > LEVELS - 1:
            raise ValueError('Levels must lie in [0, {}]'.format(LEVELS - 1))
        levels = levels.astype('uint8')
        levels.flags.writeable = False
        self._levels = levels
        self._minimum = float(minimum)
        self._maximum = float(maximum)

    @property
    def levels(self):
        """
        numpy.ndarray: The read-only uint8 levels.
        """

        return self._levels

    @property
    def minimum(self):
        return self._minimum

    @property
    def maximum(self):
        return self._maximum

    @property
    def shape(self):
        return self._levels.shape

    def dequantize(self, levels=None):
        """
        Map levels back onto the original value range, as
        `minimum + level/255*(maximum - minimum)`.

        Parameters
        ----------
        levels : None|numpy.ndarray
            Defaults to this channel's levels.

        Returns
        -------
        numpy.ndarray
        """

        if levels is None:
            levels = self._levels
        levels = numpy.asarray(levels, dtype='float64')
        return self._minimum + levels/(LEVELS - 1)*(self._maximum - self._minimum)


def quantize(channel):
    """
    Linearly map a channel onto the levels 0..255, rounding half up. A constant
    channel maps to level 0.

    Parameters
    ----------
    channel : numpy.ndarray

    Returns
    -------
    QuantizedChannel
    """

    channel = numpy.asarray(channel, dtype='float64')
    if channel.ndim != 2:
        raise ValueError('Expected a two dimensional channel, got shape {}'.format(channel.shape))
    if not numpy.all(numpy.isfinite(channel)):
        raise ValueError('Cannot quantize a channel with NaN or infinite values')
    minimum = float(channel.min())
    maximum = float(channel.max())
    if maximum == minimum:
        levels = numpy.zeros(channel.shape, dtype='uint8')
    else:
        levels = numpy.floor((channel - minimum)/(maximum - minimum)*(LEVELS - 1) + 0.5)
    return QuantizedChannel(levels, minimum, maximum)


###########
# component tree

def _max_tree(work, connectivity):
    """
    Gets the flat parent and traverser arrays of :func:`skimage.morphology.max_tree`.
    A single row or column is first embedded between two lines below every
    level, and that lowest component dropped again.
    """

    pad = [(1, 1) if size == 1 else (0, 0) for size in work.shape]
    if not any(before for before, _ in pad):
        parent, traverser = max_tree(work, connectivity=connectivity)
        return parent.ravel(), traverser

    padded = numpy.pad(work, pad, mode='constant', constant_values=work.min() - 1)
    position = numpy.pad(
        numpy.arange(work.size).reshape(work.shape), pad, mode='constant', constant_values=-1).ravel()
    parent, traverser = max_tree(padded, connectivity=connectivity)
    real = position >= 0
    parent = position[parent.ravel()[real]]
    # the lowest real component hangs off the padding
    orphan = parent < 0
    parent[orphan] = numpy.nonzero(orphan)[0]
    traverser = position[traverser[real[traverser]]]
    return parent, traverser


class ComponentTree(object):
    """
    A max-tree or min-tree of a quantized image with per-node attributes.
    Nodes are numbered so that every parent precedes its children, with the
    root as node 0 (its own parent).
    """

    def __init__(self, levels, polarity='max', connectivity=4):
        """

        Parameters
        ----------
        levels : QuantizedChannel|numpy.ndarray
            The integer gray levels.
        polarity : str
            `'max'` for bright components or `'min'` for dark components.
        connectivity : int
            4 or 8.
        """

        if isinstance(levels, QuantizedChannel):
            levels = levels.levels
        levels = numpy.asarray(levels)
        if levels.ndim != 2:
            raise ValueError('Expected a two dimensional image, got shape {}'.format(levels.shape))
        if min(levels.shape) < 1:
            raise ValueError('Expected a non-empty image, got shape {}'.format(levels.shape))
        if polarity not in POLARITIES:
            raise ValueError('polarity must be one of {}, got {}'.format(POLARITIES, polarity))
        if connectivity not in _CONNECTIVITY:
            raise ValueError('connectivity must be 4 or 8, got {}'.format(connectivity))

        self._shape = levels.shape
        self._polarity = polarity
        self._connectivity = connectivity
        values = levels.astype('int64').ravel()
        work = values if polarity == 'max' else (LEVELS - 1) - values
        self._build(values, work)

    def _build(self, values, work):
        parent, traverser = _max_tree(work.reshape(self._shape), _CONNECTIVITY[self._connectivity])
        indices = numpy.arange(values.size)

        canonical = (work[parent] != work) | (parent == indices)
        representative = numpy.where(canonical, indices, parent)
        while True:
            # follow parents within flat zones until a canonical pixel is reached
            step = numpy.where(canonical[representative], representative, parent[representative])
            if numpy.array_equal(step, representative):
                break
            representative = step

        order = traverser[canonical[traverser]]
        node_id = numpy.full(values.size, -1, dtype='int64')
        node_id[order] = numpy.arange(order.size)
        self._pixel_node = node_id[representative]
        self._parent = node_id[representative[parent[order]]]
        self._parent[0] = 0
        self._levels = values[order]

        # nodes grouped by level, ordered from the root level outwards
        sort_key = work[order]
        ordering = numpy.argsort(sort_key, kind='stable')
        splits = numpy.nonzero(numpy.diff(sort_key[ordering]))[0] + 1
        self._groups = numpy.split(ordering, splits)
        if self._groups[0].size != 1 or self._groups[0][0] != 0:
            raise ValueError('Malformed component tree, the root level holds more than one node')
        self._compute_attributes(values)

    def _compute_attributes(self, values):
        rows, cols = self._shape
        row_coords = numpy.repeat(numpy.arange(rows, dtype='float64'), cols)
        col_coords = numpy.tile(numpy.arange(cols, dtype='float64'), rows)
        values = values.astype('float64')
        count = self._levels.size

        weights = [None, values, values*values, row_coords, col_coords, row_coords*row_coords,
                   col_coords*col_coords]
        sums = numpy.empty((len(weights), count), dtype='float64')
        for i, entry in enumerate(weights):
            sums[i] = numpy.bincount(self._pixel_node, weights=entry, minlength=count)
        self._exclusive_area = sums[0].astype('int64')
        for group in reversed(self._groups[1:]):
            numpy.add.at(sums, (slice(None), self._parent[group]), sums[:, group])

        area = sums[0]
        mean = sums[1]/area
        self._area = area.astype('int64')
        self._stddev = numpy.sqrt(numpy.maximum(sums[2]/area - mean*mean, 0))
        mu20 = sums[5] - sums[3]*sums[3]/area
        mu02 = sums[6] - sums[4]*sums[4]/area
        self._moment = numpy.maximum(mu20 + mu02, 0)/(area*area)

    @property
    def shape(self):
        return self._shape

    @property
    def polarity(self):
        return self._polarity

    @property
    def connectivity(self):
        return self._connectivity

    @property
    def node_count(self):
        return self._levels.size

    @property
    def parent(self):
        """
        numpy.ndarray: The parent node of each node, the root being its own parent.
        """

        return self._parent

    @property
    def levels(self):
        """
        numpy.ndarray: The gray level of each node.
        """

        return self._levels

    @property
    def pixel_node(self):
        """
        numpy.ndarray: The (flat) node index of each pixel.
        """

        return self._pixel_node

    @property
    def area(self):
        return self._area

    @property
    def exclusive_area(self):
        """
        numpy.ndarray: The number of pixels of each node not in any child.
        """

        return self._exclusive_area

    @property
    def stddev(self):
        return self._stddev

    @property
    def moment(self):
        return self._moment

    def attribute(self, kind):
        """
        Gets the per-node values of the named attribute.

        Parameters
        ----------
        kind : str

        Returns
        -------
        numpy.ndarray
        """

        if kind == 'area':
            return self._area
        elif kind == 'stddev':
            return self._stddev
        elif kind == 'moment':
            return self._moment
        raise ValueError('Unknown attribute kind `{}`, expected one of {}'.format(kind, ATTRIBUTE_KINDS))

    def filter(self, kind, threshold, rule='min'):
        """
        Remove the components failing `attribute >= threshold`, the pixels of
        a removed node taking the level of its nearest surviving ancestor. The
        root always survives.

        Parameters
        ----------
        kind : str
        threshold : float
        rule : str
            With `'min'` a node survives only if it and all its ancestors pass,
            with `'direct'` a node survives iff it passes. These agree for
            the increasing attribute `area`.

        Returns
        -------
        numpy.ndarray
            The filtered image, of the original integer levels.
        """

        if rule not in FILTER_RULES:
            raise ValueError('rule must be one of {}, got {}'.format(FILTER_RULES, rule))
        keep = self.attribute(kind) >= threshold
        keep[0] = True
        surviving = numpy.arange(self.node_count)
        for group in self._groups[1:]:
            parents = self._parent[group]
            if rule == 'min':
                keep[group] &= keep[parents]
            surviving[group] = numpy.where(keep[group], group, surviving[parents])
        return self._levels[surviving][self._pixel_node].reshape(self._shape)


def build_tree(img, polarity='max', connectivity=4):
    """
    Build the component tree of a quantized channel.

    Parameters
    ----------
    img : QuantizedChannel|numpy.ndarray
    polarity : str
        `'max'` or `'min'`.
    connectivity : int
        4 or 8.

    Returns
    -------
    ComponentTree
    """

    return ComponentTree(img, polarity=polarity, connectivity=connectivity)


###########
# configuration

def auto_thresholds(kind, k, image_area):
    """
    Gets default increasing thresholds for an attribute. For `area` this is
    the geometric progression from `max(1, 0.001*image_area)` to
    `0.2*image_area`, rounded to integers and deduplicated; for `stddev` it is
    the linear progression from 2.5 to 50; for `moment` from 0.2 to 1.

    Parameters
    ----------
    kind : str
    k : int
        The number of thresholds.
    image_area : int
        The pixel count of the image.

    Returns
    -------
    numpy.ndarray
    """

    if k < 1:
        raise ValueError('At least one threshold is required, got k={}'.format(k))
    if kind == 'area':
        if image_area < 1:
            raise ValueError('image_area must be positive, got {}'.format(image_area))
        lower = max(1.0, 0.001*image_area)
        upper = max(lower, 0.2*image_area)
        values = numpy.unique(numpy.floor(numpy.geomspace(lower, upper, k) + 0.5))
        if values.size < k:
            logger.warning('Only {} distinct area thresholds of the {} requested for image area {}'.format(
                values.size, k, image_area))
    elif kind == 'stddev':
        values = numpy.linspace(2.5, 50.0, k)
    elif kind == 'moment':
        values = numpy.linspace(0.2, 1.0, k)
    else:
        raise ValueError('Unknown attribute kind `{}`, expected one of {}'.format(kind, ATTRIBUTE_KINDS))
    if values.size < 1:
        raise ValueError('No distinct thresholds for kind {}, k={}, image area {}'.format(kind, k, image_area))
    return values


class ApConfig(ConfigBase):
    """
    The configuration of an attribute profile.
    """

    _fields = ('kind', 'thresholds', 'connectivity', 'rule')
    kind = StringEnumDescriptor(
        'kind', ATTRIBUTE_KINDS, default_value='area', docstring='The attribute.')  # type: str
    thresholds = FloatTupleDescriptor(
        'thresholds', length=(1, 10000),
        docstring='The strictly increasing thresholds.')  # type: tuple
    connectivity = IntegerDescriptor(
        'connectivity', default_value=4, bounds=(4, 8), docstring='The pixel connectivity, 4 or 8.')  # type: int
    rule = StringEnumDescriptor(
        'rule', FILTER_RULES, default_value='min',
        docstring='The filtering rule for non-increasing attributes.')  # type: str

    def __init__(self, **kwargs):
        super(ApConfig, self).__init__(**kwargs)
        if self.thresholds is None:
            raise ValueError('ApConfig requires thresholds')
        if any(upper <= lower for lower, upper in zip(self.thresholds[:-1], self.thresholds[1:])):
            raise ValueError('Thresholds must be strictly increasing, got {}'.format(self.thresholds))
        if min(self.thresholds) < 0:
            raise ValueError('Thresholds must be non-negative, got {}'.format(self.thresholds))
        if self.connectivity not in _CONNECTIVITY:
            raise ValueError('connectivity must be 4 or 8, got {}'.format(self.connectivity))

    @classmethod
    def auto(cls, kind, k, image_area, connectivity=4, rule='min'):
        """
        Construct with thresholds from :func:`auto_thresholds`.

        Parameters
        ----------
        kind : str
        k : int
        image_area : int
        connectivity : int
        rule : str

        Returns
        -------
        ApConfig
        """

        thresholds = auto_thresholds(kind, k, image_area)
        return cls(kind=kind, thresholds=[float(entry) for entry in thresholds],
                   connectivity=connectivity, rule=rule)

    @property
    def k(self):
        return len(self.thresholds)

    @property
    def profile_length(self):
        return 2*self.k + 1

    def profile_names(self, prefix=''):
        """
        Gets the channel names of the profile, thickenings first.

        Parameters
        ----------
        prefix : str

        Returns
        -------
        List[str]
        """

        thick = ['{}{}:thick:{:g}'.format(prefix, self.kind, entry) for entry in reversed(self.thresholds)]
        thin = ['{}{}:thin:{:g}'.format(prefix, self.kind, entry) for entry in self.thresholds]
        return thick + ['{}{}:f'.format(prefix, self.kind)] + thin


###########
# filters and profiles

def _levels_of(img):
    if isinstance(img, QuantizedChannel):
        return img.levels
    img = numpy.asarray(img)
    if img.ndim != 2:
        raise ValueError('Expected a two dimensional image, got shape {}'.format(img.shape))
    if not numpy.issubdtype(img.dtype, numpy.integer):
        if not numpy.all(numpy.equal(numpy.mod(img, 1), 0)):
            raise ValueError('Attribute filters require integer gray levels, quantize the image first')
    if img.min() < 0 or img.max() > LEVELS - 1:
        raise ValueError('Gray levels must lie in [0, {}]'.format(LEVELS - 1))
    return img.astype('int64')


def _filter_image(img, threshold, cfg, polarity):
    if threshold < 0:
        raise ValueError('The threshold must be non-negative, got {}'.format(threshold))
    if cfg is None:
        cfg = ApConfig(thresholds=[float(threshold)])
    tree = ComponentTree(_levels_of(img), polarity=polarity, connectivity=cfg.connectivity)
    return tree.filter(cfg.kind, threshold, rule=cfg.rule)


def attribute_thinning(img, threshold, cfg=None):
    """
    Attribute thinning, which merges the bright components failing the
    criterion into their surroundings. A threshold of 0 returns the input.

    Parameters
    ----------
    img : QuantizedChannel|numpy.ndarray
        Integer gray levels in [0, 255].
    threshold : float
    cfg : None|ApConfig
        Provides the attribute kind, connectivity and rule. The thresholds of
        the configuration are not used. Defaults to area with 4-connectivity.

    Returns
    -------
    numpy.ndarray
    """

    return _filter_image(img, threshold, cfg, 'max')


def attribute_thickening(img, threshold, cfg=None):
    """
    Attribute thickening, the dual of :func:`attribute_thinning` on dark components.

    Parameters
    ----------
    img : QuantizedChannel|numpy.ndarray
    threshold : float
    cfg : None|ApConfig

    Returns
    -------
    numpy.ndarray
    """

    return _filter_image(img, threshold, cfg, 'min')


def _profile_levels(levels, cfg, trees):
    """
    Gets the `(2k+1, rows, cols)` integer attribute profile, reusing the trees
    cached by `(polarity, connectivity)`.
    """

    for polarity in POLARITIES:
        key = (polarity, cfg.connectivity)
        if key not in trees:
            trees[key] = ComponentTree(levels, polarity=polarity, connectivity=cfg.connectivity)
    max_tree_, min_tree_ = trees[('max', cfg.connectivity)], trees[('min', cfg.connectivity)]
    out = numpy.empty((cfg.profile_length, ) + levels.shape, dtype='uint8')
    for i, threshold in enumerate(reversed(cfg.thresholds)):
        out[i] = min_tree_.filter(cfg.kind, threshold, rule=cfg.rule)
    out[cfg.k] = levels
    for i, threshold in enumerate(cfg.thresholds):
        out[cfg.k + 1 + i] = max_tree_.filter(cfg.kind, threshold, rule=cfg.rule)
    return out


def attribute_profile(img, cfg):
    """
    Gets the attribute profile `[thickenings at thresholds k..1, img,
    thinnings at thresholds 1..k]`, of length `2k+1`.

    Parameters
    ----------
    img : QuantizedChannel|numpy.ndarray
        Integer gray levels in [0, 255].
    cfg : ApConfig

    Returns
    -------
    FeatureStack
    """

    levels = _levels_of(img)
    profile = _profile_levels(levels, cfg, {})
    return FeatureStack(profile.astype('float64'), names=cfg.profile_names(),
                        chain='attribute_profile({})'.format(cfg.kind))


def _channel_emap(channel, name, cfgs):
    quantized = quantize(channel)
    trees = {}
    parts = []
    names = []
    for cfg in cfgs:
        profile = _profile_levels(quantized.levels, cfg, trees)
        parts.append(quantized.dequantize(profile).astype('float32'))
        names.extend(cfg.profile_names(prefix='{}:'.format(name)))
    return numpy.concatenate(parts, axis=0), names


def emap(stack, cfgs, n_jobs=1):
    """
    Gets the extended multi-attribute profile. Each base channel is quantized,
    its attribute profile computed for each configuration, and the profiles
    mapped back onto the channel's value range. The result holds
    `channels * sum(2k+1)` float32 channels, ordered by base channel, then by
    configuration.

    Parameters
    ----------
    stack : HsiCube|FeatureStack
    cfgs : ApConfig|Sequence[ApConfig]
    n_jobs : int
        The number of worker threads across base channels.

    Returns
    -------
    FeatureStack
    """

    if isinstance(cfgs, ApConfig):
        cfgs = [cfgs]
    cfgs = list(cfgs)
    if len(cfgs) == 0:
        raise ValueError('At least one ApConfig is required')
    stack = as_feature_stack(stack)
    logger.info('Computing EMAP of {} channels with {} configurations, {} output channels'.format(
        stack.channels, len(cfgs), stack.channels*sum(cfg.profile_length for cfg in cfgs)))

    def work(index):
        return _channel_emap(stack.data[index], stack.names[index], cfgs)

    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            results = list(executor.map(work, range(stack.channels)))
    else:
        results = [work(index) for index in range(stack.channels)]

    names = []
    for _, entry in results:
        names.extend(entry)
    description = ', '.join('{}(k={})'.format(cfg.kind, cfg.k) for cfg in cfgs)
    chain = 'emap[{}]'.format(description)
    if stack.chain is not None:
        chain = '{} -> {}'.format(stack.chain, chain)
    return FeatureStack(numpy.concatenate([data for data, _ in results], axis=0), names=names, chain=chain)

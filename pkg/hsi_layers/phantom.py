"""
Synthetic layered drawings with exact ground truth.

A phantom is drawn as three layers of random quadratic strokes on a paper
substrate: red chalk, diluted red chalk, then ink, each later layer partially
occluding the earlier ones according to per-stroke coverage. The scene
reflectance is shaded by a smooth surface relief gain, lit by a column
gradient illumination field, weighted by a sensor sensitivity curve and
captured twice, with the short (H1) and the long (H2) wavelengths in focus.
Every random draw comes from one stream seeded by the spec.
"""

__classification__ = "UNCLASSIFIED"


import logging
import os

import numpy
from scipy import ndimage

from hsi_layers.base_elements import ConfigBase, FloatDescriptor, FloatPairTupleDescriptor, \
    FloatTupleDescriptor, IntegerDescriptor, StringEnumDescriptor, TypedDescriptor
from hsi_layers.cube import HsiCube, save_cube
from hsi_layers.utils.image_utils import save_label_map

logger = logging.getLogger(__name__)

LABELINGS = ('overlay', 'layers')
CLASS_NAMES = {
    'overlay': ('red chalk', 'red chalk under ink', 'ink'),
    'layers': ('red chalk', 'diluted red chalk', 'ink')}
MATERIALS = ('substrate', 'chalk', 'diluted', 'ink')


###########
# materials

class MaterialCurves(ConfigBase):
    """
    Piecewise linear reflectance curves, as `(band fraction, reflectance)`
    knots where the band fraction runs from 0 (first band) to 1 (last band).
    The diluted chalk curve, when not given, is the blend
    `dilution*chalk + (1 - dilution)*substrate`.
    """

    _fields = ('substrate', 'chalk', 'diluted', 'ink', 'dilution')
    substrate = FloatPairTupleDescriptor(
        'substrate', length=(1, 1000), default_value=((0.0, 0.85), (1.0, 0.85)),
        docstring='Paper substrate knots.')  # type: tuple
    chalk = FloatPairTupleDescriptor(
        'chalk', length=(1, 1000),
        default_value=((0.0, 0.18), (0.30, 0.22), (0.42, 0.55), (0.60, 0.65), (1.0, 0.70)),
        docstring='Red chalk knots.')  # type: tuple
    diluted = FloatPairTupleDescriptor(
        'diluted', length=(1, 1000), docstring='Diluted red chalk knots.')  # type: tuple
    ink = FloatPairTupleDescriptor(
        'ink', length=(1, 1000), default_value=((0.0, 0.06), (0.60, 0.07), (1.0, 0.14)),
        docstring='Ink knots.')  # type: tuple
    dilution = FloatDescriptor(
        'dilution', default_value=0.5, bounds=(0, 1),
        docstring='Chalk fraction of the diluted chalk blend.')  # type: float

    def __init__(self, **kwargs):
        super(MaterialCurves, self).__init__(**kwargs)
        for name in ('substrate', 'chalk', 'diluted', 'ink'):
            knots = getattr(self, name)
            if knots is None:
                continue
            fractions = [entry[0] for entry in knots]
            values = [entry[1] for entry in knots]
            if any(upper <= lower for lower, upper in zip(fractions[:-1], fractions[1:])):
                raise ValueError('The {} curve knots must have strictly increasing band fractions'.format(name))
            if min(fractions) < 0 or max(fractions) > 1:
                raise ValueError('The {} curve band fractions must lie in [0, 1]'.format(name))
            if min(values) < 0 or max(values) > 1:
                raise ValueError('The {} curve reflectances must lie in [0, 1]'.format(name))

    def evaluate(self, bands):
        """
        Gets the per-band reflectance of every material.

        Parameters
        ----------
        bands : int

        Returns
        -------
        Dict[str, numpy.ndarray]
        """

        fractions = numpy.linspace(0.0, 1.0, bands)

        def curve(knots):
            knots = numpy.array(knots, dtype='float64')
            return numpy.interp(fractions, knots[:, 0], knots[:, 1])

        out = {'substrate': curve(self.substrate), 'chalk': curve(self.chalk), 'ink': curve(self.ink)}
        if self.diluted is None:
            out['diluted'] = self.dilution*out['chalk'] + (1 - self.dilution)*out['substrate']
        else:
            out['diluted'] = curve(self.diluted)
        return out


def default_materials():
    """
    Gets the default material curves: a flat bright substrate, a red chalk
    which is dark below the orange bands and bright towards the red and near
    infrared, the diluted chalk as the midpoint of chalk and substrate, and an
    ink which is dark throughout with a gentle rise at the near infrared end.

    Returns
    -------
    MaterialCurves
    """

    return MaterialCurves()


###########
# the phantom specification

def _check_range(name, value, lower=None):
    if value[0] > value[1]:
        raise ValueError('{} must be an ordered (low, high) range, got {}'.format(name, value))
    if lower is not None and value[0] < lower:
        raise ValueError('{} must not go below {}, got {}'.format(name, lower, value))


class PhantomSpec(ConfigBase):
    """
    The parameters of a synthetic layered drawing.
    """

    _fields = (
        'rows', 'cols', 'bands', 'wavelength_range', 'chalk_strokes', 'diluted_strokes', 'ink_strokes',
        'chalk_width', 'diluted_width', 'ink_width', 'stroke_length', 'chalk_coverage', 'diluted_coverage',
        'ink_coverage', 'materials', 'illumination_range', 'sensitivity_floor', 'sensitivity_center',
        'sensitivity_width', 'shading_amplitude', 'shading_sigma', 'noise_sd', 'focus_blue_band',
        'focus_red_band', 'blur_rate', 'max_blur', 'labeling', 'seed')
    rows = IntegerDescriptor('rows', default_value=200, bounds=(2, None), docstring='Image rows.')  # type: int
    cols = IntegerDescriptor('cols', default_value=200, bounds=(2, None), docstring='Image columns.')  # type: int
    bands = IntegerDescriptor('bands', default_value=258, bounds=(2, None), docstring='Spectral bands.')  # type: int
    wavelength_range = FloatTupleDescriptor(
        'wavelength_range', length=2, default_value=(400.0, 1000.0),
        docstring='First and last band wavelengths (nm), for labeling only.')  # type: tuple
    chalk_strokes = IntegerDescriptor(
        'chalk_strokes', default_value=10, bounds=(0, None), docstring='Red chalk strokes.')  # type: int
    diluted_strokes = IntegerDescriptor(
        'diluted_strokes', default_value=6, bounds=(0, None), docstring='Diluted red chalk strokes.')  # type: int
    ink_strokes = IntegerDescriptor(
        'ink_strokes', default_value=14, bounds=(0, None), docstring='Ink strokes.')  # type: int
    chalk_width = FloatTupleDescriptor(
        'chalk_width', length=2, default_value=(4.0, 9.0), docstring='Chalk stroke width range (pixels).')  # type: tuple
    diluted_width = FloatTupleDescriptor(
        'diluted_width', length=2, default_value=(8.0, 14.0),
        docstring='Diluted chalk stroke width range (pixels).')  # type: tuple
    ink_width = FloatTupleDescriptor(
        'ink_width', length=2, default_value=(2.0, 4.0), docstring='Ink stroke width range (pixels).')  # type: tuple
    stroke_length = FloatTupleDescriptor(
        'stroke_length', length=2, default_value=(40.0, 120.0),
        docstring='Stroke end point distance range (pixels).')  # type: tuple
    chalk_coverage = FloatTupleDescriptor(
        'chalk_coverage', length=2, default_value=(0.4, 1.0),
        docstring='Per-stroke chalk coverage range.')  # type: tuple
    diluted_coverage = FloatTupleDescriptor(
        'diluted_coverage', length=2, default_value=(0.6, 1.0),
        docstring='Per-stroke diluted chalk coverage range.')  # type: tuple
    ink_coverage = FloatTupleDescriptor(
        'ink_coverage', length=2, default_value=(0.55, 0.95),
        docstring='Per-stroke ink coverage range.')  # type: tuple
    materials = TypedDescriptor(
        'materials', MaterialCurves, default_value=MaterialCurves(),
        docstring='The material reflectance curves.')  # type: MaterialCurves
    illumination_range = FloatTupleDescriptor(
        'illumination_range', length=2, default_value=(0.55, 1.0),
        docstring='Illumination at the first and last column.')  # type: tuple
    sensitivity_floor = FloatDescriptor(
        'sensitivity_floor', default_value=0.25, bounds=(0, 1),
        docstring='Sensitivity far from the peak, relative to the peak.')  # type: float
    sensitivity_center = FloatDescriptor(
        'sensitivity_center', default_value=0.55, bounds=(0, 1),
        docstring='Sensitivity peak position, as band fraction.')  # type: float
    sensitivity_width = FloatDescriptor(
        'sensitivity_width', default_value=0.45, bounds=(0, None),
        docstring='Sensitivity peak width, as band fraction.')  # type: float
    shading_amplitude = FloatDescriptor(
        'shading_amplitude', default_value=0.12, bounds=(0, 0.9),
        docstring='Maximum relative gain of the surface relief shading.')  # type: float
    shading_sigma = FloatDescriptor(
        'shading_sigma', default_value=12.0, bounds=(0, None),
        docstring='Smoothness (pixels) of the surface relief shading.')  # type: float
    noise_sd = FloatDescriptor(
        'noise_sd', default_value=0.003, bounds=(0, None),
        docstring='Standard deviation of the additive sensor noise.')  # type: float
    focus_blue_band = IntegerDescriptor(
        'focus_blue_band', default_value=20, bounds=(1, None),
        docstring='The in-focus band (1-based) of the H1 capture.')  # type: int
    focus_red_band = IntegerDescriptor(
        'focus_red_band', default_value=130, bounds=(1, None),
        docstring='The in-focus band (1-based) of the H2 capture.')  # type: int
    blur_rate = FloatDescriptor(
        'blur_rate', default_value=0.03, bounds=(0, None),
        docstring='Blur standard deviation (pixels) per band away from focus.')  # type: float
    max_blur = FloatDescriptor(
        'max_blur', default_value=4.0, bounds=(0, None),
        docstring='Maximum blur standard deviation (pixels).')  # type: float
    labeling = StringEnumDescriptor(
        'labeling', LABELINGS, default_value='overlay', docstring='The ground truth class labeling.')  # type: str
    seed = IntegerDescriptor('seed', default_value=0, bounds=(0, None), docstring='The master seed.')  # type: int

    def __init__(self, **kwargs):
        super(PhantomSpec, self).__init__(**kwargs)
        for name in ('chalk_width', 'diluted_width', 'ink_width', 'stroke_length'):
            _check_range(name, getattr(self, name), lower=0)
        for name in ('chalk_coverage', 'diluted_coverage', 'ink_coverage'):
            value = getattr(self, name)
            _check_range(name, value, lower=0)
            if value[1] > 1:
                raise ValueError('{} must not exceed 1, got {}'.format(name, value))
        _check_range('illumination_range', self.illumination_range)
        if min(self.illumination_range) <= 0:
            raise ValueError('Illumination must be positive, got {}'.format(self.illumination_range))
        if self.sensitivity_floor <= 0:
            raise ValueError('sensitivity_floor must be positive')
        for name in ('focus_blue_band', 'focus_red_band'):
            if getattr(self, name) > self.bands:
                raise ValueError('{} {} exceeds the band count {}'.format(name, getattr(self, name), self.bands))

    def wavelengths(self):
        return numpy.linspace(self.wavelength_range[0], self.wavelength_range[1], self.bands)


###########
# outputs

class GroundTruth(object):
    """
    The per-pixel class labels of a phantom, 0 being background and `1..C`
    the classes named by `class_names`.
    """

    __slots__ = ('labels', 'class_names', 'labeling')

    def __init__(self, labels, labeling='overlay'):
        if labeling not in LABELINGS:
            raise ValueError('labeling must be one of {}, got {}'.format(LABELINGS, labeling))
        labels = numpy.asarray(labels, dtype='int64')
        if labels.ndim != 2:
            raise ValueError('Expected a two dimensional label map, got shape {}'.format(labels.shape))
        if labels.min() < 0 or labels.max() > len(CLASS_NAMES[labeling]):
            raise ValueError('Labels outside of [0, {}]'.format(len(CLASS_NAMES[labeling])))
        self.labels = labels
        self.labeling = labeling
        self.class_names = CLASS_NAMES[labeling]

    def class_sizes(self):
        return numpy.bincount(self.labels.ravel(), minlength=len(self.class_names) + 1)


class PhantomData(object):
    """
    The generated cubes and the injected acquisition effects.
    """

    def __init__(self, spec, clean, h1, h2, white_ref, ground_truth, illumination, sensitivity, shading):
        """

        Parameters
        ----------
        spec : PhantomSpec
        clean : HsiCube
            The shaded scene reflectance, without illumination, sensitivity, blur or noise.
        h1 : HsiCube
            The capture focused at `spec.focus_blue_band`.
        h2 : HsiCube
            The capture focused at `spec.focus_red_band`.
        white_ref : HsiCube
            The substrate-only capture under the same illumination and sensitivity.
        ground_truth : GroundTruth
        illumination : numpy.ndarray
            The injected `(rows, cols)` illumination field, maximum 1.
        sensitivity : numpy.ndarray
            The injected per-band sensitivity, maximum 1.
        shading : numpy.ndarray
            The injected `(rows, cols)` surface relief gain.
        """

        self.spec = spec
        self.clean = clean
        self.h1 = h1
        self.h2 = h2
        self.white_ref = white_ref
        self.ground_truth = ground_truth
        self.illumination = illumination
        self.sensitivity = sensitivity
        self.shading = shading


###########
# generation

def _stroke_mask(rng, rows, cols, width_range, length_range):
    """
    Rasterize one random quadratic Bezier stroke.

    Returns
    -------
    numpy.ndarray
        The boolean stroke mask.
    """

    start = rng.uniform((0.0, 0.0), (rows - 1.0, cols - 1.0))
    angle = rng.uniform(0.0, 2*numpy.pi)
    length = rng.uniform(length_range[0], length_range[1])
    bend = rng.uniform(-0.35, 0.35)*length
    width = rng.uniform(width_range[0], width_range[1])

    direction = numpy.array([numpy.cos(angle), numpy.sin(angle)])
    normal = numpy.array([-direction[1], direction[0]])
    end = start + length*direction
    control = 0.5*(start + end) + bend*normal
    t = numpy.linspace(0.0, 1.0, max(2, int(4*length) + 1))[:, numpy.newaxis]
    points = (1 - t)**2*start + 2*(1 - t)*t*control + t**2*end
    points = numpy.floor(points + 0.5).astype('int64')
    inside = (points[:, 0] >= 0) & (points[:, 0] < rows) & (points[:, 1] >= 0) & (points[:, 1] < cols)
    if not numpy.any(inside):
        return numpy.zeros((rows, cols), dtype='bool')
    points = points[inside]
    background = numpy.ones((rows, cols), dtype='bool')
    background[points[:, 0], points[:, 1]] = False
    return ndimage.distance_transform_edt(background) <= 0.5*width


def _layer_coverage(rng, spec, count, width_range, coverage_range):
    """
    Gets the coverage of one layer, the maximum over its strokes.
    """

    coverage = numpy.zeros((spec.rows, spec.cols), dtype='float64')
    for _ in range(count):
        mask = _stroke_mask(rng, spec.rows, spec.cols, width_range, spec.stroke_length)
        alpha = rng.uniform(coverage_range[0], coverage_range[1])
        coverage[mask] = numpy.maximum(coverage[mask], alpha)
    return coverage


def sensitivity_curve(spec):
    """
    Gets the injected sensor sensitivity, a Gaussian bell over the band
    fraction above a floor, normalized to maximum 1.

    Parameters
    ----------
    spec : PhantomSpec

    Returns
    -------
    numpy.ndarray
    """

    fractions = numpy.linspace(0.0, 1.0, spec.bands)
    if spec.sensitivity_width > 0:
        bell = numpy.exp(-0.5*((fractions - spec.sensitivity_center)/spec.sensitivity_width)**2)
    else:
        bell = numpy.zeros_like(fractions)
    curve = spec.sensitivity_floor + (1 - spec.sensitivity_floor)*bell
    return curve/curve.max()


def illumination_field(spec):
    """
    Gets the injected illumination, a linear gradient along the columns,
    normalized to maximum 1.

    Parameters
    ----------
    spec : PhantomSpec

    Returns
    -------
    numpy.ndarray
    """

    low, high = spec.illumination_range
    profile = numpy.linspace(low, high, spec.cols)
    field = numpy.repeat(profile[numpy.newaxis, :], spec.rows, axis=0)
    return field/field.max()


def _shading_gain(rng, spec):
    noise = rng.standard_normal((spec.rows, spec.cols))
    if spec.shading_amplitude == 0:
        return numpy.ones((spec.rows, spec.cols), dtype='float64')
    smooth = ndimage.gaussian_filter(noise, spec.shading_sigma, mode='reflect') if spec.shading_sigma > 0 else noise
    peak = numpy.abs(smooth).max()
    if peak > 0:
        smooth = smooth/peak
    return 1.0 + spec.shading_amplitude*smooth


def _labels(chalk, diluted, ink, labeling):
    has_chalk = (chalk > 0) | (diluted > 0)
    has_ink = ink > 0
    labels = numpy.zeros(chalk.shape, dtype='int64')
    if labeling == 'overlay':
        labels[has_chalk] = 1
        labels[has_chalk & has_ink] = 2
        labels[has_ink & ~has_chalk] = 3
    else:
        labels[chalk > 0] = 1
        labels[diluted > 0] = 2
        labels[has_ink] = 3
    return labels


def _blur_sigmas(spec, focus_band):
    offsets = numpy.abs(numpy.arange(1, spec.bands + 1) - focus_band)
    return numpy.minimum(spec.max_blur, spec.blur_rate*offsets)


def generate(spec=None):
    """
    Generate a phantom.

    Parameters
    ----------
    spec : None|PhantomSpec

    Returns
    -------
    PhantomData
    """

    if spec is None:
        spec = PhantomSpec()
    rng = numpy.random.default_rng(spec.seed)
    rows, cols, bands = spec.rows, spec.cols, spec.bands

    chalk = _layer_coverage(rng, spec, spec.chalk_strokes, spec.chalk_width, spec.chalk_coverage)
    diluted = _layer_coverage(rng, spec, spec.diluted_strokes, spec.diluted_width, spec.diluted_coverage)
    ink = _layer_coverage(rng, spec, spec.ink_strokes, spec.ink_width, spec.ink_coverage)
    shading = _shading_gain(rng, spec)

    # later layers occlude earlier ones by their coverage
    weights = numpy.stack([
        (1 - chalk)*(1 - diluted)*(1 - ink),
        chalk*(1 - diluted)*(1 - ink),
        diluted*(1 - ink),
        ink], axis=-1).reshape((-1, 4))
    curves = spec.materials.evaluate(bands)
    spectra = numpy.stack([curves[name] for name in MATERIALS], axis=0)
    reflectance = weights.dot(spectra).T.reshape((bands, rows, cols))

    illumination = illumination_field(spec)
    sensitivity = sensitivity_curve(spec)
    blue_sigmas = _blur_sigmas(spec, spec.focus_blue_band)
    red_sigmas = _blur_sigmas(spec, spec.focus_red_band)

    clean = numpy.empty((bands, rows, cols), dtype='float32')
    h1 = numpy.empty((bands, rows, cols), dtype='float32')
    h2 = numpy.empty((bands, rows, cols), dtype='float32')
    white = numpy.empty((bands, rows, cols), dtype='float32')
    for band in range(bands):
        scene = reflectance[band]*shading
        clean[band] = scene
        captured = scene*illumination*sensitivity[band]
        for target, sigma in ((h1, blue_sigmas[band]), (h2, red_sigmas[band])):
            blurred = ndimage.gaussian_filter(captured, sigma, mode='nearest') if sigma > 0 else captured
            target[band] = blurred + rng.normal(0.0, spec.noise_sd, (rows, cols)) if spec.noise_sd > 0 else blurred
        white_band = curves['substrate'][band]*illumination*sensitivity[band]
        white[band] = white_band + rng.normal(0.0, spec.noise_sd, (rows, cols)) if spec.noise_sd > 0 else white_band

    ground_truth = GroundTruth(_labels(chalk, diluted, ink, spec.labeling), labeling=spec.labeling)
    wavelengths = spec.wavelengths()
    logger.info('Generated a {} x {} x {} phantom, class sizes {}'.format(
        rows, cols, bands, ground_truth.class_sizes().tolist()))
    return PhantomData(
        spec,
        HsiCube(clean, wavelengths=wavelengths, chain='phantom_clean'),
        HsiCube(h1, wavelengths=wavelengths),
        HsiCube(h2, wavelengths=wavelengths),
        HsiCube(white, wavelengths=wavelengths),
        ground_truth, illumination, sensitivity, shading)


def write_phantom(data, directory):
    """
    Write the phantom cubes (`clean`, `h1`, `h2` and `white_ref` ENVI files), the
    ground truth palette PNG and the spec json into the directory.

    Parameters
    ----------
    data : PhantomData
    directory : str

    Returns
    -------
    Dict[str, str]
        The written file paths, by artifact name.
    """

    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name in ('clean', 'h1', 'h2', 'white_ref'):
        paths[name] = os.path.join(directory, '{}.hdr'.format(name))
        save_cube(getattr(data, name), paths[name])
    paths['ground_truth'] = os.path.join(directory, 'ground_truth.png')
    save_label_map(data.ground_truth.labels, paths['ground_truth'])
    paths['spec'] = os.path.join(directory, 'phantom.json')
    data.spec.to_json_file(paths['spec'])
    logger.info('Wrote phantom to {}'.format(directory))
    return paths

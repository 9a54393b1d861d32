"""
The feature variant experiment matrix: input loading, the processing chain of
each feature variant, repeated evaluation, and the written reports, tables and
label maps.

Feature variants:

* `SimRGB` - simulated RGB of the focus stacked, sensitivity normalized cube.
* `SimRGB-IC` - simulated RGB of the additionally illumination corrected cube.
* `SimRGB-IC-SI` - `SimRGB-IC` with its saturation and intensity.
* `SimRGB-IC-EMAP` - the EMAP of `SimRGB-IC`.
* `HSI` - the focus stacked, sensitivity normalized cube.
* `HSI-IC` - the additionally illumination corrected cube.
* `HSI-DR` - the principal components of `HSI-IC`.
* `HSI-h` - the hyper-hue of `HSI-IC`.
* `HSIhSI` - `HSI-IC` with its hyper-hue, saturation and intensity.
* `HSIhSI-DR` - the principal components of `HSIhSI`.
* `HSI-EMAP` - the EMAP of `HSI-DR`.
* `HSIhSI-EMAP` - the EMAP of `HSIhSI-DR`.
"""

__classification__ = "UNCLASSIFIED"


import hashlib
import json
import logging
import os
from collections import OrderedDict

import pandas

from hsi_layers.base_elements import BooleanDescriptor, ConfigBase, FloatDescriptor, IntegerDescriptor, \
    IntegerTupleDescriptor, StringDescriptor, StringEnumDescriptor, StringTupleDescriptor, TypedDescriptor
from hsi_layers.chromatic import ACHROMATIC_EPSILON, hsi_transform
from hsi_layers.cube import RgbBands, load_cube, load_feature_stack, save_feature_stack, simulate_rgb, \
    stack_features
from hsi_layers.dimred import fit_pca, transform_pca
from hsi_layers.file_types import header_path_for
from hsi_layers.learn import SUMMARY_COLUMNS, Protocol, evaluate, summary_frame
from hsi_layers.morpho import ATTRIBUTE_KINDS, FILTER_RULES, ApConfig, emap
from hsi_layers.phantom import PhantomSpec, generate
from hsi_layers.preprocess import DEFAULT_SPLIT_BAND, preprocess_cube
from hsi_layers.utils.image_utils import load_label_map, save_label_map

logger = logging.getLogger(__name__)

VARIANTS = (
    'SimRGB', 'SimRGB-IC', 'SimRGB-IC-SI', 'SimRGB-IC-EMAP', 'HSI', 'HSI-IC', 'HSI-DR', 'HSI-h',
    'HSIhSI', 'HSIhSI-DR', 'HSI-EMAP', 'HSIhSI-EMAP')
ABLATION_VARIANTS = ('SimRGB-IC', 'HSI-IC')
ABLATION_SOURCES = ('H1', 'H2', 'Focus Stacking')
FLOAT_FORMAT = '%.6f'


class ExperimentConfig(ConfigBase):
    """
    The configuration of an experiment run. Inputs are either the ENVI cubes
    and ground truth label map given by path, or a phantom specification.
    """

    _fields = (
        'h1', 'h2', 'white_ref', 'ground_truth', 'phantom', 'class_names', 'split_band', 'focus_mode',
        'white_region', 'illumination_sigma', 'rgb_bands', 'variants', 'protocol', 'pca_target',
        'emap_kind', 'emap_k', 'connectivity', 'rule', 'epsilon', 'output_dir', 'palette', 'cache',
        'ablation', 'n_jobs')
    h1 = StringDescriptor(
        'h1', docstring='Header path of the short wavelength focused cube.')  # type: str
    h2 = StringDescriptor(
        'h2', docstring='Header path of the long wavelength focused cube.')  # type: str
    white_ref = StringDescriptor(
        'white_ref', docstring='Header path of the white reference cube.')  # type: str
    ground_truth = StringDescriptor(
        'ground_truth', docstring='Path of the ground truth label map image.')  # type: str
    phantom = TypedDescriptor(
        'phantom', PhantomSpec, docstring='Generate the inputs from this phantom specification.')  # type: PhantomSpec
    class_names = StringTupleDescriptor(
        'class_names', docstring='Names of the ground truth classes 1..C.')  # type: tuple
    split_band = IntegerDescriptor(
        'split_band', default_value=DEFAULT_SPLIT_BAND, bounds=(1, None),
        docstring='Last (1-based) channel taken from H1 when focus stacking.')  # type: int
    focus_mode = StringEnumDescriptor(
        'focus_mode', ('fixed', 'sharpness'), default_value='fixed',
        docstring='Focus stacking by fixed split band, or by per-channel sharpness.')  # type: str
    white_region = IntegerTupleDescriptor(
        'white_region', length=4,
        docstring='White reference region (row_start, row_end, col_start, col_end).')  # type: tuple
    illumination_sigma = FloatDescriptor(
        'illumination_sigma', bounds=(0, None),
        docstring='Illumination smoothing (pixels), 2% of the diagonal when unset.')  # type: float
    rgb_bands = TypedDescriptor(
        'rgb_bands', RgbBands, default_value=RgbBands(),
        docstring='Channel ranges of the simulated RGB.')  # type: RgbBands
    variants = StringTupleDescriptor(
        'variants', values=VARIANTS, default_value=VARIANTS,
        docstring='The feature variants to evaluate.')  # type: tuple
    protocol = TypedDescriptor(
        'protocol', Protocol, default_value=Protocol(), docstring='The evaluation protocol.')  # type: Protocol
    pca_target = FloatDescriptor(
        'pca_target', default_value=0.999, bounds=(0, 1),
        docstring='Retained variance ratio of the principal components.')  # type: float
    emap_kind = StringEnumDescriptor(
        'emap_kind', ATTRIBUTE_KINDS, default_value='area', docstring='The EMAP attribute.')  # type: str
    emap_k = IntegerDescriptor(
        'emap_k', default_value=20, bounds=(1, None), docstring='The number of EMAP thresholds.')  # type: int
    connectivity = IntegerDescriptor(
        'connectivity', default_value=4, bounds=(4, 8), docstring='EMAP pixel connectivity, 4 or 8.')  # type: int
    rule = StringEnumDescriptor(
        'rule', FILTER_RULES, default_value='min', docstring='EMAP filtering rule.')  # type: str
    epsilon = FloatDescriptor(
        'epsilon', default_value=ACHROMATIC_EPSILON, bounds=(0, None),
        docstring='Achromatic threshold of the hyper-hue.')  # type: float
    output_dir = StringDescriptor(
        'output_dir', default_value='hsi_layers_output', docstring='The output directory.')  # type: str
    palette = StringDescriptor(
        'palette', default_value='layers', docstring='The label map palette.')  # type: str
    cache = BooleanDescriptor(
        'cache', default_value=False, docstring='Cache EMAP feature stacks on disk.')  # type: bool
    ablation = BooleanDescriptor(
        'ablation', default_value=False, docstring='Also run the focus stacking ablation.')  # type: bool
    n_jobs = IntegerDescriptor(
        'n_jobs', default_value=1, bounds=(1, None), docstring='Worker threads for EMAP channels.')  # type: int

    def validate(self):
        """
        Verify that the inputs are specified and the variant list is usable.
        """

        if len(self.variants) == 0:
            raise ValueError('The variant list is empty')
        if len(set(self.variants)) != len(self.variants):
            raise ValueError('The variant list has duplicates, {}'.format(self.variants))
        if self.connectivity not in (4, 8):
            raise ValueError('connectivity must be 4 or 8, got {}'.format(self.connectivity))
        if not (0 < self.pca_target <= 1):
            raise ValueError('pca_target must lie in (0, 1], got {}'.format(self.pca_target))
        if self.phantom is None:
            missing = [name for name in ('h1', 'white_ref', 'ground_truth') if getattr(self, name) is None]
            if len(missing) > 0:
                raise ValueError('Without a phantom specification the inputs {} are required'.format(missing))
            if self.ablation and self.h2 is None:
                raise ValueError('The focus stacking ablation requires the h2 input')

    def content_hash(self):
        """
        Gets the SHA-256 hex digest of the canonical json serialization.

        Returns
        -------
        str
        """

        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode('utf-8')).hexdigest()


class ExperimentInputs(object):
    """
    The loaded (or generated) input cubes and ground truth.
    """

    def __init__(self, h1, h2, white_ref, labels, class_names):
        """

        Parameters
        ----------
        h1 : HsiCube
        h2 : None|HsiCube
        white_ref : HsiCube
        labels : numpy.ndarray
        class_names : Sequence[str]
        """

        if labels.shape != h1.spatial_shape:
            raise ValueError('Ground truth shape {} does not match the cube shape {}'.format(
                labels.shape, h1.spatial_shape))
        self.h1 = h1
        self.h2 = h2
        self.white_ref = white_ref
        self.labels = labels
        self.class_names = tuple(class_names)


def load_inputs(config):
    """
    Load the inputs named by the configuration, or generate the phantom.

    Parameters
    ----------
    config : ExperimentConfig

    Returns
    -------
    ExperimentInputs
    """

    if config.phantom is not None:
        data = generate(config.phantom)
        class_names = config.class_names if config.class_names is not None else data.ground_truth.class_names
        return ExperimentInputs(data.h1, data.h2, data.white_ref, data.ground_truth.labels, class_names)

    h1 = load_cube(header_path_for(config.h1))
    h2 = None if config.h2 is None else load_cube(header_path_for(config.h2))
    white_ref = load_cube(header_path_for(config.white_ref))
    if not os.path.isfile(config.ground_truth):
        raise FileNotFoundError('Ground truth file {} does not exist'.format(config.ground_truth))
    labels = load_label_map(config.ground_truth)
    class_names = config.class_names
    if class_names is None:
        class_names = ['class_{}'.format(i + 1) for i in range(int(labels.max()))]
    return ExperimentInputs(h1, h2, white_ref, labels, class_names)


class FeatureBuilder(object):
    """
    Builds the feature stack of each variant, sharing intermediate products
    between variants.
    """

    def __init__(self, config, h1, h2, white_ref, cache_dir=None):
        """

        Parameters
        ----------
        config : ExperimentConfig
        h1 : HsiCube
        h2 : None|HsiCube
            Without `h2`, `h1` is used alone.
        white_ref : HsiCube
        cache_dir : None|str
            The directory of cached EMAP stacks, when caching.
        """

        self._config = config
        self._h1 = h1
        self._h2 = h2
        self._white_ref = white_ref
        self._cache_dir = cache_dir
        self._products = {}
        self._builders = {
            'SimRGB': self._sim_rgb,
            'SimRGB-IC': self._sim_rgb_ic,
            'SimRGB-IC-SI': self._sim_rgb_ic_si,
            'SimRGB-IC-EMAP': lambda: self._emap('SimRGB-IC-EMAP', self.build('SimRGB-IC')),
            'HSI': lambda: self._corrected().normalized,
            'HSI-IC': lambda: self._corrected().corrected,
            'HSI-DR': lambda: self._pca(self.build('HSI-IC')),
            'HSI-h': self._hue,
            'HSIhSI': self._hsi_hsi,
            'HSIhSI-DR': lambda: self._pca(self.build('HSIhSI')),
            'HSI-EMAP': lambda: self._emap('HSI-EMAP', self.build('HSI-DR')),
            'HSIhSI-EMAP': lambda: self._emap('HSIhSI-EMAP', self.build('HSIhSI-DR'))}

    def _memo(self, key, func):
        if key not in self._products:
            self._products[key] = func()
        return self._products[key]

    def _corrected(self):
        config = self._config
        return self._memo('corrected', lambda: preprocess_cube(
            self._h1, self._h2, self._white_ref, split_band=config.split_band, focus_mode=config.focus_mode,
            region=config.white_region, sigma=config.illumination_sigma))

    def _sim_rgb(self):
        return simulate_rgb(self._corrected().normalized, bands=self._config.rgb_bands)

    def _sim_rgb_ic(self):
        return simulate_rgb(self._corrected().corrected, bands=self._config.rgb_bands)

    def _hsi_of(self, variant):
        return self._memo('hsi_transform:{}'.format(variant),
                          lambda: hsi_transform(self.build(variant), epsilon=self._config.epsilon))

    def _sim_rgb_ic_si(self):
        components = self._hsi_of('SimRGB-IC').select(names=['saturation', 'intensity'])
        return stack_features([self.build('SimRGB-IC'), components.with_chain(components.chain + ' -> S,I')])

    def _hue(self):
        hue = self._hsi_of('HSI-IC').select(prefix='hue_')
        return hue.with_chain(hue.chain + ' -> hue')

    def _hsi_hsi(self):
        return stack_features([self.build('HSI-IC'), self._hsi_of('HSI-IC')])

    def _pca(self, stack):
        model = fit_pca(stack, target_variance=self._config.pca_target)
        return transform_pca(stack, model)

    def _emap(self, variant, base):
        config = self._config
        cfg = ApConfig.auto(config.emap_kind, config.emap_k, base.rows*base.cols,
                            connectivity=config.connectivity, rule=config.rule)
        if self._cache_dir is None:
            return emap(base, cfg, n_jobs=config.n_jobs)

        key = hashlib.sha256(
            '{}|{}|{}'.format(config.content_hash(), variant, base.chain).encode('utf-8')).hexdigest()[:16]
        path = os.path.join(self._cache_dir, '{}-{}.hdr'.format(variant, key))
        if os.path.isfile(path):
            logger.info('Loading cached {} features from {}'.format(variant, path))
            return load_feature_stack(path)
        stack = emap(base, cfg, n_jobs=config.n_jobs)
        save_feature_stack(stack, path)
        return stack

    def build(self, variant):
        """
        Gets the feature stack of the variant.

        Parameters
        ----------
        variant : str

        Returns
        -------
        FeatureStack|HsiCube
        """

        if variant not in self._builders:
            raise ValueError('Unknown feature variant `{}`, expected one of {}'.format(variant, VARIANTS))
        return self._memo('variant:{}'.format(variant), self._builders[variant])


class ExperimentResult(object):
    """
    The reports of an experiment run, and the variants which failed.
    """

    def __init__(self, reports, failures, ablation=None, paths=None):
        """

        Parameters
        ----------
        reports : Dict[str, EvalReport]
        failures : Dict[str, str]
            The failure reason, by variant.
        ablation : None|pandas.DataFrame
        paths : None|Dict[str, str]
        """

        self.reports = reports
        self.failures = failures
        self.ablation = ablation
        self.paths = {} if paths is None else paths

    @property
    def exit_code(self):
        return 0 if len(self.failures) == 0 else 2

    def summary(self):
        return summary_frame(list(self.reports.values()))


def _ensure_directory(*parts):
    directory = os.path.join(*parts)
    os.makedirs(directory, exist_ok=True)
    return directory


def _run_variants(config, builder, inputs, report_dir, label_dir):
    reports = OrderedDict()
    failures = OrderedDict()
    for variant in config.variants:
        logger.info('Running variant {}'.format(variant))
        try:
            features = builder.build(variant)
            report = evaluate(features, inputs.labels, protocol=config.protocol,
                              class_names=inputs.class_names, feature_name=variant)
            report.to_json_file(os.path.join(report_dir, '{}.json'.format(variant)))
            save_label_map(report.label_map, os.path.join(label_dir, '{}.png'.format(variant)),
                           palette=config.palette)
        except Exception as err:
            logger.exception('Variant {} failed'.format(variant))
            failures[variant] = '{}: {}'.format(err.__class__.__name__, err)
            continue
        reports[variant] = report
    return reports, failures


def run_ablation(config, inputs, report_dir=None):
    """
    Evaluate the `SimRGB-IC` and `HSI-IC` pipelines on the H1 capture alone,
    the H2 capture alone, and the focus stacked cube.

    Parameters
    ----------
    config : ExperimentConfig
    inputs : ExperimentInputs
    report_dir : None|str
        If given, the full reports are written here.

    Returns
    -------
    pandas.DataFrame
        With columns `source`, then the summary columns.
    """

    if inputs.h2 is None:
        raise ValueError('The focus stacking ablation requires both captures')
    sources = OrderedDict([
        ('H1', (inputs.h1, None)),
        ('H2', (inputs.h2, None)),
        ('Focus Stacking', (inputs.h1, inputs.h2))])
    rows = []
    for source, (first, second) in sources.items():
        builder = FeatureBuilder(config, first, second, inputs.white_ref)
        for variant in ABLATION_VARIANTS:
            logger.info('Running focus stacking ablation {} / {}'.format(source, variant))
            report = evaluate(builder.build(variant), inputs.labels, protocol=config.protocol,
                              class_names=inputs.class_names, feature_name=variant)
            if report_dir is not None:
                name = 'ablation_{}_{}.json'.format(source.replace(' ', '_'), variant)
                report.to_json_file(os.path.join(report_dir, name))
            row = OrderedDict([('source', source)])
            row.update(report.summary_row())
            rows.append(row)
    return pandas.DataFrame(rows, columns=['source'] + list(SUMMARY_COLUMNS))


def run_experiment(config):
    """
    Run every configured variant, writing `reports/<variant>.json`,
    `label_maps/<variant>.png`, `ground_truth.png`, `summary.csv` and, for the
    ablation, `focus_stacking.csv` under the output directory. A failing
    variant is logged and skipped.

    Parameters
    ----------
    config : ExperimentConfig

    Returns
    -------
    ExperimentResult
    """

    config.validate()
    inputs = load_inputs(config)
    output_dir = _ensure_directory(config.output_dir)
    report_dir = _ensure_directory(output_dir, 'reports')
    label_dir = _ensure_directory(output_dir, 'label_maps')
    cache_dir = _ensure_directory(output_dir, 'cache') if config.cache else None
    config.to_json_file(os.path.join(output_dir, 'config.json'))

    paths = {'ground_truth': os.path.join(output_dir, 'ground_truth.png')}
    save_label_map(inputs.labels, paths['ground_truth'], palette=config.palette)

    builder = FeatureBuilder(config, inputs.h1, inputs.h2, inputs.white_ref, cache_dir=cache_dir)
    reports, failures = _run_variants(config, builder, inputs, report_dir, label_dir)

    ablation = None
    if config.ablation:
        try:
            ablation = run_ablation(config, inputs, report_dir=report_dir)
            paths['focus_stacking'] = os.path.join(output_dir, 'focus_stacking.csv')
            ablation.to_csv(paths['focus_stacking'], index=False, float_format=FLOAT_FORMAT)
        except Exception as err:
            logger.exception('The focus stacking ablation failed')
            failures['ablation'] = '{}: {}'.format(err.__class__.__name__, err)

    result = ExperimentResult(reports, failures, ablation=ablation, paths=paths)
    paths['summary'] = os.path.join(output_dir, 'summary.csv')
    result.summary().to_csv(paths['summary'], index=False, float_format=FLOAT_FORMAT)
    if len(failures) > 0:
        logger.warning('{} of {} variants failed: {}'.format(len(failures), len(config.variants), list(failures)))
    logger.info('Wrote experiment outputs to {}'.format(output_dir))
    return result


def format_summary(frame):
    """
    Gets a text table of a summary frame, as `AA% +- SD`, `OA% +- SD` and `Kappa +- SD`.

    Parameters
    ----------
    frame : pandas.DataFrame

    Returns
    -------
    str
    """

    missing = [column for column in SUMMARY_COLUMNS if column not in frame.columns]
    if len(missing) > 0:
        raise ValueError('The summary table lacks the columns {}'.format(missing))
    table = pandas.DataFrame({
        'Feature': frame['feature'],
        'AA (%)': ['{:.2f} ± {:.2f}'.format(m, s) for m, s in zip(frame['aa_mean'], frame['aa_sd'])],
        'OA (%)': ['{:.2f} ± {:.2f}'.format(m, s) for m, s in zip(frame['oa_mean'], frame['oa_sd'])],
        'Kappa': ['{:.4f} ± {:.4f}'.format(m, s) for m, s in zip(frame['kappa_mean'], frame['kappa_sd'])]})
    if 'source' in frame.columns:
        table.insert(0, 'Source', frame['source'])
    return table.to_string(index=False)

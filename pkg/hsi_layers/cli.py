"""
The command line interface.

Sub-commands:

* `phantom generate` - write a synthetic phantom.
* `preprocess` - focus stack and correct a cube pair, with diagnostics.
* `features` - compute and write the feature stack of one variant.
* `evaluate` - evaluate a feature stack against a label map.
* `experiment` - run the feature variant matrix.
* `report` - print a summary table.

Configuration comes from a json file where the sub-command takes one, and
every flag given explicitly overrides the corresponding configuration key.
Exit codes are 0 on success, 1 on configuration or input errors, and 2 when
some experiment variants failed.
"""

__classification__ = "UNCLASSIFIED"


import argparse
import logging
import os
import sys

import pandas

from hsi_layers.__about__ import __version__
from hsi_layers.cube import RgbBands, load_cube, load_feature_stack, save_cube, save_feature_stack, simulate_rgb
from hsi_layers.experiment import VARIANTS, ExperimentConfig, FeatureBuilder, format_summary, load_inputs, \
    run_experiment
from hsi_layers.file_types import header_path_for
from hsi_layers.learn import Protocol, evaluate
from hsi_layers.logger import configure_logging, verbosity_to_level
from hsi_layers.morpho import ATTRIBUTE_KINDS, FILTER_RULES
from hsi_layers.phantom import LABELINGS, PhantomSpec, generate, write_phantom
from hsi_layers.plotting import plot_band_sharpness, plot_illumination, plot_sensitivity
from hsi_layers.preprocess import DEFAULT_SPLIT_BAND, band_means_table, band_sharpness, preprocess_cube
from hsi_layers.utils.image_utils import load_label_map, save_band_animation, save_label_map, save_quicklook

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL = 2


def _read_config(config_class, path):
    if path is None:
        return config_class()
    if not os.path.isfile(path):
        raise FileNotFoundError('Configuration file {} does not exist'.format(path))
    return config_class.from_json_file(path)


def _protocol_overrides(args, protocol):
    return protocol.replace(
        per_class=args.per_class, repeats=args.repeats, trees=args.trees, seed=args.seed,
        n_jobs=getattr(args, 'protocol_jobs', None))


###########
# sub-command implementations

def _phantom_generate(args):
    spec = _read_config(PhantomSpec, args.config)
    spec = spec.replace(rows=args.rows, cols=args.cols, bands=args.bands, seed=args.seed,
                        noise_sd=args.noise_sd, labeling=args.labeling)
    paths = write_phantom(generate(spec), args.output)
    for name, path in paths.items():
        print('{}: {}'.format(name, path))
    return EXIT_OK


def _preprocess(args):
    h1 = load_cube(header_path_for(args.h1))
    h2 = None if args.h2 is None else load_cube(header_path_for(args.h2))
    white_ref = load_cube(header_path_for(args.white))
    result = preprocess_cube(h1, h2, white_ref, split_band=args.split_band, focus_mode=args.focus_mode,
                             region=args.white_region, sigma=args.sigma)
    os.makedirs(args.output, exist_ok=True)
    save_cube(result.corrected, os.path.join(args.output, 'corrected.hdr'))

    table = band_means_table(result.stacked, result.corrected, region=args.white_region)
    table.to_csv(os.path.join(args.output, 'band_means.csv'), index=False, float_format='%.6f')
    plot_sensitivity(result.sensitivity, os.path.join(args.output, 'sensitivity.png'),
                     wavelengths=result.stacked.wavelengths)
    plot_illumination(result.illumination, os.path.join(args.output, 'illumination.png'))
    needed = max(upper for _, upper in RgbBands().ranges())
    if result.corrected.bands >= needed:
        save_quicklook(simulate_rgb(result.corrected).to_uint8(), os.path.join(args.output, 'quicklook.png'))
    else:
        logger.info('Skipping the simulated RGB quicklook of a {} band cube'.format(result.corrected.bands))

    sharpness = {'H1': band_sharpness(h1)}
    if h2 is not None:
        sharpness['H2'] = band_sharpness(h2)
        sharpness['Focus Stacking'] = band_sharpness(result.stacked)
    plot_band_sharpness(sharpness, os.path.join(args.output, 'sharpness.png'),
                        wavelengths=result.stacked.wavelengths,
                        split_band=args.split_band if (h2 is not None and args.focus_mode == 'fixed') else None)
    pandas.DataFrame(sharpness).to_csv(
        os.path.join(args.output, 'sharpness.csv'), index_label='band_index', float_format='%.6g')
    if args.animation:
        save_band_animation(result.corrected, os.path.join(args.output, 'bands.gif'), step=args.animation_step)
    return EXIT_OK


def _experiment_config(args):
    config = _read_config(ExperimentConfig, args.config)
    overrides = {
        'output_dir': getattr(args, 'output_dir', None),
        'variants': getattr(args, 'variants', None),
        'split_band': getattr(args, 'split_band', None),
        'focus_mode': getattr(args, 'focus_mode', None),
        'pca_target': getattr(args, 'pca_target', None),
        'emap_kind': getattr(args, 'emap_kind', None),
        'emap_k': getattr(args, 'emap_k', None),
        'connectivity': getattr(args, 'connectivity', None),
        'rule': getattr(args, 'rule', None),
        'epsilon': getattr(args, 'epsilon', None),
        'n_jobs': getattr(args, 'n_jobs', None)}
    if getattr(args, 'cache', False):
        overrides['cache'] = True
    if getattr(args, 'ablation', False):
        overrides['ablation'] = True
    config = config.replace(**overrides)
    if any(getattr(args, name, None) is not None for name in ('per_class', 'repeats', 'trees', 'seed')):
        config = config.replace(protocol=_protocol_overrides(args, config.protocol))
    return config


def _features(args):
    config = _experiment_config(args)
    config.validate()
    inputs = load_inputs(config)
    builder = FeatureBuilder(config, inputs.h1, inputs.h2, inputs.white_ref)
    stack = builder.build(args.variant)
    save_feature_stack(stack, args.output)
    print('{}: {} channels, chain {}'.format(args.variant, stack.channels, stack.chain))
    return EXIT_OK


def _evaluate(args):
    stack = load_feature_stack(header_path_for(args.features))
    labels = load_label_map(args.labels)
    protocol = _protocol_overrides(args, Protocol())
    report = evaluate(stack, labels, protocol=protocol, class_names=args.class_names,
                      feature_name=args.name if args.name is not None else os.path.basename(args.features))
    report.to_json_file(args.output)
    if args.label_map is not None:
        save_label_map(report.label_map, args.label_map)
    print(format_summary(pandas.DataFrame([report.summary_row()])))
    return EXIT_OK


def _experiment(args):
    result = run_experiment(_experiment_config(args))
    if len(result.reports) > 0:
        print(format_summary(result.summary()))
    if result.ablation is not None:
        print(format_summary(result.ablation))
    for variant, reason in result.failures.items():
        print('FAILED {}: {}'.format(variant, reason))
    return result.exit_code


def _report(args):
    frame = pandas.read_csv(args.summary)
    print(format_summary(frame))
    return EXIT_OK


###########
# parser

def _add_protocol_arguments(parser):
    parser.add_argument('--per-class', dest='per_class', type=int, help='Training samples per class.')
    parser.add_argument('--repeats', type=int, help='Number of evaluation repeats.')
    parser.add_argument('--trees', type=int, help='Trees per forest.')
    parser.add_argument('--seed', type=int, help='Base seed.')


def _add_experiment_arguments(parser):
    parser.add_argument('-c', '--config', help='Experiment configuration json file.')
    parser.add_argument('--split-band', dest='split_band', type=int, help='Last channel taken from H1.')
    parser.add_argument('--focus-mode', dest='focus_mode', choices=('fixed', 'sharpness'),
                        help='Focus stacking mode.')
    parser.add_argument('--pca-target', dest='pca_target', type=float, help='Retained PCA variance ratio.')
    parser.add_argument('--emap-kind', dest='emap_kind', choices=ATTRIBUTE_KINDS, help='EMAP attribute.')
    parser.add_argument('--emap-k', dest='emap_k', type=int, help='Number of EMAP thresholds.')
    parser.add_argument('--connectivity', type=int, choices=(4, 8), help='EMAP connectivity.')
    parser.add_argument('--rule', choices=FILTER_RULES, help='EMAP filtering rule.')
    parser.add_argument('--epsilon', type=float, help='Achromatic threshold of the hyper-hue.')
    parser.add_argument('--n-jobs', dest='n_jobs', type=int, help='Worker threads for EMAP channels.')
    _add_protocol_arguments(parser)


def create_parser():
    """
    Gets the argument parser.

    Returns
    -------
    argparse.ArgumentParser
    """

    parser = argparse.ArgumentParser(
        prog='hsi-layers', description='Hyperspectral layer decomposition of layered drawings.')
    parser.add_argument('--version', action='version', version='%(prog)s {}'.format(__version__))
    parser.add_argument('-v', '--verbose', action='count', default=0, help='Increase the log verbosity.')
    parser.add_argument('--log-file', dest='log_file', help='Also write log lines to this file.')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    phantom = subparsers.add_parser('phantom', help='Synthetic phantoms.')
    phantom_commands = phantom.add_subparsers(dest='phantom_command')
    phantom_commands.required = True
    generate_parser = phantom_commands.add_parser('generate', help='Generate and write a phantom.')
    generate_parser.add_argument('-c', '--config', help='Phantom specification json file.')
    generate_parser.add_argument('-o', '--output', required=True, help='Output directory.')
    generate_parser.add_argument('--rows', type=int)
    generate_parser.add_argument('--cols', type=int)
    generate_parser.add_argument('--bands', type=int)
    generate_parser.add_argument('--seed', type=int)
    generate_parser.add_argument('--noise-sd', dest='noise_sd', type=float)
    generate_parser.add_argument('--labeling', choices=LABELINGS)
    generate_parser.set_defaults(func=_phantom_generate)

    preprocess = subparsers.add_parser('preprocess', help='Focus stack and correct a cube pair.')
    preprocess.add_argument('--h1', required=True, help='Header of the short wavelength focused cube.')
    preprocess.add_argument('--h2', help='Header of the long wavelength focused cube.')
    preprocess.add_argument('--white', required=True, help='Header of the white reference cube.')
    preprocess.add_argument('-o', '--output', required=True, help='Output directory.')
    preprocess.add_argument('--split-band', dest='split_band', type=int, default=DEFAULT_SPLIT_BAND)
    preprocess.add_argument('--focus-mode', dest='focus_mode', choices=('fixed', 'sharpness'), default='fixed')
    preprocess.add_argument('--white-region', dest='white_region', type=int, nargs=4,
                            metavar=('ROW_START', 'ROW_END', 'COL_START', 'COL_END'))
    preprocess.add_argument('--sigma', type=float, help='Illumination smoothing in pixels.')
    preprocess.add_argument('--animation', action='store_true', help='Write an animated gif of the bands.')
    preprocess.add_argument('--animation-step', dest='animation_step', type=int, default=4)
    preprocess.set_defaults(func=_preprocess)

    features = subparsers.add_parser('features', help='Compute the feature stack of one variant.')
    features.add_argument('variant', choices=VARIANTS)
    features.add_argument('-o', '--output', required=True, help='Output header path.')
    _add_experiment_arguments(features)
    features.set_defaults(func=_features)

    evaluate_parser = subparsers.add_parser('evaluate', help='Evaluate a feature stack.')
    evaluate_parser.add_argument('--features', required=True, help='Feature stack header.')
    evaluate_parser.add_argument('--labels', required=True, help='Ground truth label map image.')
    evaluate_parser.add_argument('-o', '--output', required=True, help='Output report json.')
    evaluate_parser.add_argument('--name', help='Feature name of the report.')
    evaluate_parser.add_argument('--class-names', dest='class_names', nargs='+')
    evaluate_parser.add_argument('--label-map', dest='label_map', help='Write the predicted label map PNG.')
    _add_protocol_arguments(evaluate_parser)
    evaluate_parser.set_defaults(func=_evaluate)

    experiment = subparsers.add_parser('experiment', help='Run the feature variant matrix.')
    experiment.add_argument('-o', '--output-dir', dest='output_dir', help='Output directory.')
    experiment.add_argument('--variants', nargs='+', choices=VARIANTS, help='Feature variants.')
    experiment.add_argument('--cache', action='store_true', help='Cache EMAP feature stacks.')
    experiment.add_argument('--ablation', action='store_true', help='Run the focus stacking ablation.')
    _add_experiment_arguments(experiment)
    experiment.set_defaults(func=_experiment)

    report = subparsers.add_parser('report', help='Print a summary csv as a table.')
    report.add_argument('summary', help='The summary csv.')
    report.set_defaults(func=_report)
    return parser


def main(argv=None):
    """
    Run the command line interface.

    Parameters
    ----------
    argv : None|list
        Defaults to `sys.argv[1:]`.

    Returns
    -------
    int
        The exit code.
    """

    args = create_parser().parse_args(argv)
    configure_logging(level=verbosity_to_level(args.verbose), log_file=args.log_file)
    try:
        return args.func(args)
    except (ValueError, TypeError, FileNotFoundError) as err:
        logger.error('{}: {}'.format(err.__class__.__name__, err))
        return EXIT_CONFIG_ERROR


if __name__ == '__main__':
    sys.exit(main())

import json
import os
import shutil
import tempfile
from unittest import mock

import numpy
import pandas
import PIL.Image

from hsi_layers.experiment import VARIANTS, ExperimentConfig, FeatureBuilder, format_summary, load_inputs, \
    run_ablation, run_experiment
from hsi_layers.learn import SUMMARY_COLUMNS, Protocol
from hsi_layers.phantom import PhantomSpec, generate, write_phantom
from hsi_layers.utils.image_utils import load_label_map, render_label_map

from tests import unittest


TEST_VARIANTS = ('SimRGB', 'HSI-IC', 'HSI-h', 'SimRGB-IC-EMAP')


def small_phantom_spec():
    return PhantomSpec(rows=80, cols=80, bands=160, stroke_length=(20.0, 60.0), seed=5)


def small_config(output_dir, **kwargs):
    the_kwargs = dict(
        phantom=small_phantom_spec(), variants=TEST_VARIANTS, protocol=Protocol(per_class=3, repeats=2, trees=3),
        emap_k=3, split_band=60, output_dir=output_dir)
    the_kwargs.update(kwargs)
    return ExperimentConfig(**the_kwargs)


class TestExperimentConfig(unittest.TestCase):
    def test_validate(self):
        with self.assertRaises(ValueError):
            ExperimentConfig(phantom=small_phantom_spec(), variants=()).validate()
        with self.assertRaises(ValueError):
            ExperimentConfig(phantom=small_phantom_spec(), variants=('HSI', 'HSI')).validate()
        with self.assertRaises(ValueError):
            ExperimentConfig(variants=('HSI', )).validate()
        with self.assertRaises(ValueError):
            ExperimentConfig(variants=('unknown', ))
        ExperimentConfig(phantom=small_phantom_spec()).validate()

    def test_json_round_trip(self):
        config = small_config('out', rule='max', connectivity=8)
        loaded = ExperimentConfig.from_json(config.to_json())
        self.assertEqual(loaded.to_dict(), config.to_dict())
        self.assertEqual(loaded.content_hash(), config.content_hash())
        self.assertNotEqual(small_config('out', emap_k=4).content_hash(), config.content_hash())

    def test_defaults(self):
        config = ExperimentConfig()
        self.assertEqual(config.variants, VARIANTS)
        self.assertEqual(config.split_band, 75)
        self.assertEqual(config.emap_k, 20)
        self.assertEqual(config.protocol.per_class, 100)
        self.assertEqual(config.protocol.repeats, 25)


class TestFeatureBuilder(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        config = small_config('unused')
        cls.inputs = load_inputs(config)
        cls.builder = FeatureBuilder(config, cls.inputs.h1, cls.inputs.h2, cls.inputs.white_ref)

    def test_channel_counts(self):
        self.assertEqual(self.builder.build('SimRGB').channels, 3)
        self.assertEqual(self.builder.build('SimRGB-IC-SI').channels, 5)
        self.assertEqual(self.builder.build('HSI').channels, 160)
        self.assertEqual(self.builder.build('HSI-IC').channels, 160)
        self.assertEqual(self.builder.build('HSI-h').channels, 160)
        self.assertEqual(self.builder.build('HSIhSI').channels, 160 + 160 + 2)
        self.assertEqual(self.builder.build('SimRGB-IC-EMAP').channels, 3*(2*3 + 1))
        self.assertLessEqual(self.builder.build('HSI-DR').channels, 160)

    def test_chains(self):
        self.assertEqual(
            self.builder.build('SimRGB').chain,
            'focus_stack(split=60) -> normalize_sensitivity -> simulate_rgb')
        self.assertEqual(
            self.builder.build('HSI-h').chain,
            'focus_stack(split=60) -> normalize_sensitivity -> correct_illumination -> hsi_transform -> hue')
        self.assertTrue(self.builder.build('HSI-DR').chain.endswith('-> pca(0.999)'))

    def test_shared_products(self):
        self.assertIs(self.builder.build('HSI-IC'), self.builder.build('HSI-IC'))

    def test_unknown_variant(self):
        with self.assertRaises(ValueError):
            self.builder.build('HSI-XYZ')


class TestRunExperiment(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.mkdtemp()
        cls.config = small_config(os.path.join(cls.directory, 'first'))
        sizes = generate(cls.config.phantom).ground_truth.class_sizes()
        assert numpy.all(sizes[1:] > cls.config.protocol.per_class), sizes
        cls.result = run_experiment(cls.config)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory, ignore_errors=True)

    def test_outputs(self):
        output_dir = self.config.output_dir
        self.assertEqual(self.result.exit_code, 0)
        self.assertEqual(list(self.result.reports), list(TEST_VARIANTS))
        for variant in TEST_VARIANTS:
            self.assertTrue(os.path.isfile(os.path.join(output_dir, 'reports', '{}.json'.format(variant))))
            self.assertTrue(os.path.isfile(os.path.join(output_dir, 'label_maps', '{}.png'.format(variant))))
        for name in ('summary.csv', 'ground_truth.png', 'config.json'):
            self.assertTrue(os.path.isfile(os.path.join(output_dir, name)), msg=name)

    def test_summary_csv(self):
        frame = pandas.read_csv(self.result.paths['summary'])
        self.assertEqual(tuple(frame.columns), SUMMARY_COLUMNS)
        self.assertEqual(frame['feature'].tolist(), list(TEST_VARIANTS))
        self.assertTrue(numpy.all((frame['aa_mean'] >= 0) & (frame['aa_mean'] <= 100)))
        self.assertTrue(numpy.all(frame['kappa_mean'] <= 1))
        text = format_summary(frame)
        self.assertIn('AA (%)', text)
        self.assertIn('SimRGB-IC-EMAP', text)

    def test_report_json(self):
        with open(os.path.join(self.config.output_dir, 'reports', 'HSI-IC.json'), 'r') as fi:
            report = json.load(fi)
        self.assertEqual(len(report['confusion_matrices']), 2)

    def test_reproducible(self):
        config = small_config(os.path.join(self.directory, 'second'))
        result = run_experiment(config)
        with open(self.result.paths['summary'], 'rb') as fi:
            first = fi.read()
        with open(result.paths['summary'], 'rb') as fi:
            second = fi.read()
        self.assertEqual(first, second)

    def test_ground_truth_png(self):
        labels = load_label_map(self.result.paths['ground_truth'])
        numpy.testing.assert_array_equal(labels, generate(self.config.phantom).ground_truth.labels)

    def test_predicted_label_maps(self):
        labels = generate(self.config.phantom).ground_truth.labels
        predicted = load_label_map(os.path.join(self.config.output_dir, 'label_maps', 'HSI-IC.png'))
        self.assertEqual(predicted.shape, labels.shape)
        numpy.testing.assert_array_equal(predicted[labels == 0], 0)
        self.assertTrue(numpy.all(predicted[labels > 0] > 0))


class TestPartialFailure(unittest.TestCase):
    def test_failed_variant_skipped(self):
        original = FeatureBuilder.build

        def failing_build(builder, variant):
            if variant == 'HSI-IC':
                raise RuntimeError('simulated failure')
            return original(builder, variant)

        with tempfile.TemporaryDirectory() as directory:
            config = small_config(directory, variants=('SimRGB', 'HSI-IC'))
            with mock.patch.object(FeatureBuilder, 'build', failing_build):
                result = run_experiment(config)
            self.assertEqual(result.exit_code, 2)
            self.assertEqual(list(result.failures), ['HSI-IC'])
            self.assertIn('simulated failure', result.failures['HSI-IC'])
            self.assertEqual(pandas.read_csv(result.paths['summary'])['feature'].tolist(), ['SimRGB'])

    def test_empty_variants(self):
        with tempfile.TemporaryDirectory() as directory:
            with self.assertRaises(ValueError):
                run_experiment(small_config(directory, variants=()))


class TestCache(unittest.TestCase):
    def test_cached_emap(self):
        with tempfile.TemporaryDirectory() as directory:
            config = small_config(directory, variants=('SimRGB-IC-EMAP', ), cache=True)
            first = run_experiment(config)
            cached = [entry for entry in os.listdir(os.path.join(directory, 'cache')) if entry.endswith('.hdr')]
            self.assertEqual(len(cached), 1)
            self.assertTrue(cached[0].startswith('SimRGB-IC-EMAP-'))
            with self.assertLogs('hsi_layers.experiment', level='INFO') as logs:
                second = run_experiment(config)
            self.assertTrue(any('Loading cached' in line for line in logs.output))
            self.assertEqual(
                first.reports['SimRGB-IC-EMAP'].statistics(), second.reports['SimRGB-IC-EMAP'].statistics())


class TestAblation(unittest.TestCase):
    def test_table(self):
        with tempfile.TemporaryDirectory() as directory:
            config = small_config(directory, variants=('SimRGB', ), ablation=True)
            result = run_experiment(config)
            self.assertEqual(result.exit_code, 0)
            frame = pandas.read_csv(result.paths['focus_stacking'])
        self.assertEqual(frame.shape[0], 6)
        self.assertEqual(frame['source'].tolist(), ['H1', 'H1', 'H2', 'H2', 'Focus Stacking', 'Focus Stacking'])
        self.assertEqual(frame['feature'].tolist(), ['SimRGB-IC', 'HSI-IC']*3)
        self.assertIn('Source', format_summary(frame))

    def test_requires_h2(self):
        config = small_config('unused')
        inputs = load_inputs(config)
        inputs.h2 = None
        with self.assertRaises(ValueError):
            run_ablation(config, inputs)


class TestLoadInputs(unittest.TestCase):
    def test_missing_ground_truth(self):
        with tempfile.TemporaryDirectory() as directory:
            paths = write_phantom(generate(PhantomSpec(rows=12, cols=12, bands=30, focus_blue_band=4,
                                                       focus_red_band=25)), directory)
            config = ExperimentConfig(h1=paths['h1'], h2=paths['h2'], white_ref=paths['white_ref'],
                                      ground_truth=os.path.join(directory, 'missing.png'))
            with self.assertRaises(FileNotFoundError):
                load_inputs(config)
            config = config.replace(ground_truth=paths['ground_truth'])
            inputs = load_inputs(config)
        self.assertEqual(inputs.h1.bands, 30)
        self.assertEqual(len(inputs.class_names), int(inputs.labels.max()))


class TestRenderLabelMap(unittest.TestCase):
    def test_background_black(self):
        image = render_label_map(numpy.zeros((4, 5), dtype='int64')).convert('RGB')
        numpy.testing.assert_array_equal(numpy.array(image), 0)

    def test_checkerboard(self):
        labels = numpy.indices((6, 6)).sum(axis=0) % 2 + 1
        rgb = numpy.array(render_label_map(labels).convert('RGB'))
        numpy.testing.assert_array_equal(rgb[labels == 1], [[255, 0, 0]]*18)
        numpy.testing.assert_array_equal(rgb[labels == 2], [[0, 128, 0]]*18)

    def test_palette_mode(self):
        image = render_label_map(numpy.array([[0, 3], [2, 1]]))
        self.assertIsInstance(image, PIL.Image.Image)
        self.assertEqual(image.mode, 'P')
        numpy.testing.assert_array_equal(numpy.array(image), [[0, 3], [2, 1]])

    def test_errors(self):
        with self.assertRaises(ValueError):
            render_label_map(numpy.zeros(4))
        with self.assertRaises(ValueError):
            render_label_map(numpy.array([[0, 4]]))
        with self.assertRaises(ValueError):
            render_label_map(numpy.array([[0.5, 1.0]]))
        with self.assertRaises(ValueError):
            render_label_map(numpy.array([[0, 1]]), palette='unknown')

import numpy
from scipy import ndimage
from skimage.morphology import area_closing, area_opening

from hsi_layers.cube import FeatureStack, HsiCube
from hsi_layers.morpho import ApConfig, ComponentTree, QuantizedChannel, attribute_profile, \
    attribute_thickening, attribute_thinning, auto_thresholds, build_tree, emap, quantize

from tests import unittest


def brute_force_thinning(image, area, connectivity=4):
    """
    Area thinning by reconstruction from the connected components of every
    upper level set, each pixel taking the highest level at which its
    component is large enough.
    """

    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    out = numpy.full(image.shape, image.min(), dtype='int64')
    for level in numpy.unique(image):
        labels, _ = ndimage.label(image >= level, structure=structure)
        sizes = numpy.bincount(labels.ravel())
        large = sizes >= area
        large[0] = False
        out[large[labels]] = level
    return out


def brute_force_thickening(image, area, connectivity=4):
    return 255 - brute_force_thinning(255 - image, area, connectivity=connectivity)


def _random_images(count, seed=0, shape=(8, 8)):
    rng = numpy.random.default_rng(seed)
    return [rng.integers(0, 8, size=shape)*32 for _ in range(count)]


class TestQuantize(unittest.TestCase):
    def test_half(self):
        quantized = quantize(numpy.array([[0.0, 0.5], [1.0, 0.25]]))
        self.assertEqual(quantized.levels[0, 1], 128)
        self.assertEqual(quantized.levels[1, 0], 255)
        self.assertEqual(quantized.levels[1, 1], 64)
        self.assertEqual((quantized.minimum, quantized.maximum), (0.0, 1.0))

    def test_constant(self):
        quantized = quantize(numpy.full((3, 4), 2.5))
        numpy.testing.assert_array_equal(quantized.levels, 0)
        numpy.testing.assert_allclose(quantized.dequantize(), 2.5)

    def test_integer_identity(self):
        image = numpy.arange(256, dtype='float64').reshape((16, 16))
        numpy.testing.assert_array_equal(quantize(image).levels, image)

    def test_dequantize(self):
        quantized = quantize(numpy.array([[-1.0, 3.0]]))
        numpy.testing.assert_allclose(quantized.dequantize(), [[-1.0, 3.0]])

    def test_non_finite(self):
        with self.assertRaises(ValueError):
            quantize(numpy.array([[0.0, numpy.inf]]))
        with self.assertRaises(ValueError):
            QuantizedChannel(numpy.array([[0, 256]]), 0, 1)


class TestComponentTree(unittest.TestCase):
    def test_single_peak(self):
        image = numpy.ones((3, 3), dtype='int64')
        image[1, 1] = 5
        tree = build_tree(image)
        self.assertEqual(tree.node_count, 2)
        numpy.testing.assert_array_equal(tree.area, [9, 1])
        numpy.testing.assert_array_equal(tree.levels, [1, 5])
        numpy.testing.assert_array_equal(tree.parent, [0, 0])
        numpy.testing.assert_array_equal(tree.exclusive_area, [8, 1])

    def test_constant(self):
        tree = build_tree(numpy.full((4, 6), 7))
        self.assertEqual(tree.node_count, 1)
        numpy.testing.assert_array_equal(tree.area, [24])

    def test_sibling_plateaus(self):
        image = numpy.zeros((4, 7), dtype='int64')
        image[1:3, 1:3] = 3
        image[0:4, 5:7] = 3
        tree = build_tree(image)
        self.assertEqual(tree.node_count, 3)
        numpy.testing.assert_array_equal(tree.parent, [0, 0, 0])
        numpy.testing.assert_array_equal(tree.levels, [0, 3, 3])
        self.assertEqual(sorted(tree.area[1:].tolist()), [4, 8])

    def test_connectivity(self):
        image = numpy.zeros((4, 4), dtype='int64')
        image[0, 0] = image[1, 1] = 9
        self.assertEqual(build_tree(image, connectivity=4).node_count, 3)
        self.assertEqual(build_tree(image, connectivity=8).node_count, 2)
        with self.assertRaises(ValueError):
            build_tree(image, connectivity=6)

    def test_min_tree(self):
        image = numpy.full((3, 3), 5, dtype='int64')
        image[1, 1] = 1
        tree = build_tree(image, polarity='min')
        numpy.testing.assert_array_equal(tree.levels, [5, 1])
        numpy.testing.assert_array_equal(tree.area, [9, 1])

    def test_attributes(self):
        image = numpy.ones((3, 3), dtype='int64')
        image[1, 1] = 5
        tree = build_tree(image)
        self.assertAlmostEqual(tree.stddev[0], numpy.sqrt(128.0)/9, places=12)
        self.assertEqual(tree.stddev[1], 0)
        self.assertAlmostEqual(tree.moment[0], 12.0/81, places=12)
        self.assertEqual(tree.moment[1], 0)

        pair = numpy.zeros((3, 4), dtype='int64')
        pair[1, 1:3] = 4
        tree = build_tree(pair)
        self.assertAlmostEqual(tree.moment[1], 0.125, places=12)

    def test_parents_precede_children(self):
        for image in _random_images(20, seed=5):
            tree = ComponentTree(image)
            nodes = numpy.arange(tree.node_count)
            self.assertTrue(numpy.all(tree.parent[1:] < nodes[1:]))
            self.assertTrue(numpy.all(tree.levels[1:] > tree.levels[tree.parent[1:]]))
            self.assertEqual(int(tree.exclusive_area.sum()), image.size)
            self.assertEqual(int(tree.area[0]), image.size)

    def test_lines(self):
        image = numpy.array([[2, 6, 6, 1, 4]])
        for shaped in (image, image.T):
            tree = build_tree(shaped)
            self.assertEqual(tree.node_count, 4)
            numpy.testing.assert_array_equal(tree.levels, [1, 2, 4, 6])
            numpy.testing.assert_array_equal(tree.parent, [0, 0, 0, 1])
            numpy.testing.assert_array_equal(tree.area, [5, 3, 1, 2])
            self.assertEqual(int(tree.exclusive_area.sum()), 5)
        self.assertAlmostEqual(build_tree(image).moment[3], 0.125, places=12)

    def test_single_pixel(self):
        tree = build_tree(numpy.array([[9]]))
        self.assertEqual(tree.node_count, 1)
        numpy.testing.assert_array_equal(tree.parent, [0])
        numpy.testing.assert_array_equal(tree.area, [1])

    def test_empty(self):
        with self.assertRaises(ValueError):
            build_tree(numpy.zeros((0, 5), dtype='int64'))


class TestAttributeFilters(unittest.TestCase):
    def test_thinning_examples(self):
        image = numpy.ones((3, 3), dtype='int64')
        image[1, 1] = 5
        numpy.testing.assert_array_equal(attribute_thinning(image, 2), numpy.ones((3, 3)))
        numpy.testing.assert_array_equal(attribute_thinning(image, 1), image)
        numpy.testing.assert_array_equal(attribute_thinning(image, 0), image)

    def test_thickening_example(self):
        image = numpy.full((3, 3), 5, dtype='int64')
        image[1, 1] = 1
        numpy.testing.assert_array_equal(attribute_thickening(image, 2), numpy.full((3, 3), 5))

    def test_brute_force_oracle(self):
        for image in _random_images(200, seed=11):
            for area in range(1, 11):
                numpy.testing.assert_array_equal(attribute_thinning(image, area), brute_force_thinning(image, area))
                numpy.testing.assert_array_equal(
                    attribute_thickening(image, area), brute_force_thickening(image, area))

    def test_brute_force_oracle_eight_connected(self):
        cfg = ApConfig(thresholds=[1.0], connectivity=8)
        for image in _random_images(50, seed=12):
            for area in (2, 5, 9):
                numpy.testing.assert_array_equal(
                    attribute_thinning(image, area, cfg=cfg), brute_force_thinning(image, area, connectivity=8))

    def test_brute_force_oracle_lines(self):
        images = _random_images(40, seed=17, shape=(1, 12)) + _random_images(40, seed=18, shape=(9, 1))
        for image in images:
            for connectivity in (4, 8):
                cfg = ApConfig(thresholds=[1.0], connectivity=connectivity)
                for area in range(1, 8):
                    numpy.testing.assert_array_equal(
                        attribute_thinning(image, area, cfg=cfg),
                        brute_force_thinning(image, area, connectivity=connectivity))
                    numpy.testing.assert_array_equal(
                        attribute_thickening(image, area, cfg=cfg),
                        brute_force_thickening(image, area, connectivity=connectivity))

    def test_skimage_area_filters(self):
        image = numpy.random.default_rng(13).integers(0, 256, size=(40, 50))
        for area in (3, 17, 60):
            numpy.testing.assert_array_equal(
                attribute_thinning(image, area), area_opening(image, area_threshold=area, connectivity=1))
            numpy.testing.assert_array_equal(
                attribute_thickening(image, area), area_closing(image, area_threshold=area, connectivity=1))

    def test_algebraic_properties(self):
        for image in _random_images(200, seed=14):
            previous_thin, previous_thick = image, image
            for area in range(1, 11):
                thin = attribute_thinning(image, area)
                thick = attribute_thickening(image, area)
                self.assertTrue(numpy.all(thin <= image))
                self.assertTrue(numpy.all(thick >= image))
                numpy.testing.assert_array_equal(attribute_thinning(thin, area), thin)
                numpy.testing.assert_array_equal(attribute_thickening(thick, area), thick)
                self.assertTrue(numpy.all(thin <= previous_thin))
                self.assertTrue(numpy.all(thick >= previous_thick))
                numpy.testing.assert_array_equal(thick, 255 - attribute_thinning(255 - image, area))
                previous_thin, previous_thick = thin, thick

    def test_rules_agree_for_area(self):
        direct = ApConfig(thresholds=[1.0], rule='direct')
        for image in _random_images(30, seed=15):
            numpy.testing.assert_array_equal(
                attribute_thinning(image, 6, cfg=direct), attribute_thinning(image, 6))

    def test_non_increasing_attributes(self):
        for kind, threshold in (('stddev', 20.0), ('moment', 0.3)):
            for rule in ('min', 'direct'):
                cfg = ApConfig(kind=kind, thresholds=[threshold], rule=rule)
                for image in _random_images(30, seed=16):
                    thin = attribute_thinning(image, threshold, cfg=cfg)
                    thick = attribute_thickening(image, threshold, cfg=cfg)
                    self.assertTrue(numpy.all(thin <= image))
                    self.assertTrue(numpy.all(thick >= image))
                    # every output level is the level of an ancestor, so occurs in the input
                    self.assertTrue(numpy.all(numpy.isin(thin, image)))

    def test_min_rule_removes_descendants(self):
        # the pair {150, 250} has stddev 50 and passes, its parent plateau at
        # 100 has stddev about 30.6 and fails
        image = numpy.zeros((7, 7), dtype='int64')
        image[1:6, 1:6] = 100
        image[2, 2] = 150
        image[2, 3] = 250
        tree = build_tree(image)
        self.assertAlmostEqual(tree.stddev[tree.pixel_node[2*7 + 2]], 50.0, places=9)
        self.assertAlmostEqual(tree.stddev[tree.pixel_node[3*7 + 3]], numpy.sqrt(936.0), places=9)

        direct = attribute_thinning(image, 40.0, cfg=ApConfig(kind='stddev', thresholds=[40.0], rule='direct'))
        expected = numpy.zeros((7, 7), dtype='int64')
        expected[2, 2:4] = 150
        numpy.testing.assert_array_equal(direct, expected)

        pruned = attribute_thinning(image, 40.0, cfg=ApConfig(kind='stddev', thresholds=[40.0], rule='min'))
        numpy.testing.assert_array_equal(pruned, 0)

    def test_invalid_input(self):
        with self.assertRaises(ValueError):
            attribute_thinning(numpy.array([[0.5, 1.0], [0.0, 1.0]]), 2)
        with self.assertRaises(ValueError):
            attribute_thinning(numpy.zeros((3, 3), dtype='int64'), -1)
        with self.assertRaises(ValueError):
            attribute_thinning(numpy.full((3, 3), 300), 2)


class TestProfiles(unittest.TestCase):
    def test_lengths(self):
        image = _random_images(1, seed=20, shape=(20, 20))[0]
        for k in (1, 4, 20):
            cfg = ApConfig(thresholds=[float(entry) for entry in range(1, k + 1)])
            profile = attribute_profile(image, cfg)
            self.assertEqual(profile.channels, 2*k + 1)
            self.assertEqual(len(profile.names), 2*k + 1)
            numpy.testing.assert_array_equal(profile.data[k], image)
            # thickenings descending, then thinnings
            for i in range(2*k):
                self.assertTrue(numpy.all(profile.data[i] >= profile.data[i + 1]))

    def test_zero_threshold(self):
        image = _random_images(1, seed=21)[0]
        profile = attribute_profile(image, ApConfig(thresholds=[0.0]))
        for channel in profile.data:
            numpy.testing.assert_array_equal(channel, image)

    def test_constant_image(self):
        profile = attribute_profile(numpy.full((6, 6), 40), ApConfig(thresholds=[2.0, 8.0, 30.0]))
        numpy.testing.assert_array_equal(profile.data, 40)

    def test_names(self):
        cfg = ApConfig(thresholds=[10.0, 100.0])
        self.assertEqual(cfg.profile_names(), [
            'area:thick:100', 'area:thick:10', 'area:f', 'area:thin:10', 'area:thin:100'])

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            ApConfig(thresholds=[5.0, 5.0])
        with self.assertRaises(ValueError):
            ApConfig(thresholds=[-1.0, 5.0])
        with self.assertRaises(ValueError):
            ApConfig()
        with self.assertRaises(ValueError):
            ApConfig(thresholds=[1.0], connectivity=6)

    def test_auto_thresholds(self):
        values = auto_thresholds('area', 20, 100*100)
        self.assertEqual(values.size, 20)
        self.assertTrue(numpy.all(numpy.diff(values) > 0))
        self.assertTrue(values[0] >= 10 and values[-1] <= 2000)
        numpy.testing.assert_array_equal(values, numpy.round(values))
        numpy.testing.assert_array_equal(auto_thresholds('area', 1, 100*100), [10])
        self.assertTrue(auto_thresholds('area', 2, 10).size >= 1)
        self.assertEqual(auto_thresholds('stddev', 5, 100).size, 5)
        with self.assertRaises(ValueError):
            auto_thresholds('area', 0, 100)
        with self.assertRaises(ValueError):
            auto_thresholds('perimeter', 3, 100)

    def test_auto_config(self):
        cfg = ApConfig.auto('area', 20, 200*200)
        self.assertEqual(cfg.k, 20)
        self.assertEqual(cfg.profile_length, 41)


class TestEmap(unittest.TestCase):
    def test_channel_count(self):
        data = numpy.random.default_rng(30).uniform(size=(4, 12, 12))
        cfg = ApConfig(thresholds=[float(entry) for entry in range(1, 21)])
        out = emap(HsiCube(data, chain='pca(0.999)'), cfg)
        self.assertEqual(out.channels, 4*41)
        self.assertEqual(out.data.dtype, numpy.dtype('float32'))
        self.assertEqual(out.names[20], 'band_001:area:f')
        self.assertEqual(out.chain, 'pca(0.999) -> emap[area(k=20)]')
        numpy.testing.assert_allclose(out.data[20], data[0], atol=0.5/255 + 1e-6)

    def test_two_configs(self):
        stack = FeatureStack(numpy.random.default_rng(31).uniform(size=(1, 8, 8)), names=['pc_001'])
        out = emap(stack, [ApConfig(thresholds=[2.0, 4.0]), ApConfig(kind='stddev', thresholds=[5.0, 10.0])])
        self.assertEqual(out.channels, 10)
        self.assertEqual(out.names[5], 'pc_001:stddev:thick:10')

    def test_value_range(self):
        data = numpy.random.default_rng(32).uniform(-3.0, 7.0, size=(2, 10, 10))
        out = emap(FeatureStack(data), ApConfig(thresholds=[3.0, 9.0]))
        for base in range(2):
            block = out.data[5*base:5*(base + 1)]
            self.assertGreaterEqual(float(block.min()), data[base].min() - 1e-5)
            self.assertLessEqual(float(block.max()), data[base].max() + 1e-5)

    def test_constant(self):
        out = emap(HsiCube(numpy.full((3, 5, 5), 0.25)), ApConfig(thresholds=[2.0]))
        numpy.testing.assert_allclose(out.data, 0.25)

    def test_threads(self):
        data = numpy.random.default_rng(33).uniform(size=(5, 9, 9))
        cfg = ApConfig(thresholds=[2.0, 5.0])
        numpy.testing.assert_array_equal(emap(FeatureStack(data), cfg, n_jobs=3).data,
                                         emap(FeatureStack(data), cfg).data)

    def test_single_row_cube(self):
        data = numpy.random.default_rng(34).uniform(size=(2, 1, 8))
        out = emap(HsiCube(data), ApConfig(thresholds=[2.0]))
        self.assertEqual(out.data.shape, (6, 1, 8))
        quantized = quantize(data[0])
        expected = quantized.dequantize(brute_force_thinning(quantized.levels.astype('int64'), 2))
        numpy.testing.assert_allclose(out.data[2], expected, rtol=1e-6, atol=1e-6)

    def test_no_configs(self):
        with self.assertRaises(ValueError):
            emap(FeatureStack(numpy.zeros((1, 4, 4))), [])

import numpy

from hsi_layers.chromatic import ChromaticBasis, build_basis, hsi_components, hsi_transform, project_chromatic
from hsi_layers.cube import FeatureStack, HsiCube, stack_features

from tests import unittest


class TestChromaticBasis(unittest.TestCase):
    def test_three_bands(self):
        vectors = ChromaticBasis(3).vectors
        expected = numpy.array([
            [2/numpy.sqrt(6), -1/numpy.sqrt(6), -1/numpy.sqrt(6)],
            [0, 1/numpy.sqrt(2), -1/numpy.sqrt(2)]])
        numpy.testing.assert_allclose(vectors, expected, rtol=0, atol=1e-12)

    def test_two_bands(self):
        numpy.testing.assert_allclose(
            ChromaticBasis(2).vectors, [[1/numpy.sqrt(2), -1/numpy.sqrt(2)]], rtol=0, atol=1e-12)

    def test_invariants(self):
        for n in list(range(2, 65)) + [258]:
            basis = ChromaticBasis(n)
            vectors = basis.vectors
            self.assertEqual(vectors.shape, (n - 1, n))
            numpy.testing.assert_allclose(vectors.dot(vectors.T), numpy.eye(n - 1), rtol=0, atol=1e-9)
            numpy.testing.assert_allclose(vectors.dot(basis.achromatic_axis), 0, rtol=0, atol=1e-9)

    def test_too_small(self):
        with self.assertRaises(ValueError):
            ChromaticBasis(1)

    def test_cached(self):
        self.assertIs(build_basis(17), build_basis(17))


class TestProjection(unittest.TestCase):
    def test_mean_removal(self):
        rng = numpy.random.default_rng(0)
        for n in (3, 8, 32):
            pixels = rng.uniform(size=(10000, n))
            expected = pixels - pixels.mean(axis=1, keepdims=True)
            numpy.testing.assert_allclose(project_chromatic(pixels), expected, rtol=0, atol=1e-9)

    def test_single_pixel(self):
        numpy.testing.assert_allclose(project_chromatic([1.0, 0.0, 0.0]), [2/3, -1/3, -1/3], rtol=0, atol=1e-12)

    def test_gray_annihilated(self):
        numpy.testing.assert_allclose(project_chromatic(numpy.full(7, 0.4)), 0, rtol=0, atol=1e-12)

    def test_offset_invariant(self):
        x = numpy.random.default_rng(1).uniform(size=12)
        numpy.testing.assert_allclose(project_chromatic(x + 3.5), project_chromatic(x), rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            project_chromatic(numpy.zeros(4), basis=ChromaticBasis(5))


class TestHsiComponents(unittest.TestCase):
    def test_saturation_intensity(self):
        hue, saturation, intensity, achromatic = hsi_components(numpy.array([[0.2, 0.5, 0.9, 0.4]]))
        self.assertAlmostEqual(saturation[0], 0.7, places=12)
        self.assertAlmostEqual(intensity[0], 0.5, places=12)
        self.assertFalse(achromatic[0])
        self.assertAlmostEqual(float(numpy.linalg.norm(hue[0])), 1.0, places=12)

    def test_gray(self):
        hue, saturation, intensity, achromatic = hsi_components(numpy.array([[0.3, 0.3, 0.3]]))
        self.assertTrue(achromatic[0])
        numpy.testing.assert_array_equal(hue[0], 0)
        self.assertEqual(saturation[0], 0)
        self.assertAlmostEqual(intensity[0], 0.3, places=12)

    def test_scaling(self):
        x = numpy.array([[0.1, 0.25, 0.3, 0.05, 0.2]])
        hue, saturation, intensity, _ = hsi_components(x)
        hue2, saturation2, intensity2, _ = hsi_components(2*x)
        numpy.testing.assert_allclose(hue2, hue, rtol=0, atol=1e-12)
        numpy.testing.assert_allclose(saturation2, 2*saturation, rtol=1e-12)
        numpy.testing.assert_allclose(intensity2, 2*intensity, rtol=1e-12)

    def test_hue_invariance(self):
        rng = numpy.random.default_rng(2)
        for n in (3, 8, 32):
            pixels = rng.uniform(size=(10000, n))
            hue, saturation, intensity, _ = hsi_components(pixels)
            numpy.testing.assert_array_equal(saturation, pixels.max(axis=1) - pixels.min(axis=1))
            numpy.testing.assert_array_equal(intensity, pixels.mean(axis=1))
            for alpha, beta in ((0.5, 0.0), (3.0, -2.0), (0.1, 10.0)):
                transformed, _, _, _ = hsi_components(alpha*pixels + beta)
                numpy.testing.assert_allclose(transformed, hue, rtol=0, atol=1e-9)

    def test_non_finite(self):
        with self.assertRaises(ValueError):
            hsi_components(numpy.array([[0.1, numpy.nan, 0.2]]))


class TestHsiTransform(unittest.TestCase):
    def test_channels(self):
        cube = HsiCube(numpy.random.default_rng(3).uniform(size=(6, 4, 5)), chain='corrected')
        features = hsi_transform(cube)
        self.assertEqual(features.channels, 8)
        self.assertEqual(features.names[0], 'hue_001')
        self.assertEqual(features.names[-2:], ('saturation', 'intensity'))
        self.assertEqual(features.chain, 'corrected -> hsi_transform')
        numpy.testing.assert_allclose(features.data[-1], cube.data.mean(axis=0))
        numpy.testing.assert_allclose(numpy.sum(features.data[:6]**2, axis=0), 1.0)

    def test_achromatic_mask(self):
        data = numpy.random.default_rng(6).uniform(size=(4, 3, 5))
        data[:, 1, 2] = 0.4
        data[:, 0, 4] = 0.0
        features, achromatic = hsi_transform(HsiCube(data), return_achromatic=True)
        expected = numpy.zeros((3, 5), dtype='bool')
        expected[1, 2] = expected[0, 4] = True
        numpy.testing.assert_array_equal(achromatic, expected)
        numpy.testing.assert_array_equal(features.data[:4, 1, 2], 0)
        numpy.testing.assert_allclose(features.data[-1, 1, 2], 0.4)
        numpy.testing.assert_allclose(features.data[-2, 0, 4], 0)

    def test_stacked_with_cube(self):
        cube = HsiCube(numpy.random.default_rng(4).uniform(size=(5, 3, 3)))
        stacked = stack_features([cube, hsi_transform(cube)])
        self.assertEqual(stacked.channels, 2*5 + 2)

    def test_feature_stack_input(self):
        stack = FeatureStack(numpy.random.default_rng(5).uniform(size=(3, 2, 2)), names=['R', 'G', 'B'])
        features = hsi_transform(stack)
        self.assertEqual(features.names, ('hue_001', 'hue_002', 'hue_003', 'saturation', 'intensity'))

import os
import tempfile

import numpy

from hsi_layers.cube import FeatureStack
from hsi_layers.dimred import PcaModel, fit_pca, inverse_transform_pca, transform_pca

from tests import unittest


def _stack(samples, rows=None):
    samples = numpy.asarray(samples, dtype='float64')
    if rows is None:
        rows = 1
    return FeatureStack.from_pixels(samples, rows, samples.shape[0]//rows)


def _known_variances(variances, count=1000, seed=0):
    """
    Samples whose sample covariance (ddof 1) is exactly the diagonal of the given variances.
    """

    rng = numpy.random.default_rng(seed)
    z = rng.standard_normal((count, len(variances)))
    z -= z.mean(axis=0)
    q, _ = numpy.linalg.qr(z)
    return q*numpy.sqrt(numpy.asarray(variances)*(count - 1)) + 5.0


class TestFitPca(unittest.TestCase):
    def test_rank_one(self):
        x = numpy.linspace(-1.0, 1.0, 50)
        model = fit_pca(_stack(numpy.stack([x, 2*x], axis=1)))
        self.assertEqual(model.n_components, 1)
        self.assertAlmostEqual(model.retained_ratio, 1.0, places=12)
        numpy.testing.assert_allclose(model.components[0], numpy.array([1.0, 2.0])/numpy.sqrt(5), atol=1e-12)

    def test_isotropic(self):
        samples = numpy.random.default_rng(1).standard_normal((2000, 3))
        model = fit_pca(_stack(samples), target_variance=0.999)
        self.assertEqual(model.n_components, 3)

    def test_known_variances(self):
        model = fit_pca(_stack(_known_variances((10.0, 1.0, 1e-6))), target_variance=0.999)
        self.assertEqual(model.n_components, 2)
        numpy.testing.assert_allclose(model.explained_variance, [10.0, 1.0], rtol=1e-6)
        self.assertAlmostEqual(model.total_variance, 11.000001, places=6)
        self.assertGreaterEqual(model.retained_ratio, 0.999)
        numpy.testing.assert_allclose(model.components.dot(model.components.T), numpy.eye(2), atol=1e-9)
        numpy.testing.assert_allclose(numpy.abs(model.components), [[1, 0, 0], [0, 1, 0]], atol=1e-9)

    def test_sign_convention(self):
        samples = numpy.random.default_rng(2).standard_normal((500, 4))*[3.0, 2.0, 1.0, 0.5]
        model = fit_pca(_stack(samples), target_variance=1.0)
        largest = numpy.argmax(numpy.abs(model.components), axis=1)
        self.assertTrue(numpy.all(model.components[numpy.arange(model.n_components), largest] > 0))
        again = fit_pca(_stack(-samples), target_variance=1.0)
        numpy.testing.assert_allclose(again.components, model.components, atol=1e-9)

    def test_max_components(self):
        samples = _known_variances((10.0, 1.0, 0.5))
        model = fit_pca(_stack(samples), target_variance=0.999, max_components=2)
        self.assertEqual(model.n_components, 2)
        self.assertLess(model.retained_ratio, 0.999)

    def test_mask(self):
        samples = numpy.zeros((6, 2))
        samples[:3] = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]
        samples[3:] = [[0.0, 9.0], [5.0, -3.0], [1.0, 7.0]]
        mask = numpy.array([[True, True, True, False, False, False]])
        model = fit_pca(_stack(samples), mask=mask)
        self.assertEqual(model.n_components, 1)
        numpy.testing.assert_allclose(model.components[0], [1/numpy.sqrt(2), 1/numpy.sqrt(2)], atol=1e-12)
        with self.assertRaises(ValueError):
            fit_pca(_stack(samples), mask=numpy.ones((2, 3), dtype='bool'))

    def test_errors(self):
        with self.assertRaises(ValueError):
            fit_pca(_stack(numpy.full((10, 3), 2.0)))
        with self.assertRaises(ValueError):
            fit_pca(_stack(numpy.ones((1, 3))))
        samples = numpy.random.default_rng(3).standard_normal((10, 3))
        for target in (0.0, 1.5):
            with self.assertRaises(ValueError):
                fit_pca(_stack(samples), target_variance=target)


class TestTransformPca(unittest.TestCase):
    def test_mean_pixel(self):
        samples = numpy.random.default_rng(4).standard_normal((100, 5))
        model = fit_pca(_stack(samples))
        projected = transform_pca(_stack(model.mean[numpy.newaxis, :]), model)
        numpy.testing.assert_allclose(projected.data, 0, atol=1e-12)

    def test_signed_distance(self):
        x = numpy.linspace(-2.0, 3.0, 40)
        samples = numpy.stack([x, 2*x], axis=1)
        model = fit_pca(_stack(samples))
        projected = transform_pca(_stack(samples), model)
        expected = (samples - samples.mean(axis=0)).dot(numpy.array([1.0, 2.0])/numpy.sqrt(5))
        numpy.testing.assert_allclose(projected.pixels()[:, 0], expected, atol=1e-12)
        self.assertEqual(projected.names, ('pc_001', ))

    def test_reconstruction_error(self):
        rng = numpy.random.default_rng(5)
        samples = rng.standard_normal((400, 6))*[4.0, 2.0, 1.0, 0.5, 0.25, 0.1]
        samples = samples.dot(numpy.linalg.qr(rng.standard_normal((6, 6)))[0])
        stack = _stack(samples, rows=20)
        model = fit_pca(stack, target_variance=0.9)
        self.assertLess(model.n_components, 6)
        reconstructed = inverse_transform_pca(transform_pca(stack, model), model)
        centered = samples - samples.mean(axis=0)
        residual = numpy.sum((reconstructed.pixels() - samples)**2)/numpy.sum(centered**2)
        self.assertLessEqual(residual, 1 - 0.9 + 1e-12)
        self.assertAlmostEqual(residual, 1 - model.retained_ratio, places=9)

    def test_decorrelated(self):
        rng = numpy.random.default_rng(6)
        samples = rng.standard_normal((1000, 4)).dot(rng.standard_normal((4, 4)))
        model = fit_pca(_stack(samples), target_variance=1.0)
        projected = transform_pca(_stack(samples), model).pixels()
        covariance = numpy.cov(projected, rowvar=False)
        variances = numpy.diag(covariance)
        off_diagonal = covariance - numpy.diag(variances)
        self.assertLess(numpy.abs(off_diagonal).max()/variances.min(), 1e-6)
        numpy.testing.assert_allclose(variances, model.explained_variance, rtol=1e-9)

    def test_chain(self):
        stack = FeatureStack(numpy.random.default_rng(7).standard_normal((3, 4, 4)), chain='corrected')
        projected = transform_pca(stack, fit_pca(stack))
        self.assertEqual(projected.chain, 'corrected -> pca(0.999)')

    def test_dimension_mismatch(self):
        model = fit_pca(_stack(numpy.random.default_rng(8).standard_normal((20, 3))))
        with self.assertRaises(ValueError):
            transform_pca(_stack(numpy.zeros((4, 2))), model)


class TestPcaModel(unittest.TestCase):
    def test_json_file(self):
        model = fit_pca(_stack(numpy.random.default_rng(9).standard_normal((50, 4))), target_variance=0.8)
        with tempfile.TemporaryDirectory() as directory:
            fname = os.path.join(directory, 'pca.json')
            model.to_json_file(fname)
            loaded = PcaModel.from_json_file(fname)
        numpy.testing.assert_array_equal(loaded.components, model.components)
        numpy.testing.assert_array_equal(loaded.mean, model.mean)
        self.assertEqual(loaded.retained_ratio, model.retained_ratio)
        self.assertEqual(loaded.target, 0.8)

    def test_validation(self):
        with self.assertRaises(ValueError):
            PcaModel(numpy.zeros(3), numpy.eye(2), [1.0, 1.0], 2.0)
        with self.assertRaises(ValueError):
            PcaModel(numpy.zeros(2), numpy.eye(2), [1.0], 2.0)
        with self.assertRaises(ValueError):
            PcaModel(numpy.zeros(2), numpy.eye(2), [1.0, 1.0], 0.0)

import numpy as np
import pytest

from levelset_clt import densities
from levelset_clt.densities import KdeDensityModel, StandardNormalModel, level_for_mass, load_points, \
    make_model
from levelset_clt.errors import DimensionMismatchError, UnsupportedModelError
from levelset_clt.kernel import make_kernel


class TestStandardNormal:
    def test_gauss2d_level(self):
        m = make_model('gauss2d')
        assert m.level_from_coverage(0.95) == pytest.approx(0.05 / (2.0 * np.pi))
        assert m.coverage(m.level_from_coverage(0.5)) == pytest.approx(0.5)

    def test_gauss1d_level(self):
        m = make_model('gauss1d')
        c = densities.level_from_coverage(m, 0.95)
        assert m.radius_at(c) == pytest.approx(1.959963984540054, rel=1e-9)
        assert m.coverage(c) == pytest.approx(0.95, rel=1e-12)

    def test_bisection_fallback(self):
        m = make_model('gauss2d')
        c = super(StandardNormalModel, m).level_from_coverage(0.8)
        assert c == pytest.approx(0.2 / (2.0 * np.pi), rel=1e-9)

    def test_radius(self):
        m = make_model('gauss2d')
        c = m.level_from_coverage(0.95)
        assert m.density(np.array([m.radius_at(c), 0.0])) == pytest.approx(c)
        assert m.radius_at(m.sup_f) == 0.0
        assert m.radius_at(0.0) == np.inf

    def test_geometry(self):
        m = make_model('gauss1d')
        c = m.level_from_coverage(0.5)
        geometry = m.geometry(c)
        z, slopes = m.crossings(c)
        assert geometry.lebesgue_measure == pytest.approx(z[1] - z[0])
        assert slopes[0] > 0 > slopes[1]
        assert geometry.min_slope == pytest.approx(abs(slopes[0]))

    def test_crossings_only_1d(self):
        with pytest.raises(UnsupportedModelError):
            make_model('gauss2d').crossings(0.1)

    def test_level_window(self):
        m = make_model('gauss2d')
        with pytest.raises(ValueError):
            m.check_level(m.sup_f)
        with pytest.raises(ValueError):
            m.check_level(0.0)
        with pytest.raises(ValueError):
            m.level_from_coverage(1.0)

    def test_dimension(self):
        with pytest.raises(DimensionMismatchError):
            make_model('gauss2d').density(np.zeros((4, 3)))
        with pytest.raises(ValueError):
            make_model('gauss3d')

    def test_sample_seeded(self):
        m = make_model('gauss2d')
        np.testing.assert_array_equal(densities.sample(m, 10, 7), densities.sample(m, 10, 7))
        assert not np.array_equal(m.sample(10, 7), m.sample(10, 8))
        with pytest.raises(ValueError):
            m.sample(5, None)

    def test_sample_prefix(self):
        m = make_model('gauss2d')
        np.testing.assert_array_equal(m.sample(50, 3), m.sample(80, 3)[:50])

    def test_monte_carlo_coverage(self):
        m = make_model('gauss2d')
        c = m.level_from_coverage(0.9)
        frac, se = densities.monte_carlo_coverage(m, c, 40000, 11)
        assert abs(frac - 0.9) < 4.0 * se

    def test_shifted_center(self):
        m = StandardNormalModel(2, center=[1.0, 0.0])
        assert m.density(np.array([1.0, 0.0])) == pytest.approx(m.sup_f)
        assert np.mean(m.sample(20000, 2), axis=0) == pytest.approx([1.0, 0.0], abs=0.03)


class TestKdeReference:
    @pytest.fixture(scope='class')
    def reference(self):
        points = make_model('gauss2d').sample(20000, 21)
        return KdeDensityModel(points, make_kernel('box', 2), h=0.05)

    def test_total_mass(self, reference):
        assert reference.coverage(1e-300) == pytest.approx(1.0, abs=5e-3)

    def test_level_close_to_truth(self, reference):
        c = reference.level_from_coverage(0.5)
        assert c == pytest.approx(0.5 / (2.0 * np.pi), rel=0.1)
        assert reference.coverage(c) >= 0.5

    def test_bootstrap_sample(self, reference):
        draws = reference.sample(5000, 4)
        assert draws.shape == (5000, 2)
        np.testing.assert_array_equal(draws, reference.sample(5000, 4))
        assert np.cov(draws.T) == pytest.approx(np.eye(2), abs=0.1)

    def test_no_gradient(self, reference):
        with pytest.raises(UnsupportedModelError):
            reference.gradient(np.zeros(2))


class TestLevelForMass:
    def test_step(self):
        values = np.array([4.0, 3.0, 2.0, 1.0])
        assert level_for_mass(values, 0.1, 0.35) == 4.0
        assert level_for_mass(values, 0.1, 0.7) == 3.0
        assert level_for_mass(values, 0.1, 0.75) == 2.0

    def test_too_much(self):
        with pytest.raises(ValueError):
            level_for_mass(np.array([1.0, 1.0]), 0.1, 0.5)


class TestLoadPoints:
    def test_header(self, tmp_path):
        fpath = tmp_path / 'points.csv'
        fpath.write_text('x,y\n0.5,1.5\n-1,2\n')
        np.testing.assert_array_equal(load_points(str(fpath), 2), [[0.5, 1.5], [-1.0, 2.0]])

    def test_no_header(self, tmp_path):
        fpath = tmp_path / 'points.csv'
        fpath.write_text('0.5\n1.5\n')
        assert load_points(str(fpath)).shape == (2, 1)

    def test_dimension_mismatch(self, tmp_path):
        fpath = tmp_path / 'points.csv'
        fpath.write_text('1,2,3\n4,5,6\n')
        with pytest.raises(DimensionMismatchError):
            load_points(str(fpath), 2)

    def test_ragged(self, tmp_path):
        fpath = tmp_path / 'points.csv'
        fpath.write_text('1,2\n3\n')
        with pytest.raises(ValueError):
            load_points(str(fpath))

import numpy as np
import pytest

from levelset_clt import levelset
from levelset_clt.densities import KdeDensityModel, StandardNormalModel, make_model
from levelset_clt.errors import DimensionMismatchError, UnsupportedModelError
from levelset_clt.kde import KdeMode, build_kde
from levelset_clt.kernel import make_kernel
from levelset_clt.levelset import GridIntegrator, LevelShiftedField, WeightKind, WeightTag


class ScaledField(object):
    """ s·f for a model density f: its level set at c is C(c/s). """

    def __init__(self, model, scale):
        self.model = model
        self.scale = scale
        self.dimension = model.dimension

    def evaluate(self, x):
        return self.scale * self.model.evaluate(x)


def _lens(r, d):
    return 2.0 * r * r * np.arccos(d / (2.0 * r)) - d / 2.0 * np.sqrt(4.0 * r * r - d * d)


@pytest.fixture
def gauss2d():
    return make_model('gauss2d')


class TestWeightKind:
    def test_parse(self):
        assert WeightKind.parse('lebesgue') == WeightKind.lebesgue()
        assert WeightKind.parse('Density').tag is WeightTag.DENSITY
        assert WeightKind.parse('excess') == WeightKind.excess_power(1.0)
        assert WeightKind.parse('excess_power(2.5)').power == 2.5
        with pytest.raises(ValueError):
            WeightKind.parse('counting')
        with pytest.raises(ValueError):
            WeightKind.excess_power(-1.0)

    def test_values(self):
        f = np.array([0.1, 0.3])
        assert WeightKind.lebesgue()(f, 0.2) == pytest.approx([1.0, 1.0])
        assert WeightKind.density()(f, 0.2) == pytest.approx([0.1, 0.3])
        assert WeightKind.excess_power(2.0)(f, 0.2) == pytest.approx([0.01, 0.01])

    def test_inv_gamma(self):
        assert WeightKind.lebesgue().inv_gamma == 0.0
        assert WeightKind.density().inv_gamma == 0.0
        assert WeightKind.excess_power(1.5).inv_gamma == 1.5
        assert str(WeightKind.excess_power(1.0)) == 'excess_power(1)'


class TestBand:
    def test_halfwidth(self):
        assert levelset.band_halfwidth(1000, 0.1, sigma=2.0) == pytest.approx(2.0 * np.sqrt(np.log(1000) / 100.0))

    def test_invalid(self):
        with pytest.raises(ValueError):
            levelset.band_halfwidth(1, 0.1)


class TestRadial:
    def test_scaled_disc(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        r0, r1 = gauss2d.radius_at(c), gauss2d.radius_at(c / 1.1)
        field = ScaledField(gauss2d, 1.1)
        result = levelset.symmdiff_radial(field, gauss2d, c, band=0.03)
        assert result.integrator == 'radial'
        assert result.value == pytest.approx(np.pi * (r1 ** 2 - r0 ** 2), rel=1e-9)
        assert not result.flagged
        assert result.diagnostics['multiple_crossings'] == 0

    def test_scaled_disc_weights(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        r0, r1 = gauss2d.radius_at(c), gauss2d.radius_at(c / 1.1)
        field = ScaledField(gauss2d, 1.1)
        density = levelset.symmdiff_radial(field, gauss2d, c, WeightKind.density(), band=0.03)
        assert density.value == pytest.approx(2.0 * np.pi * (c - c / 1.1), rel=1e-9)
        excess = levelset.symmdiff_radial(field, gauss2d, c, WeightKind.excess_power(1.0), band=0.03)
        expected = np.pi * c * (r1 ** 2 - r0 ** 2) - 2.0 * np.pi * (c - c / 1.1)
        assert excess.value == pytest.approx(expected, rel=1e-8)

    def test_shifted_disc(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        r0 = gauss2d.radius_at(c)
        shift = np.array([0.1, 0.05])
        field = StandardNormalModel(2, center=shift)
        expected = 2.0 * (np.pi * r0 ** 2 - _lens(r0, np.linalg.norm(shift)))
        radial = levelset.symmdiff_radial(field, gauss2d, c, band=0.03, angles=1024)
        assert radial.value == pytest.approx(expected, rel=1e-4)
        grid = levelset.symmdiff_grid(field, gauss2d, c, cell=0.004, band=0.03)
        assert grid.integrator == 'grid'
        assert grid.value == pytest.approx(expected, rel=1e-2)

    def test_identical_sets(self, gauss2d):
        c = gauss2d.level_from_coverage(0.9)
        assert levelset.symmdiff(gauss2d, gauss2d, c, band=0.01).value == pytest.approx(0.0, abs=1e-12)

    def test_not_radial(self, gauss2d):
        gauss1d = make_model('gauss1d')
        with pytest.raises(UnsupportedModelError):
            levelset.symmdiff_radial(ScaledField(gauss1d, 1.1), gauss1d, 0.2, band=0.01)

    def test_level_window(self, gauss2d):
        with pytest.raises(ValueError):
            levelset.symmdiff(ScaledField(gauss2d, 1.1), gauss2d, 0.5, band=0.01)


class TestCrossings:
    def test_scaled_interval(self):
        gauss1d = make_model('gauss1d')
        c = gauss1d.level_from_coverage(0.5)
        r0, r1 = gauss1d.radius_at(c), gauss1d.radius_at(c / 1.1)
        result = levelset.symmdiff_1d(ScaledField(gauss1d, 1.1), gauss1d, c, band=0.06)
        assert result.integrator == '1d'
        assert result.value == pytest.approx(2.0 * (r1 - r0), rel=1e-9)

    def test_default_for_1d(self):
        gauss1d = make_model('gauss1d')
        c = gauss1d.level_from_coverage(0.5)
        assert levelset.symmdiff(ScaledField(gauss1d, 1.1), gauss1d, c, band=0.06).integrator == '1d'

    def test_dimension_mismatch(self, gauss2d):
        gauss1d = make_model('gauss1d')
        c = gauss1d.level_from_coverage(0.5)
        with pytest.raises(DimensionMismatchError):
            levelset.symmdiff_1d(ScaledField(gauss2d, 1.1), gauss1d, c, band=0.06)


class TestGrid:
    def test_scaled_disc(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        r0, r1 = gauss2d.radius_at(c), gauss2d.radius_at(c / 1.1)
        result = levelset.symmdiff_grid(ScaledField(gauss2d, 1.1), gauss2d, c, cell=0.004, band=0.03)
        assert result.value == pytest.approx(np.pi * (r1 ** 2 - r0 ** 2), rel=1e-2)

    def test_cell_too_coarse(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        with pytest.raises(ValueError):
            levelset.symmdiff_grid(ScaledField(gauss2d, 1.1), gauss2d, c, cell=0.5, band=0.03)

    def test_cell_required(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        with pytest.raises(ValueError):
            levelset.symmdiff_grid(ScaledField(gauss2d, 1.1), gauss2d, c, band=0.03)

    def test_box_covers_estimate(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        field = build_kde(np.array([[4.0, 4.0]]), 0.04, make_kernel('box', 2))
        lo, hi = GridIntegrator().resolve_box(field, gauss2d, c)
        assert np.all(hi >= 4.09)
        assert np.all(lo <= -gauss2d.radius_at(c))


class TestKde:
    @pytest.fixture(scope='class')
    def sample(self):
        return make_model('gauss2d').sample(2000, 17)

    def test_measure_bound(self, gauss2d, sample):
        c = gauss2d.level_from_coverage(0.5)
        field = build_kde(sample, 0.02, make_kernel('box', 2))
        result = levelset.symmdiff(field, gauss2d, c)
        assert 0.0 < result.value <= 2.0 / c

    def test_islands_fail_over(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        field = build_kde(make_model('gauss2d').sample(200, 5), 0.001, make_kernel('box', 2))
        result = levelset.symmdiff_radial(field, gauss2d, c)
        assert result.diagnostics['failover'] == 'grid'
        assert result.flagged
        assert result.value == pytest.approx(
            levelset.symmdiff_grid(field, gauss2d, c).value, rel=1e-12)

    def test_poissonized(self, gauss2d, sample):
        c = gauss2d.level_from_coverage(0.5)
        field = build_kde(sample, 0.05, make_kernel('radpoly', 2), mode=KdeMode.POISSONIZED, seed=3, n=1500)
        assert levelset.symmdiff(field, gauss2d, c).value > 0.0

    def test_kde_reference_uses_grid(self, sample):
        reference = KdeDensityModel(sample, make_kernel('box', 2), h=0.1)
        c = reference.level_from_coverage(0.5)
        field = build_kde(make_model('gauss2d').sample(2000, 99), 0.1, make_kernel('box', 2))
        result = levelset.symmdiff(field, reference, c)
        assert result.integrator == 'grid'
        assert levelset.symmdiff(reference.field, reference, c).value == 0.0

    @pytest.mark.parametrize('p', [1.0, 2.0])
    def test_lp_identity(self, gauss2d, sample, p):
        field = build_kde(sample, 0.05, make_kernel('box', 2))
        lhs, rhs = levelset.lp_identity_check(field, gauss2d, p)
        assert lhs == pytest.approx(rhs, rel=0.03)


class TestLevelShiftedField:
    def test_shift(self, gauss2d):
        field = ScaledField(gauss2d, 1.1)
        shifted = LevelShiftedField(field, estimate_level=0.07, level=0.08)
        x = np.array([[0.3, 0.4]])
        assert shifted.evaluate(x) == pytest.approx(field.evaluate(x) + 0.01)
        assert shifted.scale == 1.1
        assert shifted.dimension == 2

    def test_level_set_moves(self, gauss2d):
        c = gauss2d.level_from_coverage(0.5)
        field = ScaledField(gauss2d, 1.0)
        # The shifted field's level set at c is the true level set at c / 1.1.
        shifted = LevelShiftedField(field, estimate_level=c / 1.1, level=c)
        r0, r1 = gauss2d.radius_at(c), gauss2d.radius_at(c / 1.1)
        result = levelset.symmdiff_radial(shifted, gauss2d, c, band=0.03)
        assert result.value == pytest.approx(np.pi * (r1 ** 2 - r0 ** 2), rel=1e-9)

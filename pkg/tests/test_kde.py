import logging

import numpy as np
import pytest
from scipy import integrate

from levelset_clt import kde
from levelset_clt.densities import make_model
from levelset_clt.errors import DimensionMismatchError
from levelset_clt.experiments.harness import ReplicationJob, draw_field
from levelset_clt.kde import KdeMode, build_kde
from levelset_clt.kernel import make_kernel
from levelset_clt.levelset import WeightKind
from levelset_clt.util import replication_seed


@pytest.fixture
def box2():
    return make_kernel('box', 2)


class TestFixedN:
    def test_single_point(self, box2):
        field = build_kde(np.zeros((1, 2)), 0.04, box2)
        # axis scale 0.2, support radius 0.1
        assert field.evaluate(np.array([[0.05, 0.05], [0.0, 0.11]])) == pytest.approx(
            [box2.sup / 0.04, 0.0])

    def test_matches_brute_force(self):
        k = make_kernel('radpoly', 2)
        points = make_model('gauss2d').sample(300, 1)
        field = build_kde(points, 0.09, k)
        queries = make_model('gauss2d').sample(50, 2)
        scaled = (queries[:, None, :] - points[None, :, :]) / 0.3
        expected = np.sum(k(scaled), axis=1) / (300 * 0.09)
        assert field(queries) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_integrates_to_one_1d(self):
        k = make_kernel('radpoly', 1)
        field = build_kde(make_model('gauss1d').sample(200, 3), 0.2, k)
        grid = np.linspace(-7.0, 7.0, 140001)
        values = field.evaluate(grid[:, None])
        assert integrate.trapezoid(values, grid) == pytest.approx(1.0, abs=1e-6)

    def test_shape_kept(self, box2):
        field = build_kde(np.zeros((3, 2)), 0.25, box2)
        assert field.evaluate(np.zeros((4, 5, 2))).shape == (4, 5)

    def test_locality(self, box2):
        points = np.array([[0.0, 0.0], [5.0, 5.0]])
        field = build_kde(points, 0.01, box2)
        moved = build_kde(np.array([[0.0, 0.0], [9.0, -3.0]]), 0.01, box2, n=2)
        assert field.evaluate(np.array([0.01, 0.0])) == moved.evaluate(np.array([0.01, 0.0]))

    def test_errors(self, box2):
        with pytest.raises(ValueError):
            build_kde(np.empty((0, 2)), 0.1, box2)
        with pytest.raises(ValueError):
            build_kde(np.zeros((3, 2)), 0.0, box2)
        with pytest.raises(ValueError):
            build_kde(np.zeros((3, 2)), 0.1, box2, n=4)
        with pytest.raises(DimensionMismatchError):
            build_kde(np.zeros((3, 3)), 0.1, box2)
        with pytest.raises(DimensionMismatchError):
            build_kde(np.zeros((3, 2)), 0.1, box2).evaluate(np.zeros(3))

    def test_support_box(self, box2):
        field = build_kde(np.array([[0.0, 1.0], [2.0, -1.0]]), 0.04, box2)
        lo, hi = field.support_box()
        assert lo == pytest.approx([-0.1, -1.1])
        assert hi == pytest.approx([2.1, 1.1])
        assert field.reach() == pytest.approx(np.sqrt(5.0) + 0.1)


class TestPoissonized:
    def test_uses_stream_prefix(self, box2):
        stream = make_model('gauss2d').sample(2000, 4)
        field = build_kde(stream, 0.05, box2, mode='poisson', seed=9, n=1000)
        assert field.mode is KdeMode.POISSONIZED
        assert field.count == kde.poisson_count(1000, 9)
        np.testing.assert_array_equal(field.points, stream[:field.count])
        assert field.n == 1000

    def test_same_denominator(self, box2):
        stream = make_model('gauss2d').sample(2000, 4)
        poisson = build_kde(stream, 0.05, box2, mode=KdeMode.POISSONIZED, seed=9, n=1000)
        fixed = build_kde(stream[:poisson.count], 0.05, box2, n=poisson.count)
        x = np.array([[0.1, -0.2]])
        assert poisson.evaluate(x) == pytest.approx(fixed.evaluate(x) * poisson.count / 1000)

    def test_empty_draw(self, box2):
        field = build_kde(np.empty((0, 2)), 0.05, box2, mode='poisson', seed=1, n=0)
        assert field.count == 0
        assert field.evaluate(np.zeros((3, 2))) == pytest.approx(np.zeros(3))
        assert field.support_box() is None

    def test_short_stream(self, box2):
        with pytest.raises(ValueError):
            build_kde(np.zeros((10, 2)), 0.05, box2, mode='poisson', seed=1, n=1000)

    def test_count_mean(self):
        counts = [kde.poisson_count(500, seed) for seed in range(400)]
        assert np.mean(counts) == pytest.approx(500, abs=4 * np.sqrt(500 / 400))


class TestBandwidth:
    def test_default_rule(self):
        n = 50000
        assert kde.bandwidth_schedule(n) == pytest.approx(1.0 / np.sqrt(n * np.log(n)))

    def test_explicit(self):
        assert kde.bandwidth_schedule(1000, rule='explicit', h=0.2) == 0.2
        with pytest.raises(ValueError):
            kde.bandwidth_schedule(1000, rule='explicit')
        with pytest.raises(ValueError):
            kde.bandwidth_schedule(1000, rule='silverman')
        with pytest.raises(ValueError):
            kde.bandwidth_schedule(2)

    def test_rate_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger='levelset_clt.kde'):
            kde.bandwidth_schedule(50000)
        assert any('n*h/ln(n)' in r.message for r in caplog.records)
        caplog.clear()
        with caplog.at_level(logging.WARNING, logger='levelset_clt.kde'):
            kde.bandwidth_schedule(200000)
        assert not caplog.records

    def test_conversions(self):
        assert kde.axis_to_volume(0.3, 2) == pytest.approx(0.09)
        assert kde.volume_to_axis(0.09, 2) == pytest.approx(0.3)
        assert kde.volume_to_axis(0.09, 1) == 0.09


class TestPoissonizationMoments:
    reps = 500
    sites = np.array([[0.0, 0.0], [0.3, 0.0]])  # farther apart than h^{1/2} for h = 0.05

    @pytest.fixture(scope='class')
    def values(self):
        model = make_model('gauss2d')
        kernel = make_kernel('box', 2)
        out = {'fixed': list(), 'poisson': list()}
        for rep in range(self.reps):
            seed = replication_seed(17, 2000, rep)
            for mode in out:
                job = ReplicationJob(model=model, kernel=kernel, weight=WeightKind.lebesgue(),
                                     levels=(0.05,), n=2000, h=0.05, rep=rep, seed=seed, mode=mode)
                out[mode].append(draw_field(job).evaluate(self.sites))
        return {mode: np.asarray(rows) for mode, rows in out.items()}

    def test_means_agree(self, values):
        fixed, poisson = values['fixed'][:, 0], values['poisson'][:, 0]
        se = np.sqrt(fixed.var(ddof=1) / self.reps + poisson.var(ddof=1) / self.reps)
        assert abs(fixed.mean() - poisson.mean()) < 4.0 * se

    def test_independent_beyond_support(self, values):
        here, there = values['poisson'][:, 0], values['poisson'][:, 1]
        assert here.std() > 0.0 and there.std() > 0.0
        assert abs(np.corrcoef(here, there)[0, 1]) <= 4.0 / np.sqrt(self.reps)

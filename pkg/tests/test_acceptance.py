"""
Large Monte Carlo checks of the limit theorems. Run with --runslow; expect hours on four workers.
"""
import math

import pytest

from levelset_clt import asymptotics, inference, levelset
from levelset_clt.densities import make_model
from levelset_clt.experiments import (ExperimentPlan, run_clt_experiment, run_multilevel_correlation,
                                       run_poissonization_check)
from levelset_clt.kde import bandwidth_schedule, build_kde
from levelset_clt.kernel import make_kernel
from levelset_clt.util import replication_seed

pytestmark = pytest.mark.slow

THREADS = 4


@pytest.fixture(scope='module')
def gauss2d_run():
    plan = ExperimentPlan(n_values=(20000, 50000, 200000), reps=500, seed=20240601, alpha=0.95, threads=THREADS)
    return run_clt_experiment(plan)


@pytest.mark.parametrize('p', [1.0, 2.0])
def test_lp_identity(p):
    model = make_model('gauss2d')
    kernel = make_kernel('box', 2)
    h = bandwidth_schedule(5000)
    for rep in range(20):
        field = build_kde(model.sample(5000, replication_seed(7, 5000, rep)), h, kernel)
        lhs, rhs = levelset.lp_identity_check(field, model, p)
        assert lhs == pytest.approx(rhs, rel=0.03)


def test_cadre_mean(gauss2d_run):
    target = gauss2d_run.limits['cadre_constant']
    gaps = [abs(s['scaled_mean'] - target) / target for s in gauss2d_run.summaries]
    assert gaps[1] <= 0.2
    for summary, gap, next_gap in zip(gauss2d_run.summaries, gaps, gaps[1:]):
        se = math.sqrt(summary['n'] * summary['h'] * summary['variance'] / summary['reps']) / target
        assert next_gap <= gap + se


def test_variance_limit(gauss2d_run):
    sigma2 = gauss2d_run.limits['sigma2']
    largest = gauss2d_run.summaries[-1]
    assert 0.5 <= largest['scaled_variance'] / sigma2 <= 2.0
    assert largest['ks_distance'] <= 0.10
    assert abs(largest['skewness']) <= 0.3
    assert abs(largest['excess_kurtosis']) <= 0.6


def test_one_dimension_variance():
    plan = ExperimentPlan(n_values=(200000,), reps=500, seed=99, model='gauss1d', alpha=0.5, threads=THREADS)
    result = run_clt_experiment(plan)
    ratio = result.summaries[0]['scaled_variance'] / result.limits['sigma2']
    assert 0.5 <= ratio <= 2.0


def test_poissonization_bound():
    plan = ExperimentPlan(n_values=(5000,), reps=500, seed=5, alpha=0.95, threads=THREADS)
    result = run_poissonization_check(plan)
    row, = result['sizes']
    assert row['fixed']['second_moment'] <= 2.0 * row['poisson']['second_moment'] + 3.0 * row['moment_se']
    assert abs(row['fixed']['mean'] - row['poisson']['mean']) < 4.0 * row['mean_se']
    assert result['holds']


def test_multilevel_independence():
    plan = ExperimentPlan(n_values=(50000,), reps=500, seed=41, alpha=0.9, threads=THREADS)
    result = run_multilevel_correlation(plan, alphas=(0.9, 0.5))
    assert abs(result['correlation'][0][1]) <= 4.0 / math.sqrt(500)
    assert result['independent']


def test_subsample_variance():
    model = make_model('gauss2d')
    kernel = make_kernel('box', 2)
    c = model.level_from_coverage(0.95)
    points = model.sample(200000, 31)
    result = inference.subsample_variance(points, model, kernel, c, seed=32)
    spec = asymptotics.asymptotic_spec(model, kernel, c)
    assert 0.5 <= result.estimate / asymptotics.sigma2_lebesgue_radial(spec) <= 2.0


def test_online_test_size():
    model = make_model('gauss2d')
    kernel = make_kernel('box', 2)
    trials = 200
    rejections = 0
    for trial in range(trials):
        batch = model.sample(20000, replication_seed(11, 20000, trial))
        outcome = inference.online_test(model, batch, 0.95, kernel, seed=1000 + trial, threads=THREADS)
        rejections += outcome.reject
    rate = rejections / trials
    assert abs(rate - 0.05) <= 4.0 * math.sqrt(0.05 * 0.95 / trials)

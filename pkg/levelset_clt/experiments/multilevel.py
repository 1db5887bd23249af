import logging
import math
import typing

import numpy as np

from levelset_clt import asymptotics, levelset
from levelset_clt.experiments.harness import ExperimentPlan, make_jobs, run_jobs
from levelset_clt.util import replication_seed

_log = logging.getLogger(__name__)

CORRELATION_SLACK = 4.0  # in units of 1/sqrt(R)


def _check_levels(levels, model):
    if not levels:
        raise ValueError('At least one level is required.')
    if len(set(levels)) != len(levels):
        raise ValueError(f'Levels must be distinct. (Given: {list(levels)})')
    for c in levels:
        model.check_level(c)


def _warn_overlapping_bands(levels, n, h):
    """ Bands |f - c_i| ≤ w of adjacent levels must not meet. """
    w = levelset.band_halfwidth(n, h)
    ordered = sorted(levels)
    for low, high in zip(ordered, ordered[1:]):
        if high - low <= 2.0 * w:
            _log.warning(f'Bands around c={low:.4g} and c={high:.4g} overlap at n={n} (w={w:.4g}); '
                         f'their statistics are not asymptotically independent yet.')


def run_multilevel_correlation(plan: ExperimentPlan, levels: typing.Sequence[float] = None,
                               alphas: typing.Sequence[float] = None, seed_fn=replication_seed) -> dict:
    """
    Empirical correlation matrix of the standardized d_G at several levels,
    computed on the same replications at the largest n of the plan.

    Pass the levels directly or as coverages. Off-diagonal entries are expected
    within 4/sqrt(R) of zero.

    :raises ValueError: on repeated or invalid levels.
    """
    model = plan.resolve_model()
    kernel = plan.resolve_kernel()
    weight = plan.resolve_weight()
    if (levels is None) == (alphas is None):
        raise ValueError('Exactly one of levels and alphas must be given.')
    if levels is None:
        levels = [model.level_from_coverage(a) for a in alphas]
    levels = [float(c) for c in levels]
    _check_levels(levels, model)
    n = plan.n_values[-1]
    jobs = make_jobs(plan, model, kernel, weight, levels, n, plan.modes[0], seed_fn=seed_fn)
    _warn_overlapping_bands(levels, n, jobs[0].h)
    values = np.asarray([vals for vals, _ in run_jobs(jobs, plan.threads)])
    scaled = asymptotics.norming(n, jobs[0].h, weight.inv_gamma) * (values - values.mean(axis=0))
    if len(levels) == 1:
        matrix = np.ones((1, 1))
    else:
        with np.errstate(invalid='ignore', divide='ignore'):
            matrix = np.atleast_2d(np.corrcoef(scaled, rowvar=False))
    bound = CORRELATION_SLACK / math.sqrt(plan.reps)
    off_diagonal = matrix[~np.eye(len(levels), dtype=bool)]
    independent = bool(np.all(np.abs(off_diagonal) <= bound)) if off_diagonal.size else True
    if not independent:
        _log.warning(f'Correlations across levels exceed {bound:.3g} at n={n}.')
    return dict(n=n, h=jobs[0].h, levels=levels, correlation=matrix.tolist(), bound=bound,
                independent=independent)

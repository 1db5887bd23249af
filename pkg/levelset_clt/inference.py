"""
Subsampling estimate of the limiting variance, and the online anomaly test.
"""
import dataclasses
import logging
import math
import typing

import numpy as np

from levelset_clt import asymptotics, kde as kde_mod, levelset
from levelset_clt.config import get_config
from levelset_clt.densities import DensityModel, KdeDensityModel, level_for_mass
from levelset_clt.errors import UnsupportedModelError
from levelset_clt.kernel import Kernel
from levelset_clt.levelset import WeightKind
from levelset_clt.util import make_rng, parallel_map, replication_seed

_log = logging.getLogger(__name__)

REFERENCE_RATE_FLOOR = 3.0  # n·h/ln n below which a reference sample is refused


@dataclasses.dataclass(frozen=True)
class SubsampleVarianceResult(object):
    m: int  # m_n, subsample size
    subsamples: int  # ς_n
    h: float  # h_{m_n}
    xi: typing.Tuple[float, ...]
    estimate: float

    def to_dict(self) -> dict:
        return dict(m_n=self.m, subsamples=self.subsamples, h=self.h, estimate=self.estimate)


def default_subsample_size(n: int, exponent: float = None) -> int:
    """ m_n = ceil(n^exponent), exponent 0.7 unless configured otherwise. """
    exponent = get_config()['subsample_exponent'] if exponent is None else exponent
    return int(math.ceil(n ** exponent))


def _canonical_order(points: np.ndarray) -> np.ndarray:
    # Lexicographic by coordinates, so the partition depends on the seed only.
    return points[np.lexsort(points.T[::-1])]


def subsample_variance(points, model: DensityModel, kernel: Kernel, c: float,
                       weight: WeightKind = None, seed=None, m_rule=None,
                       **integrator_kwargs) -> SubsampleVarianceResult:
    """
    Sample variance of a_{m,G} ξ_i over ς = ⌊n/m⌋ disjoint random subsamples of size m,
    ξ_i being d_G of subsample i at bandwidth h_m = 1/sqrt(m ln m).

    :param m_rule: Subsample size, or a callable n -> m. Defaults to ceil(n^0.7).
    :raises ValueError: if fewer than two subsamples fit.
    """
    weight = weight or WeightKind.lebesgue()
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if m_rule is None:
        m = default_subsample_size(n)
    elif callable(m_rule):
        m = int(m_rule(n))
    else:
        m = int(m_rule)
    subsamples = n // m if m > 0 else 0
    if subsamples < 2:
        raise ValueError(f'Subsample size m={m} leaves {subsamples} subsample(s) of n={n} points; '
                         f'at least 2 are needed.')
    rng = make_rng(seed)
    partition = rng.permutation(n)[:m * subsamples].reshape(subsamples, m)
    ordered = _canonical_order(points)
    h = kde_mod.bandwidth_schedule(m)
    xi = list()
    for idx, members in enumerate(partition):
        field = kde_mod.build_kde(ordered[members], h, kernel)
        result = levelset.symmdiff(field, model, c, weight, **integrator_kwargs)
        _log.debug(f'Subsample {idx}: d_G = {result.value:.6g}')
        xi.append(result.value)
    scaled = asymptotics.norming(m, h, weight.inv_gamma) * np.asarray(xi)
    estimate = float(np.var(scaled, ddof=1))
    _log.info(f'Subsampling variance with m={m}, {subsamples} subsamples: {estimate:.6g}')
    return SubsampleVarianceResult(m=m, subsamples=subsamples, h=h, xi=tuple(xi), estimate=estimate)


def adaptive_level(field, alpha: float, cell: float = None) -> float:
    """
    c_n with ∫_{f_n ≥ c_n} f_n = α, by bisection on midpoint quadrature of f_n over
    its support box (cells of side h^{1/d}/4).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'Coverage alpha must lie in (0, 1). (Given: {alpha})')
    box = field.support_box()
    if box is None:
        raise ValueError('An empty estimate has no level sets.')
    cell = cell or field.axis_scale / 4.0
    values = np.concatenate([field.evaluate(points)
                             for points in levelset._grid_slabs(box[0], box[1], cell)])
    return level_for_mass(np.sort(values)[::-1], cell ** field.dimension, alpha)


@dataclasses.dataclass(frozen=True)
class TestOutcome(object):
    z: float
    threshold: float
    reject: bool
    statistic: float  # d_λ of the batch
    n: int
    h: float
    c: float
    alpha: float
    mean: float
    sigma: float
    calibration: str
    center: str = 'fixed'
    estimate_level: typing.Optional[float] = None  # c_n with adaptive centering

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def test_statistic(statistic: float, mean: float, sigma: float, n: int, h: float) -> float:
    """ z = σ^{-1} (n/h)^{1/4} (d_λ - mean). """
    return float(asymptotics.norming(n, h, 0.0) * (statistic - mean) / sigma)


test_statistic.__test__ = False


def _reference_model(reference, kernel: Kernel) -> DensityModel:
    if isinstance(reference, DensityModel):
        return reference
    points = np.asarray(reference, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    m = len(points)
    if m < 3:
        raise ValueError(f'A reference sample needs at least 3 points. (Given: {m})')
    h = kde_mod.default_bandwidth(m)
    ratio = kde_mod.rate_ratio(m, h)
    if ratio < REFERENCE_RATE_FLOOR:
        raise ValueError(f'Reference sample of {m} points is too small: n*h/ln(n) = {ratio:.3g} '
                         f'< {REFERENCE_RATE_FLOOR:g}.')
    return KdeDensityModel(points, kernel, h=kde_mod.bandwidth_schedule(m))


def _batch_statistic(batch, reference, kernel, c, alpha, h, center):
    field = kde_mod.build_kde(batch, h, kernel)
    estimate_level = None
    if center == 'adaptive':
        estimate_level = adaptive_level(field, alpha)
        field = levelset.LevelShiftedField(field, estimate_level, c)
        result = levelset.symmdiff_grid(field, reference, c)
    else:
        result = levelset.symmdiff(field, reference, c)
    return result.value, estimate_level


def _null_replication(args):
    reference, kernel, n, c, alpha, h, center, seed = args
    batch = reference.sample(n, seed)
    value, _ = _batch_statistic(batch, reference, kernel, c, alpha, h, center)
    return value


def online_test(reference, batch, alpha: float, kernel: Kernel, calibration: str = 'simulated',
                reps: int = None, seed=None, h: float = None, center: str = 'fixed',
                threshold: float = None, threads: int = None) -> TestOutcome:
    """
    Decide whether a production batch still comes from the reference density.

    c is the level of coverage α under the reference. The batch statistic is
    d_λ(C_n(c), C(c)), or d_λ(C_n(c_n), C(c)) with adaptive centering. With
    `simulated` calibration its null mean and spread come from `reps` batches
    drawn from the reference; `closed` uses the Cadre constant and σ_λ² (gauss2d
    reference only). A reference sample is first replaced by its kernel density
    estimate, which is then treated as the truth.

    :rtype: TestOutcome
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'Coverage alpha must lie in (0, 1). (Given: {alpha})')
    if center not in ('fixed', 'adaptive'):
        raise ValueError(f'Unknown centering "{center}". Use "fixed" or "adaptive".')
    config = get_config()
    threshold = config['test_threshold'] if threshold is None else threshold
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 1:
        batch = batch[:, None]
    if not len(batch):
        raise ValueError('The batch is empty.')
    model = _reference_model(reference, kernel)
    c = model.level_from_coverage(alpha)
    n = len(batch)
    h = h or kde_mod.bandwidth_schedule(n)
    statistic, estimate_level = _batch_statistic(batch, model, kernel, c, alpha, h, center)

    if calibration == 'simulated':
        if seed is None:
            raise ValueError('Simulated calibration needs a seed.')
        reps = reps or config['calibration_reps']
        if reps < 2:
            raise ValueError(f'Simulated calibration needs at least 2 replications. (Given: {reps})')
        jobs = [(model, kernel, n, c, alpha, h, center, replication_seed(seed, n, rep))
                for rep in range(reps)]
        null = np.asarray(parallel_map(_null_replication, jobs, threads or config['threads']))
        mean = float(np.mean(null))
        sigma = float(np.std(null, ddof=1) * asymptotics.norming(n, h, 0.0))
    elif calibration == 'closed':
        if center != 'fixed':
            raise ValueError('Closed calibration is only defined for the fixed centering.')
        try:
            spec = asymptotics.asymptotic_spec(model, kernel, c)
            mean = asymptotics.cadre_mean_constant(spec) / math.sqrt(n * h)
        except UnsupportedModelError as err:
            raise UnsupportedModelError(f'Closed calibration needs the gauss2d reference: {err}')
        sigma = math.sqrt(asymptotics.sigma2_lebesgue_radial(spec))
    else:
        raise ValueError(f'Unknown calibration "{calibration}". Use "simulated" or "closed".')

    z = test_statistic(statistic, mean, sigma, n, h) if sigma > 0 else 0.0
    outcome = TestOutcome(z=z, threshold=threshold, reject=bool(abs(z) > threshold), statistic=statistic,
                          n=n, h=h, c=c, alpha=alpha, mean=mean, sigma=sigma, calibration=calibration,
                          center=center, estimate_level=estimate_level)
    _log.info(f'Online test: z={z:.4f}, reject={outcome.reject}')
    return outcome

"""
Plans, replication records and the summary statistics shared by all Monte Carlo
experiments, plus the frozen records CSV.
"""
import csv
import dataclasses
import logging
import math
import time
import typing

import numpy as np
from scipy import stats

from levelset_clt import asymptotics, const, kde as kde_mod, levelset
from levelset_clt.densities import DensityModel, make_model
from levelset_clt.errors import NumericalError, UnsupportedModelError
from levelset_clt.kde import KdeMode
from levelset_clt.kernel import Kernel, make_kernel
from levelset_clt.levelset import WeightKind
from levelset_clt.util import parallel_map, replication_seed

_log = logging.getLogger(__name__)

MODES = ('fixed', 'poisson', 'both')


@dataclasses.dataclass(frozen=True)
class ExperimentPlan(object):
    """
    Everything a Monte Carlo run depends on. A record is reproducible from the
    plan and its (n, rep) alone.

    Exactly one of `c` and `alpha` is set. `h` is only used with the 'explicit'
    bandwidth rule and is a volume bandwidth.
    """
    n_values: typing.Tuple[int, ...]
    reps: int
    seed: int
    model: str = 'gauss2d'
    kernel: str = 'box'
    weight: str = 'lebesgue'
    c: typing.Optional[float] = None
    alpha: typing.Optional[float] = None
    bandwidth_rule: str = 'default'
    h: typing.Optional[float] = None
    mode: str = 'fixed'
    angles: typing.Optional[int] = None
    threads: int = 1
    record_timings: bool = False
    output: typing.Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'n_values', tuple(int(n) for n in self.n_values))
        if not self.n_values:
            raise ValueError('At least one sample size is required.')
        if list(self.n_values) != sorted(set(self.n_values)):
            raise ValueError(f'Sample sizes must be distinct and sorted ascending. (Given: {self.n_values})')
        if self.reps < 2:
            raise ValueError(f'At least 2 replications are required. (Given: {self.reps})')
        if (self.c is None) == (self.alpha is None):
            raise ValueError('Exactly one of c and alpha must be given.')
        if self.mode not in MODES:
            raise ValueError(f'Unknown estimator mode "{self.mode}". Choose from: {MODES}')
        WeightKind.parse(self.weight)

    @property
    def modes(self) -> typing.Tuple[str, ...]:
        return ('fixed', 'poisson') if self.mode == 'both' else (self.mode,)

    def resolve_model(self) -> DensityModel:
        return make_model(self.model)

    def resolve_kernel(self) -> Kernel:
        return make_kernel(self.kernel, self.resolve_model().dimension)

    def resolve_weight(self) -> WeightKind:
        return WeightKind.parse(self.weight)

    def level(self, model: DensityModel = None) -> float:
        model = model or self.resolve_model()
        c = model.level_from_coverage(self.alpha) if self.c is None else float(self.c)
        model.check_level(c)
        return c

    def bandwidth(self, n: int) -> float:
        return kde_mod.bandwidth_schedule(n, rule=self.bandwidth_rule, h=self.h)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class ReplicationRecord(object):
    n: int
    h: float
    rep: int
    seed: int
    d_g: float
    std_d_g: float = math.nan  # a_{n,G} (d_G - batch mean)
    runtime_ms: typing.Optional[float] = None
    mode: str = 'fixed'

    def to_row(self) -> dict:
        runtime = '' if self.runtime_ms is None else repr(float(self.runtime_ms))
        return dict(n=self.n, h=repr(float(self.h)), rep=self.rep, seed=self.seed,
                    dG=repr(float(self.d_g)), std_dG=repr(float(self.std_d_g)), runtime_ms=runtime)


@dataclasses.dataclass(frozen=True)
class ReplicationJob(object):
    """ One replication, picklable for the worker pool. """
    model: DensityModel
    kernel: Kernel
    weight: WeightKind
    levels: typing.Tuple[float, ...]
    n: int
    h: float
    rep: int
    seed: int
    mode: str
    angles: typing.Optional[int] = None
    record_timings: bool = False


def draw_field(job: ReplicationJob):
    """
    The estimate of one replication. A Poissonized replication draws its count
    from a seed derived from the replication seed and reuses the replication
    stream, so its first min(n, N) points are those of the fixed-n twin.
    """
    if job.mode == 'fixed':
        points = job.model.sample(job.n, job.seed)
        return kde_mod.build_kde(points, job.h, job.kernel)
    count_seed = replication_seed(job.seed, job.n, 0)
    count = kde_mod.poisson_count(job.n, count_seed)
    if count:
        stream = job.model.sample(count, job.seed)
    else:
        stream = np.empty((0, job.model.dimension))
    return kde_mod.build_kde(stream, job.h, job.kernel, mode=KdeMode.POISSONIZED, seed=count_seed, n=job.n)


def run_replication(job: ReplicationJob):
    """
    d_G of one replication at every level of the job.

    :return: (values, runtime in ms or None)
    :raises NumericalError: from the integrator, annotated with the replication.
    """
    start = time.perf_counter()
    field = draw_field(job)
    values = list()
    for c in job.levels:
        try:
            result = levelset.symmdiff(field, job.model, c, job.weight, angles=job.angles)
        except NumericalError as err:
            raise type(err)(f'Replication {job.rep} at n={job.n} (seed {job.seed}), c={c:.6g}: {err}')
        if result.flagged:
            _log.debug(f'Replication {job.rep} at n={job.n}: {result.diagnostics}')
        values.append(result.value)
    runtime = (time.perf_counter() - start) * 1e3 if job.record_timings else None
    return tuple(values), runtime


def make_jobs(plan: ExperimentPlan, model, kernel, weight, levels, n, mode, seed_fn=replication_seed):
    h = plan.bandwidth(n)
    return [ReplicationJob(model=model, kernel=kernel, weight=weight, levels=tuple(levels), n=n, h=h,
                           rep=rep, seed=int(seed_fn(plan.seed, n, rep)), mode=mode, angles=plan.angles,
                           record_timings=plan.record_timings)
            for rep in range(plan.reps)]


def run_jobs(jobs, threads: int = 1):
    """ Results in job order, whatever the worker count. """
    return parallel_map(run_replication, jobs, threads)


def standardize(records: typing.List[ReplicationRecord], inv_gamma: float) -> typing.List[ReplicationRecord]:
    """ Fill std_d_g = a_{n,G} (d_G - mean) per (mode, n) batch. """
    out = list()
    for key in sorted({(r.mode, r.n) for r in records}):
        batch = [r for r in records if (r.mode, r.n) == key]
        mean = float(np.mean([r.d_g for r in batch]))
        scale = asymptotics.norming(batch[0].n, batch[0].h, inv_gamma)
        out.extend(dataclasses.replace(r, std_d_g=float(scale * (r.d_g - mean))) for r in batch)
    return sorted(out, key=lambda r: (r.mode, r.n, r.rep))


def summarize(values, n: int, h: float, inv_gamma: float = 0.0) -> dict:
    """
    Moments of d_G over one batch, the KS distance of its empirically
    standardized values to N(0, 1), a_n²·variance and sqrt(n h)·mean.

    Standardizing with the batch mean tests the shape of the limit, not its
    location. A batch without spread has KS distance 1/2 and no skewness or
    kurtosis.
    """
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    variance = float(np.var(values, ddof=1))
    summary = dict(n=int(n), h=float(h), reps=len(values), mean=mean, variance=variance)
    if variance > 0.0:
        z = (values - mean) / math.sqrt(variance)
        summary.update(skewness=float(stats.skew(values)), excess_kurtosis=float(stats.kurtosis(values)),
                       ks_distance=float(stats.kstest(z, 'norm').statistic))
    else:
        summary.update(skewness=None, excess_kurtosis=None, ks_distance=0.5)
    summary['scaled_variance'] = float(asymptotics.norming(n, h, inv_gamma) ** 2 * variance)
    summary['scaled_mean'] = float(math.sqrt(n * h) * mean)
    return summary


def limit_constants(model: DensityModel, kernel: Kernel, c: float, weight: WeightKind) -> dict:
    """ σ_G² and, for λ on gauss2d, the Cadre constant; None where no closed form exists. """
    limits = dict(sigma2=None, cadre_constant=None)
    try:
        spec = asymptotics.asymptotic_spec(model, kernel, c, weight, gamma=0.0)
        limits['sigma2'] = asymptotics.sigma2(spec)
        if weight.tag is levelset.WeightTag.LEBESGUE:
            limits['cadre_constant'] = asymptotics.cadre_mean_constant(spec)
    except UnsupportedModelError as err:
        _log.info(f'No limit constants: {err}')
    return limits


def write_records(records: typing.Iterable[ReplicationRecord], fpath: str):
    """ Write records in the frozen CSV schema; floats are written with repr. """
    with open(fpath, 'wt', newline='') as wf:
        writer = csv.DictWriter(wf, fieldnames=const.RECORD_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for record in records:
            writer.writerow(record.to_row())


def read_records(fpath: str, mode: str = 'fixed') -> typing.List[ReplicationRecord]:
    with open(fpath, 'rt', newline='') as rf:
        reader = csv.DictReader(rf)
        if tuple(reader.fieldnames or ()) != const.RECORD_COLUMNS:
            raise ValueError(f'Unexpected record columns {reader.fieldnames}; '
                             f'expected {list(const.RECORD_COLUMNS)}.')
        return [ReplicationRecord(n=int(row['n']), h=float(row['h']), rep=int(row['rep']),
                                  seed=int(row['seed']), d_g=float(row['dG']), std_d_g=float(row['std_dG']),
                                  runtime_ms=float(row['runtime_ms']) if row['runtime_ms'] else None,
                                  mode=mode)
                for row in reader]

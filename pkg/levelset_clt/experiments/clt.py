import dataclasses
import logging
import typing

from levelset_clt.experiments.harness import ExperimentPlan, ReplicationRecord, limit_constants, make_jobs, \
    run_jobs, standardize, summarize
from levelset_clt.util import replication_seed

_log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class ExperimentResult(object):
    c: float
    records: typing.List[ReplicationRecord]
    summaries: typing.List[dict]
    limits: dict

    def records_for(self, mode: str) -> typing.List[ReplicationRecord]:
        return [r for r in self.records if r.mode == mode]

    def to_dict(self) -> dict:
        return dict(c=self.c, limits=self.limits, summaries=self.summaries)


def run_clt_experiment(plan: ExperimentPlan, seed_fn=replication_seed) -> ExperimentResult:
    """
    Simulate `plan.reps` datasets per sample size and estimator mode, compute d_G
    of each and summarize the batches.

    :param seed_fn: (base_seed, n, rep) -> replication seed. Only tests replace it.
    :rtype: ExperimentResult
    """
    model = plan.resolve_model()
    kernel = plan.resolve_kernel()
    weight = plan.resolve_weight()
    c = plan.level(model)
    _log.info(f'CLT experiment on {model.name}, c={c:.6g}, weight={weight}, n={list(plan.n_values)}, '
              f'R={plan.reps}')
    records = list()
    for mode in plan.modes:
        for n in plan.n_values:
            jobs = make_jobs(plan, model, kernel, weight, (c,), n, mode, seed_fn=seed_fn)
            for job, (values, runtime) in zip(jobs, run_jobs(jobs, plan.threads)):
                records.append(ReplicationRecord(n=n, h=job.h, rep=job.rep, seed=job.seed, d_g=values[0],
                                                 runtime_ms=runtime, mode=mode))
            _log.info(f'Finished {plan.reps} {mode} replications at n={n}.')
    records = standardize(records, weight.inv_gamma)
    summaries = list()
    for mode in plan.modes:
        for n in plan.n_values:
            batch = [r for r in records if r.mode == mode and r.n == n]
            summary = summarize([r.d_g for r in batch], n, batch[0].h, weight.inv_gamma)
            summary['mode'] = mode
            summaries.append(summary)
    return ExperimentResult(c=c, records=records, summaries=summaries,
                            limits=limit_constants(model, kernel, c, weight))

import json
import logging
import math
import os
import sys

import click
import numpy as np

from levelset_clt import asymptotics, const, inference, kde as kde_mod, levelset
from levelset_clt.config import get_config
from levelset_clt.db import create_tables, drop_tables, get_connection_str, open_store, renew_tables
from levelset_clt.densities import load_points, make_model, model_factory_map
from levelset_clt.errors import NumericalError, UnsupportedModelError
from levelset_clt.experiments import ExperimentPlan, run_clt_experiment, run_multilevel_correlation, \
    run_poissonization_check, write_records
from levelset_clt.experiments.storage import store_run
from levelset_clt.kernel import make_kernel, validate_kernel
from levelset_clt.levelset import WeightKind
from levelset_clt.util import configure_logging

_log = logging.getLogger('levelset_clt.cli')

KERNEL_NAMES = ('box', 'radpoly')
CHECK_DEFAULT_N = 200000  # smallest round n at which the default h clears n*h/ln(n) >= 10


def verbosity_options(fn):
    """ The --ignore-warnings / --info / --debug flags every command carries. """
    fn = click.option('--debug', 'log_level', flag_value=logging.DEBUG,
                      help='Include all debugging messages.')(fn)
    fn = click.option('--info', 'log_level', flag_value=logging.INFO,
                      help='Include informational messages.')(fn)
    fn = click.option('--ignore-warnings', '-no-warn', 'log_level', flag_value=logging.ERROR,
                      help='Ignore warning messages.')(fn)
    return fn


def model_options(fn):
    fn = click.option('--c', 'level', type=float, default=None, help='Level c.')(fn)
    fn = click.option('--alpha', type=float, default=None,
                      help='Coverage α; the level is the c with P{f(X) >= c} = α.')(fn)
    fn = click.option('--weight', default='lebesgue', show_default=True,
                      help='lebesgue, density, excess or excess_power(p).')(fn)
    fn = click.option('--kernel', type=click.Choice(KERNEL_NAMES, case_sensitive=False), default='box',
                      show_default=True)(fn)
    fn = click.option('--model', type=click.Choice(sorted(model_factory_map)), default='gauss2d',
                      show_default=True)(fn)
    return fn


def bandwidth_options(fn):
    fn = click.option('--h-axis', type=float, default=None, help='Per-axis bandwidth h^{1/d}.')(fn)
    fn = click.option('--h-volume', type=float, default=None,
                      help='Volume bandwidth h. Defaults to 1/sqrt(n ln n).')(fn)
    return fn


def _start(log_level, command, /, **params):
    configure_logging(log_level=log_level or logging.WARNING)
    _log.info(f'Running "{command}"')
    for key, value in sorted(params.items()):
        _log.debug(f'{key}: {value}')


def _resolve_level(model, alpha, level):
    if (alpha is None) == (level is None):
        raise click.UsageError('Exactly one of --alpha and --c is required.')
    c = model.level_from_coverage(alpha) if level is None else level
    model.check_level(c)
    return c


def _resolve_bandwidth(n, dimension, h_volume, h_axis):
    if h_volume is not None and h_axis is not None:
        raise click.UsageError('--h-volume and --h-axis are mutually exclusive.')
    if h_axis is not None:
        h_volume = kde_mod.axis_to_volume(h_axis, dimension)
    if h_volume is not None:
        return kde_mod.bandwidth_schedule(n, rule='explicit', h=h_volume)
    return kde_mod.bandwidth_schedule(n)


def _document(command, params, **result) -> dict:
    """ Output envelope: results plus everything needed to reproduce them. """
    return dict(schema_version=const.SCHEMA_VERSION, command=command, config=get_config(),
                parameters=params, **result)


def _emit_json(document, fpath=None):
    text = json.dumps(document, indent=2, sort_keys=True, default=_jsonable)
    if fpath:
        with open(fpath, 'wt') as wf:
            wf.write(text + '\n')
    else:
        click.echo(text)


def _jsonable(value):
    if hasattr(value, 'tolist'):
        return value.tolist()
    return str(value)


def _sidecar(fpath, command, params):
    _emit_json(_document(command, params), f'{fpath}.json')


@click.group()
def cli():
    pass


def _db_create():
    create_tables()


def _db_drop():
    drop_tables()


def _db_renew():
    renew_tables()


DB_COMMANDS = dict(create=_db_create,
                   drop=_db_drop,
                   renew=_db_renew)


@cli.command(help='''
Manage the optional database of stored runs.
'''.strip())
@click.argument('command', type=click.Choice(DB_COMMANDS.keys(), case_sensitive=False))
@click.option('--force', is_flag=True)
@verbosity_options
def db(command, force, log_level):
    _start(log_level, 'db', command=command)
    conn_str = get_connection_str()
    if not force and not click.confirm(f'Run "{command}" against "{conn_str}"?'):
        return
    _log.info(f'Running database command "{command}".')
    DB_COMMANDS[command]()


@cli.command(help='''
    Estimate the level set of a sample and print d_G(C_n(c), C(c)) against the model.

    Reads one point per row from DATA and writes the one-row CSV
    d_G,c,weight,integrator,n,h to stdout or to --output (with a <output>.json
    sidecar holding the resolved configuration).
    '''.strip())
@click.option('--data', type=click.Path(exists=True, dir_okay=False), required=True)
@model_options
@bandwidth_options
@click.option('--integrator', type=click.Choice(('auto', 'radial', '1d', 'grid')), default='auto',
              show_default=True)
@click.option('--angles', type=int, default=None, help='Rays of the radial integrator.')
@click.option('--cell', type=float, default=None, help='Cell side of the grid integrator.')
@click.option('--output', type=click.Path(dir_okay=False, writable=True), default=None)
@verbosity_options
def estimate(data, model, kernel, weight, alpha, level, h_volume, h_axis, integrator, angles, cell, output,
             log_level):
    params = dict(data=data, model=model, kernel=kernel, weight=weight, alpha=alpha, c=level,
                  h_volume=h_volume, h_axis=h_axis, integrator=integrator, angles=angles, cell=cell)
    _start(log_level, 'estimate', **params)
    truth = make_model(model)
    weight_kind = WeightKind.parse(weight)
    c = _resolve_level(truth, alpha, level)
    points = load_points(data, truth.dimension)
    n = len(points)
    h = _resolve_bandwidth(n, truth.dimension, h_volume, h_axis)
    field = kde_mod.build_kde(points, h, make_kernel(kernel, truth.dimension))
    if integrator == 'auto':
        result = levelset.symmdiff(field, truth, c, weight_kind, angles=angles)
    elif integrator == 'grid':
        result = levelset.symmdiff_grid(field, truth, c, weight_kind, cell=cell)
    elif integrator == 'radial':
        result = levelset.symmdiff_radial(field, truth, c, weight_kind, angles=angles)
    else:
        result = levelset.symmdiff_1d(field, truth, c, weight_kind)
    row = dict(d_G=repr(float(result.value)), c=repr(float(c)), weight=str(weight_kind),
               integrator=result.integrator, n=n, h=repr(float(h)))
    lines = [','.join(const.ESTIMATE_COLUMNS), ','.join(str(row[k]) for k in const.ESTIMATE_COLUMNS)]
    if output:
        with open(output, 'wt') as wf:
            wf.write('\n'.join(lines) + '\n')
        _sidecar(output, 'estimate', params)
    else:
        click.echo('\n'.join(lines))


@cli.command(help='''
    Print the limiting variance σ_G², the norming a_{n,G} and the Cadre constant as JSON.

    γ is 0 unless --gamma or --gamma-proxy (sqrt(n h^{1+2/d}), needs --n) is given.
    '''.strip())
@model_options
@click.option('--n', type=int, default=None, help='Sample size for a_{n,G}.')
@bandwidth_options
@click.option('--gamma', type=float, default=None)
@click.option('--gamma-proxy', is_flag=True)
@click.option('--components', type=float, multiple=True,
              help='Constants c_j of identical boundary components (repeatable).')
@verbosity_options
def sigma(model, kernel, weight, alpha, level, n, h_volume, h_axis, gamma, gamma_proxy, components,
          log_level):
    params = dict(model=model, kernel=kernel, weight=weight, alpha=alpha, c=level, n=n, h_volume=h_volume,
                  h_axis=h_axis, gamma=gamma, gamma_proxy=gamma_proxy, components=list(components))
    _start(log_level, 'sigma', **params)
    truth = make_model(model)
    weight_kind = WeightKind.parse(weight)
    c = _resolve_level(truth, alpha, level)
    kernel_ = make_kernel(kernel, truth.dimension)
    h = _resolve_bandwidth(n, truth.dimension, h_volume, h_axis) if n else None
    if gamma_proxy:
        if gamma is not None:
            raise click.UsageError('--gamma and --gamma-proxy are mutually exclusive.')
        if not n:
            raise click.UsageError('--gamma-proxy needs --n.')
        gamma = asymptotics.gamma_proxy(n, h, truth.dimension)
    spec = asymptotics.asymptotic_spec(truth, kernel_, c, weight_kind, gamma=gamma or 0.0,
                                       components=tuple(components) or (1.0,))
    try:
        cadre = asymptotics.cadre_mean_constant(spec)
    except UnsupportedModelError:
        cadre = asymptotics.cadre_mean_constant_general(spec)
    result = dict(c=c, gamma=spec.gamma, sigma2=asymptotics.sigma2(spec), cadre_constant=cadre,
                  a_n_form=f'(n/h)^(1/4) * (n h)^({spec.inv_gamma:g}/2)')
    if n:
        result.update(n=n, h=h, a_n=float(asymptotics.norming(n, h, spec.inv_gamma)))
    _emit_json(_document('sigma', params, **result))


def _poisson_path(fpath):
    stem, ext = os.path.splitext(fpath)
    return f'{stem}.poisson{ext or ".csv"}'


@cli.command(help='''
    Monte Carlo experiments.

    clt: R replications per --n, the records CSV (n,h,rep,seed,dG,std_dG,runtime_ms) and a
    summary JSON. Poissonized records go to <records>.poisson.csv with --mode both.
    poissonization: paired fixed-n / Poissonized moment check.
    multilevel: correlation of the statistics at several levels (repeat --alpha or --c).
    '''.strip())
@click.option('--experiment', type=click.Choice(('clt', 'poissonization', 'multilevel')), default='clt',
              show_default=True)
@click.option('--model', type=click.Choice(sorted(model_factory_map)), default='gauss2d', show_default=True)
@click.option('--kernel', type=click.Choice(KERNEL_NAMES, case_sensitive=False), default='box',
              show_default=True)
@click.option('--weight', default='lebesgue', show_default=True)
@click.option('--alpha', type=float, multiple=True)
@click.option('--c', 'levels', type=float, multiple=True)
@click.option('--n', 'n_values', type=int, multiple=True, required=True)
@click.option('--reps', type=int, default=500, show_default=True)
@click.option('--seed', type=int, required=True)
@click.option('--mode', type=click.Choice(('fixed', 'poisson', 'both')), default='fixed', show_default=True)
@click.option('--h-volume', type=float, default=None, help='Fixed volume bandwidth for every n.')
@click.option('--angles', type=int, default=None)
@click.option('--threads', type=int, default=None, help='Worker processes; results do not depend on it.')
@click.option('--records', type=click.Path(dir_okay=False, writable=True), default='records.csv',
              show_default=True)
@click.option('--summary', type=click.Path(dir_okay=False, writable=True), default=None,
              help='Summary JSON path (default: stdout).')
@click.option('--record-timings', is_flag=True, help='Fill runtime_ms (makes the CSV run-dependent).')
@click.option('--store', is_flag=True, help='Also store the run in the configured database.')
@verbosity_options
def sim(experiment, model, kernel, weight, alpha, levels, n_values, reps, seed, mode, h_volume, angles,
        threads, records, summary, record_timings, store, log_level):
    params = dict(experiment=experiment, model=model, kernel=kernel, weight=weight, alpha=list(alpha),
                  c=list(levels), n=list(n_values), reps=reps, seed=seed, mode=mode, h_volume=h_volume,
                  angles=angles)
    _start(log_level, 'sim', **params)
    if bool(alpha) == bool(levels):
        raise click.UsageError('Exactly one of --alpha and --c is required.')
    if experiment != 'multilevel' and len(alpha) + len(levels) != 1:
        raise click.UsageError(f'The {experiment} experiment takes a single level.')
    plan = ExperimentPlan(n_values=tuple(sorted(n_values)), reps=reps, seed=seed, model=model, kernel=kernel,
                          weight=weight, c=levels[0] if levels else None, alpha=alpha[0] if alpha else None,
                          bandwidth_rule='explicit' if h_volume else 'default', h=h_volume, mode=mode,
                          angles=angles, threads=threads or get_config()['threads'],
                          record_timings=record_timings, output=records)
    written = list()
    if experiment == 'clt':
        result = run_clt_experiment(plan)
        for record_mode in plan.modes:
            fpath = records if record_mode == 'fixed' or mode == 'poisson' else _poisson_path(records)
            write_records(result.records_for(record_mode), fpath)
            _sidecar(fpath, 'sim', params)
            written.append(fpath)
        outcome = result.to_dict()
        stored_records = result.records
    elif experiment == 'poissonization':
        outcome = run_poissonization_check(plan)
        stored_records = ()
    else:
        outcome = run_multilevel_correlation(plan, levels=levels or None, alphas=alpha or None)
        stored_records = ()
    document = _document('sim', params, records=written, **outcome)
    _emit_json(document, summary)
    if store:
        session = open_store()
        run = store_run(session, 'sim', seed, document['config'], outcome, stored_records)
        _log.info(f'Stored as run {run.id}.')


@cli.command(help='''
    Subsampling estimate of σ_G² from a sample (--data) or a simulated one (--n).
    '''.strip())
@click.option('--data', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--n', type=int, default=None, help='Simulate n points from the model instead.')
@model_options
@click.option('--m', 'subsample_size', type=int, default=None, help='Subsample size m_n (default ceil(n^0.7)).')
@click.option('--seed', type=int, required=True)
@verbosity_options
def variance(data, n, model, kernel, weight, alpha, level, subsample_size, seed, log_level):
    params = dict(data=data, n=n, model=model, kernel=kernel, weight=weight, alpha=alpha, c=level,
                  m=subsample_size, seed=seed)
    _start(log_level, 'variance', **params)
    if (data is None) == (n is None):
        raise click.UsageError('Exactly one of --data and --n is required.')
    truth = make_model(model)
    c = _resolve_level(truth, alpha, level)
    points = load_points(data, truth.dimension) if data else truth.sample(n, seed)
    result = inference.subsample_variance(points, truth, make_kernel(kernel, truth.dimension), c,
                                          WeightKind.parse(weight), seed=seed, m_rule=subsample_size)
    _emit_json(_document('variance', params, c=c, **result.to_dict()))


def _reference(spec):
    kind, _, value = spec.partition(':')
    if kind == 'model':
        return make_model(value)
    if kind == 'csv':
        return load_points(value)
    raise click.BadParameter(f'Use model:<name> or csv:<path>. (Given: {spec})', param_hint='--reference')


@cli.command(help='''
    Online anomaly test of a production batch against a reference density.

    Rejects when |z| = σ^{-1} (n/h)^{1/4} |d_λ - mean| exceeds the threshold (1.96).
    '''.strip())
@click.option('--reference', required=True, help='model:gauss2d or csv:<path> of a reference sample.')
@click.option('--batch', required=True, help='csv:<path> of the batch.')
@click.option('--alpha', type=float, required=True)
@click.option('--kernel', type=click.Choice(KERNEL_NAMES, case_sensitive=False), default='box',
              show_default=True)
@click.option('--calibration', type=click.Choice(('simulated', 'closed')), default='simulated',
              show_default=True)
@click.option('--reps', type=int, default=None, help='Null replications (default from config, 500).')
@click.option('--seed', type=int, default=None, help='Required with simulated calibration.')
@click.option('--center', type=click.Choice(('fixed', 'adaptive')), default='fixed', show_default=True)
@click.option('--threshold', type=float, default=None)
@click.option('--h-volume', type=float, default=None)
@click.option('--threads', type=int, default=None)
@verbosity_options
def test(reference, batch, alpha, kernel, calibration, reps, seed, center, threshold, h_volume, threads,
         log_level):
    params = dict(reference=reference, batch=batch, alpha=alpha, kernel=kernel, calibration=calibration,
                  reps=reps, seed=seed, center=center, threshold=threshold, h_volume=h_volume)
    _start(log_level, 'test', **params)
    if calibration == 'simulated' and seed is None:
        raise click.UsageError("Missing option '--seed' (required with simulated calibration).")
    ref = _reference(reference)
    dimension = ref.shape[1] if isinstance(ref, np.ndarray) else ref.dimension
    kind, _, path = batch.partition(':')
    if kind != 'csv':
        raise click.BadParameter(f'Use csv:<path>. (Given: {batch})', param_hint='--batch')
    points = load_points(path, dimension)
    h = kde_mod.bandwidth_schedule(len(points), rule='explicit', h=h_volume) if h_volume else None
    outcome = inference.online_test(ref, points, alpha, make_kernel(kernel, dimension), calibration=calibration,
                                    reps=reps, seed=seed, h=h, center=center, threshold=threshold,
                                    threads=threads)
    _emit_json(_document('test', params, **outcome.to_dict()))


@cli.command(help='''
    Check the assumptions for a configuration and print a pass/warn/fail table:
    the kernel conditions, the rate n*h/ln(n) >= 10, the γ proxy and 0 < c < sup f.
    '''.strip())
@model_options
@click.option('--n', type=int, default=CHECK_DEFAULT_N, show_default=True)
@bandwidth_options
@verbosity_options
def check(model, kernel, weight, alpha, level, n, h_volume, h_axis, log_level):
    _start(log_level, 'check', model=model, kernel=kernel, alpha=alpha, c=level, n=n)
    for status, name, detail in assumption_checks(model, kernel, weight, alpha, level, n, h_volume, h_axis):
        click.echo(f'{status:<5} {name:<14} {detail}')


def assumption_checks(model, kernel, weight, alpha, level, n, h_volume=None, h_axis=None):
    """ Rows (status, assumption, detail) with status pass, warn or fail. """
    truth = make_model(model)
    kernel_ = make_kernel(kernel, truth.dimension)
    rows = list()
    violations = validate_kernel(kernel_)
    for name in ('K.i support', 'K.i nonnegative', 'K.i bounded', 'K.i mass', 'K.ii moment'):
        rows.append(('fail' if name in violations else 'pass', name, f'kernel {kernel_.name}'))
    WeightKind.parse(weight)
    if (alpha is None) == (level is None):
        rows.append(('fail', 'D.ii', 'exactly one of --alpha and --c is required'))
        c = None
    else:
        c = truth.level_from_coverage(alpha) if level is None else level
        inside = 0.0 < c < truth.sup_f
        rows.append(('pass' if inside else 'fail', 'D.ii', f'c={c:.6g}, sup f={truth.sup_f:.6g}'))
    h = _resolve_bandwidth(n, truth.dimension, h_volume, h_axis)
    ratio = kde_mod.rate_ratio(n, h)
    rows.append(('pass' if ratio >= kde_mod.RATE_WARNING_THRESHOLD else 'warn', 'H rate',
                 f'n*h/ln(n) = {ratio:.4g} at n={n}, h={h:.4g}'))
    proxy = math.sqrt(n * h ** (1.0 + 2.0 / truth.dimension))
    limit = 1.0 if truth.dimension > 1 else 0.5
    rows.append(('pass' if proxy <= limit else 'warn', 'H gamma',
                 f'sqrt(n h^(1+2/d)) = {proxy:.4g} (limit {limit:g})'))
    return rows


def parse_and_dispatch(argv) -> int:
    """
    Run the command line `argv` (without the program name).

    :return: 0 on success, 1 on usage or input errors, 2 on numerical failures.
    """
    try:
        rv = cli.main(args=list(argv), prog_name='levelset-clt', standalone_mode=False)
    except click.exceptions.Abort:
        click.echo('Aborted.', err=True)
        return 1
    except click.ClickException as err:
        err.show()
        return 1
    except NumericalError as err:
        click.echo(f'Numerical failure: {err}', err=True)
        return 2
    except ValueError as err:
        click.echo(f'Error: {err}', err=True)
        return 1
    return rv if isinstance(rv, int) else 0


def main():
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()

import logging

from levelset_clt import const
from levelset_clt.model import ExperimentRun, RecordMode, ReplicationRecord as ReplicationRow

_log = logging.getLogger(__name__)


def store_run(session, command: str, seed: int, config: dict, summary: dict, records=()) -> ExperimentRun:
    """
    Persist one run and its replication records. The caller owns the session;
    the run is committed here.

    :rtype: ExperimentRun
    """
    run = ExperimentRun(command=command, schema_version=const.SCHEMA_VERSION, seed=seed,
                        config=config, summary=summary)
    for record in records:
        row = ReplicationRow(n=record.n, h=record.h, rep=record.rep, seed=record.seed, d_g=record.d_g,
                             std_d_g=record.std_d_g, runtime_ms=record.runtime_ms)
        row.mode = RecordMode.from_label(record.mode)
        run.records.append(row)
    session.add(run)
    session.commit()
    _log.info(f'Stored {command} run {run.id} with {len(run.records)} records.')
    return run

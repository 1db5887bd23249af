from levelset_clt.experiments.clt import ExperimentResult, run_clt_experiment
from levelset_clt.experiments.harness import ExperimentPlan, ReplicationRecord, read_records, summarize, \
    write_records
from levelset_clt.experiments.multilevel import run_multilevel_correlation
from levelset_clt.experiments.poissonization import run_poissonization_check

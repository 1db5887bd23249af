import os

CONFIG_FILE_ENV = 'LEVELSET_CLT_CONFIG'
CONFIG_FILE_DEFAULT = 'config.json'  # in working directory
CONFIG_FILE = os.getenv(CONFIG_FILE_ENV, default=CONFIG_FILE_DEFAULT)

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    'conn_str': 'sqlite:///levelset_clt.db',
    'angles': 1024,
    'band_sigma': 4.0,  # ς of the E_n band
    'multi_crossing_tolerance': 0.01,  # fraction of rays before grid fail-over
    'subsample_exponent': 0.7,  # m_n = ceil(n ** exponent)
    'calibration_reps': 500,
    'test_threshold': 1.96,
    'threads': 1,
}

# Records CSV schema (frozen)
RECORD_COLUMNS = ('n', 'h', 'rep', 'seed', 'dG', 'std_dG', 'runtime_ms')
ESTIMATE_COLUMNS = ('d_G', 'c', 'weight', 'integrator', 'n', 'h')

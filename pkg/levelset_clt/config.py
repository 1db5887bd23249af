import json
import logging
import os

from levelset_clt import const

_log = logging.getLogger(__name__)

_config = None


def get_config(fpath=None):
    """
    Load the configuration, merged over the built-in defaults.

    The file is looked up as: argument > LEVELSET_CLT_CONFIG > ./config.json .
    A missing file is not an error; the defaults are used as-is. Keys starting
    with an underscore are treated as notes and dropped.

    :rtype: dict
    """
    global _config
    if _config:
        return _config
    fpath = fpath or const.CONFIG_FILE  # arg > env > default
    config = dict(const.DEFAULT_CONFIG)
    if os.path.exists(fpath):
        with open(fpath, 'rt') as rf:
            loaded = json.load(rf)
        config.update({k: v for k, v in loaded.items() if not k.startswith('_')})
    else:
        _log.debug(f'No config file at "{fpath}", using defaults.')
    _config = config
    return _config


def reset_config():
    global _config
    _config = None

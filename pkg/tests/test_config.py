import json
import logging

from levelset_clt import const
from levelset_clt.config import get_config, reset_config
from levelset_clt.util import CONSOLE_HANDLER, configure_logging


class TestConfig:
    def test_defaults_without_file(self, tmp_path):
        config = get_config(str(tmp_path / 'missing.json'))
        assert config == const.DEFAULT_CONFIG
        assert config is not const.DEFAULT_CONFIG

    def test_file_overrides(self, tmp_path):
        fpath = tmp_path / 'config.json'
        fpath.write_text(json.dumps({'angles': 64, '_note': 'ignored', 'band_sigma': 3.0}))
        config = get_config(str(fpath))
        assert config['angles'] == 64
        assert config['band_sigma'] == 3.0
        assert config['threads'] == const.DEFAULT_CONFIG['threads']
        assert '_note' not in config

    def test_cached_until_reset(self, tmp_path):
        fpath = tmp_path / 'config.json'
        fpath.write_text(json.dumps({'angles': 64}))
        first = get_config(str(fpath))
        fpath.write_text(json.dumps({'angles': 128}))
        assert get_config(str(fpath)) is first
        reset_config()
        assert get_config(str(fpath))['angles'] == 128

    def test_working_directory_file(self, tmp_path, monkeypatch):
        (tmp_path / const.CONFIG_FILE_DEFAULT).write_text(json.dumps({'calibration_reps': 7}))
        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr(const, 'CONFIG_FILE', const.CONFIG_FILE_DEFAULT)
        assert get_config()['calibration_reps'] == 7


class TestLogging:
    def test_reconfigure_replaces_handler(self):
        logger = configure_logging('levelset_clt.test_logging', logging.INFO)
        configure_logging('levelset_clt.test_logging', logging.DEBUG)
        console = [h for h in logger.handlers if h.get_name() == CONSOLE_HANDLER]
        assert len(console) == 1
        assert console[0].level == logging.DEBUG
        assert '%(processName)s' in console[0].formatter._fmt
        assert logger.level == logging.DEBUG
        logger.removeHandler(console[0])

    def test_warning_format_is_terse(self):
        logger = configure_logging('levelset_clt.test_logging_terse', logging.WARNING)
        handler, = logger.handlers
        assert handler.formatter._fmt == '%(asctime)s - [%(levelname)s] %(message)s'
        logger.removeHandler(handler)

import logging
import os
from functools import lru_cache

from sqlalchemy import create_engine, inspect
from sqlalchemy.engine import make_url
from sqlalchemy.orm import sessionmaker

from levelset_clt.config import get_config
from levelset_clt.model import Base

_log = logging.getLogger(__name__)


def get_connection_str():
    return get_config()['conn_str']


@lru_cache(maxsize=8)
def _engine(conn_str: str):
    url = make_url(conn_str)
    if url.get_backend_name() == 'sqlite' and url.database not in (None, '', ':memory:'):
        folder = os.path.dirname(os.path.abspath(url.database))
        os.makedirs(folder, exist_ok=True)
    _log.debug(f'Opening results database at "{url}".')
    return create_engine(url)


def get_engine(conn_str: str = None):
    """ Engine for `conn_str`, or for the configured results database. One engine per URL. """
    return _engine(conn_str or get_connection_str())


def get_session(conn_str: str = None):
    return sessionmaker(bind=get_engine(conn_str))()


def tables_exist(conn_str: str = None) -> bool:
    names = set(inspect(get_engine(conn_str)).get_table_names())
    return set(Base.metadata.tables) <= names


def open_store(conn_str: str = None):
    """ Session on the results database, creating the result tables on first use. """
    if not tables_exist(conn_str):
        create_tables(conn_str)
    return get_session(conn_str)


def create_tables(conn_str: str = None):
    _log.debug('Creating result tables.')
    Base.metadata.create_all(get_engine(conn_str))


def drop_tables(conn_str: str = None):
    _log.debug('Dropping result tables.')
    Base.metadata.drop_all(get_engine(conn_str))


def renew_tables(conn_str: str = None):
    drop_tables(conn_str)
    create_tables(conn_str)

from collections import OrderedDict
from datetime import datetime
from enum import Enum

from sqlalchemy import JSON, TIMESTAMP, Column, Float, ForeignKey, Integer, Text
from sqlalchemy.orm import ColumnProperty, declarative_base, declared_attr, relationship


class _Base(object):
    """
    Common functionality for all stored tables.

    1) __repr__ is generated from the mapped columns (debugging aid; it may load
       deferred attributes).

    2) The table name is derived from the class name: an '_' is inserted before
       every capital letter but the first and the result is lowercased.

       Examples:
           - ExperimentRun -> experiment_run
           - ReplicationRecord -> replication_record
    """
    __column_keys_cache__ = dict()
    """ Column attribute keys by class, used by __repr__ """

    @declared_attr
    def __tablename__(cls):
        cls_name = cls.__name__
        table_name = cls_name[0]
        for c in cls_name[1:]:
            if c.isupper():
                table_name += '_'
            table_name += c
        return table_name.lower()

    def __repr__(self):
        if self.__class__ not in self.__column_keys_cache__:
            self.__column_keys_cache__[self.__class__] = sorted(
                prop.key for prop in self.__mapper__.iterate_properties if isinstance(prop, ColumnProperty))
        keys = self.__column_keys_cache__[self.__class__]
        props = ', '.join(f"{k}='{v}'" for k, v in OrderedDict((k, getattr(self, k)) for k in keys).items())
        return f'<{self.__class__.__name__}({props})>'


Base = declarative_base(cls=_Base)


class RecordMode(Enum):
    FIXED_N = 0
    POISSONIZED = 1

    @classmethod
    def from_label(cls, label: str):
        """ 'fixed' or 'poisson', as used on the command line and in plans. """
        try:
            return dict(fixed=cls.FIXED_N, poisson=cls.POISSONIZED)[label]
        except KeyError:
            raise ValueError(f'Unknown estimator mode "{label}". Use "fixed" or "poisson".')

    @property
    def label(self) -> str:
        return 'fixed' if self is RecordMode.FIXED_N else 'poisson'


class ExperimentRun(Base):
    """ One invocation of a randomized command with its resolved configuration. """
    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(Text, nullable=False)  # Eg.: sim, variance, test
    created_on = Column('created_on', TIMESTAMP, nullable=False, default=datetime.utcnow)
    schema_version = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=True)

    config = Column(JSON, default=dict)  # Non-mutable. Must assign to field.
    summary = Column(JSON, default=dict)  # Non-mutable. Must assign to field.

    records = relationship('ReplicationRecord', back_populates='run', order_by='ReplicationRecord.id')


class ReplicationRecord(Base):
    """ A single simulated d_G value; see experiments.harness.ReplicationRecord. """
    id = Column(Integer, primary_key=True, autoincrement=True)
    n = Column(Integer, nullable=False, index=True)
    h = Column(Float, nullable=False)
    rep = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    mode_code = Column(Integer, nullable=False, default=RecordMode.FIXED_N.value)  # See: RecordMode
    d_g = Column(Float, nullable=False)
    std_d_g = Column(Float, nullable=True)
    runtime_ms = Column(Float, nullable=True)

    run_id = Column(Integer, ForeignKey('experiment_run.id'), nullable=False)
    run = relationship('ExperimentRun', back_populates='records')

    @property
    def mode(self) -> RecordMode:
        return RecordMode(self.mode_code)

    @mode.setter
    def mode(self, new_mode: RecordMode):
        self.mode_code = new_mode.value

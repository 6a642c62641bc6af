"""In-memory MVCC engine that repairs conflicting transactions instead of restarting them."""

from mv3c.engine import (
    Counters,
    Mode,
    Outcome,
    RepairLimitExceeded,
    Status,
    Transaction,
    TransactionManager,
    UserAbort,
    WriteWritePolicy,
    validate,
)
from mv3c.kernels import COMPILED
from mv3c.predicates import PointKey, Predicate, PredicateGraph, Scan, match
from mv3c.store import (
    TXN_ID_BASE,
    Column,
    Database,
    DuplicateKey,
    Kind,
    Policy,
    Table,
    UnknownKey,
    WriteWriteAbort,
)

__version__ = "0.1.0"

__all__ = [
    "COMPILED",
    "TXN_ID_BASE",
    "Column",
    "Counters",
    "Database",
    "DuplicateKey",
    "Kind",
    "Mode",
    "Outcome",
    "PointKey",
    "Policy",
    "Predicate",
    "PredicateGraph",
    "RepairLimitExceeded",
    "Scan",
    "Status",
    "Table",
    "Transaction",
    "TransactionManager",
    "UnknownKey",
    "UserAbort",
    "WriteWriteAbort",
    "WriteWritePolicy",
    "match",
    "validate",
]

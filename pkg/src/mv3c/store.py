"""Versioned in-memory tables.

Every row owns a :class:`VersionChain`, newest version first.  Uncommitted
versions (owner is a transaction id) sit in a contiguous prefix at the head;
committed versions follow in descending commit-timestamp order.  Row values
are flat tuples of scalars and live directly in the versions.

Functions here take a transaction handle by duck typing: anything with
``start_ts``, ``txn_id`` and an ``undo`` list works.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

from mv3c.kernels import scan_chains, visible_value

#: Transaction ids start here; every stamp below it is a commit timestamp.
TXN_ID_BASE = 1 << 62


def is_txn_id(stamp: int) -> bool:
    return stamp >= TXN_ID_BASE


class Sequence:
    """Monotonic stamp generator."""

    __slots__ = ("next_value",)

    def __init__(self, start: int) -> None:
        self.next_value = start

    def next(self) -> int:
        value = self.next_value
        self.next_value += 1
        return value

    @property
    def last(self) -> int:
        return self.next_value - 1


class StoreError(Exception):
    pass


class UnknownKey(StoreError):
    """Update or delete of a row that is not visible to the writer."""


class DuplicateKey(StoreError):
    """Insert of a key that is already visible to the writer."""


class WriteWriteAbort(Exception):
    """Premature abort requested by the write-write policy."""

    def __init__(self, table: str, key) -> None:
        super().__init__(f"write-write conflict on {table}[{key!r}]")
        self.table = table
        self.key = key


class Policy(enum.Enum):
    ALLOW_BLIND = "allow"
    ABORT_RESTART = "abort"


class Kind(enum.Enum):
    INSERT = "insert"
    UPDATE = "update"
    DELETE = "delete"


@dataclass(frozen=True)
class Column:
    name: str
    type: str = "int64"  # int64 | float64 | str
    length: int | None = None


_PY_TYPES = {"int64": int, "float64": float, "str": str}


class Version:
    __slots__ = (
        "owner",
        "table",
        "key",
        "value",
        "modified",
        "kind",
        "chain",
        "older_same",
        "newer_same",
        "pre",
        "seq",
    )

    def __init__(self, owner, table, key, value, modified, kind, chain):
        self.owner = owner
        self.table = table
        self.key = key
        # None for delete tombstones
        self.value = value
        # bitset over column indices
        self.modified = modified
        self.kind = kind
        self.chain = chain
        self.older_same = None
        self.newer_same = None
        # committed value this version replaced; filled in at commit
        self.pre = None
        # per-transaction creation order, set by the engine
        self.seq = 0

    @property
    def committed(self) -> bool:
        return self.owner < TXN_ID_BASE

    def __repr__(self) -> str:
        owner = f"T{self.owner}" if self.committed else f"I{self.owner - TXN_ID_BASE}"
        return f"Version({owner}, {self.table}[{self.key!r}], {self.kind.value}, {self.value!r})"


class VersionChain:
    __slots__ = ("versions", "base")

    def __init__(self, base=None) -> None:
        self.versions: list[Version] = []
        self.base = base

    def uncommitted_prefix(self) -> int:
        n = 0
        for v in self.versions:
            if v.owner < TXN_ID_BASE:
                break
            n += 1
        return n

    def newest_committed_value(self):
        for v in self.versions:
            if v.owner < TXN_ID_BASE:
                return v.value
        return self.base

    def check(self) -> None:
        """Raise AssertionError if the chain ordering invariant is broken."""
        prefix = self.uncommitted_prefix()
        previous = None
        for v in self.versions[prefix:]:
            assert v.owner < TXN_ID_BASE, "uncommitted version below a committed one"
            if previous is not None:
                assert v.owner < previous, "committed versions out of order"
            previous = v.owner


class Table:
    def __init__(self, name: str, columns: Iterable[Column], primary_key: Iterable[str]):
        self.name = name
        self.columns = tuple(columns)
        self.index = {c.name: i for i, c in enumerate(self.columns)}
        self.pk = tuple(self.index[c] for c in primary_key)
        self.all_mask = (1 << len(self.columns)) - 1
        self.pk_mask = self.mask(primary_key)
        self.rows: dict[object, VersionChain] = {}

    def mask(self, names: Iterable[str]) -> int:
        m = 0
        for name in names:
            m |= 1 << self.index[name]
        return m

    def key_of(self, row: tuple):
        if len(self.pk) == 1:
            return row[self.pk[0]]
        return tuple(row[i] for i in self.pk)

    def check_row(self, row: tuple) -> tuple:
        if len(row) != len(self.columns):
            raise StoreError(f"{self.name}: expected {len(self.columns)} columns, got {len(row)}")
        for col, x in zip(self.columns, row):
            py = _PY_TYPES[col.type]
            if py is float and isinstance(x, int) and not isinstance(x, bool):
                continue
            if not isinstance(x, py):
                raise StoreError(f"{self.name}.{col.name}: {x!r} is not {col.type}")
            if col.length is not None and len(x) > col.length:
                raise StoreError(f"{self.name}.{col.name}: value longer than {col.length}")
        return row

    def load(self, rows: Iterable[tuple]) -> None:
        """Bulk-load pre-transactional rows as chain base values."""
        for row in rows:
            row = self.check_row(tuple(row))
            key = self.key_of(row)
            if key in self.rows:
                raise DuplicateKey(f"{self.name}[{key!r}]")
            self.rows[key] = VersionChain(row)

    def chains(self) -> Iterator[tuple[object, VersionChain]]:
        return iter(self.rows.items())


class Database:
    def __init__(self, tables: Iterable[Table] = ()) -> None:
        self.tables: dict[str, Table] = {}
        for t in tables:
            self.add(t)

    def add(self, table: Table) -> Table:
        self.tables[table.name] = table
        return table

    def __getitem__(self, name: str) -> Table:
        return self.tables[name]

    def snapshot(self, start_ts: int = TXN_ID_BASE, txn_id: int = -1) -> dict[str, list]:
        """Full visible content of every table, key-sorted."""
        out = {}
        for name, table in self.tables.items():
            rows, _ = scan_chains(table.rows, (), start_ts, txn_id)
            rows.sort(key=_first)
            out[name] = rows
        return out

    def dump(self) -> dict[str, list]:
        """Latest committed state."""
        return self.snapshot()

    def check_chains(self) -> None:
        for table in self.tables.values():
            for chain in table.rows.values():
                chain.check()


def _first(item):
    return item[0]


def visible_version(chain: VersionChain, start_ts: int, txn_id: int):
    """Return the visible Version, the chain's base tuple, or None."""
    for v in chain.versions:
        if v.owner == txn_id or v.owner < start_ts:
            return v
    return chain.base


def read_row(table: Table, key, start_ts: int, txn_id: int):
    chain = table.rows.get(key)
    if chain is None:
        return None
    return visible_value(chain, start_ts, txn_id)


def has_write_conflict(chain: VersionChain, txn_id: int, start_ts: int) -> bool:
    """Another transaction's uncommitted version, or a commit newer than start_ts."""
    for v in chain.versions:
        if v.owner < TXN_ID_BASE:
            return v.owner > start_ts
        if v.owner != txn_id:
            return True
    return False


def persist_write(txn, table: Table, key, value, modified: int, kind: Kind,
                  policy: Policy = Policy.ALLOW_BLIND) -> Version:
    chain = table.rows.get(key)
    current = visible_value(chain, txn.start_ts, txn.txn_id) if chain is not None else None
    if kind is Kind.INSERT:
        if current is not None:
            raise DuplicateKey(f"{table.name}[{key!r}]")
    elif current is None:
        raise UnknownKey(f"{table.name}[{key!r}]")
    if chain is None:
        chain = table.rows[key] = VersionChain()
    elif policy is Policy.ABORT_RESTART and has_write_conflict(chain, txn.txn_id, txn.start_ts):
        raise WriteWriteAbort(table.name, key)

    v = Version(txn.txn_id, table.name, key, value, modified, kind, chain)
    for own in chain.versions:
        if own.owner == txn.txn_id:
            v.older_same = own
            own.newer_same = v
            break
    chain.versions.insert(0, v)
    txn.undo.append(v)
    return v


def unlink(v: Version) -> None:
    """Detach an uncommitted version from its chain and intra-transaction links."""
    chain = v.chain
    versions = chain.versions
    for i, x in enumerate(versions):
        if x is v:
            del versions[i]
            break
    if v.newer_same is not None:
        v.newer_same.older_same = v.older_same
    if v.older_same is not None:
        v.older_same.newer_same = v.newer_same
    v.older_same = v.newer_same = None


def _drop_empty_chain(db: Database, v: Version) -> None:
    chain = v.chain
    if not chain.versions and chain.base is None:
        table = db.tables[v.table]
        if table.rows.get(v.key) is chain:
            del table.rows[v.key]


def remove_versions(db: Database, txn, doomed: list[Version]) -> None:
    """Unlink ``doomed`` from their chains and from the undo buffer."""
    if not doomed:
        return
    ids = set()
    for v in doomed:
        unlink(v)
        _drop_empty_chain(db, v)
        ids.add(id(v))
    txn.undo[:] = [v for v in txn.undo if id(v) not in ids]


def rollback(db: Database, txn) -> None:
    for v in reversed(txn.undo):
        unlink(v)
        _drop_empty_chain(db, v)
    txn.undo.clear()


def splice_on_commit(db: Database, txn, commit_ts: int) -> list[Version]:
    """Turn the transaction's newest version per row into its committed version.

    Superseded same-transaction versions are discarded.  The survivor is
    stamped with ``commit_ts``, re-based onto the newest committed value for
    the columns it did not modify, and moved to the top of the committed
    suffix.  Returns the committed versions, which become the new undo buffer.
    """
    committed = []
    seen = set()
    for v in txn.undo:
        chain = v.chain
        if id(chain) in seen:
            continue
        seen.add(id(chain))
        own = [x for x in chain.versions if x.owner == txn.txn_id]
        newest = own[0]
        oldest = own[-1]
        mask = 0
        for x in own:
            mask |= x.modified
        chain.versions = [x for x in chain.versions if x.owner != txn.txn_id]
        under = chain.newest_committed_value()
        kind = newest.kind
        value = newest.value
        if oldest.kind is Kind.INSERT:
            if kind is Kind.DELETE:
                _drop_empty_chain(db, newest)
                continue
            kind = Kind.INSERT
        elif kind is Kind.INSERT:
            # delete then re-insert: a full-row update
            kind = Kind.UPDATE
        if kind is Kind.UPDATE and under is not None:
            value = tuple(value[i] if mask >> i & 1 else under[i] for i in range(len(value)))
        if kind is not Kind.UPDATE:
            mask = db.tables[newest.table].all_mask
        newest.owner = commit_ts
        newest.value = value
        newest.kind = kind
        newest.modified = mask
        newest.pre = under
        newest.older_same = newest.newer_same = None
        chain.versions.insert(chain.uncommitted_prefix(), newest)
        committed.append(newest)
    txn.undo[:] = committed
    return committed


def garbage_collect(manager) -> int:
    """Reclaim committed versions no active snapshot can reach.

    ``manager`` needs ``active`` (mapping of handles with ``start_ts``) and a
    ``recently_committed`` list of entries with ``commit_ts`` and
    ``versions``, sorted by ``commit_ts``.
    """
    watermark = min((t.start_ts for t in manager.active.values()), default=TXN_ID_BASE)
    entries = manager.recently_committed
    cut = 0
    while cut < len(entries) and entries[cut].commit_ts < watermark:
        cut += 1
    if cut == 0:
        return 0
    reclaimed = 0
    seen = set()
    for entry in entries[:cut]:
        for v in entry.versions:
            chain = v.chain
            if id(chain) in seen:
                continue
            seen.add(id(chain))
            versions = chain.versions
            for i, x in enumerate(versions):
                if x.owner < watermark:
                    reclaimed += len(versions) - i - 1
                    del versions[i + 1:]
                    break
    del entries[:cut]
    return reclaimed

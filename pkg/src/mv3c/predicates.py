"""Predicates, their closures, and the per-transaction predicate graph.

A predicate pairs a selection criterion with the closure that consumes its
result-set.  Running the closure may persist versions (registered on the
predicate) and execute nested predicates (registered as its children).
"""

from __future__ import annotations

from operator import itemgetter
from typing import Callable

from mv3c.kernels import row_matches, scan_chains, visible_value
from mv3c.store import Kind, Table, Version, remove_versions

_key = itemgetter(0)


class PointKey:
    """Primary-key lookup: at most one row."""

    __slots__ = ("table", "key")

    def __init__(self, table: str, key) -> None:
        self.table = table
        self.key = key

    def monitored_mask(self, table: Table) -> int:
        return table.pk_mask

    def matches(self, row, table: Table) -> bool:
        return row is not None and table.key_of(row) == self.key

    def matches_version(self, v: Version, txn_id=None, horizon=0) -> bool:
        return v.key == self.key

    def evaluate(self, table: Table, start_ts: int, txn_id: int):
        chain = table.rows.get(self.key)
        if chain is None:
            return [], 1
        value = visible_value(chain, start_ts, txn_id)
        return ([(self.key, value)] if value is not None else []), 1

    def __eq__(self, other) -> bool:
        return type(other) is PointKey and (self.table, self.key) == (other.table, other.key)

    def __hash__(self) -> int:
        return hash((self.table, self.key))

    def __repr__(self) -> str:
        return f"PointKey({self.table!r}, {self.key!r})"


class Scan:
    """Conjunction of per-column inclusive range or equality constraints.

    ``Scan("Account", bal=(500.0, None))`` selects rows with bal >= 500;
    ``Scan("Item", grp=3)`` is an equality.  ``None`` leaves a bound open.
    """

    __slots__ = ("table", "spec", "constraints")

    def __init__(self, table: str, **columns) -> None:
        self.table = table
        spec = []
        for name, c in sorted(columns.items()):
            lo, hi = c if isinstance(c, tuple) else (c, c)
            spec.append((name, lo, hi))
        self.spec = tuple(spec)
        # resolved column indices, filled by bind()
        self.constraints = None

    def bind(self, table: Table) -> tuple:
        if self.constraints is None:
            self.constraints = tuple((table.index[n], lo, hi) for n, lo, hi in self.spec)
        return self.constraints

    def monitored_mask(self, table: Table) -> int:
        return table.mask(n for n, _, _ in self.spec)

    def matches(self, row, table: Table = None) -> bool:
        return row is not None and row_matches(row, self.constraints)

    def matches_version(self, v: Version, txn_id=None, horizon=0) -> bool:
        cons = self.constraints
        if txn_id is not None:
            views = own_views(v, txn_id, horizon)
            if views is not None:
                return any(x is not None and row_matches(x, cons) for x in views)
        if v.kind is Kind.INSERT:
            return row_matches(v.value, cons)
        if v.kind is Kind.DELETE:
            return v.pre is not None and row_matches(v.pre, cons)
        return row_matches(v.value, cons) or (v.pre is not None and row_matches(v.pre, cons))

    def evaluate(self, table: Table, start_ts: int, txn_id: int):
        rows, scanned = scan_chains(table.rows, self.bind(table), start_ts, txn_id)
        rows.sort(key=_key)
        return rows, scanned

    def __eq__(self, other) -> bool:
        return type(other) is Scan and (self.table, self.spec) == (other.table, other.spec)

    def __hash__(self) -> int:
        return hash((self.table, self.spec))

    def __repr__(self) -> str:
        parts = []
        for n, lo, hi in self.spec:
            if lo == hi:
                parts.append(f"{n}={lo!r}")
            else:
                parts.append(f"{n}∈[{lo!r},{hi!r}]")
        return f"Scan({self.table!r}, {', '.join(parts)})"


def own_views(v: Version, txn_id, horizon: int):
    """``v``'s post- and pre-image as seen by a transaction that wrote the same row.

    Only the transaction's versions numbered up to ``horizon`` count, i.e.
    those that existed when the predicate was evaluated.  Returns None when
    there are none.  Otherwise each image is overlaid with the columns those
    versions wrote, which is what the predicate's evaluation returned.
    """
    mask = 0
    newest = None
    for x in v.chain.versions:
        if x.owner == txn_id and x.seq <= horizon:
            if newest is None:
                newest = x
            mask |= x.modified
    if newest is None:
        return None
    own = newest.value
    if own is None:
        return (None, None)
    full = (1 << len(own)) - 1

    def view(under):
        if under is None or mask & full == full:
            return own
        return tuple(own[c] if mask >> c & 1 else under[c] for c in range(len(own)))

    post = v.value if v.kind is not Kind.DELETE else None
    pre = v.pre if v.kind is not Kind.INSERT else None
    return (view(post), view(pre))


Closure = Callable[..., None]


class Predicate:
    __slots__ = (
        "id",
        "criterion",
        "closure",
        "versions",
        "children",
        "parent",
        "result",
        "monitored",
        "cache",
        "invalid",
        "fix_log",
        "outputs",
        "horizon",
    )

    def __init__(self, id, criterion, closure, parent, monitored, cache=False):
        self.id = id
        self.criterion = criterion
        self.closure = closure
        self.versions: list[Version] = []
        self.children: list[Predicate] = []
        self.parent = parent
        self.result: list = []
        # criterion columns plus the result columns the closure reads
        self.monitored = monitored
        self.cache = cache
        self.invalid = False
        self.fix_log = None
        self.outputs: list = []
        # write sequence number at evaluation: own versions up to it were visible
        self.horizon = 0

    def rows(self) -> list:
        return [value for _, value in self.result]

    def __repr__(self) -> str:
        return f"<P{self.id} {self.criterion!r}>"


class PredicateGraph:
    def __init__(self) -> None:
        self.roots: list[Predicate] = []
        # creation order, which is a topological order
        self.nodes: list[Predicate] = []
        # versions persisted outside any closure (blind writes in the program body)
        self.top_versions: list[Version] = []
        self.top_outputs: list = []

    def add(self, pred: Predicate) -> None:
        if pred.parent is None:
            self.roots.append(pred)
        else:
            pred.parent.children.append(pred)
        self.nodes.append(pred)

    def descendants(self, pred: Predicate) -> list[Predicate]:
        out = []
        stack = list(reversed(pred.children))
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(n.children))
        return out

    def preorder(self) -> list[Predicate]:
        out = []
        for root in self.roots:
            out.append(root)
            out.extend(self.descendants(root))
        return out

    def clear(self) -> None:
        self.roots.clear()
        self.nodes.clear()
        self.top_versions.clear()
        self.top_outputs.clear()

    def check(self) -> None:
        """Assert the graph is a forest in topological creation order."""
        position = {id(n): i for i, n in enumerate(self.nodes)}
        assert len(position) == len(self.nodes)
        reachable = {id(n) for n in self.preorder()}
        assert reachable == set(position), "nodes and reachable set differ"
        for n in self.nodes:
            if n.parent is not None:
                assert position[id(n.parent)] < position[id(n)], "edge from newer to older predicate"
                assert any(c is n for c in n.parent.children)


def evaluate(txn, criterion) -> list:
    table = txn.db.tables[criterion.table]
    rows, scanned = criterion.evaluate(table, txn.start_ts, txn.txn_id)
    txn.counters.predicates_evaluated += 1
    txn.counters.rows_scanned += scanned
    return rows


def run_closure(txn, pred: Predicate) -> None:
    txn.counters.closures_run += 1
    stack = txn.stack
    stack.append(pred)
    try:
        pred.closure(txn, pred.rows())
    finally:
        stack.pop()


def execute_predicate(txn, parent, criterion, closure, *, cache=False, result_columns=None) -> Predicate:
    """Create, evaluate and run a predicate under ``parent`` (None for a root)."""
    table = txn.db.tables[criterion.table]
    if isinstance(criterion, Scan):
        criterion.bind(table)
    monitored = criterion.monitored_mask(table)
    monitored |= table.all_mask if result_columns is None else table.mask(result_columns)
    pred = Predicate(txn.next_predicate_id(), criterion, closure, parent, monitored, cache)
    pred.horizon = txn.write_seq
    txn.graph.add(pred)
    pred.result = evaluate(txn, criterion)
    run_closure(txn, pred)
    return pred


def match(pred: Predicate, v: Version, attribute_level: bool = False, txn_id=None) -> bool:
    """Does committed version ``v`` possibly change ``pred``'s result-set?

    Updates match on either their new or their replaced value, so rows
    leaving a result-set are caught as well as rows entering it.  Given the
    validating ``txn_id``, rows it wrote are matched as it sees them.
    """
    if v.table != pred.criterion.table:
        return False
    if attribute_level and not (pred.monitored & v.modified):
        return False
    return pred.criterion.matches_version(v, txn_id, pred.horizon)


def prune_subtree(txn, pred: Predicate) -> list[Version]:
    """Drop the versions of ``pred`` and its descendants and detach the descendants.

    ``pred`` itself stays in the graph so its closure can be run again.
    """
    doomed = txn.graph.descendants(pred)
    removed = list(pred.versions)
    for n in doomed:
        removed.extend(n.versions)
    remove_versions(txn.db, txn, removed)
    if doomed:
        gone = {id(n) for n in doomed}
        txn.graph.nodes[:] = [n for n in txn.graph.nodes if id(n) not in gone]
        for n in doomed:
            n.versions = []
            n.children = []
    pred.versions = []
    pred.children = []
    pred.outputs = []
    return removed

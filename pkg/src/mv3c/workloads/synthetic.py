"""Random annotated programs over a small grouped table.

Used to drive the serializability, repair-equivalence and validation-split
oracles.  Every predicate of a generated transaction works on its own row
group, except that a child may reuse its parent's group; parents write
before they create children.  That keeps programs within the engine's
annotation contract while still producing data-dependent predicate graphs
(child keys and child counts depend on what the parent read).
"""

from __future__ import annotations

import random
from typing import NamedTuple

from mv3c.predicates import PointKey, Scan
from mv3c.store import Column, Database, Table
from mv3c.workloads.scheduler import TxnRequest

ID, GRP, A, B = 0, 1, 2, 3
_COLS = {"a": A, "b": B}
INSERT_BASE = 10_000_000


class Node(NamedTuple):
    kind: str  # point | scan
    group: int
    lo: int
    hi: int
    col: str | None  # column written back as a read-modify-write, or None
    delta: int
    insert: bool
    delete: bool
    abort_above: int | None
    cache: bool
    children: tuple


class ProgramSpec(NamedTuple):
    per_group: int
    roots: tuple
    blind: tuple  # (counter id, value) blind writes in the program body


def make_synthetic_db(groups: int = 8, per_group: int = 5, counters: int = 4, seed: int = 0) -> Database:
    rng = random.Random(seed)
    item = Table("Item", [Column("id"), Column("grp"), Column("a"), Column("b")], ["id"])
    item.load(
        (g * 100 + r, g, rng.randrange(10), rng.randrange(10))
        for g in range(groups)
        for r in range(per_group)
    )
    counter = Table("Counter", [Column("id"), Column("n")], ["id"])
    counter.load((c, 0) for c in range(counters))
    return Database([item, counter])


def synthetic_program(tx, spec: ProgramSpec, uid: int) -> None:
    for cid, n in spec.blind:
        tx.update("Counter", cid, n=n)
    for i, node in enumerate(spec.roots):
        _run_node(tx, spec.per_group, node, uid, (i,), 0)


def _run_node(tx, per_group: int, node: Node, uid: int, path: tuple, parent_sum: int) -> None:
    if node.kind == "point":
        crit = PointKey("Item", node.group * 100 + (parent_sum + node.lo) % per_group)
    else:
        crit = Scan("Item", grp=node.group, a=(node.lo, node.hi))
    used = ("a",) if node.col in (None, "a") else ("a", node.col)

    def closure(tx, rows):
        s = sum(r[A] for r in rows)
        tx.emit(s)
        if node.abort_above is not None and s > node.abort_above:
            tx.abort("threshold")
        if node.col is not None:
            c = _COLS[node.col]
            for r in rows:
                tx.update("Item", r[ID], **{node.col: r[c] + node.delta + s % 3})
        if node.insert:
            new_id = INSERT_BASE + uid * 10_000 + _path_code(path)
            tx.insert("Item", (new_id, node.group, s % 10, 0))
        if node.delete and rows and s % 4 == 0:
            tx.delete("Item", rows[-1][ID])
        kids = node.children
        if kids and s % 2:
            kids = kids[:-1]
        for j, child in enumerate(kids):
            _run_node(tx, per_group, child, uid, path + (j,), s)

    tx.read(crit, closure, cache=node.cache, result_columns=used)


def _path_code(path: tuple) -> int:
    code = 0
    for p in path:
        code = code * 8 + p + 1
    return code


def random_program(rng: random.Random, groups: int = 8, per_group: int = 5, counters: int = 4,
                   max_nodes: int = 4, write_prob: float = 0.6) -> ProgramSpec:
    free = list(range(groups))
    rng.shuffle(free)
    budget = [rng.randint(1, max_nodes)]

    def node(depth: int, group: int) -> Node:
        budget[0] -= 1
        kind = rng.choice(("point", "point", "scan"))
        lo = rng.randrange(per_group) if kind == "point" else rng.randrange(8)
        hi = lo if kind == "point" else lo + rng.randrange(1, 8)
        col = rng.choice(("a", "b")) if rng.random() < write_prob else None
        children = []
        while budget[0] > 0 and depth < 3 and rng.random() < 0.6:
            if free and rng.random() < 0.75:
                children.append(node(depth + 1, free.pop()))
            elif not any(c.group == group for c in children):
                children.append(node(depth + 1, group))
            else:
                break
        return Node(
            kind=kind,
            group=group,
            lo=lo,
            hi=hi,
            col=col,
            delta=rng.randint(1, 3),
            insert=rng.random() < 0.15,
            delete=rng.random() < 0.1,
            abort_above=rng.choice((None, None, None, 25)),
            cache=kind == "scan" and rng.random() < 0.5,
            children=tuple(children),
        )

    roots = []
    while budget[0] > 0 and free:
        roots.append(node(0, free.pop()))
        if rng.random() < 0.5:
            break
    blind = ()
    if rng.random() < 0.3:
        blind = ((rng.randrange(counters), rng.randrange(100)),)
    return ProgramSpec(per_group, tuple(roots), blind)


def synthetic_stream(n_txns: int, seed: int = 0, groups: int = 8, per_group: int = 5,
                     counters: int = 4, max_nodes: int = 4) -> list[TxnRequest]:
    rng = random.Random(seed)
    return [
        TxnRequest(
            seq,
            "Synthetic",
            synthetic_program,
            {"spec": random_program(rng, groups, per_group, counters, max_nodes), "uid": seq},
        )
        for seq in range(n_txns)
    ]

"""Patch a cached scan result with concurrently committed versions.

Instead of re-scanning a table when a cache-enabled predicate fails
validation, the versions that matched it are folded into the result-set it
captured at evaluation time.
"""

from __future__ import annotations

from bisect import bisect_left
from operator import itemgetter

from mv3c.kernels import visible_value
from mv3c.predicates import own_views
from mv3c.store import Kind, Version

ENTERED = "entered"
LEFT = "left"
CHANGED = "changed"

_key = itemgetter(0)


class FixInapplicable(Exception):
    """The predicate cannot be fixed; evaluate it from scratch instead."""


def classify(criterion, v: Version, txn_id=None, horizon: int = 0):
    """Tag ``v`` relative to ``criterion`` or return None if it is irrelevant.

    Versions of rows ``txn_id`` wrote itself (before ``horizon``) are tagged
    CHANGED when they are relevant at all.
    """
    if txn_id is not None:
        views = own_views(v, txn_id, horizon)
        if views is not None:
            return CHANGED if any(x is not None and criterion.matches(x) for x in views) else None
    post = v.value is not None and v.kind is not Kind.DELETE and criterion.matches(v.value)
    pre = v.kind is not Kind.INSERT and v.pre is not None and criterion.matches(v.pre)
    if post and pre:
        return CHANGED
    if post:
        return ENTERED
    if pre:
        return LEFT
    return None


def fix_result_set(txn, pred) -> list:
    """Return ``pred.result`` with its fix log applied, in key order.

    The fix log is the list of ``(version, tag)`` pairs gathered during the
    failed validation.  Each logged row is re-read at the new start
    timestamp (one chain lookup, which also applies the transaction's own
    writes) and inserted, replaced or dropped according to the criterion.
    Only ``len(fix_log)`` rows are touched.
    """
    log = pred.fix_log
    if not pred.cache or log is None:
        raise FixInapplicable(pred)
    if pred.parent is not None and pred.parent.invalid:
        raise FixInapplicable(pred)
    result = list(pred.result)
    txn_id = txn.txn_id
    crit = pred.criterion
    for v, _ in log:
        txn.counters.rows_scanned += 1
        value = visible_value(v.chain, txn.start_ts, txn_id)
        i = bisect_left(result, v.key, key=_key)
        present = i < len(result) and result[i][0] == v.key
        if value is None or not crit.matches(value):
            if present:
                del result[i]
        elif present:
            result[i] = (v.key, value)
        else:
            result.insert(i, (v.key, value))
    return result

"""Pure-Python reference for the hot kernels in ``_kernels.pyx``.

Both modules export the same three functions with identical semantics.
"""


def _own_view(versions, i, start_ts, txn_id, base):
    """Reader's view of a row it has written; ``versions[i]`` is its newest version.

    Columns the reader wrote come from its newest version, the rest from the
    committed value visible at ``start_ts``, so a transaction that moved to a
    newer start timestamp reads fresh values for columns it did not write.
    """
    newest = versions[i]
    value = newest.value
    if value is None:
        return None
    full = (1 << len(value)) - 1
    mask = 0
    under = base
    for v in versions[i:]:
        owner = v.owner
        if owner == txn_id:
            mask |= v.modified
        elif owner < start_ts:
            under = v.value
            break
    if mask & full == full or under is None:
        return value
    return tuple(value[c] if mask >> c & 1 else under[c] for c in range(len(value)))


def visible_value(chain, start_ts, txn_id):
    """Value a reader (start_ts, txn_id) sees in ``chain``; None if absent.

    The reader's own newest version wins (re-based as in ``_own_view``);
    otherwise the newest committed version older than start_ts; otherwise
    the pre-transactional base.
    """
    versions = chain.versions
    for i, v in enumerate(versions):
        owner = v.owner
        if owner == txn_id:
            return _own_view(versions, i, start_ts, txn_id, chain.base)
        if owner < start_ts:
            return v.value
    return chain.base


def row_matches(row, constraints):
    for idx, lo, hi in constraints:
        x = row[idx]
        if lo is not None and x < lo:
            return False
        if hi is not None and x > hi:
            return False
    return True


def scan_chains(rows, constraints, start_ts, txn_id):
    """Visible rows of a table satisfying ``constraints``.

    Returns ``(matches, scanned)`` where matches is a list of (key, value)
    in dict order and scanned is the number of chains inspected.
    """
    out = []
    scanned = 0
    for key, chain in rows.items():
        scanned += 1
        value = visible_value(chain, start_ts, txn_id)
        if value is not None and row_matches(value, constraints):
            out.append((key, value))
    return out, scanned

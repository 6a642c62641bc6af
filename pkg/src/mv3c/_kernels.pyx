# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled visibility and scan kernels; see _kernels_py for the contract."""


cdef object _own_view(list versions, Py_ssize_t i, long long start_ts, long long txn_id, object base):
    cdef object newest = versions[i]
    cdef object value = newest.value
    cdef object under = base
    cdef object v
    cdef long long owner
    cdef Py_ssize_t n, c, k
    cdef object mask = 0
    if value is None:
        return None
    n = len(versions)
    for k in range(i, n):
        v = versions[k]
        owner = v.owner
        if owner == txn_id:
            mask |= v.modified
        elif owner < start_ts:
            under = v.value
            break
    n = len(<tuple>value)
    if under is None or mask == (1 << n) - 1:
        return value
    return tuple([value[c] if (mask >> c) & 1 else under[c] for c in range(n)])


cdef inline object _visible(object chain, long long start_ts, long long txn_id):
    cdef list versions = chain.versions
    cdef Py_ssize_t i, n = len(versions)
    cdef object v
    cdef long long owner
    for i in range(n):
        v = versions[i]
        owner = v.owner
        if owner == txn_id:
            return _own_view(versions, i, start_ts, txn_id, chain.base)
        if owner < start_ts:
            return v.value
    return chain.base


cpdef object visible_value(object chain, long long start_ts, long long txn_id):
    return _visible(chain, start_ts, txn_id)


cpdef bint row_matches(tuple row, tuple constraints):
    cdef tuple c
    cdef object x, lo, hi
    for c in constraints:
        x = row[<Py_ssize_t>c[0]]
        lo = c[1]
        hi = c[2]
        if lo is not None and x < lo:
            return False
        if hi is not None and x > hi:
            return False
    return True


cpdef tuple scan_chains(dict rows, tuple constraints, long long start_ts, long long txn_id):
    cdef list out = []
    cdef Py_ssize_t scanned = 0
    cdef object key, chain, value
    for key, chain in rows.items():
        scanned += 1
        value = _visible(chain, start_ts, txn_id)
        if value is not None and row_matches(value, constraints):
            out.append((key, value))
    return out, scanned

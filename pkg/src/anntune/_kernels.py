"""Numba kernels shared by the dataset oracle and the graph index.

Distance convention: squared L2, accumulated sequentially in float64 over
float32 inputs.  Every distance this package reports is the result of
``_sqd`` (or bit-identical arithmetic), so tests can recompute it exactly
with a plain Python loop.  Candidate selection may use float32 GEMM
shortcuts internally, but reported distances and orderings are always
refined through ``_sqd`` with (distance, id) tie-breaking.

Kernels are compiled lazily with ``cache=True``; no fastmath, so the
accumulation order is IEEE-reproducible.
"""

import numpy as np
from numba import njit

# Relative slack applied to the float32 GEMM candidate bound before exact
# refinement.  Covers worst-case f32 rounding of q.b up to dim ~1e3.
_GEMM_TOL = 1e-4


@njit(cache=True)
def _sqd(vecs, u, q):
    """Squared L2 distance between row ``vecs[u]`` and vector ``q``."""
    s = 0.0
    for j in range(vecs.shape[1]):
        t = np.float64(vecs[u, j]) - np.float64(q[j])
        s += t * t
    return s


@njit(cache=True)
def _knn_select(base, qchunk, sims, b_norms, b_norm_max, kk, exclude0,
                out_ids, out_d, cand):
    """Exact top-``kk`` neighbors for a chunk of queries.

    ``sims`` is the float32 GEMM ``qchunk @ base.T``.  Phase 1 ranks by the
    expanded form ``|b|^2 - 2 q.b`` (monotone in distance for a fixed query)
    to find an approximate k-th bound; phase 2 collects every id within the
    bound plus a float32-error tolerance and re-ranks them with exact
    ``_sqd`` and (distance, id) tie-breaks.  Row ``r`` excludes global id
    ``exclude0 + r`` (pass ``exclude0 = -1`` to disable self-exclusion).
    Short rows are padded with id -1 / distance inf.
    """
    m, n = sims.shape
    heap_d = np.empty(kk, np.float64)
    heap_i = np.empty(kk, np.int64)
    for r in range(m):
        q = qchunk[r]
        excl = exclude0 + r if exclude0 >= 0 else -1
        size = 0
        for j in range(n):
            if j == excl:
                continue
            d = np.float64(b_norms[j]) - 2.0 * np.float64(sims[r, j])
            if size < kk:
                heap_d[size] = d
                heap_i[size] = j
                c = size
                size += 1
                while c > 0:
                    p = (c - 1) >> 1
                    if heap_d[p] < heap_d[c] or (
                            heap_d[p] == heap_d[c] and heap_i[p] < heap_i[c]):
                        heap_d[p], heap_d[c] = heap_d[c], heap_d[p]
                        heap_i[p], heap_i[c] = heap_i[c], heap_i[p]
                        c = p
                    else:
                        break
            else:
                if d > heap_d[0] or (d == heap_d[0] and j > heap_i[0]):
                    continue
                heap_d[0] = d
                heap_i[0] = j
                c = 0
                while True:
                    l = 2 * c + 1
                    rr = 2 * c + 2
                    big = c
                    if l < kk and (heap_d[l] > heap_d[big] or (
                            heap_d[l] == heap_d[big] and heap_i[l] > heap_i[big])):
                        big = l
                    if rr < kk and (heap_d[rr] > heap_d[big] or (
                            heap_d[rr] == heap_d[big] and heap_i[rr] > heap_i[big])):
                        big = rr
                    if big == c:
                        break
                    heap_d[c], heap_d[big] = heap_d[big], heap_d[c]
                    heap_i[c], heap_i[big] = heap_i[big], heap_i[c]
                    c = big
        bound = heap_d[0] if size == kk else np.inf
        qn2 = 0.0
        for t in range(qchunk.shape[1]):
            qt = np.float64(q[t])
            qn2 += qt * qt
        tol = _GEMM_TOL * (qn2 + b_norm_max) + 1e-12
        nc = 0
        for j in range(n):
            if j == excl:
                continue
            d = np.float64(b_norms[j]) - 2.0 * np.float64(sims[r, j])
            if d <= bound + tol:
                cand[nc] = j
                nc += 1
        size2 = 0
        for ci in range(nc):
            j = cand[ci]
            dj = _sqd(base, j, q)
            if size2 == kk:
                if dj > out_d[r, kk - 1] or (
                        dj == out_d[r, kk - 1] and j > out_ids[r, kk - 1]):
                    continue
            lo, hi = 0, size2
            while lo < hi:
                mid = (lo + hi) >> 1
                if out_d[r, mid] < dj or (
                        out_d[r, mid] == dj and out_ids[r, mid] < j):
                    lo = mid + 1
                else:
                    hi = mid
            last = min(size2, kk - 1)
            for t in range(last, lo, -1):
                out_d[r, t] = out_d[r, t - 1]
                out_ids[r, t] = out_ids[r, t - 1]
            out_d[r, lo] = dj
            out_ids[r, lo] = j
            if size2 < kk:
                size2 += 1
        for t in range(size2, kk):
            out_ids[r, t] = -1
            out_d[r, t] = np.inf


@njit(cache=True)
def _mrng_prune(base, knn_ids, knn_d, max_degree):
    """MRNG edge selection over precomputed (sorted) kNN candidate rows.

    Scans candidates ascending by distance; accepts c unless some accepted
    neighbor s is closer to c than the node itself is.  Stops at
    ``max_degree`` accepted edges.  Returns (adjacency, degrees) with -1
    padding.
    """
    n = knn_ids.shape[0]
    adj = np.full((n, max_degree), -1, np.int32)
    deg = np.zeros(n, np.int32)
    for u in range(n):
        cnt = 0
        for ci in range(knn_ids.shape[1]):
            c = knn_ids[u, ci]
            if c < 0:
                continue
            d_uc = knn_d[u, ci]
            ok = True
            for ai in range(cnt):
                s = adj[u, ai]
                if _sqd(base, s, base[c]) < d_uc:
                    ok = False
                    break
            if ok:
                adj[u, cnt] = c
                cnt += 1
                if cnt == max_degree:
                    break
        deg[u] = cnt
    return adj, deg


@njit(cache=True)
def _search_batch(base, offsets, neigh, queries, entries, k, pool_size,
                  out_ids, out_d, visited):
    """Best-first graph search for a batch of queries.

    Maintains a sorted candidate pool of at most ``pool_size`` (distance, id)
    pairs.  Repeatedly expands the closest unexpanded pool member; a
    neighbor enters the pool only if it beats the current worst retained
    member.  Terminates when every retained member is expanded, i.e. the
    closest unexpanded candidate is farther than the pool's worst — the
    pool then holds the best ``pool_size`` visited nodes and the top ``k``
    are returned.  ``visited`` is an int64 scratch of zeros (one allocation
    per batch; stamps are query-index based).  Returns the total number of
    distance computations.
    """
    nq = queries.shape[0]
    cap = pool_size + 1
    pd = np.empty(cap, np.float64)
    pid = np.empty(cap, np.int64)
    pex = np.empty(cap, np.uint8)
    total = 0
    for qi in range(nq):
        stamp = qi + 1
        q = queries[qi]
        entry = entries[qi]
        d0 = _sqd(base, entry, q)
        total += 1
        pd[0] = d0
        pid[0] = entry
        pex[0] = 0
        n = 1
        visited[entry] = stamp
        i = 0
        while i < n:
            if pex[i]:
                i += 1
                continue
            pex[i] = 1
            u = pid[i]
            lo = i
            for e in range(offsets[u], offsets[u + 1]):
                v = neigh[e]
                if visited[v] == stamp:
                    continue
                visited[v] = stamp
                dv = _sqd(base, v, q)
                total += 1
                if n == pool_size and (dv > pd[n - 1] or (
                        dv == pd[n - 1] and v > pid[n - 1])):
                    continue
                lo2, hi2 = 0, n
                while lo2 < hi2:
                    mid = (lo2 + hi2) >> 1
                    if pd[mid] < dv or (pd[mid] == dv and pid[mid] < v):
                        lo2 = mid + 1
                    else:
                        hi2 = mid
                pos = lo2
                m = min(n, pool_size - 1)
                for t in range(m, pos, -1):
                    pd[t] = pd[t - 1]
                    pid[t] = pid[t - 1]
                    pex[t] = pex[t - 1]
                pd[pos] = dv
                pid[pos] = v
                pex[pos] = 0
                if n < pool_size:
                    n += 1
                if pos < lo:
                    lo = pos
            i = lo
        nres = min(k, n)
        for a in range(nres):
            out_ids[qi, a] = pid[a]
            out_d[qi, a] = pd[a]
        for a in range(nres, k):
            out_ids[qi, a] = -1
            out_d[qi, a] = np.inf
    return total


@njit(cache=True)
def _bfs_reached(offsets, neigh, start, reached):
    """Mark nodes reachable from ``start`` in ``reached`` (uint8, zeroed)."""
    n = reached.shape[0]
    queue = np.empty(n, np.int64)
    qt = 0
    queue[qt] = start
    qt += 1
    reached[start] = 1
    cnt = 1
    qh = 0
    while qh < qt:
        u = queue[qh]
        qh += 1
        for e in range(offsets[u], offsets[u + 1]):
            v = neigh[e]
            if reached[v] == 0:
                reached[v] = 1
                cnt += 1
                queue[qt] = v
                qt += 1
    return cnt


# --- NN-descent (approximate kNN graph for counts above the exact threshold)


@njit(cache=True)
def _nnd_init_rows(base, ids, dists):
    """Deduplicate random init rows, compute distances, sort by (d, id).

    Duplicate ids within a row are replaced by (-1, inf) slots which sort to
    the end and behave as free capacity during descent.
    """
    n, kk = ids.shape
    for u in range(n):
        for a in range(1, kk):
            iv = ids[u, a]
            b = a - 1
            while b >= 0 and ids[u, b] > iv:
                ids[u, b + 1] = ids[u, b]
                b -= 1
            ids[u, b + 1] = iv
        for a in range(1, kk):
            if ids[u, a] >= 0 and ids[u, a] == ids[u, a - 1]:
                ids[u, a - 1] = -1
        for a in range(kk):
            if ids[u, a] >= 0:
                dists[u, a] = _sqd(base, ids[u, a], base[u])
            else:
                dists[u, a] = np.inf
        for a in range(1, kk):
            dv = dists[u, a]
            iv = ids[u, a]
            b = a - 1
            while b >= 0 and (dists[u, b] > dv or (
                    dists[u, b] == dv and ids[u, b] > iv)):
                dists[u, b + 1] = dists[u, b]
                ids[u, b + 1] = ids[u, b]
                b -= 1
            dists[u, b + 1] = dv
            ids[u, b + 1] = iv


@njit(cache=True)
def _nnd_insert(ids, dists, flags, row, v, d):
    """Sorted-insert (d, v) into a kNN row; returns 1 if inserted."""
    kk = ids.shape[1]
    if d > dists[row, kk - 1] or (d == dists[row, kk - 1] and v > ids[row, kk - 1]):
        return 0
    lo, hi = 0, kk
    while lo < hi:
        mid = (lo + hi) >> 1
        if dists[row, mid] < d or (dists[row, mid] == d and ids[row, mid] < v):
            lo = mid + 1
        else:
            hi = mid
    t = lo
    while t < kk and dists[row, t] == d:
        if ids[row, t] == v:
            return 0
        t += 1
    for t in range(kk - 1, lo, -1):
        dists[row, t] = dists[row, t - 1]
        ids[row, t] = ids[row, t - 1]
        flags[row, t] = flags[row, t - 1]
    dists[row, lo] = d
    ids[row, lo] = v
    flags[row, lo] = 1
    return 1


@njit(cache=True)
def _nnd_try_pair(base, ids, dists, flags, a, b):
    if a == b:
        return 0
    d = _sqd(base, a, base[b])
    return (_nnd_insert(ids, dists, flags, a, b, d)
            + _nnd_insert(ids, dists, flags, b, a, d))


@njit(cache=True)
def _nnd_round(base, ids, dists, flags,
               fn_ids, fn_cnt, fo_ids, fo_cnt,
               rn_ids, rn_cnt, ro_ids, ro_cnt,
               list_n, list_o):
    """One NN-descent round with new/old local joins and capped reverse lists.

    Returns the number of successful row insertions (the usual convergence
    signal).  Sequential and therefore deterministic.
    """
    n, kk = ids.shape
    for u in range(n):
        cn = 0
        co = 0
        for a in range(kk):
            v = ids[u, a]
            if v < 0:
                continue
            if flags[u, a] == 1:
                fn_ids[u, cn] = v
                cn += 1
                flags[u, a] = 0
            else:
                fo_ids[u, co] = v
                co += 1
        fn_cnt[u] = cn
        fo_cnt[u] = co
    for u in range(n):
        rn_cnt[u] = 0
        ro_cnt[u] = 0
    for u in range(n):
        for a in range(fn_cnt[u]):
            v = fn_ids[u, a]
            c = rn_cnt[v]
            if c < kk:
                rn_ids[v, c] = u
                rn_cnt[v] = c + 1
        for a in range(fo_cnt[u]):
            v = fo_ids[u, a]
            c = ro_cnt[v]
            if c < kk:
                ro_ids[v, c] = u
                ro_cnt[v] = c + 1
    updates = 0
    for u in range(n):
        ln = 0
        for a in range(fn_cnt[u]):
            list_n[ln] = fn_ids[u, a]
            ln += 1
        for a in range(rn_cnt[u]):
            v = rn_ids[u, a]
            dup = False
            for t in range(ln):
                if list_n[t] == v:
                    dup = True
                    break
            if not dup:
                list_n[ln] = v
                ln += 1
        lo = 0
        for a in range(fo_cnt[u]):
            list_o[lo] = fo_ids[u, a]
            lo += 1
        for a in range(ro_cnt[u]):
            v = ro_ids[u, a]
            dup = False
            for t in range(lo):
                if list_o[t] == v:
                    dup = True
                    break
            if not dup:
                list_o[lo] = v
                lo += 1
        for i in range(ln):
            a = list_n[i]
            for j in range(i + 1, ln):
                updates += _nnd_try_pair(base, ids, dists, flags, a, list_n[j])
            for j in range(lo):
                updates += _nnd_try_pair(base, ids, dists, flags, a, list_o[j])
    return updates

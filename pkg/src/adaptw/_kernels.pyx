# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: transportation simplex, 1-d W1 sweeps, DP levels.

Mirrors ``_kernels_py`` function for function.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

OPTIMAL = 0
ITERATION_LIMIT = 1


cdef inline long _max_iter(int m, int n) nogil:
    cdef long k = 400 * <long>(m + n)
    return k if k > 20000 else 20000


cdef inline void _link(int h, int node, int* head, int* nxt, int* prv) noexcept nogil:
    nxt[h] = head[node]
    prv[h] = -1
    if head[node] != -1:
        prv[head[node]] = h
    head[node] = h


cdef inline void _unlink(int h, int node, int* head, int* nxt, int* prv) noexcept nogil:
    if prv[h] != -1:
        nxt[prv[h]] = nxt[h]
    else:
        head[node] = nxt[h]
    if nxt[h] != -1:
        prv[nxt[h]] = prv[h]


cdef void _hang(int root, int m, int n, const double* C, const int* bi,
                const int* bj, const int* head, const int* nxt, int* parent,
                int* parent_arc, int* depth, double* pot,
                int* queue) noexcept nogil:
    # (re)compute parent, depth and potential below ``root``
    cdef int qh = 0, qt = 1, s, h, k, o
    queue[0] = root
    while qh < qt:
        s = queue[qh]
        qh += 1
        h = head[s]
        while h != -1:
            k = h >> 1
            if k != parent_arc[s]:
                if h & 1:
                    o = bi[k]
                else:
                    o = m + bj[k]
                parent[o] = s
                parent_arc[o] = k
                depth[o] = depth[s] + 1
                pot[o] = C[<long>bi[k] * n + bj[k]] - pot[s]
                queue[qt] = o
                qt += 1
            h = nxt[h]


cdef int _simplex(int m, int n, const double* a, const double* b,
                  const double* C, long max_iter,
                  int* bi, int* bj, double* flow, double* pot,
                  long* n_iter_out) noexcept nogil:
    """Core transportation simplex; returns a status code (-1 on OOM)."""
    cdef int nb = m + n - 1
    cdef int nn = m + n
    cdef long ncell = <long>m * n
    cdef int i, j, k, x, y, ei, ej, leave, leave_pos, nx, ny, p, s_in, s_out
    cdef long pos, scanned, end, enter, block, start, n_iter = 0
    cdef double f, best, rc, theta, scale, eps
    cdef int status = 0

    cdef double* sa = <double*> malloc(m * sizeof(double))
    cdef double* sb = <double*> malloc(n * sizeof(double))
    cdef int* head = <int*> malloc(nn * sizeof(int))
    cdef int* nxt = <int*> malloc(2 * nb * sizeof(int))
    cdef int* prv = <int*> malloc(2 * nb * sizeof(int))
    cdef int* parent = <int*> malloc(nn * sizeof(int))
    cdef int* parent_arc = <int*> malloc(nn * sizeof(int))
    cdef int* depth = <int*> malloc(nn * sizeof(int))
    cdef int* queue = <int*> malloc(nn * sizeof(int))
    cdef int* up_x = <int*> malloc(nn * sizeof(int))
    cdef int* up_y = <int*> malloc(nn * sizeof(int))
    if (sa == NULL or sb == NULL or head == NULL or nxt == NULL or prv == NULL
            or parent == NULL or parent_arc == NULL or depth == NULL
            or queue == NULL or up_x == NULL or up_y == NULL):
        status = -1
    else:
        for i in range(m):
            sa[i] = a[i]
        for j in range(n):
            sb[j] = b[j]
        i = 0
        j = 0
        for k in range(nb):
            f = sa[i] if sa[i] < sb[j] else sb[j]
            if f < 0.0:
                f = 0.0
            bi[k] = i
            bj[k] = j
            flow[k] = f
            sa[i] -= f
            sb[j] -= f
            if i == m - 1:
                j += 1
            elif j == n - 1:
                i += 1
            elif sa[i] <= sb[j]:
                i += 1
            else:
                j += 1

        for i in range(nn):
            head[i] = -1
        for k in range(nb):
            _link(2 * k, bi[k], head, nxt, prv)
            _link(2 * k + 1, m + bj[k], head, nxt, prv)
        parent[0] = -1
        parent_arc[0] = -1
        depth[0] = 0
        pot[0] = 0.0
        _hang(0, m, n, C, bi, bj, head, nxt, parent, parent_arc, depth, pot, queue)

        scale = 0.0
        for pos in range(ncell):
            if fabs(C[pos]) > scale:
                scale = fabs(C[pos])
        eps = 1e-12 * (1.0 + scale)
        if ncell <= 4096:
            block = ncell
        else:
            block = <long> sqrt(<double> ncell)
            if block < 4096:
                block = 4096
        start = 0

        while True:
            if n_iter >= max_iter:
                status = 1
                break

            enter = -1
            scanned = 0
            pos = start
            while scanned < ncell:
                best = -eps
                end = scanned + block
                if end > ncell:
                    end = ncell
                while scanned < end:
                    i = <int>(pos / n)
                    j = <int>(pos - <long>i * n)
                    rc = C[pos] - pot[i] - pot[m + j]
                    if rc < best:
                        best = rc
                        enter = pos
                    pos += 1
                    if pos == ncell:
                        pos = 0
                    scanned += 1
                if enter >= 0:
                    break
            if enter < 0:
                break
            start = pos
            ei = <int>(enter / n)
            ej = <int>(enter - <long>ei * n)

            x = m + ej
            y = ei
            nx = 0
            ny = 0
            while depth[x] > depth[y]:
                up_x[nx] = parent_arc[x]
                nx += 1
                x = parent[x]
            while depth[y] > depth[x]:
                up_y[ny] = parent_arc[y]
                ny += 1
                y = parent[y]
            while x != y:
                up_x[nx] = parent_arc[x]
                nx += 1
                x = parent[x]
                up_y[ny] = parent_arc[y]
                ny += 1
                y = parent[y]
            # cycle order: up_x[0..nx) then up_y reversed; even positions lose flow
            theta = 1e300
            leave = -1
            leave_pos = -1
            for p in range(0, nx + ny, 2):
                k = up_x[p] if p < nx else up_y[nx + ny - 1 - p]
                if flow[k] < theta:
                    theta = flow[k]
                    leave = k
                    leave_pos = p
            for p in range(nx + ny):
                k = up_x[p] if p < nx else up_y[nx + ny - 1 - p]
                if p % 2 == 0:
                    flow[k] -= theta
                else:
                    flow[k] += theta

            if leave_pos < nx:
                s_in = m + ej
                s_out = ei
            else:
                s_in = ei
                s_out = m + ej
            _unlink(2 * leave, bi[leave], head, nxt, prv)
            _unlink(2 * leave + 1, m + bj[leave], head, nxt, prv)
            bi[leave] = ei
            bj[leave] = ej
            flow[leave] = theta
            _link(2 * leave, ei, head, nxt, prv)
            _link(2 * leave + 1, m + ej, head, nxt, prv)
            parent[s_in] = s_out
            parent_arc[s_in] = leave
            depth[s_in] = depth[s_out] + 1
            pot[s_in] = C[<long>ei * n + ej] - pot[s_out]
            _hang(s_in, m, n, C, bi, bj, head, nxt, parent, parent_arc, depth,
                  pot, queue)
            n_iter += 1
        n_iter_out[0] = n_iter

    free(sa)
    free(sb)
    free(head)
    free(nxt)
    free(prv)
    free(parent)
    free(parent_arc)
    free(depth)
    free(queue)
    free(up_x)
    free(up_y)
    return status


def transport_simplex(a, b, C, long max_iter=0):
    """Transportation simplex on a dense cost matrix.

    Returns ``(rows, cols, flows, u, v, status, n_iter)``.
    """
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef int m = av.shape[0]
    cdef int n = bv.shape[0]
    cdef int nb = m + n - 1
    if Cv.shape[0] != m or Cv.shape[1] != n:
        raise ValueError("cost matrix shape does not match the marginals")
    if max_iter <= 0:
        max_iter = _max_iter(m, n)
    rows = np.empty(nb, dtype=np.int32)
    cols = np.empty(nb, dtype=np.int32)
    flows = np.empty(nb, dtype=np.float64)
    pot = np.empty(m + n, dtype=np.float64)
    cdef int[::1] rv = rows
    cdef int[::1] cv = cols
    cdef double[::1] fv = flows
    cdef double[::1] pv = pot
    cdef long n_iter = 0
    cdef int status
    with nogil:
        status = _simplex(m, n, &av[0], &bv[0], &Cv[0, 0], max_iter,
                          &rv[0], &cv[0], &fv[0], &pv[0], &n_iter)
    if status < 0:
        raise MemoryError("transport simplex workspace")
    return (rows.astype(np.int64), cols.astype(np.int64), flows,
            pot[:m].copy(), pot[m:].copy(), status, n_iter)


cdef double _w1_cdf(const double* xa, const double* wa, int na,
                    const double* xb, const double* wb, int nb) noexcept nogil:
    cdef int i = 0
    cdef int j = 0
    cdef double fa = 0.0, fb = 0.0, total = 0.0, prev = 0.0, x
    cdef bint started = False
    while i < na or j < nb:
        if j >= nb or (i < na and xa[i] <= xb[j]):
            x = xa[i]
        else:
            x = xb[j]
        if started:
            total += fabs(fa - fb) * (x - prev)
        started = True
        prev = x
        while i < na and xa[i] == x:
            fa += wa[i]
            i += 1
        while j < nb and xb[j] == x:
            fb += wb[j]
            j += 1
    return total


def w1_sorted_cdf(xa, wa, xb, wb):
    """W1 between two 1-d laws with ascending supports, via the CDF gap."""
    cdef const double[::1] xav = np.ascontiguousarray(xa, dtype=np.float64)
    cdef const double[::1] wav = np.ascontiguousarray(wa, dtype=np.float64)
    cdef const double[::1] xbv = np.ascontiguousarray(xb, dtype=np.float64)
    cdef const double[::1] wbv = np.ascontiguousarray(wb, dtype=np.float64)
    if xav.shape[0] == 0 or xbv.shape[0] == 0:
        return 0.0
    return _w1_cdf(&xav[0], &wav[0], xav.shape[0], &xbv[0], &wbv[0], xbv.shape[0])


cdef inline double _dirac_dev(const double* x, const double* cw, const double* cwx,
                              int lo, int hi, double y) noexcept nogil:
    # sum_k w_k |x_k - y| over ascending x[lo:hi] using prefix sums
    cdef int a = lo, b = hi, mid
    while a < b:
        mid = (a + b) // 2
        if x[mid] <= y:
            a = mid + 1
        else:
            b = mid
    cdef double wl = cw[a] - cw[lo]
    cdef double xl = cwx[a] - cwx[lo]
    cdef double wt = cw[hi] - cw[lo]
    cdef double xt = cwx[hi] - cwx[lo]
    return y * (2.0 * wl - wt) + xt - 2.0 * xl


def w1_pairs(ptr_a, x_a, w_a, ptr_b, x_b, w_b):
    """All-pairs 1-d W1 between grouped child laws (see ``_kernels_py``)."""
    cdef const long[::1] pa = np.ascontiguousarray(ptr_a, dtype=np.int64)
    cdef const long[::1] pb = np.ascontiguousarray(ptr_b, dtype=np.int64)
    cdef const double[::1] xa = np.ascontiguousarray(x_a, dtype=np.float64)
    cdef const double[::1] wa = np.ascontiguousarray(w_a, dtype=np.float64)
    cdef const double[::1] xb = np.ascontiguousarray(x_b, dtype=np.float64)
    cdef const double[::1] wb = np.ascontiguousarray(w_b, dtype=np.float64)
    cdef int na = pa.shape[0] - 1
    cdef int nb = pb.shape[0] - 1
    out = np.zeros((na, nb), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[::1] cwa = np.zeros(xa.shape[0] + 1)
    cdef double[::1] cxa = np.zeros(xa.shape[0] + 1)
    cdef double[::1] cwb = np.zeros(xb.shape[0] + 1)
    cdef double[::1] cxb = np.zeros(xb.shape[0] + 1)
    cdef int i, j, la, lb
    cdef long k
    for k in range(xa.shape[0]):
        cwa[k + 1] = cwa[k] + wa[k]
        cxa[k + 1] = cxa[k] + wa[k] * xa[k]
    for k in range(xb.shape[0]):
        cwb[k + 1] = cwb[k] + wb[k]
        cxb[k + 1] = cxb[k] + wb[k] * xb[k]
    with nogil:
        for i in range(na):
            la = <int>(pa[i + 1] - pa[i])
            for j in range(nb):
                lb = <int>(pb[j + 1] - pb[j])
                if la == 0 or lb == 0:
                    continue
                if lb == 1:
                    ov[i, j] = _dirac_dev(&xa[0], &cwa[0], &cxa[0], <int>pa[i],
                                          <int>pa[i + 1], xb[pb[j]])
                elif la == 1:
                    ov[i, j] = _dirac_dev(&xb[0], &cwb[0], &cxb[0], <int>pb[j],
                                          <int>pb[j + 1], xa[pa[i]])
                else:
                    ov[i, j] = _w1_cdf(&xa[pa[i]], &wa[pa[i]], la,
                                       &xb[pb[j]], &wb[pb[j]], lb)
    return out


def dp_level(ptr_a, idx_a, w_a, ptr_b, idx_b, w_b, M):
    """One backward step of the nested dynamic program (see ``_kernels_py``)."""
    cdef const long[::1] pa = np.ascontiguousarray(ptr_a, dtype=np.int64)
    cdef const long[::1] ia = np.ascontiguousarray(idx_a, dtype=np.int64)
    cdef const double[::1] wa = np.ascontiguousarray(w_a, dtype=np.float64)
    cdef const long[::1] pb = np.ascontiguousarray(ptr_b, dtype=np.int64)
    cdef const long[::1] ib = np.ascontiguousarray(idx_b, dtype=np.int64)
    cdef const double[::1] wb = np.ascontiguousarray(w_b, dtype=np.float64)
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef int na = pa.shape[0] - 1
    cdef int nb = pb.shape[0] - 1
    out = np.zeros((na, nb), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef int maxa = 1, maxb = 1, i, j, k, l, la, lb, status = 0
    for i in range(na):
        if pa[i + 1] - pa[i] > maxa:
            maxa = <int>(pa[i + 1] - pa[i])
    for j in range(nb):
        if pb[j + 1] - pb[j] > maxb:
            maxb = <int>(pb[j + 1] - pb[j])
    cdef double[::1] sub = np.empty(<long>maxa * maxb)
    cdef int[::1] rows = np.empty(maxa + maxb, dtype=np.int32)
    cdef int[::1] cols = np.empty(maxa + maxb, dtype=np.int32)
    cdef double[::1] flows = np.empty(maxa + maxb)
    cdef double[::1] pot = np.empty(maxa + maxb)
    cdef long n_iter = 0
    cdef double acc
    with nogil:
        for i in range(na):
            la = <int>(pa[i + 1] - pa[i])
            for j in range(nb):
                lb = <int>(pb[j + 1] - pb[j])
                acc = 0.0
                if la == 0 or lb == 0:
                    pass
                elif lb == 1:
                    for k in range(la):
                        acc += wa[pa[i] + k] * Mv[ia[pa[i] + k], ib[pb[j]]]
                elif la == 1:
                    for l in range(lb):
                        acc += wb[pb[j] + l] * Mv[ia[pa[i]], ib[pb[j] + l]]
                else:
                    for k in range(la):
                        for l in range(lb):
                            sub[k * lb + l] = Mv[ia[pa[i] + k], ib[pb[j] + l]]
                    status = _simplex(la, lb, &wa[pa[i]], &wb[pb[j]], &sub[0],
                                      _max_iter(la, lb), &rows[0], &cols[0],
                                      &flows[0], &pot[0], &n_iter)
                    if status != 0:
                        break
                    for k in range(la + lb - 1):
                        acc += flows[k] * sub[rows[k] * lb + cols[k]]
                ov[i, j] = acc
            if status != 0:
                break
    if status < 0:
        raise MemoryError("transport simplex workspace")
    if status != 0:
        raise RuntimeError("transport simplex hit its iteration limit")
    return out

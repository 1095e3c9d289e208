"""Pure-Python versions of the hot kernels.

Same algorithms and signatures as the compiled ``_kernels`` extension. Used
when the extension is not built, or when ``ADAPTW_PURE_PYTHON=1`` is set.
"""
from math import sqrt

import numpy as np

OPTIMAL = 0
ITERATION_LIMIT = 1


def _max_iter(m, n):
    return max(20000, 400 * (m + n))


def transport_simplex(a, b, C, max_iter=0):
    """Transportation simplex on a dense cost matrix.

    Returns ``(rows, cols, flows, u, v, status, n_iter)``. The basis is a
    spanning tree with ``m + n - 1`` arcs (degenerate arcs carry zero flow);
    ``u`` and ``v`` are the node potentials of the final basis.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    m, n = a.shape[0], b.shape[0]
    nb = m + n - 1
    nn = m + n
    if max_iter <= 0:
        max_iter = _max_iter(m, n)
    bi = [0] * nb
    bj = [0] * nb
    flow = [0.0] * nb

    # north-west corner start
    sa = a.tolist()
    sb = b.tolist()
    i = j = 0
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

    cost = C.tolist()

    # tree adjacency as per-node doubly linked lists of half-edges;
    # half-edge 2k sits at source bi[k], 2k+1 at sink m+bj[k]
    head = [-1] * nn
    nxt = [-1] * (2 * nb)
    prv = [-1] * (2 * nb)

    def link(h, node):
        nxt[h] = head[node]
        prv[h] = -1
        if head[node] != -1:
            prv[head[node]] = h
        head[node] = h

    def unlink(h, node):
        if prv[h] != -1:
            nxt[prv[h]] = nxt[h]
        else:
            head[node] = nxt[h]
        if nxt[h] != -1:
            prv[nxt[h]] = prv[h]

    for k in range(nb):
        link(2 * k, bi[k])
        link(2 * k + 1, m + bj[k])

    parent = [-1] * nn
    parent_arc = [-1] * nn
    depth = [0] * nn
    pot = [0.0] * nn

    def hang(root):
        # (re)compute parent, depth and potential below ``root``
        queue = [root]
        for s in queue:
            h = head[s]
            while h != -1:
                k = h >> 1
                if k != parent_arc[s]:
                    o = bi[k] if h & 1 else m + bj[k]
                    parent[o] = s
                    parent_arc[o] = k
                    depth[o] = depth[s] + 1
                    pot[o] = cost[bi[k]][bj[k]] - pot[s]
                    queue.append(o)
                h = nxt[h]

    hang(0)

    scale = float(np.max(np.abs(C))) if C.size else 0.0
    eps = 1e-12 * (1.0 + scale)
    ncell = m * n
    block = ncell if ncell <= 4096 else max(4096, int(sqrt(ncell)))
    start = 0
    n_iter = 0
    status = OPTIMAL

    while True:
        if n_iter >= max_iter:
            status = ITERATION_LIMIT
            break

        # block pricing
        enter = -1
        scanned = 0
        pos = start
        while scanned < ncell:
            best = -eps
            end = min(scanned + block, ncell)
            while scanned < end:
                r, c = divmod(pos, n)
                rc = cost[r][c] - pot[r] - pot[m + c]
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
        ei, ej = divmod(enter, n)

        # cycle: entering arc plus the tree path from sink ej back to source ei
        x, y = m + ej, ei
        up_x, up_y = [], []
        while depth[x] > depth[y]:
            up_x.append(parent_arc[x])
            x = parent[x]
        while depth[y] > depth[x]:
            up_y.append(parent_arc[y])
            y = parent[y]
        while x != y:
            up_x.append(parent_arc[x])
            x = parent[x]
            up_y.append(parent_arc[y])
            y = parent[y]
        cycle = up_x + up_y[::-1]

        theta = float("inf")
        leave = -1
        leave_pos = -1
        for pidx in range(0, len(cycle), 2):
            k = cycle[pidx]
            if flow[k] < theta:
                theta = flow[k]
                leave = k
                leave_pos = pidx
        for pidx, k in enumerate(cycle):
            if pidx % 2 == 0:
                flow[k] -= theta
            else:
                flow[k] += theta

        # the subtree cut off by the leaving arc contains the entering arc's
        # endpoint on the same side of the cycle; re-hang it there
        if leave_pos < len(up_x):
            s_in, s_out = m + ej, ei
        else:
            s_in, s_out = ei, m + ej
        unlink(2 * leave, bi[leave])
        unlink(2 * leave + 1, m + bj[leave])
        bi[leave] = ei
        bj[leave] = ej
        flow[leave] = theta
        link(2 * leave, ei)
        link(2 * leave + 1, m + ej)
        parent[s_in] = s_out
        parent_arc[s_in] = leave
        depth[s_in] = depth[s_out] + 1
        pot[s_in] = cost[ei][ej] - pot[s_out]
        hang(s_in)
        n_iter += 1

    u = np.array(pot[:m])
    v = np.array(pot[m:])
    return (np.array(bi, dtype=np.int64), np.array(bj, dtype=np.int64),
            np.array(flow), u, v, status, n_iter)


def w1_sorted_cdf(xa, wa, xb, wb):
    """W1 between two 1-d laws with ascending supports, via the CDF gap."""
    na, nb = len(xa), len(xb)
    i = j = 0
    fa = fb = 0.0
    total = 0.0
    prev = 0.0
    started = False
    while i < na or j < nb:
        if j >= nb or (i < na and xa[i] <= xb[j]):
            x = xa[i]
        else:
            x = xb[j]
        if started:
            total += abs(fa - fb) * (x - prev)
        started = True
        prev = x
        while i < na and xa[i] == x:
            fa += wa[i]
            i += 1
        while j < nb and xb[j] == x:
            fb += wb[j]
            j += 1
    return total


def w1_pairs(ptr_a, x_a, w_a, ptr_b, x_b, w_b):
    """All-pairs 1-d W1 between grouped child laws.

    Group ``i`` of side A is ``x_a[ptr_a[i]:ptr_a[i+1]]`` (ascending) with
    weights ``w_a[...]``; same for B. Returns the ``(nA, nB)`` value matrix.
    """
    ptr_a = np.asarray(ptr_a)
    ptr_b = np.asarray(ptr_b)
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    w_a = np.asarray(w_a, dtype=np.float64)
    w_b = np.asarray(w_b, dtype=np.float64)
    na, nb = len(ptr_a) - 1, len(ptr_b) - 1
    out = np.zeros((na, nb))
    for i in range(na):
        sa = slice(ptr_a[i], ptr_a[i + 1])
        xa, wa = x_a[sa], w_a[sa]
        for j in range(nb):
            sb = slice(ptr_b[j], ptr_b[j + 1])
            xb, wb = x_b[sb], w_b[sb]
            if len(xb) == 1:
                out[i, j] = float(np.dot(wa, np.abs(xa - xb[0])))
            elif len(xa) == 1:
                out[i, j] = float(np.dot(wb, np.abs(xb - xa[0])))
            else:
                out[i, j] = w1_sorted_cdf(xa, wa, xb, wb)
    return out


def dp_level(ptr_a, idx_a, w_a, ptr_b, idx_b, w_b, M):
    """One backward step of the nested dynamic program.

    For every node pair ``(i, j)`` solve the transport between the child laws
    of ``i`` and ``j`` with cost ``M[child_i, child_j]``.
    """
    ptr_a = np.asarray(ptr_a)
    ptr_b = np.asarray(ptr_b)
    M = np.asarray(M, dtype=np.float64)
    na, nb = len(ptr_a) - 1, len(ptr_b) - 1
    out = np.zeros((na, nb))
    for i in range(na):
        ca = idx_a[ptr_a[i]:ptr_a[i + 1]]
        pa = w_a[ptr_a[i]:ptr_a[i + 1]]
        for j in range(nb):
            cb = idx_b[ptr_b[j]:ptr_b[j + 1]]
            pb = w_b[ptr_b[j]:ptr_b[j + 1]]
            sub = M[np.ix_(ca, cb)]
            if len(cb) == 1:
                out[i, j] = float(np.dot(pa, sub[:, 0]))
            elif len(ca) == 1:
                out[i, j] = float(np.dot(pb, sub[0, :]))
            else:
                rows, cols, flows, _, _, status, _ = transport_simplex(pa, pb, sub)
                if status != OPTIMAL:
                    raise RuntimeError("transport simplex hit its iteration limit")
                out[i, j] = float(np.dot(flows, sub[rows, cols]))
    return out

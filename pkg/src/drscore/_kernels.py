"""Compiled kernels: class balancing, probability trees and the fused scoring loop.

All randomness inside the kernels comes from numba's per-thread generator,
which callers reseed with an explicit integer before every use. Kernels never
depend on execution order, so results are identical for any thread count.

A forest is grown on "units" (distinct training rows) with integer
multiplicities. Growing on an expanded table with one unit per copy yields the
same trees, which the generic classifier path relies on.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_GAIN_TOL = 1e-10


@njit(cache=True, nogil=True)
def seed_numba(seed):
    np.random.seed(seed)


@njit(cache=True, nogil=True)
def _upsample(base, target):
    n = base.size
    out = np.empty(target, dtype=np.int64)
    out[:n] = base
    for i in range(n, target):
        out[i] = base[np.random.randint(0, n)]
    return out


@njit(cache=True, nogil=True)
def balance(n_real, n_imp, n_pool, tau):
    """Equal-size class multisets.

    Returns ``(idx_real, idx_imp)``; ``idx_imp`` values ``>= n_imp`` refer to
    the pool (offset by ``n_imp``). Must be called after reseeding.
    """
    real = np.arange(n_real)
    imp = np.arange(n_imp)
    small = min(n_real, n_imp)
    large = max(n_real, n_imp)
    if small >= tau * large:
        if n_imp < n_real:
            return real, _upsample(imp, n_real)
        if n_real < n_imp:
            return _upsample(real, n_imp), imp
        return real, imp
    if n_imp < n_real:
        target = int(math.ceil(tau * n_real - 1e-9))
        if n_pool > 0 and target > n_imp:
            grown = np.empty(target, dtype=np.int64)
            grown[:n_imp] = imp
            for i in range(n_imp, target):
                grown[i] = n_imp + np.random.randint(0, n_pool)
            imp = grown
        return real, _upsample(imp, n_real)
    return _upsample(real, n_imp), imp


@njit(cache=True, nogil=True)
def balance_seeded(seed, n_real, n_imp, n_pool, tau):
    np.random.seed(seed)
    return balance(n_real, n_imp, n_pool, tau)


@njit(cache=True, nogil=True, error_model="numpy")
def _grow_tree(F, y, w, order0, cat, min_node, feat, thr, left, right, p1, nsamp):
    """Grow one tree in place; returns the node count.

    ``w`` holds integer unit weights (bootstrap counts); units with zero weight
    are ignored. ``order0[f]`` sorts all units by feature ``f``; the order of
    tied values is irrelevant because every weight sum is an exact integer.

    Splits maximise ``l1^2/l + r1^2/r`` (equivalent to the Gini decrease),
    evaluated as one division of exact integers so equal candidates compare
    equal. The first best candidate wins: lowest feature, then lowest threshold.
    """
    k, u = order0.shape
    ut = 0
    for i in range(u):
        if w[i] > 0:
            ut += 1
    order = np.empty((k, ut), dtype=np.int64)
    xs = np.empty((k, ut))
    for f in range(k):
        c = 0
        for i in range(u):
            unit = order0[f, i]
            if w[unit] > 0:
                order[f, c] = unit
                xs[f, c] = F[unit, f]
                c += 1
    wy = w * y
    ibuf = np.empty(ut, dtype=np.int64)
    xbuf = np.empty(ut)
    goes_left = np.zeros(u, dtype=np.int64)

    stack_s = np.empty(ut + 2, dtype=np.int64)
    stack_e = np.empty(ut + 2, dtype=np.int64)
    stack_n = np.empty(ut + 2, dtype=np.int64)
    stack_s[0] = 0
    stack_e[0] = ut
    stack_n[0] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        s = stack_s[top]
        e = stack_e[top]
        node = stack_n[top]
        o0 = order[0]
        W = 0.0
        W1 = 0.0
        for i in range(s, e):
            W += w[o0[i]]
            W1 += wy[o0[i]]
        p1[node] = W1 / W
        nsamp[node] = W
        feat[node] = -1
        left[node] = -1
        right[node] = -1
        if W < 2.0 * min_node or W1 == 0.0 or W1 == W:
            continue
        hi = W - min_node
        best = -1.0
        best_f = -1
        best_t = 0.0
        for f in range(k):
            of = order[f]
            xf = xs[f]
            if cat[f]:
                i = s
                while i < e:
                    code = xf[i]
                    lw = 0.0
                    lw1 = 0.0
                    while i < e and xf[i] == code:
                        lw += w[of[i]]
                        lw1 += wy[of[i]]
                        i += 1
                    if lw >= min_node and lw <= hi:
                        rw = W - lw
                        rw1 = W1 - lw1
                        crit = (lw1 * lw1 * rw + rw1 * rw1 * lw) / (lw * rw)
                        if crit > best:
                            best = crit
                            best_f = f
                            best_t = code
            else:
                lw = 0.0
                lw1 = 0.0
                for i in range(s, e - 1):
                    lw += w[of[i]]
                    lw1 += wy[of[i]]
                    if lw >= min_node and lw <= hi and xf[i] < xf[i + 1]:
                        rw = W - lw
                        rw1 = W1 - lw1
                        crit = (lw1 * lw1 * rw + rw1 * rw1 * lw) / (lw * rw)
                        if crit > best:
                            best = crit
                            best_f = f
                            best_t = 0.5 * (xf[i] + xf[i + 1])
        if best_f < 0 or 2.0 * (best - W1 * W1 / W) <= _GAIN_TOL:
            continue
        n_left = 0
        ob = order[best_f]
        xb = xs[best_f]
        is_cat = cat[best_f]
        for i in range(s, e):
            g = (xb[i] == best_t) if is_cat else (xb[i] <= best_t)
            goes_left[ob[i]] = g
            n_left += g
        # stable branch-free partition: left units compact in place, right ones via buffer
        for f in range(k):
            of = order[f]
            xf = xs[f]
            a = s
            b = 0
            for i in range(s, e):
                unit = of[i]
                x = xf[i]
                g = goes_left[unit]
                of[a] = unit
                xf[a] = x
                ibuf[b] = unit
                xbuf[b] = x
                a += g
                b += 1 - g
            for i in range(b):
                of[a + i] = ibuf[i]
                xf[a + i] = xbuf[i]
        feat[node] = best_f
        thr[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack_s[top] = s + n_left
        stack_e[top] = e
        stack_n[top] = rnode
        top += 1
        stack_s[top] = s
        stack_e[top] = s + n_left
        stack_n[top] = lnode
        top += 1
    return n_nodes


@njit(cache=True, nogil=True)
def order_from_ranks(rank, rows, cols, scratch):
    """Sort units ``rows`` by each column of ``cols`` using precomputed
    column ranks (a permutation of ``0..n-1`` per column). ``scratch`` is an
    ``n``-vector of ``-1`` and is restored before returning."""
    u = rows.size
    k = cols.size
    order0 = np.empty((k, u), dtype=np.int64)
    for f in range(k):
        c = cols[f]
        for i in range(u):
            scratch[rank[rows[i], c]] = i
        m = 0
        for r in range(scratch.size):
            if scratch[r] >= 0:
                order0[f, m] = scratch[r]
                scratch[r] = -1
                m += 1
    return order0


@njit(cache=True, nogil=True)
def fit_forest_units(F, y, mult, order0, cat, n_trees, min_node, bootstrap):
    """Grow ``n_trees`` trees on units ``F`` whose training multiset is ``mult``.

    ``mult`` lists unit ids (with repeats) and ``order0[f]`` sorts the units by
    feature ``f``. Bootstrap draws ``len(mult)`` positions of ``mult`` with
    replacement per tree. Returns node arrays of shape ``(n_trees, cap)``,
    node counts and per-tree unit weights.
    """
    u = F.shape[0]
    nb = mult.size
    cap = 2 * u + 1
    feat = np.full((n_trees, cap), -1, dtype=np.int64)
    thr = np.zeros((n_trees, cap))
    left = np.full((n_trees, cap), -1, dtype=np.int64)
    right = np.full((n_trees, cap), -1, dtype=np.int64)
    p1 = np.zeros((n_trees, cap))
    nsamp = np.zeros((n_trees, cap))
    counts = np.zeros((n_trees, u))
    n_nodes = np.zeros(n_trees, dtype=np.int64)
    for t in range(n_trees):
        w = counts[t]
        if bootstrap:
            for i in range(nb):
                w[mult[np.random.randint(0, nb)]] += 1.0
        else:
            for i in range(nb):
                w[mult[i]] += 1.0
        n_nodes[t] = _grow_tree(F, y, w, order0, cat, min_node, feat[t], thr[t], left[t], right[t], p1[t], nsamp[t])
    return feat, thr, left, right, p1, nsamp, n_nodes, counts


@njit(cache=True, nogil=True)
def fit_forest_seeded(seed, F, y, mult, order0, cat, n_trees, min_node, bootstrap):
    np.random.seed(seed)
    return fit_forest_units(F, y, mult, order0, cat, n_trees, min_node, bootstrap)


@njit(cache=True, nogil=True)
def tree_leaf_probs(X, cat, feat, thr, left, right, p1):
    """Per-tree leaf probabilities, shape ``(n_trees, n_rows)``."""
    n_trees = feat.shape[0]
    n = X.shape[0]
    out = np.empty((n_trees, n))
    for t in range(n_trees):
        for i in range(n):
            node = 0
            while feat[t, node] >= 0:
                f = feat[t, node]
                v = X[i, f]
                if cat[f]:
                    go_left = v == thr[t, node]
                else:
                    go_left = v <= thr[t, node]
                node = left[t, node] if go_left else right[t, node]
            out[t, i] = p1[t, node]
    return out


@njit(cache=True, nogil=True)
def predict_forest(X, cat, feat, thr, left, right, p1):
    probs = tree_leaf_probs(X, cat, feat, thr, left, right, p1)
    return probs.sum(axis=0) / probs.shape[0]


@njit(cache=True, nogil=True)
def log_ratio_sum(p, eps):
    s = 0.0
    for i in range(p.size):
        q = min(max(p[i], eps), 1.0 - eps)
        s += math.log(q) - math.log1p(-q)
    return s


@njit(cache=True, nogil=True)
def projection_rows(miss, incomplete, in_group, cols):
    """Reference rows (complete on ``cols``) and pool rows (other incomplete
    rows with a missing cell in ``cols``)."""
    n = miss.shape[0]
    ref = np.empty(n, dtype=np.int64)
    pool = np.empty(n, dtype=np.int64)
    nr = 0
    npool = 0
    for r in range(n):
        hole = False
        for c in cols:
            if miss[r, c]:
                hole = True
                break
        if not hole:
            ref[nr] = r
            nr += 1
        elif incomplete[r] and not in_group[r]:
            pool[npool] = r
            npool += 1
    return ref[:nr], pool[:npool]


@njit(cache=True, nogil=True)
def training_units(ref, train, pool, idx_real, idx_imp):
    """Compact the balanced multisets into distinct units.

    Returns ``(rows, labels, mult, expanded_rows)``: unit row ids, unit labels,
    the multiset over units, and the multiset mapped back to row ids in
    multiset order (real class first).
    """
    nr = ref.size
    ntr = train.size
    nb = idx_real.size + idx_imp.size
    expanded = np.empty(nb, dtype=np.int64)
    labels_exp = np.empty(nb, dtype=np.float64)
    for i in range(idx_real.size):
        expanded[i] = ref[idx_real[i]]
        labels_exp[i] = 1.0
    for i in range(idx_imp.size):
        j = idx_imp[i]
        expanded[idx_real.size + i] = train[j] if j < ntr else pool[j - ntr]
        labels_exp[idx_real.size + i] = 0.0
    # slots: real units first, then imputed/pool units
    slot = np.full(nr + ntr + pool.size, -1, dtype=np.int64)
    rows = np.empty(nb, dtype=np.int64)
    labels = np.empty(nb, dtype=np.float64)
    mult = np.empty(nb, dtype=np.int64)
    nu = 0
    for i in range(nb):
        key = idx_real[i] if i < idx_real.size else nr + idx_imp[i - idx_real.size]
        if slot[key] < 0:
            slot[key] = nu
            rows[nu] = expanded[i]
            labels[nu] = labels_exp[i]
            nu += 1
        mult[i] = slot[key]
    return rows[:nu], labels[:nu], mult, expanded


@njit(cache=True, nogil=True)
def gather(vals, rows, cols):
    out = np.empty((rows.size, cols.size))
    for i in range(rows.size):
        for j in range(cols.size):
            out[i, j] = vals[rows[i], cols[j]]
    return out


@njit(cache=True, nogil=True)
def rows_with_hole(miss, rows, cols):
    """The subset of ``rows`` with at least one missing cell in ``cols``."""
    out = np.empty(rows.size, dtype=np.int64)
    m = 0
    for r in rows:
        for c in cols:
            if miss[r, c]:
                out[m] = r
                m += 1
                break
    return out[:m]


@njit(cache=True, nogil=True)
def score_group_forest(
    vals, rank, miss, incomplete, in_group, half0, half1, merged, proj, seeds, cat, n_trees, min_node, tau, eps
):
    """Mean truncated log density ratio per projection for one pattern group.

    ``rank`` holds per-column ranks of ``vals``; ``proj`` is a ``P x d``
    membership matrix; ``seeds[k, l]`` holds the balancing and forest seeds for
    projection ``k`` and training half ``l``. A merged group trains and tests
    on ``half0`` in a single pass. Skipped projections come back as NaN.
    """
    P = proj.shape[0]
    out = np.full(P, np.nan)
    n_pass = 1 if merged else 2
    scratch = np.full(vals.shape[0], -1, dtype=np.int64)
    for k in range(P):
        cols = np.flatnonzero(proj[k])
        ref, pool = projection_rows(miss, incomplete, in_group, cols)
        if ref.size == 0:
            continue
        h0 = rows_with_hole(miss, half0, cols)
        h1 = h0 if merged else rows_with_hole(miss, half1, cols)
        if h0.size == 0 or h1.size == 0:
            continue
        cat_a = cat[cols]
        total = 0.0
        count = 0
        for l in range(n_pass):
            train = h0 if l == 0 else h1
            test = h0 if merged else (h1 if l == 0 else h0)
            np.random.seed(seeds[k, l, 0])
            idx_real, idx_imp = balance(ref.size, train.size, pool.size, tau)
            rows, labels, mult, _ = training_units(ref, train, pool, idx_real, idx_imp)
            F = gather(vals, rows, cols)
            order0 = order_from_ranks(rank, rows, cols, scratch)
            np.random.seed(seeds[k, l, 1])
            feat, thr, left, right, p1, _, _, _ = fit_forest_units(
                F, labels, mult, order0, cat_a, n_trees, min_node, True
            )
            p = predict_forest(gather(vals, test, cols), cat_a, feat, thr, left, right, p1)
            total += log_ratio_sum(p, eps)
            count += test.size
        out[k] = total / count
    return out

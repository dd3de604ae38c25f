"""Compiled inner loops for the tree learners and the SMO solver.

Trees are flat arrays: ``feature[i] < 0`` marks a leaf, otherwise rows with
``x[feature] <= threshold`` go to ``left[i]`` and the rest to ``right[i]``.
Thresholds are always an observed training value, so predictions are
unchanged by any strictly increasing transform of a feature.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def build_boosted_tree(XT, order, sorted_vals, g, h, max_depth, lam, gamma, min_child_weight, eta,
                       work_ord, work_val):
    """Level-wise exact greedy regression tree on gradient statistics.

    XT is (p, n); order[f] lists row indices sorted by XT[f] and
    sorted_vals[f] the matching values; work_ord / work_val are scratch
    buffers of shape (2, p, n). Rows of every open node are kept
    contiguous (and sorted) in per-feature work arrays, so each level is one
    sequential sweep per feature. Returns the flat tree plus the leaf reached
    by every training row.
    """
    p, n = XT.shape
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    node_of = np.zeros(n, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.int64)

    ordw = order
    valw = sorted_vals
    buf = 0

    # open nodes of the current level: ids and [lo, hi) segments in the work arrays
    nodes = np.zeros(1, dtype=np.int64)
    seg_lo = np.zeros(1, dtype=np.int64)
    seg_hi = np.full(1, n, dtype=np.int64)
    n_nodes = 1
    for depth in range(max_depth + 1):
        width = nodes.shape[0]
        G = np.zeros(width)
        H = np.zeros(width)
        for k in range(width):
            for t in range(seg_lo[k], seg_hi[k]):
                s = ordw[0, t]
                G[k] += g[s]
                H[k] += h[s]
        best_gain = np.zeros(width)
        best_feat = np.full(width, -1, dtype=np.int64)
        best_thr = np.zeros(width)
        if depth < max_depth:
            for k in range(width):
                parent = G[k] * G[k] / (H[k] + lam)
                bar = 2.0 * gamma + parent  # a candidate wins iff A / B > bar
                Gk = G[k]
                Hk = H[k] + lam
                lo = seg_lo[k]
                hi = seg_hi[k]
                for f in range(p):
                    ordf = ordw[f]
                    valf = valw[f]
                    gl = 0.0
                    hsum = 0.0
                    last = valf[lo]
                    for t in range(lo, hi):
                        v = valf[t]
                        if v != last:
                            hl = hsum + lam
                            hr = Hk - hsum
                            gr = Gk - gl
                            a = gl * gl * hr + gr * gr * hl
                            b = hl * hr
                            if a > bar * b and hsum >= min_child_weight and hr - lam >= min_child_weight:
                                loss_chg = 0.5 * (a / b - parent) - gamma
                                if loss_chg > best_gain[k]:
                                    best_gain[k] = loss_chg
                                    best_feat[k] = f
                                    best_thr[k] = last
                                    bar = 2.0 * (loss_chg + gamma) + parent
                        s = ordf[t]
                        gl += g[s]
                        hsum += h[s]
                        last = v

        n_split = 0
        for k in range(width):
            node = nodes[k]
            if best_feat[k] >= 0:
                feature[node] = best_feat[k]
                threshold[node] = best_thr[k]
                gain[node] = best_gain[k]
                left[node] = n_nodes
                right[node] = n_nodes + 1
                n_nodes += 2
                n_split += 1
            else:
                value[node] = -eta * G[k] / (H[k] + lam)
        if n_split == 0:
            break

        new_nodes = np.empty(2 * n_split, dtype=np.int64)
        new_lo = np.empty(2 * n_split, dtype=np.int64)
        new_hi = np.empty(2 * n_split, dtype=np.int64)
        split_k = np.empty(n_split, dtype=np.int64)
        pos = 0
        c = 0
        for k in range(width):
            node = nodes[k]
            if feature[node] < 0:
                continue
            f = feature[node]
            thr = threshold[node]
            n_left = 0
            for t in range(seg_lo[k], seg_hi[k]):
                s = ordw[0, t]
                if XT[f, s] <= thr:
                    goes_left[s] = 1
                    node_of[s] = left[node]
                    n_left += 1
                else:
                    goes_left[s] = 0
                    node_of[s] = right[node]
            size = seg_hi[k] - seg_lo[k]
            new_nodes[2 * c] = left[node]
            new_nodes[2 * c + 1] = right[node]
            new_lo[2 * c] = pos
            new_hi[2 * c] = pos + n_left
            new_lo[2 * c + 1] = pos + n_left
            new_hi[2 * c + 1] = pos + size
            split_k[c] = k
            pos += size
            c += 1
        # stable partition of every feature's sorted order into the children
        ord_next = work_ord[buf]
        val_next = work_val[buf]
        buf = 1 - buf
        for f in range(p):
            for c in range(n_split):
                k = split_k[c]
                wl = new_lo[2 * c]
                wr = new_lo[2 * c + 1]
                for t in range(seg_lo[k], seg_hi[k]):
                    s = ordw[f, t]
                    side = goes_left[s]
                    dst = wl if side else wr  # branch-free select
                    ord_next[f, dst] = s
                    val_next[f, dst] = valw[f, t]
                    wl += side
                    wr += 1 - side
        ordw = ord_next
        valw = val_next
        nodes = new_nodes
        seg_lo = new_lo
        seg_hi = new_hi
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain[:n_nodes], node_of)


@njit(cache=True)
def build_gini_tree(XT, y, rows, mtry, max_depth, min_leaf, seed):
    """Depth-first CART tree with Gini impurity on the (bootstrap) row multiset ``rows``.

    Returns the flat tree, leaf positive fractions in ``value`` and the
    weighted impurity decrease of every split node.
    """
    np.random.seed(seed)
    p = XT.shape[0]
    m_total = rows.shape[0]
    cap = 2 * m_total + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    decrease = np.zeros(cap)
    idx = rows.copy()
    feats = np.arange(p)

    stack_node = np.zeros(cap, dtype=np.int64)
    stack_lo = np.zeros(cap, dtype=np.int64)
    stack_hi = np.zeros(cap, dtype=np.int64)
    stack_depth = np.zeros(cap, dtype=np.int64)
    top = 1
    stack_hi[0] = m_total
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        m = hi - lo
        pos = 0
        for t in range(lo, hi):
            pos += y[idx[t]]
        frac = pos / m
        value[node] = frac
        impurity = 1.0 - frac * frac - (1.0 - frac) * (1.0 - frac)
        if pos == 0 or pos == m or depth >= max_depth or m < 2 * min_leaf:
            continue

        best = 0.0
        best_f = -1
        best_thr = 0.0
        vals = np.empty(m)
        labs = np.empty(m, dtype=np.int64)
        for c in range(min(mtry, p)):
            r = c + np.random.randint(0, p - c)
            tmp = feats[c]
            feats[c] = feats[r]
            feats[r] = tmp
            f = feats[c]
            for t in range(m):
                vals[t] = XT[f, idx[lo + t]]
            srt = np.argsort(vals, kind="mergesort")
            for t in range(m):
                labs[t] = y[idx[lo + srt[t]]]
            left_pos = 0
            for t in range(m - 1):
                left_pos += labs[t]
                nl = t + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                if vals[srt[t]] == vals[srt[t + 1]]:
                    continue
                pl = left_pos / nl
                pr = (pos - left_pos) / nr
                gl = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
                gr = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
                dec = impurity - (nl * gl + nr * gr) / m
                if dec > best:
                    best = dec
                    best_f = f
                    best_thr = vals[srt[t]]
        if best_f < 0:
            continue

        # partition idx[lo:hi] around the threshold
        a = lo
        b = hi - 1
        while a <= b:
            if XT[best_f, idx[a]] <= best_thr:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        feature[node] = best_f
        threshold[node] = best_thr
        decrease[node] = best * m / m_total
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is built first
        stack_node[top] = n_nodes + 1
        stack_lo[top] = a
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = a
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], decrease[:n_nodes])


@njit(cache=True)
def _rbf_row(X, i, gamma, out):
    n, p = X.shape
    for t in range(n):
        d = 0.0
        for c in range(p):
            diff = X[i, c] - X[t, c]
            d += diff * diff
        out[t] = np.exp(-gamma * d)


@njit(cache=True)
def smo_solve(X, y, C, gamma, tol, max_iter, cache_rows):
    """Dual soft-margin SVM with RBF kernel, second-order working-set selection.

    y in {-1, +1}. Returns (alpha, rho, n_iter); the decision function is
    sum_i alpha_i y_i K(x_i, x) - rho.
    """
    n = X.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    n_slots = max(2, min(cache_rows, n))
    cache = np.empty((n_slots, n))
    slot_of = np.full(n, -1, dtype=np.int64)
    owner = np.full(n_slots, -1, dtype=np.int64)
    next_slot = 0
    tau = 1e-12

    it = 0
    while it < max_iter:
        # select i: maximal violation among I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        if i < 0:
            break
        if slot_of[i] < 0:
            if owner[next_slot] >= 0:
                slot_of[owner[next_slot]] = -1
            _rbf_row(X, i, gamma, cache[next_slot])
            owner[next_slot] = i
            slot_of[i] = next_slot
            next_slot = (next_slot + 1) % n_slots
        Ki = cache[slot_of[i]]

        gmin = np.inf
        j = -1
        best_obj = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * grad[t]
                if v < gmin:
                    gmin = v
                b = gmax - v
                if b > 0:
                    a = 2.0 - 2.0 * Ki[t]  # K_ii = K_tt = 1 for RBF
                    if a <= 0:
                        a = tau
                    obj = -(b * b) / a
                    if obj <= best_obj:
                        best_obj = obj
                        j = t
        if gmax - gmin < tol or j < 0:
            break
        it += 1

        if slot_of[j] < 0:
            if owner[next_slot] >= 0:
                slot_of[owner[next_slot]] = -1
            # never evict row i while it is in use
            if owner[next_slot] == i:
                next_slot = (next_slot + 1) % n_slots
                if owner[next_slot] >= 0:
                    slot_of[owner[next_slot]] = -1
            _rbf_row(X, j, gamma, cache[next_slot])
            owner[next_slot] = j
            slot_of[j] = next_slot
            next_slot = (next_slot + 1) % n_slots
        Ki = cache[slot_of[i]]
        Kj = cache[slot_of[j]]

        ai_old = alpha[i]
        aj_old = alpha[j]
        Kij = Ki[j]
        if y[i] != y[j]:
            quad = 2.0 - 2.0 * Kij
            if quad <= 0:
                quad = tau
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = 2.0 - 2.0 * Kij
            if quad <= 0:
                quad = tau
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            grad[t] += y[t] * (y[i] * Ki[t] * dai + y[j] * Kj[t] * daj)

    # offset: average over free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    s = 0.0
    n_free = 0
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            s += yg
    if n_free > 0:
        rho = s / n_free
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it


@njit(cache=True)
def rbf_decision(X, SV, coef, gamma, rho):
    n = X.shape[0]
    m, p = SV.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for k in range(m):
            d = 0.0
            for c in range(p):
                diff = X[i, c] - SV[k, c]
                d += diff * diff
            acc += coef[k] * np.exp(-gamma * d)
        out[i] = acc - rho
    return out

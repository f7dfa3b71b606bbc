"""Compiled inner loops for tree growing, tree prediction and neighbor search.

Trees are grown level by level. For exact splits every feature is scanned
once per level in presorted order, routing each row to its node's running
sums, so a level costs O(n * d) with no re-sorting.
"""
import numpy as np
from numba import njit

_REL_GAIN = 1e-20


@njit(cache=True, nogil=True)
def _node_stats(node_of, y, start, stop, cnt, tot, sq):
    for nd in range(start, stop):
        cnt[nd] = 0.0
        tot[nd] = 0.0
        sq[nd] = 0.0
    for r in range(y.shape[0]):
        nd = node_of[r]
        if start <= nd < stop:
            cnt[nd] += 1.0
            tot[nd] += y[r]
            sq[nd] += y[r] * y[r]


@njit(cache=True, nogil=True)
def _feature_mask(n_open, d, max_features):
    mask = np.ones((n_open, d), dtype=np.bool_)
    if max_features >= d:
        return mask
    for i in range(n_open):
        perm = np.random.permutation(d)
        for j in range(max_features, d):
            mask[i, perm[j]] = False
    return mask


@njit(cache=True, nogil=True)
def grow_exact(X, order, sorted_x, y, max_depth, min_leaf, max_features, seed):
    """CART regression tree with variance-reduction splits.

    ``order[:, j]`` is the stable argsort of column j and ``sorted_x[:, j]``
    the column in that order (both Fortran-ordered for sequential scans).
    Returns (feature, threshold, left, right, value, leaf_of_row).
    Ties in gain go to the lowest feature index, then the lowest threshold.
    """
    np.random.seed(seed)
    n, d = X.shape
    cap = 2 * n + 1
    if max_depth >= 0 and (2 ** (max_depth + 1)) < cap:
        cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    cnt = np.zeros(cap)
    tot = np.zeros(cap)
    sq = np.zeros(cap)
    node_of = np.zeros(n, dtype=np.int64)

    _node_stats(node_of, y, 0, 1, cnt, tot, sq)
    value[0] = tot[0] / cnt[0]
    n_nodes = 1
    start, stop = 0, 1
    depth = 0
    run_cnt = np.zeros(cap)
    run_sum = np.zeros(cap)
    last = np.zeros(cap)
    best_gain = np.zeros(cap)
    best_thr = np.zeros(cap)
    best_feat = np.full(cap, -1, dtype=np.int64)
    is_open = np.zeros(cap, dtype=np.bool_)

    while start < stop and (max_depth < 0 or depth < max_depth):
        any_open = False
        for nd in range(start, stop):
            is_open[nd] = cnt[nd] >= 2 * min_leaf
            best_gain[nd] = _REL_GAIN * sq[nd]
            best_feat[nd] = -1
            if is_open[nd]:
                any_open = True
        if not any_open:
            break
        mask = _feature_mask(stop - start, d, max_features)
        for j in range(d):
            for nd in range(start, stop):
                run_cnt[nd] = 0.0
                run_sum[nd] = 0.0
                last[nd] = -np.inf
            for idx in range(n):
                r = order[idx, j]
                nd = node_of[r]
                if nd < start or not is_open[nd] or not mask[nd - start, j]:
                    continue
                v = sorted_x[idx, j]
                c = run_cnt[nd]
                if v > last[nd] and c >= min_leaf and cnt[nd] - c >= min_leaf:
                    rest = cnt[nd] - c
                    diff = run_sum[nd] / c - (tot[nd] - run_sum[nd]) / rest
                    gain = c * rest / cnt[nd] * diff * diff
                    if gain > best_gain[nd]:
                        best_gain[nd] = gain
                        best_feat[nd] = j
                        thr = last[nd] + 0.5 * (v - last[nd])
                        if thr >= v:
                            thr = last[nd]
                        best_thr[nd] = thr
                run_cnt[nd] = c + 1.0
                run_sum[nd] += y[r]
                last[nd] = v

        new_start = n_nodes
        for nd in range(start, stop):
            if is_open[nd] and best_feat[nd] >= 0:
                feature[nd] = best_feat[nd]
                threshold[nd] = best_thr[nd]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                n_nodes += 2
        if n_nodes == new_start:
            break
        for r in range(n):
            nd = node_of[r]
            if start <= nd < stop and feature[nd] >= 0:
                if X[r, feature[nd]] <= threshold[nd]:
                    node_of[r] = left[nd]
                else:
                    node_of[r] = right[nd]
        _node_stats(node_of, y, new_start, n_nodes, cnt, tot, sq)
        for nd in range(new_start, n_nodes):
            value[nd] = tot[nd] / cnt[nd]
        start, stop = new_start, n_nodes
        depth += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), node_of)


@njit(cache=True, nogil=True)
def grow_hist(codes, n_bins, y, max_depth, min_leaf):
    """Level-wise regression tree over pre-binned features.

    ``codes[r, j]`` is the bin of row r in feature j; a split at bin b sends
    codes <= b left. Returns the same tuple as grow_exact with the bin index
    in place of the threshold.
    """
    n, d = codes.shape
    n_max = 1
    for j in range(d):
        if n_bins[j] > n_max:
            n_max = n_bins[j]
    cap = 2 * n + 1
    if max_depth >= 0 and (2 ** (max_depth + 1)) < cap:
        cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, dtype=np.int64)
    split_bin = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    cnt = np.zeros(cap)
    tot = np.zeros(cap)
    sq = np.zeros(cap)
    node_of = np.zeros(n, dtype=np.int64)

    _node_stats(node_of, y, 0, 1, cnt, tot, sq)
    value[0] = tot[0] / cnt[0]
    n_nodes = 1
    start, stop = 0, 1
    depth = 0
    while start < stop and (max_depth < 0 or depth < max_depth):
        m = stop - start
        slot = np.full(m, -1, dtype=np.int64)
        n_open = 0
        for i in range(m):
            if cnt[start + i] >= 2 * min_leaf:
                slot[i] = n_open
                n_open += 1
        if n_open == 0:
            break
        hc = np.zeros((n_open, d, n_max))
        hs = np.zeros((n_open, d, n_max))
        for r in range(n):
            nd = node_of[r]
            if nd < start:
                continue
            s = slot[nd - start]
            if s < 0:
                continue
            for j in range(d):
                b = codes[r, j]
                hc[s, j, b] += 1.0
                hs[s, j, b] += y[r]
        new_start = n_nodes
        for i in range(m):
            s = slot[i]
            if s < 0:
                continue
            nd = start + i
            best = _REL_GAIN * sq[nd]
            bf = -1
            bb = 0
            for j in range(d):
                c = 0.0
                acc = 0.0
                for b in range(n_bins[j] - 1):
                    c += hc[s, j, b]
                    acc += hs[s, j, b]
                    rest = cnt[nd] - c
                    if c < min_leaf:
                        continue
                    if rest < min_leaf:
                        break
                    diff = acc / c - (tot[nd] - acc) / rest
                    gain = c * rest / cnt[nd] * diff * diff
                    if gain > best:
                        best = gain
                        bf = j
                        bb = b
            if bf >= 0:
                feature[nd] = bf
                split_bin[nd] = bb
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                n_nodes += 2
        if n_nodes == new_start:
            break
        for r in range(n):
            nd = node_of[r]
            if start <= nd < stop and feature[nd] >= 0:
                if codes[r, feature[nd]] <= split_bin[nd]:
                    node_of[r] = left[nd]
                else:
                    node_of[r] = right[nd]
        _node_stats(node_of, y, new_start, n_nodes, cnt, tot, sq)
        for nd in range(new_start, n_nodes):
            value[nd] = tot[nd] / cnt[nd]
        start, stop = new_start, n_nodes
        depth += 1

    return (feature[:n_nodes].copy(), split_bin[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), node_of)


@njit(cache=True, nogil=True)
def predict_forest(feature, threshold, left, right, value, offsets, X, scale, out):
    """Add scale * sum of tree outputs to ``out``; trees are packed back to back."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    for t in range(n_trees):
        base = offsets[t]
        for r in range(n):
            nd = 0
            while feature[base + nd] >= 0:
                if X[r, feature[base + nd]] <= threshold[base + nd]:
                    nd = left[base + nd]
                else:
                    nd = right[base + nd]
            out[r] += scale * value[base + nd]


@njit(cache=True, nogil=True)
def knn_table(X_train, X_query, k):
    """Indices of the k nearest training rows per query, nearest first, ties to lower index.

    The first j columns equal the j-nearest list for any j <= k.
    """
    n, d = X_train.shape
    m = X_query.shape[0]
    table = np.empty((m, k), dtype=np.int64)
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    for q in range(m):
        filled = 0
        for r in range(n):
            dist = 0.0
            for j in range(d):
                t = X_train[r, j] - X_query[q, j]
                dist += t * t
            if filled < k:
                pos = filled
                filled += 1
            elif dist < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and best_d[pos - 1] > dist:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = dist
            best_i[pos] = r
        for i in range(k):
            table[q, i] = best_i[i]
    return table


@njit(cache=True, nogil=True)
def table_mean(table, y_train, k):
    m = table.shape[0]
    out = np.empty(m)
    for q in range(m):
        acc = 0.0
        for i in range(k):
            acc += y_train[table[q, i]]
        out[q] = acc / k
    return out

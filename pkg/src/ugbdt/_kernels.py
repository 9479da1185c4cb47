"""Compiled inner loops for tree growth and prediction.

All kernels are single-threaded and release the GIL, so callers can run
independent fits in threads without changing results.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grow_tree(bins, rows, targets, n_bins, max_bin, max_depth, min_leaf, rel_tol):
    """Greedy level-wise least-squares tree on pre-binned features.

    Row ``rows[i]`` of ``bins`` carries target ``targets[i]``. Returns node
    arrays in breadth-first order plus the final node of every row. Only the
    smaller child of each split is histogrammed; its sibling is the parent
    histogram minus the child's.
    """
    m = rows.shape[0]
    d = targets.shape[1]
    p = bins.shape[1]
    w = d + 1
    fstride = max_bin * w
    nstride = p * fstride
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, np.int32)
    split_bin = np.zeros(max_nodes, np.int32)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    node_n = np.zeros(max_nodes)
    node_sq = np.zeros(max_nodes)
    node_of = np.zeros(m, np.int32)

    # level 0: every row
    hist = np.zeros(nstride)
    for i in range(m):
        r = rows[i]
        sq = 0.0
        for k in range(d):
            sq += targets[i, k] * targets[i, k]
        node_sq[0] += sq
        node_n[0] += 1.0
        for f in range(p):
            base = f * fstride + bins[r, f] * w
            for k in range(d):
                hist[base + k] += targets[i, k]
            hist[base + d] += 1.0

    n_nodes = 1
    level_start = 0
    level_end = 1
    tot = np.empty(w)
    cum = np.empty(w)
    for depth in range(max_depth):
        n_level = level_end - level_start
        if n_level == 0:
            break
        for s in range(n_level):
            node = level_start + s
            n = node_n[node]
            if n < 2 * min_leaf:
                continue
            hb = s * nstride
            tot[:] = 0.0
            for b in range(n_bins[0]):
                for k in range(w):
                    tot[k] += hist[hb + b * w + k]
            best_gain = 0.0
            best_f = -1
            best_b = -1
            for f in range(p):
                cum[:] = 0.0
                fb = hb + f * fstride
                for b in range(n_bins[f] - 1):
                    for k in range(w):
                        cum[k] += hist[fb + b * w + k]
                    nl = cum[d]
                    nr = n - nl
                    if nl < min_leaf:
                        continue
                    if nr < min_leaf:
                        break
                    # SSE reduction n_l n_r / n * |mean_l - mean_r|^2, summed over outputs
                    g = 0.0
                    for k in range(d):
                        diff = cum[k] / nl - (tot[k] - cum[k]) / nr
                        g += diff * diff
                    g *= nl * nr / n
                    if g > best_gain:
                        best_gain = g
                        best_f = f
                        best_b = b
            # rounding floor: gains below this are indistinguishable from zero
            if best_f >= 0 and best_gain > rel_tol * node_sq[node]:
                feature[node] = best_f
                split_bin[node] = best_b
                left[node] = n_nodes
                right[node] = n_nodes + 1
                n_nodes += 2

        n_next = n_nodes - level_end
        if n_next == 0 or depth == max_depth - 1:
            # reroute only
            for i in range(m):
                node = node_of[i]
                if node < level_start or feature[node] < 0:
                    continue
                if bins[rows[i], feature[node]] <= split_bin[node]:
                    node_of[i] = left[node]
                else:
                    node_of[i] = right[node]
            level_start = level_end
            level_end = n_nodes
            continue

        for i in range(m):
            node = node_of[i]
            if node < level_start or feature[node] < 0:
                continue
            if bins[rows[i], feature[node]] <= split_bin[node]:
                child = left[node]
            else:
                child = right[node]
            node_of[i] = child
            sq = 0.0
            for k in range(d):
                sq += targets[i, k] * targets[i, k]
            node_n[child] += 1.0
            node_sq[child] += sq

        new_hist = np.zeros(n_next * nstride)
        small = np.zeros(max_nodes, np.bool_)
        for s in range(n_level):
            node = level_start + s
            if feature[node] >= 0:
                if node_n[left[node]] <= node_n[right[node]]:
                    small[left[node]] = True
                else:
                    small[right[node]] = True
        for i in range(m):
            child = node_of[i]
            if child < level_end or not small[child]:
                continue
            r = rows[i]
            hb = (child - level_end) * nstride
            for f in range(p):
                base = hb + f * fstride + bins[r, f] * w
                for k in range(d):
                    new_hist[base + k] += targets[i, k]
                new_hist[base + d] += 1.0
        for s in range(n_level):
            node = level_start + s
            if feature[node] < 0:
                continue
            lc = left[node]
            rc = right[node]
            if small[lc]:
                big = rc
                sm = lc
            else:
                big = lc
                sm = rc
            pb = s * nstride
            bb = (big - level_end) * nstride
            sb = (sm - level_end) * nstride
            for j in range(nstride):
                new_hist[bb + j] = hist[pb + j] - new_hist[sb + j]
        hist = new_hist
        level_start = level_end
        level_end = n_nodes

    value = np.zeros((n_nodes, d))
    count = np.zeros(n_nodes, np.int64)
    for i in range(m):
        node = node_of[i]
        count[node] += 1
        for k in range(d):
            value[node, k] += targets[i, k]
    for node in range(n_nodes):
        if feature[node] < 0 and count[node] > 0:
            for k in range(d):
                value[node, k] /= count[node]
    # internal-node counts, for bookkeeping only
    for node in range(n_nodes - 1, -1, -1):
        if feature[node] >= 0:
            count[node] = count[left[node]] + count[right[node]]
    return (feature[:n_nodes], split_bin[:n_nodes], left[:n_nodes], right[:n_nodes],
            value, count, node_of)


@njit(cache=True, nogil=True)
def route_binned(bins, feature, split_bin, left, right):
    n = bins.shape[0]
    out = np.empty(n, np.int32)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if bins[i, feature[node]] <= split_bin[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def route(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, np.int32)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def weighted_partial_sums(X, feature, threshold, left, right, value, roots, weights, base, checkpoints):
    """One pass over all trees accumulating ``base + sum_i weights[i] * tree_i(x)``.

    ``out[c]`` holds the running sum after the first ``checkpoints[c]`` trees
    (checkpoints ascending). Also returns the number of tree evaluations.
    """
    n = X.shape[0]
    d = value.shape[1]
    n_trees = roots.shape[0]
    n_ck = checkpoints.shape[0]
    out = np.empty((n_ck, n, d))
    evaluations = 0
    acc = np.empty(d)
    for i in range(n):
        for k in range(d):
            acc[k] = base[k]
        c = 0
        while c < n_ck and checkpoints[c] == 0:
            for k in range(d):
                out[c, i, k] = acc[k]
            c += 1
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            evaluations += 1
            w = weights[t]
            for k in range(d):
                acc[k] += w * value[node, k]
            while c < n_ck and checkpoints[c] == t + 1:
                for k in range(d):
                    out[c, i, k] = acc[k]
                c += 1
    return out, evaluations

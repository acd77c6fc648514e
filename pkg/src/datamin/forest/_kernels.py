"""Compiled kernels for Gini decision trees.

Trees are stored as flat node arrays. Every kernel is ``nogil`` so forests for
different feature subsets can be trained from a thread pool.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (pure Python, used for seeding)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def tree_seed(seed: int, tree_index: int) -> int:
    return splitmix64(splitmix64(seed & MASK64) ^ splitmix64(tree_index + 1))


@njit(nogil=True, cache=True)
def _next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(nogil=True, cache=True)
def _below(state, n):
    u = np.float64(_next(state) >> _S11) * _INV53
    k = np.int64(u * n)
    return k if k < n else n - 1


@njit(nogil=True, cache=True)
def build_tree(X, y, n_classes, n_boot, mtry, max_depth, min_samples_split, seed):
    """Grow one tree on a bootstrap sample drawn from ``seed``.

    Returns (feature, threshold, left, right, counts, decrease, n_samples),
    trimmed to the number of nodes. ``feature == -1`` marks a leaf.
    ``decrease`` holds the weighted Gini decrease ``m*G - nl*Gl - nr*Gr``.
    """
    n_rows, d = X.shape
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    idx = np.empty(n_boot, dtype=np.int64)
    for i in range(n_boot):
        idx[i] = _below(state, n_rows)

    cap = 2 * n_boot + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    counts = np.zeros((cap, n_classes), dtype=np.int64)
    decrease = np.zeros(cap, dtype=np.float64)
    n_samples = np.zeros(cap, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_boot
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    feats = np.arange(d)
    vals = np.empty(n_boot, dtype=np.float64)
    buf = np.empty(n_boot, dtype=np.int64)
    total = np.zeros(n_classes, dtype=np.int64)
    lc = np.zeros(n_classes, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        n_samples[node] = m

        total[:] = 0
        for k in range(start, end):
            total[y[idx[k]]] += 1
        tot_sq = 0
        n_present = 0
        for c in range(n_classes):
            counts[node, c] = total[c]
            tot_sq += total[c] * total[c]
            if total[c] > 0:
                n_present += 1
        if n_present <= 1 or m < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue

        best_f = -1
        best_score = -1.0
        best_thr = 0.0
        visited = 0
        informative = 0
        while visited < d and informative < mtry:
            j = visited + _below(state, d - visited)
            f = feats[j]
            feats[j] = feats[visited]
            feats[visited] = f
            visited += 1

            for k in range(m):
                vals[k] = X[idx[start + k], f]
            order = np.argsort(vals[:m])
            lo = vals[order[0]]
            hi = vals[order[m - 1]]
            if lo == hi:
                continue
            informative += 1

            lc[:] = 0
            sl = 0
            sr = tot_sq
            for i in range(m - 1):
                c = y[idx[start + order[i]]]
                rc = total[c] - lc[c]
                sl += 2 * lc[c] + 1
                sr -= 2 * rc - 1
                lc[c] += 1
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v0 == v1:
                    continue
                nl = i + 1
                score = sl / nl + sr / (m - nl)
                thr = 0.5 * (v0 + v1)
                if thr >= v1:
                    thr = v0
                if score > best_score or (
                    score == best_score and (f < best_f or (f == best_f and thr < best_thr))
                ):
                    best_score = score
                    best_f = f
                    best_thr = thr

        if best_f < 0:
            continue

        # stable partition: x <= thr goes left
        nl = 0
        nr = 0
        for k in range(start, end):
            r = idx[k]
            if X[r, best_f] <= best_thr:
                idx[start + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for k in range(nr):
            idx[start + nl + k] = buf[k]

        feature[node] = best_f
        threshold[node] = best_thr
        decrease[node] = best_score - tot_sq / m
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid

        st_node[sp] = rid
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lid
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        decrease[:n_nodes].copy(),
        n_samples[:n_nodes].copy(),
    )


@njit(nogil=True, cache=True)
def _leaf_of(x, root, feature, threshold, left, right):
    node = root
    while feature[node] >= 0:
        if x[feature[node]] <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(nogil=True, cache=True)
def votes(X, roots, feature, threshold, left, right, leaf_class, n_classes):
    """Per-row count of trees voting for each class."""
    n = X.shape[0]
    out = np.zeros((n, n_classes), dtype=np.int64)
    for i in range(n):
        x = X[i]
        for t in range(roots.shape[0]):
            leaf = _leaf_of(x, roots[t], feature, threshold, left, right)
            out[i, leaf_class[leaf]] += 1
    return out


@njit(nogil=True, cache=True)
def _vote_row(x, roots, feature, threshold, left, right, leaf_class, out):
    out[:] = 0.0
    for t in range(roots.shape[0]):
        leaf = _leaf_of(x, roots[t], feature, threshold, left, right)
        out[leaf_class[leaf]] += 1.0
    out /= roots.shape[0]


@njit(nogil=True, cache=True)
def shapley_walk(X, background, perms, bg_draws, roots, feature, threshold, left, right, leaf_class, n_classes):
    """Permutation-sampling Shapley estimate of per-class vote fractions.

    ``perms`` has shape (rows, P, d) and ``bg_draws`` (rows, P). For each
    permutation the walk starts from a background row and switches features to
    the explained row in permutation order; successive output differences are
    the marginal contributions.
    """
    n, d = X.shape
    P = perms.shape[1]
    phi = np.zeros((n, n_classes, d), dtype=np.float64)
    cur = np.empty(d, dtype=np.float64)
    prev = np.empty(n_classes, dtype=np.float64)
    nxt = np.empty(n_classes, dtype=np.float64)
    acc = np.zeros((n_classes, d), dtype=np.float64)
    for i in range(n):
        acc[:, :] = 0.0
        for p in range(P):
            z = background[bg_draws[i, p]]
            for j in range(d):
                cur[j] = z[j]
            _vote_row(cur, roots, feature, threshold, left, right, leaf_class, prev)
            for k in range(d):
                j = perms[i, p, k]
                cur[j] = X[i, j]
                _vote_row(cur, roots, feature, threshold, left, right, leaf_class, nxt)
                for c in range(n_classes):
                    acc[c, j] += nxt[c] - prev[c]
                    prev[c] = nxt[c]
        for c in range(n_classes):
            for j in range(d):
                phi[i, c, j] = acc[c, j] / P
    return phi

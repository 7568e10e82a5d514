"""Hot numeric kernels: weighted-matching solver and batch penalty labeling.

Both kernels exist twice: a loop-oriented version compiled with numba's
``@njit`` and a vectorized pure-numpy fallback. The active backend is chosen
at import time; set ``SWARMPATH_NO_NUMBA=1`` (or uninstall numba) to force
the numpy path. Per-element arithmetic and tie-breaking are identical in
both, so results agree to the last ulp on the operations they share; the
test suite cross-checks them. ``benchmarks/bench_kernels.py`` compares their
speed.
"""

import os

import numpy as np

NO_NUMBA_ENV = "SWARMPATH_NO_NUMBA"


def _numba_disabled_by_env():
    return os.environ.get(NO_NUMBA_ENV, "").strip().lower() in ("1", "true", "yes", "on")


try:
    if _numba_disabled_by_env():
        raise ImportError("numba disabled via " + NO_NUMBA_ENV)
    from numba import njit

    using_numba = True
except ImportError:
    njit = None
    using_numba = False


# ---------------------------------------------------------------------------
# Maximum-weight perfect matching (Kuhn-Munkres with vertex labels)
# ---------------------------------------------------------------------------
#
# Maximizing convention: labels start at lx[i] = max_j w[i, j], ly[j] = 0,
# feasibility lx[i] + ly[j] >= w[i, j], slack = lx + ly - w >= 0, and tight
# edges (slack == 0) form the equality subgraph. Augmenting paths are grown
# in the equality subgraph; when none exists the labels are improved by the
# minimum slack across the frontier. Deterministic: all scans ascend by
# index and slack updates replace only on strict improvement.
#
# The slack array is maintained incrementally, so after an improvement step
# the minimizing column holds slack exactly 0.0 (x - x == 0 in IEEE); no
# tolerance is needed anywhere.


def _km_match_loops(w):
    n = w.shape[0]
    match_row = np.full(n, -1, np.int64)  # row -> col
    match_col = np.full(n, -1, np.int64)  # col -> row
    lx = np.empty(n, np.float64)
    ly = np.zeros(n, np.float64)
    for i in range(n):
        m = w[i, 0]
        for j in range(1, n):
            if w[i, j] > m:
                m = w[i, j]
        lx[i] = m

    in_s = np.zeros(n, np.bool_)
    in_t = np.zeros(n, np.bool_)
    slack = np.empty(n, np.float64)
    slack_row = np.empty(n, np.int64)

    for root in range(n):
        for j in range(n):
            in_s[j] = False
            in_t[j] = False
            slack[j] = lx[root] + ly[j] - w[root, j]
            slack_row[j] = root
        in_s[root] = True

        while True:
            j_next = -1
            for j in range(n):
                if not in_t[j] and slack[j] == 0.0:
                    j_next = j
                    break
            if j_next == -1:
                delta = np.inf
                for j in range(n):
                    if not in_t[j] and slack[j] < delta:
                        delta = slack[j]
                for i in range(n):
                    if in_s[i]:
                        lx[i] -= delta
                for j in range(n):
                    if in_t[j]:
                        ly[j] += delta
                    else:
                        slack[j] -= delta
                for j in range(n):
                    if not in_t[j] and slack[j] == 0.0:
                        j_next = j
                        break
            in_t[j_next] = True
            i_matched = match_col[j_next]
            if i_matched == -1:
                j = j_next
                while j != -1:
                    i = slack_row[j]
                    prev_j = match_row[i]
                    match_col[j] = i
                    match_row[i] = j
                    j = prev_j
                break
            in_s[i_matched] = True
            for j in range(n):
                if not in_t[j]:
                    cand = lx[i_matched] + ly[j] - w[i_matched, j]
                    if cand < slack[j]:
                        slack[j] = cand
                        slack_row[j] = i_matched

    return match_row, lx, ly


def km_match_numpy(w, label_log=None):
    """Vectorized fallback; same algorithm and tie-breaks as the jit version.

    ``label_log``, if given, collects (lx, ly) copies after every label
    improvement so tests can audit feasibility along the way.
    """
    n = w.shape[0]
    match_row = np.full(n, -1, np.int64)
    match_col = np.full(n, -1, np.int64)
    lx = w.max(axis=1).astype(np.float64) if n else np.empty(0)
    ly = np.zeros(n, np.float64)

    for root in range(n):
        in_s = np.zeros(n, np.bool_)
        in_t = np.zeros(n, np.bool_)
        slack = lx[root] + ly - w[root]
        slack_row = np.full(n, root, np.int64)
        in_s[root] = True

        while True:
            open_tight = np.flatnonzero(~in_t & (slack == 0.0))
            if open_tight.size == 0:
                delta = slack[~in_t].min()
                lx[in_s] -= delta
                ly[in_t] += delta
                slack[~in_t] -= delta
                if label_log is not None:
                    label_log.append((lx.copy(), ly.copy()))
                open_tight = np.flatnonzero(~in_t & (slack == 0.0))
            j_next = open_tight[0]
            in_t[j_next] = True
            i_matched = match_col[j_next]
            if i_matched == -1:
                j = j_next
                while j != -1:
                    i = slack_row[j]
                    prev_j = match_row[i]
                    match_col[j] = i
                    match_row[i] = j
                    j = prev_j
                break
            in_s[i_matched] = True
            cand = lx[i_matched] + ly - w[i_matched]
            better = ~in_t & (cand < slack)
            slack[better] = cand[better]
            slack_row[better] = i_matched

    return match_row, lx, ly


# ---------------------------------------------------------------------------
# Batch smoothed penalty (ramp-relaxed indicators over agent/threat layouts)
# ---------------------------------------------------------------------------
#
# For every sample s the label is the smoothed non-distance penalty: ramped
# radar/missile terms over agent-threat pairs, ramped proximity terms over
# agent pairs, and a ramped range-budget term from path_len + target_dist.
# Each 0-1 indicator becomes a linear ramp of half-width eta around its
# threshold. active masks out dead/withdrawn agents.


def _smoothed_labels_loops(xu, xo, path_len, target_dist, active,
                           rd, ra, dsafe, lbar, kd, ka, kc, kl, eta):
    s_count = xu.shape[0]
    n = xu.shape[1] // 2
    m = xo.shape[1] // 2
    inv2e = 1.0 / (2.0 * eta)
    out = np.zeros(s_count, np.float64)
    for s in range(s_count):
        total = 0.0
        for i in range(n):
            if not active[i]:
                continue
            xi = xu[s, 2 * i]
            yi = xu[s, 2 * i + 1]
            for j in range(m):
                dx = xi - xo[s, 2 * j]
                dy = yi - xo[s, 2 * j + 1]
                d = np.sqrt(dx * dx + dy * dy)
                r = (rd + eta - d) * inv2e
                if r > 1.0:
                    r = 1.0
                elif r < 0.0:
                    r = 0.0
                total += kd * r
                r = (ra + eta - d) * inv2e
                if r > 1.0:
                    r = 1.0
                elif r < 0.0:
                    r = 0.0
                total += ka * r
            for j in range(n):
                if j == i or not active[j]:
                    continue
                dx = xi - xu[s, 2 * j]
                dy = yi - xu[s, 2 * j + 1]
                d = np.sqrt(dx * dx + dy * dy)
                r = (dsafe + eta - d) * inv2e
                if r > 1.0:
                    r = 1.0
                elif r < 0.0:
                    r = 0.0
                total += kc * r
            r = (path_len[s, i] + target_dist[s, i] - (lbar - eta)) * inv2e
            if r > 1.0:
                r = 1.0
            elif r < 0.0:
                r = 0.0
            total += kl * r
        out[s] = total
    return out


def smoothed_labels_numpy(xu, xo, path_len, target_dist, active,
                          rd, ra, dsafe, lbar, kd, ka, kc, kl, eta):
    """Broadcasting fallback for the batch smoothed penalty."""
    s_count, two_n = xu.shape
    n = two_n // 2
    m = xo.shape[1] // 2
    inv2e = 1.0 / (2.0 * eta)
    act = np.asarray(active, bool)

    au = xu.reshape(s_count, n, 2)
    ao = xo.reshape(s_count, m, 2)

    duo = np.linalg.norm(au[:, :, None, :] - ao[:, None, :, :], axis=3)
    radar = np.clip((rd + eta - duo) * inv2e, 0.0, 1.0)
    missile = np.clip((ra + eta - duo) * inv2e, 0.0, 1.0)
    per_agent = kd * radar.sum(axis=2) + ka * missile.sum(axis=2)

    duu = np.linalg.norm(au[:, :, None, :] - au[:, None, :, :], axis=3)
    prox = np.clip((dsafe + eta - duu) * inv2e, 0.0, 1.0)
    pair_mask = act[:, None] & act[None, :]
    np.fill_diagonal(pair_mask, False)
    per_agent += kc * (prox * pair_mask[None, :, :]).sum(axis=2)

    over = np.clip((path_len + target_dist - (lbar - eta)) * inv2e, 0.0, 1.0)
    per_agent += kl * over

    return (per_agent * act[None, :]).sum(axis=1)


if using_numba:
    km_match_numba = njit(cache=True)(_km_match_loops)
    smoothed_labels_numba = njit(cache=True)(_smoothed_labels_loops)
else:
    km_match_numba = None
    smoothed_labels_numba = None


def km_match(w):
    """Maximum-weight perfect matching on a square weight matrix.

    Returns (row_to_col, lx, ly); the final labels certify optimality
    (feasible everywhere, tight on matched edges).
    """
    w = np.ascontiguousarray(w, np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"square matrix required, got {w.shape}")
    if w.shape[0] == 0:
        return np.empty(0, np.int64), np.empty(0), np.empty(0)
    if using_numba:
        return km_match_numba(w)
    return km_match_numpy(w)


def smoothed_labels(xu, xo, path_len, target_dist, active,
                    rd, ra, dsafe, lbar, kd, ka, kc, kl, eta):
    """Batch smoothed penalty for S stacked layouts; returns shape (S,)."""
    xu = np.ascontiguousarray(xu, np.float64)
    xo = np.ascontiguousarray(xo, np.float64)
    path_len = np.ascontiguousarray(path_len, np.float64)
    target_dist = np.ascontiguousarray(target_dist, np.float64)
    active = np.ascontiguousarray(active, np.bool_)
    if using_numba:
        return smoothed_labels_numba(xu, xo, path_len, target_dist, active,
                                     rd, ra, dsafe, lbar, kd, ka, kc, kl, eta)
    return smoothed_labels_numpy(xu, xo, path_len, target_dist, active,
                                 rd, ra, dsafe, lbar, kd, ka, kc, kl, eta)


def warmup():
    """Trigger jit compilation on tiny inputs so timed runs never pay for it."""
    km_match(np.array([[1.0, 0.0], [0.0, 1.0]]))
    smoothed_labels(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 1)),
                    np.zeros((1, 1)), np.ones(1, bool),
                    1.0, 0.5, 0.1, 10.0, 1.0, 1.0, 1.0, 1.0, 0.1)

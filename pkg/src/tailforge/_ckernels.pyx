# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures and results mirror ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def herding_order(double[:, ::1] features, Py_ssize_t budget, double rel_tol=1e-9):
    cdef Py_ssize_t n = features.shape[0], d = features.shape[1]
    cdef Py_ssize_t t, i, j, best
    cdef double v, best_dist, thr, scale = 0.0
    mu_arr = np.asarray(features).mean(axis=0)
    centered_arr = np.ascontiguousarray(np.asarray(features) - mu_arr)
    acc_arr = np.zeros(d, dtype=np.float64)
    dist_arr = np.empty(n, dtype=np.float64)
    taken_arr = np.zeros(n, dtype=np.uint8)
    picks_arr = np.empty(budget, dtype=np.int64)
    cdef double[:, ::1] x = centered_arr
    cdef double[::1] acc = acc_arr, dist = dist_arr
    cdef unsigned char[::1] taken = taken_arr
    cdef long long[::1] picks = picks_arr

    for i in range(n):
        for j in range(d):
            scale += x[i, j] * x[i, j]

    for t in range(budget):
        best_dist = -1.0
        for i in range(n):
            if taken[i]:
                continue
            v = 0.0
            for j in range(d):
                v += (acc[j] + x[i, j]) * (acc[j] + x[i, j])
            dist[i] = v
            if best_dist < 0 or v < best_dist:
                best_dist = v
        thr = best_dist + rel_tol * best_dist + 1e-12 * scale
        best = -1
        for i in range(n):
            if not taken[i] and dist[i] <= thr:
                best = i
                break
        taken[best] = 1
        picks[t] = best
        for j in range(d):
            acc[j] += x[best, j]
    return picks_arr


def cosine_scores(double[::1] query, double[:, ::1] pool):
    cdef Py_ssize_t m = pool.shape[0], d = pool.shape[1]
    cdef Py_ssize_t i, j
    cdef double qn = 0.0, dot, pn
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    for j in range(d):
        qn += query[j] * query[j]
    qn = sqrt(qn)
    for i in range(m):
        dot = 0.0
        pn = 0.0
        for j in range(d):
            dot += query[j] * pool[i, j]
            pn += pool[i, j] * pool[i, j]
        out[i] = dot / (qn * sqrt(pn))
    return out_arr


def batch_topk(double[:, ::1] scores, Py_ssize_t k):
    """Row-wise indices of the k largest scores, descending; ties go to the lowest index."""
    cdef Py_ssize_t R = scores.shape[0], B = scores.shape[1]
    cdef Py_ssize_t r, j, i, best
    used_arr = np.zeros(B, dtype=np.uint8)
    out_arr = np.empty((R, k), dtype=np.int64)
    cdef unsigned char[::1] used = used_arr
    cdef long long[:, ::1] out = out_arr
    for r in range(R):
        used[:] = 0
        for j in range(k):
            best = -1
            for i in range(B):
                if used[i]:
                    continue
                if best < 0 or scores[r, i] > scores[r, best]:
                    best = i
            used[best] = 1
            out[r, j] = best
    return out_arr


def render_batch(double[:, :, :, ::1] bases, double[:, :, :, :, ::1] sources, long long[:, :, ::1] rects):
    """Paste ``sources[r, j]`` inside ``rects[r, j] = (x0, y0, w, h)`` in order j = 0..k-1.

    Returns the mixed images and per-recipe visible pixel counts
    (column 0 is the base image, column j + 1 is source j).
    """
    cdef Py_ssize_t R = bases.shape[0], H = bases.shape[1], W = bases.shape[2], C = bases.shape[3]
    cdef Py_ssize_t k = rects.shape[1]
    cdef Py_ssize_t r, s, y, x, c, x0, y0, w, h
    out_arr = np.array(bases, dtype=np.float64, copy=True)
    owner_arr = np.zeros((H, W), dtype=np.int64)
    counts_arr = np.zeros((R, k + 1), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, ::1] owner = owner_arr
    cdef long long[:, ::1] counts = counts_arr
    for r in range(R):
        owner[:, :] = 0
        for s in range(k):
            x0 = rects[r, s, 0]
            y0 = rects[r, s, 1]
            w = rects[r, s, 2]
            h = rects[r, s, 3]
            for y in range(y0, y0 + h):
                for x in range(x0, x0 + w):
                    owner[y, x] = s + 1
                    for c in range(C):
                        out[r, y, x, c] = sources[r, s, y, x, c]
        for y in range(H):
            for x in range(W):
                counts[r, owner[y, x]] += 1
    return out_arr, counts_arr

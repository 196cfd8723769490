"""Pure numpy implementations of the hot kernels; used when the extension is unavailable."""
import numpy as np


def herding_order(features, budget, rel_tol=1e-9):
    # Centered, unscaled form: ||sum(picks) + x - t * mu||^2 has the same argmin as
    # ||mu - (sum(picks) + x) / t|| and keeps rounding relative to the class spread.
    # Distances within rel_tol of the minimum count as ties -> lowest index.
    features = np.asarray(features, dtype=np.float64)
    x = features - features.mean(axis=0)
    scale = float((x * x).sum())
    n = x.shape[0]
    acc = np.zeros(x.shape[1])
    available = np.ones(n, dtype=bool)
    picks = np.empty(budget, dtype=np.int64)
    for t in range(budget):
        dist = ((acc + x) ** 2).sum(axis=1)
        dist[~available] = np.inf
        thr = dist.min() * (1 + rel_tol) + 1e-12 * scale
        best = int(np.flatnonzero(dist <= thr)[0])
        picks[t] = best
        available[best] = False
        acc += x[best]
    return picks


def cosine_scores(query, pool):
    query = np.asarray(query, dtype=np.float64)
    pool = np.asarray(pool, dtype=np.float64)
    return (pool @ query) / (np.linalg.norm(query) * np.linalg.norm(pool, axis=1))


def batch_topk(scores, k):
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, axis=1, kind="stable")[:, :k].astype(np.int64)


def render_batch(bases, sources, rects):
    out = np.array(bases, dtype=np.float64, copy=True)
    R, H, W = out.shape[:3]
    rects = np.asarray(rects, dtype=np.int64)
    k = rects.shape[1]
    ys = np.arange(H)[None, :, None]
    xs = np.arange(W)[None, None, :]
    owner = np.zeros((R, H, W), dtype=np.int64)
    for s in range(k):
        x0, y0, w, h = (rects[:, s, i][:, None, None] for i in range(4))
        inside = (xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)
        out[inside] = sources[:, s][inside]
        owner[inside] = s + 1
    counts = np.zeros((R, k + 1), dtype=np.int64)
    for s in range(k + 1):
        counts[:, s] = (owner == s).sum(axis=(1, 2))
    return out, counts

"""Visual-aware multi-image CutMix oversampling of tail classes.

Payloads are handled as (H, W, C) images; a feature vector of length D is
treated as a 1 x D x 1 image whose masks are contiguous coordinate segments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import round_half_up
from .errors import DegenerateInput, InvalidArgument, ShapeMismatch

K_MAX = 10


@dataclass(frozen=True)
class MaskRect:
    x0: int
    y0: int
    w: int
    h: int
    s: float

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_tuple(self):
        return (self.x0, self.y0, self.w, self.h)


@dataclass(frozen=True)
class HeadBatch:
    sample_ids: tuple
    embeddings: np.ndarray

    def __post_init__(self):
        if not self.sample_ids:
            raise InvalidArgument("head batch must be nonempty")
        if len(self.sample_ids) != len(self.embeddings):
            raise InvalidArgument("one embedding per batch member required")


@dataclass(frozen=True)
class MixRecipe:
    base_id: int
    base_class: int
    sources: tuple  # ((head sample id, MaskRect), ...) in paste order
    soft_label: np.ndarray


def _extents(W, H, s):
    return round_half_up(s * W), round_half_up(s * H)


def sample_mask(W: int, H: int, s: float, rng) -> MaskRect:
    """A round(sW) x round(sH) rectangle placed uniformly inside a W x H image."""
    if not 0 < s < 1:
        raise InvalidArgument(f"mixing ratio must lie in (0, 1), got {s}")
    w, h = _extents(W, H, s)
    if w < 1 or h < 1 or w > W or h > H:
        raise InvalidArgument(f"s={s} gives a degenerate {w}x{h} mask on a {W}x{H} image")
    x0 = int(rng.integers(0, W - w + 1))
    y0 = int(rng.integers(0, H - h + 1))
    return MaskRect(x0, y0, w, h, float(s))


def sample_segment(D: int, s: float, rng) -> MaskRect:
    """Mask for a length-D feature vector: a contiguous run of round(sD) coordinates."""
    if not 0 < s < 1:
        raise InvalidArgument(f"mixing ratio must lie in (0, 1), got {s}")
    w = round_half_up(s * D)
    if w < 1:
        raise InvalidArgument(f"s={s} gives an empty segment on a length-{D} vector")
    return MaskRect(int(rng.integers(0, D - w + 1)), 0, w, 1, float(s))


def as_image(payload) -> np.ndarray:
    arr = np.asarray(payload, dtype=np.float64)
    if arr.ndim == 1:
        return arr.reshape(1, -1, 1)
    if arr.ndim == 3:
        return arr
    raise ShapeMismatch(f"payload must be a vector or an H x W x C image, got shape {arr.shape}")


def topk_similar(tail_embedding, batch: HeadBatch, k: int) -> list:
    """The k batch members most cosine-similar to ``tail_embedding``, most similar first."""
    if not 1 <= k <= len(batch.sample_ids):
        raise InvalidArgument(f"k must be in [1, {len(batch.sample_ids)}], got {k}")
    q = np.ascontiguousarray(tail_embedding, dtype=np.float64)
    pool = np.ascontiguousarray(batch.embeddings, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[1] != q.shape[0]:
        raise ShapeMismatch("tail embedding and batch embeddings differ in dimension")
    if np.linalg.norm(q) == 0 or np.any(np.linalg.norm(pool, axis=1) == 0):
        raise DegenerateInput("cosine similarity is undefined for a zero-norm embedding")
    scores = kernels.cosine_scores(q, pool)
    order = kernels.batch_topk(np.ascontiguousarray(scores[None, :]), k)[0]
    return [batch.sample_ids[i] for i in order]


def label_from_counts(counts, base_class, source_classes, n_classes) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum()
    per_class = np.zeros(n_classes, dtype=np.int64)
    np.add.at(per_class, [base_class, *source_classes], counts)
    return per_class / total


def multi_cutmix(base, sources, base_class, source_classes, n_classes, hard_label=False):
    """Paste each (image, MaskRect) onto ``base`` in order; later pastes win on overlap.

    Returns the mixed payload (same shape as ``base``) and a label whose
    weight per class is that class's share of the visible pixels.
    """
    if not 1 <= len(sources) <= K_MAX:
        raise InvalidArgument(f"need between 1 and {K_MAX} sources, got {len(sources)}")
    if len(source_classes) != len(sources):
        raise InvalidArgument("one class per source required")
    base_arr = np.asarray(base, dtype=np.float64)
    img = as_image(base_arr)
    H, W = img.shape[:2]
    srcs, rects = [], []
    for src, rect in sources:
        s_img = as_image(src)
        if s_img.shape != img.shape:
            raise ShapeMismatch(f"source shape {np.shape(src)} differs from base shape {base_arr.shape}")
        if rect.x0 < 0 or rect.y0 < 0 or rect.x0 + rect.w > W or rect.y0 + rect.h > H:
            raise InvalidArgument(f"mask {rect} does not fit a {W}x{H} image")
        srcs.append(s_img)
        rects.append(rect.as_tuple())
    out, counts = kernels.render_batch(
        np.ascontiguousarray(img[None]),
        np.ascontiguousarray(np.stack(srcs)[None]),
        np.ascontiguousarray(np.asarray(rects, dtype=np.int64)[None]),
    )
    if hard_label:
        label = np.zeros(n_classes)
        label[base_class] = 1.0
    else:
        label = label_from_counts(counts[0], base_class, source_classes, n_classes)
    return out[0].reshape(base_arr.shape), label


@dataclass
class RecipeBatch:
    """Column-wise mix recipes for one epoch; iterates as :class:`MixRecipe`.

    ``source_idx`` / ``rects`` have one column per source in paste order. A
    batch with zero source columns is plain duplication (random oversampling).
    Indices refer to rows of the dataset the batch was planned on.
    """

    base_idx: np.ndarray  # (R,)
    source_idx: np.ndarray  # (R, k)
    rects: np.ndarray  # (R, k, 4) as x0, y0, w, h
    ratios: np.ndarray  # (R, k)
    labels: np.ndarray  # (R, n_classes)
    sample_ids: np.ndarray
    class_ids: np.ndarray
    fallback: bool = False

    def __len__(self):
        return len(self.base_idx)

    def __getitem__(self, r):
        sources = tuple(
            (int(self.sample_ids[self.source_idx[r, j]]), MaskRect(*map(int, self.rects[r, j]), float(self.ratios[r, j])))
            for j in range(self.source_idx.shape[1])
        )
        b = self.base_idx[r]
        return MixRecipe(int(self.sample_ids[b]), int(self.class_ids[b]), sources, self.labels[r])

    def __iter__(self):
        return (self[r] for r in range(len(self)))

    def render(self, payloads) -> np.ndarray:
        """Mixed payloads, shape (R, *payload_shape)."""
        shape = payloads.shape[1:]
        R, k = self.source_idx.shape
        if R == 0:
            return np.empty((0,) + shape)
        if k == 0:
            return payloads[self.base_idx].copy()
        img_shape = as_image(payloads[0]).shape
        out, _ = kernels.render_batch(
            np.ascontiguousarray(payloads[self.base_idx].reshape((R,) + img_shape), dtype=np.float64),
            np.ascontiguousarray(payloads[self.source_idx].reshape((R, k) + img_shape), dtype=np.float64),
            np.ascontiguousarray(self.rects, dtype=np.int64),
        )
        return out.reshape((len(self),) + shape)


def _visible_counts(rects, H, W):
    """Per-recipe visible pixel counts for base + each source, from rectangles alone."""
    R, k = rects.shape[:2]
    ys = np.arange(H)[None, :, None]
    xs = np.arange(W)[None, None, :]
    owner = np.zeros((R, H, W), dtype=np.int64)
    for j in range(k):
        x0, y0, w, h = (rects[:, j, i][:, None, None] for i in range(4))
        owner[(xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)] = j + 1
    return np.stack([(owner == j).sum(axis=(1, 2)) for j in range(k + 1)], axis=1)


def _empty_batch(dataset, n_classes, k):
    return RecipeBatch(
        np.zeros(0, np.int64), np.zeros((0, k), np.int64), np.zeros((0, k, 4), np.int64),
        np.zeros((0, k)), np.zeros((0, n_classes)), dataset.sample_ids, dataset.labels,
    )


def oversample_tail(
    dataset,
    split,
    embeddings=None,
    k=1,
    batch_size=64,
    seed=0,
    epoch=0,
    pool_ids=None,
    visual=True,
    s_range=(0.1, 0.5),
    hard_label=False,
    duplicate_only=False,
) -> RecipeBatch:
    """Plan ``floor(m) - n_i`` mixed samples for every tail class.

    Each recipe draws a fresh head batch of ``batch_size`` from ``pool_ids``
    (the removed head samples), picks ``k`` sources from it (top-k cosine
    similarity of ``embeddings`` when ``visual``, else the first k drawn),
    and one independent mask per source with s ~ U(s_range). Sources are
    pasted least-similar first so the most similar ends on top. Base samples
    cycle round-robin through the class's real samples.

    ``embeddings`` is an (N, dim) array aligned with ``dataset.sample_ids``.
    With ``duplicate_only`` or an empty pool the recipes carry no sources
    (plain random oversampling) and ``fallback`` flags the latter case.
    """
    if k < 1 or k > K_MAX:
        raise InvalidArgument(f"k must be in [1, {K_MAX}], got {k}")
    lo, hi = s_range
    if not 0 < lo <= hi < 1:
        raise InvalidArgument(f"mixing range must satisfy 0 < lo <= hi < 1, got {s_range}")
    n_classes = dataset.n_classes
    budget = split.budget
    pool = np.zeros(0, np.int64) if pool_ids is None else dataset.index_of(sorted(int(s) for s in pool_ids))
    fallback = not duplicate_only and len(pool) == 0
    k_eff = 0 if (duplicate_only or fallback) else k
    if k_eff and k_eff > min(batch_size, len(pool)):
        raise InvalidArgument(f"k={k} exceeds the head batch size {min(batch_size, len(pool))}")
    if visual and k_eff:
        if embeddings is None:
            raise InvalidArgument("visual-aware selection needs embeddings")
        emb = np.asarray(embeddings, dtype=np.float64)
        norms = np.linalg.norm(emb, axis=1)
        pool = pool[norms[pool] > 0]
        if k_eff > len(pool):
            raise InvalidArgument("too few head samples with nonzero embeddings for top-k selection")
    img_shape = as_image(dataset.payloads[0]).shape
    H, W = img_shape[:2]
    vector = dataset.payloads.ndim == 2

    parts = []
    for c in sorted(split.tail):
        real = dataset.train_indices(c)
        r = budget - len(real)
        if r <= 0:
            continue
        rng = np.random.default_rng([seed, epoch, c])
        base = real[np.arange(r) % len(real)]
        if k_eff == 0:
            parts.append((base, np.zeros((r, 0), np.int64), np.zeros((r, 0, 4), np.int64), np.zeros((r, 0))))
            continue
        B = min(batch_size, len(pool))
        draws = rng.permuted(np.tile(np.arange(len(pool)), (r, 1)), axis=1)[:, :B]
        batch = pool[draws]  # (r, B) dataset rows
        if visual:
            scores = np.einsum("rbd,rd->rb", emb[batch], emb[base])
            # a zero-norm base embedding scores all candidates 0, i.e. random sources
            scores /= norms[batch] * np.where(norms[base] == 0, 1.0, norms[base])[:, None]
            order = kernels.batch_topk(np.ascontiguousarray(scores), k_eff)
        else:
            order = np.tile(np.arange(k_eff), (r, 1))
        chosen = np.take_along_axis(batch, order, axis=1)[:, ::-1]  # least similar pasted first
        s = rng.uniform(lo, hi, size=(r, k_eff))
        w = np.floor(s * W + 0.5).astype(np.int64)
        h = np.ones_like(w) if vector else np.floor(s * H + 0.5).astype(np.int64)
        if np.any(w < 1) or np.any(h < 1):
            raise InvalidArgument(f"mixing range {s_range} produces empty masks on a {W}x{H} payload")
        x0 = rng.integers(0, W - w + 1)
        y0 = rng.integers(0, H - h + 1)
        rects = np.stack([x0, y0, w, h], axis=-1).astype(np.int64)
        parts.append((base, chosen, rects, s))

    if not parts:
        batch = _empty_batch(dataset, n_classes, k_eff)
        batch.fallback = fallback
        return batch
    base_idx = np.concatenate([p[0] for p in parts])
    source_idx = np.concatenate([p[1] for p in parts])
    rects = np.concatenate([p[2] for p in parts])
    ratios = np.concatenate([p[3] for p in parts])
    labels = np.zeros((len(base_idx), n_classes))
    rows = np.arange(len(base_idx))
    if k_eff == 0 or hard_label:
        labels[rows, dataset.labels[base_idx]] = 1.0
    else:
        # sum integer pixel counts per class first so weights are exact fractions
        counts = _visible_counts(rects, H, W)
        pixels = np.zeros((len(base_idx), n_classes), dtype=np.int64)
        pixels[rows, dataset.labels[base_idx]] += counts[:, 0]
        for j in range(k_eff):
            np.add.at(pixels, (rows, dataset.labels[source_idx[:, j]]), counts[:, j + 1])
        labels = pixels / (H * W)
    return RecipeBatch(base_idx, source_idx, rects, ratios, labels, dataset.sample_ids, dataset.labels, fallback)

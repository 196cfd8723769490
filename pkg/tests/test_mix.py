import numpy as np
import pytest

from oracles import owner_map
from tailforge.data import ClassDistribution, split_head_tail, synth_gaussian_dataset, synth_image_dataset
from tailforge.errors import DegenerateInput, InvalidArgument, ShapeMismatch
from tailforge.mix import HeadBatch, MaskRect, multi_cutmix, oversample_tail, sample_mask, sample_segment, topk_similar


def test_mask_half():
    rect = sample_mask(32, 32, 0.5, np.random.default_rng(0))
    assert (rect.w, rect.h) == (16, 16)
    assert rect.area / (32 * 32) == 0.25


def test_mask_full_cover():
    rect = sample_mask(10, 10, 0.96, np.random.default_rng(0))
    assert (rect.x0, rect.y0, rect.w, rect.h) == (0, 0, 10, 10)


@pytest.mark.parametrize("s", [0.01, 0.0, 1.0])
def test_mask_degenerate(s):
    with pytest.raises(InvalidArgument):
        sample_mask(16, 16, s, np.random.default_rng(0))


def test_mask_uniform_placement():
    rng = np.random.default_rng(3)
    rects = [sample_mask(64, 64, 0.25, rng) for _ in range(10_000)]
    x0 = np.array([r.x0 for r in rects])
    span = 64 - 16 + 1
    sigma = np.sqrt((span**2 - 1) / 12 / len(x0))
    assert abs(x0.mean() - (64 - 16) / 2) < 3 * sigma
    assert x0.min() == 0 and x0.max() == 48
    assert all(r.y0 + r.h <= 64 for r in rects)


def test_mask_deterministic():
    a = sample_mask(20, 12, 0.3, np.random.default_rng(5))
    assert a == sample_mask(20, 12, 0.3, np.random.default_rng(5))


def test_segment():
    seg = sample_segment(10, 0.25, np.random.default_rng(0))
    assert (seg.h, seg.w, seg.y0) == (1, 3, 0)
    with pytest.raises(InvalidArgument):
        sample_segment(10, 0.04, np.random.default_rng(0))


def _batch(embs):
    return HeadBatch(tuple(range(100, 100 + len(embs))), np.asarray(embs, dtype=float))


def test_topk_duplicate_ranks_first(rng):
    embs = rng.normal(size=(8, 5))
    q = embs[5] * 3.0
    assert topk_similar(q, _batch(embs), 1) == [105]


def test_topk_matches_sort_oracle(rng):
    for _ in range(50):
        embs = rng.normal(size=(20, 6))
        q = rng.normal(size=6)
        sims = [float(q @ e / np.linalg.norm(q) / np.linalg.norm(e)) for e in embs]
        expected = [100 + i for i in sorted(range(20), key=lambda i: (-sims[i], i))]
        assert topk_similar(q, _batch(embs), 3) == expected[:3]
        assert topk_similar(q, _batch(embs), 20) == expected


def test_topk_errors(rng):
    embs = rng.normal(size=(4, 3))
    with pytest.raises(InvalidArgument):
        topk_similar(embs[0], _batch(embs), 5)
    with pytest.raises(DegenerateInput):
        topk_similar(np.zeros(3), _batch(embs), 1)


def test_single_source_label():
    rng = np.random.default_rng(0)
    base, src = rng.random((2, 32, 32, 3))
    rect = MaskRect(4, 8, 16, 16, 0.5)
    out, label = multi_cutmix(base, [(src, rect)], 2, [0], 4)
    np.testing.assert_array_equal(label, [0.25, 0, 0.75, 0])
    np.testing.assert_array_equal(out[8:24, 4:20], src[8:24, 4:20])
    assert np.array_equal(out[0], base[0])


def test_two_disjoint_sources():
    rng = np.random.default_rng(1)
    base, a, b = rng.random((3, 10, 10, 1))
    ra = MaskRect(0, 0, 5, 4, 0.45)  # 20 px
    rb = MaskRect(5, 4, 5, 6, 0.55)  # 30 px
    _, label = multi_cutmix(base, [(a, ra), (b, rb)], 0, [1, 2], 3)
    np.testing.assert_allclose(label, [0.5, 0.2, 0.3], atol=0)


def test_identical_source_is_identity():
    base = np.random.default_rng(2).random((8, 8, 3))
    out, _ = multi_cutmix(base, [(base.copy(), MaskRect(1, 1, 5, 5, 0.6))], 0, [1], 2)
    np.testing.assert_array_equal(out, base)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        multi_cutmix(np.zeros((4, 4, 3)), [(np.zeros((4, 5, 3)), MaskRect(0, 0, 2, 2, 0.5))], 0, [1], 2)


def test_hard_label():
    _, label = multi_cutmix(np.zeros((4, 4, 1)), [(np.ones((4, 4, 1)), MaskRect(0, 0, 2, 2, 0.5))], 1, [0], 2, hard_label=True)
    np.testing.assert_array_equal(label, [0, 1])


def test_vector_payload():
    base = np.arange(10.0)
    out, label = multi_cutmix(base, [(-np.ones(10), MaskRect(2, 0, 3, 1, 0.3))], 0, [1], 2)
    np.testing.assert_array_equal(out, [0, 1, -1, -1, -1, 5, 6, 7, 8, 9])
    np.testing.assert_allclose(label, [0.7, 0.3])


def test_conservation_random_recipes():
    rng = np.random.default_rng(7)
    H = W = 16
    for _ in range(200):
        k = int(rng.integers(1, 4))
        imgs = rng.random((k + 1, H, W, 3))
        rects = [sample_mask(W, H, float(rng.uniform(0.1, 0.9)), rng) for _ in range(k)]
        classes = [int(c) for c in rng.integers(0, 5, size=k)]
        out, label = multi_cutmix(imgs[0], list(zip(imgs[1:], rects)), 0, classes, 5)
        owner = owner_map(H, W, [r.as_tuple() for r in rects])
        expected = np.zeros(5)
        for y in range(H):
            for x in range(W):
                assert np.array_equal(out[y, x], imgs[owner[y][x]][y, x])
                expected[0 if owner[y][x] == 0 else classes[owner[y][x] - 1]] += 1
        np.testing.assert_allclose(label, expected / (H * W), atol=1e-15)


def _lt_dataset(kind="vector"):
    dist = ClassDistribution((40, 30, 6, 3, 1), test_per_class=2)
    if kind == "vector":
        return synth_gaussian_dataset(dist, 8, 2.0, seed=0), dist
    return synth_image_dataset(dist, size=8, seed=0), dist


def _pool(ds, split):
    return [int(s) for c in sorted(split.head) for s in ds.sample_ids[ds.train_indices(c)]]


@pytest.mark.parametrize("kind", ["vector", "image"])
def test_oversample_counts_and_invariants(kind):
    ds, dist = _lt_dataset(kind)
    split = split_head_tail(dist)  # m = 16
    emb = np.abs(ds.flat()) + 0.01
    recipes = oversample_tail(ds, split, emb, k=2, batch_size=16, seed=1, pool_ids=_pool(ds, split))
    per_class = {}
    for r in recipes:
        per_class[r.base_class] = per_class.get(r.base_class, 0) + 1
        assert len(r.sources) == 2
        assert abs(r.soft_label.sum() - 1) < 1e-9
        support = set(np.flatnonzero(r.soft_label))
        assert support <= {r.base_class} | {int(ds.labels[ds.index_of([sid])[0]]) for sid, _ in r.sources}
    assert per_class == {2: 10, 3: 13, 4: 15}
    single = [r for r in recipes if r.base_class == 4]
    assert len({r.base_id for r in single}) == 1
    rendered = recipes.render(ds.payloads)
    assert rendered.shape == (len(recipes),) + ds.payload_shape


def test_oversample_k1_has_one_source():
    ds, dist = _lt_dataset()
    split = split_head_tail(dist)
    recipes = oversample_tail(ds, split, np.abs(ds.flat()) + 0.1, k=1, seed=0, pool_ids=_pool(ds, split))
    assert all(len(r.sources) == 1 for r in recipes)


def test_oversample_deterministic_per_epoch():
    ds, dist = _lt_dataset()
    split = split_head_tail(dist)
    emb = np.abs(ds.flat()) + 0.1
    args = dict(k=1, seed=3, pool_ids=_pool(ds, split))
    a = oversample_tail(ds, split, emb, epoch=0, **args)
    b = oversample_tail(ds, split, emb, epoch=0, **args)
    c = oversample_tail(ds, split, emb, epoch=1, **args)
    assert np.array_equal(a.rects, b.rects) and np.array_equal(a.source_idx, b.source_idx)
    assert not np.array_equal(a.rects, c.rects)


def test_oversample_visual_picks_most_similar():
    ds, dist = _lt_dataset()
    split = split_head_tail(dist)
    emb = np.abs(ds.flat()) + 0.1
    pool = _pool(ds, split)
    recipes = oversample_tail(ds, split, emb, k=1, batch_size=len(pool), seed=0, pool_ids=pool)
    pool_rows = ds.index_of(pool)
    for r in range(len(recipes)):
        q = emb[recipes.base_idx[r]]
        sims = emb[pool_rows] @ q / np.linalg.norm(emb[pool_rows], axis=1) / np.linalg.norm(q)
        assert recipes.source_idx[r, 0] == pool_rows[int(np.argmax(sims))]


def test_visual_selection_dominance():
    ds, dist = _lt_dataset()
    split = split_head_tail(dist)
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(len(ds.sample_ids), 6))
    recipes = oversample_tail(ds, split, emb, k=3, batch_size=12, seed=0, pool_ids=_pool(ds, split))
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    chosen = np.mean([unit[recipes.base_idx[r]] @ unit[recipes.source_idx[r]].T for r in range(len(recipes))])
    pool_rows = ds.index_of(_pool(ds, split))
    everyone = np.mean([unit[recipes.base_idx[r]] @ unit[pool_rows].T for r in range(len(recipes))])
    assert chosen > everyone


def test_oversample_fallback_without_heads():
    ds, dist = _lt_dataset()
    split = split_head_tail(dist)
    recipes = oversample_tail(ds, split, None, k=1, seed=0, pool_ids=[])
    assert recipes.fallback
    assert recipes.source_idx.shape[1] == 0
    np.testing.assert_array_equal(recipes.render(ds.payloads), ds.payloads[recipes.base_idx])


def test_tail_class_at_budget_gets_no_recipes():
    dist = ClassDistribution((21, 13, 6), test_per_class=1)  # m = 13.33, floor 13
    ds = synth_gaussian_dataset(dist, 4, 1.0)
    split = split_head_tail(dist)
    assert split.tail == {1, 2}
    recipes = oversample_tail(ds, split, None, duplicate_only=True)
    assert [r.base_class for r in recipes] == [2] * 7

"""Herding exemplar selection for head-class undersampling."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgument, MalformedManifest


@dataclass(frozen=True)
class SelectionResult:
    selected_ids: tuple  # herding pick order
    removed_ids: frozenset


def herd_select(features, budget: int, sample_ids=None, normalize=False) -> SelectionResult:
    """Greedily pick ``budget`` samples whose running mean tracks the class mean.

    At step t the pick minimises ``||mu - (F(x) + sum of previous picks) / t||``
    over the remaining candidates; exact ties go to the lowest input index.
    """
    feats = np.ascontiguousarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise InvalidArgument("features must be a nonempty (n_samples, dim) array")
    n = feats.shape[0]
    if not 1 <= budget <= n:
        raise InvalidArgument(f"budget must be in [1, {n}], got {budget}")
    if normalize:
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        feats = np.ascontiguousarray(feats / np.where(norms == 0, 1.0, norms))
    ids = list(range(n)) if sample_ids is None else [int(s) for s in sample_ids]
    if len(ids) != n:
        raise InvalidArgument("one sample id per feature row required")
    picks = kernels.herding_order(feats, budget)
    selected = tuple(ids[i] for i in picks)
    return SelectionResult(selected, frozenset(ids) - frozenset(selected))


def random_select(sample_ids, budget: int, rng) -> SelectionResult:
    """Random undersampling; same result shape as herding."""
    ids = [int(s) for s in sample_ids]
    if not 1 <= budget <= len(ids):
        raise InvalidArgument(f"budget must be in [1, {len(ids)}], got {budget}")
    picks = rng.choice(len(ids), size=budget, replace=False)
    selected = tuple(ids[i] for i in picks)
    return SelectionResult(selected, frozenset(ids) - frozenset(selected))


def undersample_heads(dataset, embeddings, split, normalize=False, method="herding", rng=None):
    """Select ``floor(m)`` samples from every head class.

    ``embeddings`` maps sample id -> feature vector, or is an (N, dim) array
    aligned with ``dataset.sample_ids``.
    """
    if method not in ("herding", "random"):
        raise InvalidArgument(f"unknown selection method {method!r}")
    if method == "random" and rng is None:
        rng = np.random.default_rng(0)
    budget = split.budget
    out = {}
    for c in sorted(split.head):
        idx = dataset.train_indices(c)
        ids = [int(s) for s in dataset.sample_ids[idx]]
        if method == "random":
            out[c] = random_select(ids, budget, rng)
            continue
        if isinstance(embeddings, dict):
            missing = [s for s in ids if s not in embeddings]
            if missing:
                raise InvalidArgument(f"missing embedding for sample id {missing[0]}")
            feats = np.stack([np.asarray(embeddings[s], dtype=np.float64) for s in ids])
        else:
            emb = np.asarray(embeddings)
            if emb.shape[0] != len(dataset.sample_ids):
                raise InvalidArgument(
                    f"embedding matrix has {emb.shape[0]} rows for {len(dataset.sample_ids)} samples"
                )
            feats = emb[idx]
        out[c] = herd_select(feats, budget, ids, normalize=normalize)
    return out


def write_selection_csv(selection, path) -> None:
    """``class_id,sample_id,rank,kept``; removed samples get rank -1, rows sorted by class then id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_id", "sample_id", "rank", "kept"])
        for c in sorted(selection):
            res = selection[c]
            for rank, sid in enumerate(res.selected_ids):
                w.writerow([c, sid, rank, 1])
            for sid in sorted(res.removed_ids):
                w.writerow([c, sid, -1, 0])


def read_selection_csv(path):
    picked, removed = {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["class_id", "sample_id", "rank", "kept"]:
            raise MalformedManifest(f"{path}: expected header class_id,sample_id,rank,kept")
        for row in reader:
            c, sid, rank, kept = (int(v) for v in row)
            if kept:
                picked.setdefault(c, []).append((rank, sid))
            else:
                removed.setdefault(c, set()).add(sid)
    return {
        c: SelectionResult(tuple(s for _, s in sorted(picked.get(c, []))), frozenset(removed.get(c, ())))
        for c in sorted(set(picked) | set(removed))
    }

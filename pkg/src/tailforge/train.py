"""Two-layer ReLU classifier with manual backprop, and the 2-phase training procedure."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import split_head_tail
from .errors import InvalidArgument, TrainingDiverged
from .herding import undersample_heads
from .mix import oversample_tail
from .tensor import log_tempered_softmax, read_ltt1, tempered_softmax, write_ltt1

PARAMS = ("W1", "b1", "W2", "b2")

# strategy -> (head selection, distill head samples, tail oversampling)
STRATEGIES = {
    "baseline": (None, False, None),
    "rus": ("random", False, None),
    "ros": (None, False, "duplicate"),
    "hus": ("herding", False, None),
    "hus_kd": ("herding", True, None),
    "cmo_random": (None, False, "random"),
    "cmo_visual": (None, False, "visual"),
    "full": ("herding", True, "visual"),
}


@dataclass
class TrainConfig:
    epochs_phase1: int = 50
    epochs_phase2: int = 100
    lr0: float = 0.1
    momentum: float = 0.9
    T: float = 0.5
    lambda_kd: float = 1.0
    k: int = 1
    batch_size_Br: int = 64
    s_lo: float = 0.1
    s_hi: float = 0.5
    batch_size: int = 64
    seed: int = 0
    strategy: str = "full"
    hidden_dim: int = 128
    kd_t2_rescale: bool = False
    kd_all_samples: bool = False
    hard_tail_label: bool = False
    scratch_phase2: bool = False
    normalize_herding: bool = False

    def __post_init__(self):
        if not self.lr0 > 0:
            raise InvalidArgument("lr0 must be positive")
        if not 0 <= self.momentum < 1:
            raise InvalidArgument("momentum must lie in [0, 1)")
        if not self.T > 0:
            raise InvalidArgument("temperature T must be positive")
        if self.strategy not in STRATEGIES:
            raise InvalidArgument(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if self.batch_size < 1 or self.hidden_dim < 1:
            raise InvalidArgument("batch_size and hidden_dim must be positive")
        if self.epochs_phase1 < 0 or self.epochs_phase2 < 0:
            raise InvalidArgument("epoch counts must be non-negative")

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgument(f"config line {lineno}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise InvalidArgument(f"config line {lineno}: unknown key {key!r}")
            values[key] = _coerce(value, types[key], key)
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _coerce(value, typ, key):
    try:
        if typ == "bool":
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        return value
    except ValueError:
        raise InvalidArgument(f"config key {key!r}: cannot parse {value!r} as {typ}") from None


def _fmt(v):
    return str(v).lower() if isinstance(v, bool) else str(v)


# -- model ------------------------------------------------------------------------

@dataclass
class Model:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    velocity: dict = field(default_factory=dict, repr=False)

    @classmethod
    def init(cls, input_dim, hidden_dim, n_classes, rng) -> "Model":
        return cls(
            rng.standard_normal((hidden_dim, input_dim)) * math.sqrt(2.0 / input_dim),
            np.zeros(hidden_dim),
            rng.standard_normal((n_classes, hidden_dim)) * math.sqrt(1.0 / hidden_dim),
            np.zeros(n_classes),
        )

    @property
    def input_dim(self):
        return self.W1.shape[1]

    @property
    def hidden_dim(self):
        return self.W1.shape[0]

    @property
    def n_classes(self):
        return self.W2.shape[0]

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAMS}

    def copy(self) -> "Model":
        return Model(*(getattr(self, p).copy() for p in PARAMS))

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in PARAMS:
            h.update(np.ascontiguousarray(getattr(self, p)).tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        """Flat float32 LTT1 vector (W1, b1, W2, b2) plus a JSON shape sidecar."""
        path = Path(path)
        write_ltt1(path, np.concatenate([getattr(self, p).ravel() for p in PARAMS]))
        dims = {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim, "n_classes": self.n_classes}
        path.with_suffix(".json").write_text(json.dumps(dims) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Model":
        path = Path(path)
        dims = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        d, h, n = dims["input_dim"], dims["hidden_dim"], dims["n_classes"]
        flat = read_ltt1(path, expected_rank=1).astype(np.float64)
        sizes = [h * d, h, n * h, n]
        if flat.size != sum(sizes):
            raise InvalidArgument(f"{path}: {flat.size} values do not match dims {dims}")
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(h, d), parts[1], parts[2].reshape(n, h), parts[3])


def forward(model: Model, x):
    """Return (logits, embedding); ``x`` is one input vector or a (batch, dim) array."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise InvalidArgument(f"input has dim {x.shape[-1]}, model expects {model.input_dim}")
    hidden = np.maximum(x @ model.W1.T + model.b1, 0.0)
    return hidden @ model.W2.T + model.b2, hidden


def backward(model: Model, x, hidden, dlogits):
    """Gradients of a scalar loss given its gradient wrt the logits (batched)."""
    dhidden = (dlogits @ model.W2) * (hidden > 0)
    grads = {
        "W2": dlogits.T @ hidden,
        "b2": dlogits.sum(axis=0),
        "W1": dhidden.T @ x,
        "b1": dhidden.sum(axis=0),
    }
    return grads, dhidden @ model.W1


def ce_loss(logits, soft_label):
    """Cross-entropy against a (soft) label; returns (loss, d loss / d logits).

    Works on one vector or row-wise on a batch (per-row losses).
    """
    logits = np.asarray(logits, dtype=np.float64)
    soft_label = np.asarray(soft_label, dtype=np.float64)
    if logits.shape != soft_label.shape:
        raise InvalidArgument("logits and label differ in shape")
    logp = log_tempered_softmax(logits, 1.0)
    loss = -(soft_label * logp).sum(axis=-1)
    return (float(loss) if loss.ndim == 0 else loss), np.exp(logp) - soft_label


def kd_loss(teacher_logits, student_logits, T=0.5, t2_rescale=False):
    """sum_i -softmax(teacher/T)_i * log softmax(student/T)_i and its student gradient.

    No T^2 factor unless ``t2_rescale``.
    """
    if not T > 0:
        raise InvalidArgument(f"temperature must be positive, got {T}")
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    student_logits = np.asarray(student_logits, dtype=np.float64)
    if teacher_logits.shape != student_logits.shape:
        raise InvalidArgument("teacher and student logits differ in shape")
    p = tempered_softmax(teacher_logits, T)
    logq = log_tempered_softmax(student_logits, T)
    loss = -(p * logq).sum(axis=-1)
    grad = (np.exp(logq) - p) / T
    if t2_rescale:
        loss, grad = loss * T * T, grad * T * T
    return (float(loss) if loss.ndim == 0 else loss), grad


def cosine_lr(lr0, step, total_steps):
    if total_steps <= 0:
        return lr0
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total_steps))


def sgd_step(model: Model, grads: dict, lr: float, momentum: float) -> Model:
    """In-place momentum SGD: v <- momentum * v + g; p <- p - lr * v."""
    for name in PARAMS:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(
                f"non-finite gradient for {name}",
                {"param": name, "lr": lr, "max_abs_param": float(np.abs(getattr(model, name)).max())},
            )
    for name in PARAMS:
        v = model.velocity.get(name)
        v = grads[name].copy() if v is None else momentum * v + grads[name]
        model.velocity[name] = v
        setattr(model, name, getattr(model, name) - lr * v)
    return model


# -- training ---------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    phase: int
    loss_ce: float
    loss_kd: float
    lr: float


def _run_epochs(model, X, Y, config, phase, epochs, teacher_logits=None, kd_mask=None, epoch_data=None, log=None):
    """Minibatch SGD with a per-phase cosine schedule.

    ``epoch_data(epoch)`` may rebuild (X, Y, teacher_logits, kd_mask) each epoch.
    """
    n_per_epoch = len(X) if epoch_data is None else len(epoch_data(0)[0])
    steps_per_epoch = max(1, math.ceil(n_per_epoch / config.batch_size))
    total = steps_per_epoch * epochs
    step = 0
    for epoch in range(epochs):
        if epoch_data is not None:
            X, Y, teacher_logits, kd_mask = epoch_data(epoch)
        order = np.random.default_rng([config.seed, phase, epoch]).permutation(len(X))
        sum_ce = sum_kd = 0.0
        lr = config.lr0
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = X[idx]
            logits, hidden = forward(model, xb)
            ce, dlogits = ce_loss(logits, Y[idx])
            kd_val = np.zeros(len(idx))
            m = None if teacher_logits is None or not config.lambda_kd else kd_mask[idx]
            if m is not None and m.any():
                kd_val, gkd = kd_loss(teacher_logits[idx], logits, config.T, config.kd_t2_rescale)
                m = m.astype(np.float64)
                kd_val = kd_val * m
                dlogits = dlogits + config.lambda_kd * gkd * m[:, None]
            if not (np.all(np.isfinite(ce)) and np.all(np.isfinite(kd_val))):
                raise TrainingDiverged(
                    f"non-finite loss in phase {phase}, epoch {epoch}",
                    {"phase": phase, "epoch": epoch, "step": step, "lr": lr},
                )
            grads, _ = backward(model, xb, hidden, dlogits / len(idx))
            lr = cosine_lr(config.lr0, step, total)
            sgd_step(model, grads, lr, config.momentum)
            step += 1
            sum_ce += float(ce.sum())
            sum_kd += float(kd_val.sum())
        if log is not None:
            log.append(EpochLog(epoch, phase, sum_ce / len(X), sum_kd / len(X), lr))
    return model


def _one_hot(labels, n):
    out = np.zeros((len(labels), n))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_phase1(dataset, config: TrainConfig, log=None) -> Model:
    """Plain cross-entropy on the full (imbalanced) train split."""
    train = dataset.train_indices()
    if len(train) == 0:
        raise InvalidArgument("dataset has no training samples")
    X = dataset.flat(train)
    Y = _one_hot(dataset.labels[train], dataset.n_classes)
    model = Model.init(X.shape[1], config.hidden_dim, dataset.n_classes, np.random.default_rng([config.seed, 0]))
    return _run_epochs(model, X, Y, config, 1, config.epochs_phase1, log=log)


@dataclass
class Phase2Plan:
    """What Phase II trains on, before per-epoch tail recipes are added."""

    split: object
    real_idx: np.ndarray  # dataset rows used every epoch
    kd_rows: np.ndarray  # bool per real row: distilled
    pool_ids: list  # head samples available as CutMix sources
    selection: dict  # class -> SelectionResult (head classes that were undersampled)
    tail_mode: str | None


def plan_phase2(dataset, teacher: Model, config: TrainConfig, embeddings=None) -> Phase2Plan:
    select, distill, tail_mode = STRATEGIES[config.strategy]
    split = split_head_tail(dataset.distribution)
    if embeddings is None:
        embeddings = forward(teacher, dataset.flat())[1]
    selection = {}
    if select is not None:
        rng = np.random.default_rng([config.seed, 7])
        selection = undersample_heads(
            dataset, embeddings, split, normalize=config.normalize_herding, method=select, rng=rng
        )
    kept = []
    for c in range(dataset.n_classes):
        idx = dataset.train_indices(c)
        if c in selection:
            idx = dataset.index_of(sorted(selection[c].selected_ids))
        kept.append(idx)
    real_idx = np.concatenate(kept)
    head_rows = np.isin(dataset.labels[real_idx], sorted(split.head_group))
    kd_rows = np.zeros(len(real_idx), dtype=bool)
    if distill:
        kd_rows = np.ones(len(real_idx), dtype=bool) if config.kd_all_samples else head_rows
    if selection:
        pool = sorted(s for res in selection.values() for s in res.removed_ids)
    else:
        pool = [int(s) for c in sorted(split.head) for s in dataset.sample_ids[dataset.train_indices(c)]]
    return Phase2Plan(split, real_idx, kd_rows, pool, selection, tail_mode)


def train_phase2(dataset, teacher: Model, config: TrainConfig, log=None, embeddings=None):
    """Train F2 on the rebalanced set; the teacher is frozen and only read.

    Returns the student model (a copy of the teacher for the baseline strategy).
    """
    if config.strategy == "baseline":
        return teacher.copy()
    checksum = teacher.checksum()
    if embeddings is None:
        embeddings = forward(teacher, dataset.flat())[1]
    plan = plan_phase2(dataset, teacher, config, embeddings)
    n = dataset.n_classes
    X_real = dataset.flat(plan.real_idx)
    Y_real = _one_hot(dataset.labels[plan.real_idx], n)
    T_real = forward(teacher, X_real)[0]

    def epoch_data(epoch):
        if plan.tail_mode is None:
            return X_real, Y_real, T_real, plan.kd_rows
        recipes = oversample_tail(
            dataset,
            plan.split,
            embeddings,
            k=config.k,
            batch_size=config.batch_size_Br,
            seed=config.seed,
            epoch=epoch,
            pool_ids=plan.pool_ids,
            visual=plan.tail_mode == "visual",
            s_range=(config.s_lo, config.s_hi),
            hard_label=config.hard_tail_label,
            duplicate_only=plan.tail_mode == "duplicate",
        )
        if len(recipes) == 0:
            return X_real, Y_real, T_real, plan.kd_rows
        X_mix = recipes.render(dataset.payloads).reshape(len(recipes), -1)
        X = np.concatenate([X_real, X_mix])
        Y = np.concatenate([Y_real, recipes.labels])
        mix_kd = np.full(len(recipes), config.kd_all_samples and STRATEGIES[config.strategy][1])
        T_all = np.concatenate([T_real, forward(teacher, X_mix)[0]])
        return X, Y, T_all, np.concatenate([plan.kd_rows, mix_kd])

    if config.scratch_phase2:
        student = Model.init(teacher.input_dim, teacher.hidden_dim, n, np.random.default_rng([config.seed, 2]))
    else:
        student = teacher.copy()
    uses_kd = STRATEGIES[config.strategy][1]
    _run_epochs(
        student, X_real, Y_real, config, 2, config.epochs_phase2,
        teacher_logits=T_real if uses_kd else None, kd_mask=plan.kd_rows,
        epoch_data=epoch_data, log=log,
    )
    if teacher.checksum() != checksum:
        raise RuntimeError("teacher parameters changed during Phase II")
    return student

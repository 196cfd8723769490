"""Long-tailed dataset construction and 2-phase class rebalancing.

Phase I trains a plain classifier on all data. Phase II keeps a herding-selected
subset of each head class (distilled from the frozen Phase-I model) and tops up
tail classes with CutMix images whose sources are the most similar removed head
samples.
"""
from .data import (
    ClassDistribution,
    Dataset,
    FrequencyTable,
    HeadTailSplit,
    frequency_match_counts,
    imbalance_ratio,
    make_pareto_longtail,
    read_manifest,
    split_head_tail,
    synth_gaussian_dataset,
    synth_image_dataset,
    write_manifest,
)
from .evaluate import EvalReport, emit_report, topk1_accuracy
from .herding import SelectionResult, herd_select, undersample_heads
from .kernels import BACKEND
from .mix import MaskRect, MixRecipe, multi_cutmix, oversample_tail, sample_mask, topk_similar
from .pipeline import BenchSetting, run_matrix, run_pipeline
from .tensor import class_mean, cosine_similarity, tempered_softmax
from .train import Model, TrainConfig, ce_loss, forward, kd_loss, sgd_step, train_phase1, train_phase2

__version__ = "0.1.0"

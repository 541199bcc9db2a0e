"""Multi-view fusion and selection strategies, plus the per-view oracle.

Fusion strategies combine per-view features into one vector; selection
strategies return one of the input features untouched. Entropy and score
always come from the entropy prompt list, classification always from the
evaluation prompt list; the upper bound counts an object as correct when
any single view's prediction already matches the ground truth, which caps
what any strategy can achieve.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateFusionError
from .features import (ROLE_ENTROPY, ROLE_EVALUATION, ConceptDistribution,
                       DEFAULT_TEMPERATURE, PromptList, classify,
                       concept_distribution, normalize_feature)

WEIGHT_EPS = 1e-6

STRATEGIES = ("average", "entropy_weighted", "score_weighted",
              "min_entropy", "max_score", "mode", "upper_bound")


@dataclass(frozen=True)
class ViewBundle:
    """Per-view features of one segment with both distribution sets."""

    segment_id: int
    features: Tuple[np.ndarray, ...]
    entropy_dists: Tuple[ConceptDistribution, ...]
    eval_dists: Tuple[ConceptDistribution, ...]

    def __post_init__(self):
        n = len(self.features)
        if n < 1:
            raise ValueError("a view bundle needs at least one view")
        if len(self.entropy_dists) != n or len(self.eval_dists) != n:
            raise ValueError("per-view lists must have equal lengths")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def entropies(self) -> np.ndarray:
        return np.array([d.entropy for d in self.entropy_dists])

    @property
    def max_scores(self) -> np.ndarray:
        return np.array([d.max_score for d in self.entropy_dists])

    def view_labels(self, prompts: PromptList) -> List[str]:
        """Per-view argmax labels under the evaluation prompt list."""
        return [classify(d, prompts) for d in self.eval_dists]


def build_view_bundle(segment_id: int, features: Sequence[np.ndarray],
                      entropy_prompts: PromptList, eval_prompts: PromptList,
                      temperature: float = DEFAULT_TEMPERATURE) -> ViewBundle:
    """Compute both distribution sets for a segment's view features."""
    if entropy_prompts.role != ROLE_ENTROPY:
        raise ValueError("entropy_prompts must carry the entropy role")
    if eval_prompts.role != ROLE_EVALUATION:
        raise ValueError("eval_prompts must carry the evaluation role")
    feats = tuple(np.asarray(f, dtype=np.float64) for f in features)
    return ViewBundle(
        segment_id, feats,
        tuple(concept_distribution(f, entropy_prompts, temperature) for f in feats),
        tuple(concept_distribution(f, eval_prompts, temperature) for f in feats))


def fuse_average(bundle: ViewBundle) -> np.ndarray:
    """Arithmetic mean of the unit features, renormalized."""
    mean = np.mean(bundle.features, axis=0)
    norm = np.linalg.norm(mean)
    if norm < WEIGHT_EPS:
        raise DegenerateFusionError(
            f"mean feature of segment {bundle.segment_id} has near-zero norm")
    return mean / norm


def fuse_weighted(bundle: ViewBundle, weights: Sequence[float]) -> np.ndarray:
    """normalize(sum_i w_i f_i / sum_i w_i) for non-negative weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(bundle),):
        raise ValueError("need one weight per view")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    total = weights.sum()
    if total == 0:
        raise ValueError("weights must not all be zero")
    mean = (weights[:, None] * np.stack(bundle.features)).sum(axis=0) / total
    norm = np.linalg.norm(mean)
    if norm < WEIGHT_EPS:
        raise DegenerateFusionError(
            f"weighted feature of segment {bundle.segment_id} has near-zero norm")
    return mean / norm


def entropy_weights(bundle: ViewBundle, direct: bool = False) -> np.ndarray:
    """Per-view weights from entropy.

    Default is inverse weighting (H_max - H_i) + eps: low entropy means a
    confident view and should weigh more. `direct=True` uses the entropy
    values themselves as weights (the literal reading).
    """
    h = bundle.entropies
    if direct:
        return h + WEIGHT_EPS
    return (h.max() - h) + WEIGHT_EPS


def score_weights(bundle: ViewBundle) -> np.ndarray:
    """Per-view weights from the best cosine, shifted to be positive."""
    s = bundle.max_scores
    return (s - s.min()) + WEIGHT_EPS


def select_min_entropy(bundle: ViewBundle) -> Tuple[int, np.ndarray]:
    """View with the lowest entropy under the entropy prompt list."""
    idx = int(np.argmin(bundle.entropies))
    return idx, bundle.features[idx]


def select_max_score(bundle: ViewBundle) -> Tuple[int, np.ndarray]:
    """View with the highest pre-softmax cosine under the entropy list."""
    idx = int(np.argmax(bundle.max_scores))
    return idx, bundle.features[idx]


def classify_mode(bundle: ViewBundle, eval_prompts: PromptList) -> str:
    """Most frequent per-view label; ties go to the earliest view's label."""
    labels = bundle.view_labels(eval_prompts)
    counts = Counter(labels)
    best = max(counts.values())
    for label in labels:
        if counts[label] == best:
            return label
    raise AssertionError("unreachable")


def upper_bound_correct(bundle: ViewBundle, ground_truth: str,
                        eval_prompts: PromptList) -> bool:
    """True iff any per-view prediction matches the ground-truth label."""
    folded = ground_truth.casefold()
    if folded not in (label.casefold() for label in eval_prompts.labels):
        raise ValueError(f"ground truth {ground_truth!r} not in evaluation prompts")
    return any(label.casefold() == folded
               for label in bundle.view_labels(eval_prompts))


@dataclass(frozen=True)
class StrategyResult:
    """Outcome of a fusion/selection strategy on one bundle."""

    label: str
    feature: np.ndarray
    view_index: Optional[int]    # set for selection strategies
    entropy: float               # of the winning/fused feature (entropy list)
    score: float                 # best cosine of that feature (entropy list)


def apply_strategy(strategy: str, bundle: ViewBundle,
                   entropy_prompts: PromptList, eval_prompts: PromptList,
                   temperature: float = DEFAULT_TEMPERATURE,
                   direct_entropy_weights: bool = False) -> StrategyResult:
    """Run one named strategy and classify the outcome.

    `upper_bound` is an evaluation-only oracle (it needs ground truth) and
    is rejected here; use upper_bound_correct instead.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "upper_bound":
        raise ValueError("upper_bound needs ground truth; use upper_bound_correct")

    if strategy == "min_entropy":
        idx, feature = select_min_entropy(bundle)
        return StrategyResult(classify(bundle.eval_dists[idx], eval_prompts),
                              feature, idx, bundle.entropy_dists[idx].entropy,
                              bundle.entropy_dists[idx].max_score)
    if strategy == "max_score":
        idx, feature = select_max_score(bundle)
        return StrategyResult(classify(bundle.eval_dists[idx], eval_prompts),
                              feature, idx, bundle.entropy_dists[idx].entropy,
                              bundle.entropy_dists[idx].max_score)
    if strategy == "mode":
        label = classify_mode(bundle, eval_prompts)
        idx = bundle.view_labels(eval_prompts).index(label)
        return StrategyResult(label, bundle.features[idx], idx,
                              bundle.entropy_dists[idx].entropy,
                              bundle.entropy_dists[idx].max_score)

    if strategy == "average":
        fused = fuse_average(bundle)
    elif strategy == "entropy_weighted":
        fused = fuse_weighted(bundle, entropy_weights(bundle, direct_entropy_weights))
    else:  # score_weighted
        fused = fuse_weighted(bundle, score_weights(bundle))
    ent_dist = concept_distribution(fused, entropy_prompts, temperature)
    eval_dist = concept_distribution(fused, eval_prompts, temperature)
    return StrategyResult(classify(eval_dist, eval_prompts), fused, None,
                          ent_dist.entropy, ent_dist.max_score)

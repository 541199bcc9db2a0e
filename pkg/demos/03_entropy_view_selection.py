"""Why averaging multi-view features hurts and entropy selection helps.

Builds objects where exactly one of five views carries the right concept
and the rest show off-vocabulary distractors. Averaging dilutes the one
good view; picking the lowest-entropy view under a curated prompt list
recovers it. Swap in an unrelated entropy list and the advantage is gone,
which is the whole argument for choosing that list well.
"""
import numpy as np

from ovseg3d import apply_strategy, upper_bound_correct
from ovseg3d.synthetic import make_planted_bundles, rebundle

pb = make_planted_bundles(n_objects=150, views_per_object=5, noise=0.05,
                          seed=0)

def accuracy(strategy, bundles, entropy_prompts):
    hits = [apply_strategy(strategy, b, entropy_prompts,
                           pb.eval_prompts).label.casefold() == gt
            for b, gt in zip(bundles, pb.gt_labels)]
    return float(np.mean(hits))

upper = float(np.mean([upper_bound_correct(b, gt, pb.eval_prompts)
                       for b, gt in zip(pb.bundles, pb.gt_labels)]))
print(f"{len(pb.bundles)} objects, 5 views each, 1 correct view per object")
print(f"\nupper bound (any view correct): {upper:.3f}")

print("\nentropy list = the scene vocabulary:")
for strategy in ("min_entropy", "max_score", "entropy_weighted",
                 "score_weighted", "average", "mode"):
    print(f"  {strategy:17s} {accuracy(strategy, pb.bundles, pb.entropy_prompts):.3f}")

off = rebundle(pb.bundles, pb.off_vocab_prompts, pb.eval_prompts)
print("\nentropy list with the vocabulary removed:")
for strategy in ("min_entropy", "average"):
    print(f"  {strategy:17s} {accuracy(strategy, off, pb.off_vocab_prompts):.3f}")

bundle = pb.bundles[0]
print(f"\nper-view entropies of object 0 "
      f"(correct view is #{pb.correct_positions[0]}):")
for i, h in enumerate(bundle.entropies):
    print(f"  view {i}: H = {h:.3f}")

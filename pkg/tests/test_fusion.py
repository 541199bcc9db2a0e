"""Fusion/selection strategies and the upper-bound oracle."""
import numpy as np
import pytest

from ovseg3d.errors import DegenerateFusionError
from ovseg3d.features import (ROLE_ENTROPY, ROLE_EVALUATION,
                              ConceptDistribution, PromptList,
                              concept_distribution, normalize_feature)
from ovseg3d.fusion import (STRATEGIES, ViewBundle, apply_strategy,
                            build_view_bundle, classify_mode, entropy_weights,
                            fuse_average, fuse_weighted, score_weights,
                            select_max_score, select_min_entropy,
                            upper_bound_correct)
from ovseg3d.synthetic import make_planted_bundles, rebundle


def unit(v):
    return normalize_feature(np.asarray(v, dtype=np.float64))


def fake_dist(entropy_value, max_score=0.0, n=3):
    return ConceptDistribution(np.full(n, 1 / n), entropy_value, 0, max_score)


def bundle_with(entropies=None, scores=None, dim=4):
    n = len(entropies or scores)
    feats = tuple(unit(np.eye(dim)[i % dim] + 0.01) for i in range(n))
    ent = tuple(fake_dist(entropies[i] if entropies else 1.0,
                          scores[i] if scores else 0.5) for i in range(n))
    ev = tuple(fake_dist(1.0, 0.5) for _ in range(n))
    return ViewBundle(0, feats, ent, ev)


def label_prompts(*labels, role=ROLE_EVALUATION, dim=8):
    emb = np.zeros((len(labels), dim))
    emb[np.arange(len(labels)), np.arange(len(labels))] = 1.0
    return PromptList(tuple(labels), emb, role)


def bundle_predicting(labels, prompts, entropy_prompts):
    """One view per label, each aligned with that label's prompt row."""
    feats = [prompts.embeddings[prompts.labels.index(lab)] for lab in labels]
    return build_view_bundle(0, feats, entropy_prompts, prompts)


class TestFuseAverage:
    def test_idempotent_on_identical_views(self):
        f = unit([1, 2, 3, 4])
        b = ViewBundle(0, (f, f, f), (fake_dist(1),) * 3, (fake_dist(1),) * 3)
        np.testing.assert_allclose(fuse_average(b), f, atol=1e-12)

    def test_orthogonal_pair(self):
        f1, f2 = unit([1, 0, 0, 0]), unit([0, 1, 0, 0])
        b = ViewBundle(0, (f1, f2), (fake_dist(1),) * 2, (fake_dist(1),) * 2)
        fused = fuse_average(b)
        assert abs(float(fused @ f1) - 0.7071) < 1e-4
        assert abs(float(fused @ f2) - 0.7071) < 1e-4

    def test_antipodal_degenerate(self):
        f = unit([1, 0, 0, 0])
        b = ViewBundle(0, (f, -f), (fake_dist(1),) * 2, (fake_dist(1),) * 2)
        with pytest.raises(DegenerateFusionError):
            fuse_average(b)


class TestFuseWeighted:
    def test_uniform_equals_average(self, rng):
        feats = tuple(unit(rng.standard_normal(6)) for _ in range(4))
        b = ViewBundle(0, feats, (fake_dist(1),) * 4, (fake_dist(1),) * 4)
        np.testing.assert_allclose(fuse_weighted(b, [0.7] * 4),
                                   fuse_average(b), atol=1e-7)

    def test_single_hot_weight_selects_view(self):
        f1, f2 = unit([1, 0, 0, 0]), unit([0, 1, 0, 0])
        b = ViewBundle(0, (f1, f2), (fake_dist(1),) * 2, (fake_dist(1),) * 2)
        np.testing.assert_allclose(fuse_weighted(b, [1.0, 0.0]), f1, atol=1e-12)

    def test_two_to_one_weighting(self):
        f1, f2 = unit([1, 0, 0, 0]), unit([0, 1, 0, 0])
        b = ViewBundle(0, (f1, f2), (fake_dist(1),) * 2, (fake_dist(1),) * 2)
        expected = unit((2 * f1 + f2) / 3)
        np.testing.assert_allclose(fuse_weighted(b, [2.0, 1.0]), expected, atol=1e-12)

    def test_all_zero_weights(self):
        b = bundle_with(entropies=[1.0, 2.0])
        with pytest.raises(ValueError):
            fuse_weighted(b, [0.0, 0.0])

    def test_negative_weight(self):
        b = bundle_with(entropies=[1.0, 2.0])
        with pytest.raises(ValueError):
            fuse_weighted(b, [1.0, -0.5])

    def test_entropy_weights_invert_by_default(self):
        b = bundle_with(entropies=[0.1, 2.0])
        w = entropy_weights(b)
        assert w[0] > w[1]
        w_direct = entropy_weights(b, direct=True)
        assert w_direct[1] > w_direct[0]

    def test_score_weights_shifted_positive(self):
        b = bundle_with(scores=[-0.2, 0.4, 0.1])
        w = score_weights(b)
        assert (w > 0).all() and w.argmax() == 1


class TestSelection:
    def test_min_entropy_picks_lowest(self):
        b = bundle_with(entropies=[2.1, 0.4, 1.0])
        idx, feat = select_min_entropy(b)
        assert idx == 1
        assert feat is b.features[1]   # bitwise-identical input feature

    def test_single_view(self):
        b = bundle_with(entropies=[0.9])
        assert select_min_entropy(b)[0] == 0
        assert select_max_score(b)[0] == 0

    def test_entropy_tie_lowest_index(self):
        b = bundle_with(entropies=[0.4, 0.4])
        assert select_min_entropy(b)[0] == 0

    def test_max_score_picks_highest(self):
        b = bundle_with(scores=[0.21, 0.35, 0.30])
        idx, feat = select_max_score(b)
        assert idx == 1 and feat is b.features[1]

    def test_score_tie_lowest_index(self):
        b = bundle_with(scores=[0.3, 0.3, 0.1])
        assert select_max_score(b)[0] == 0


class TestClassifyMode:
    def setup_method(self):
        self.eval_prompts = label_prompts("chair", "table", "lamp")
        self.ent_prompts = label_prompts("chair", "table", "lamp",
                                         role=ROLE_ENTROPY)

    def test_majority(self):
        b = bundle_predicting(["chair", "chair", "table"],
                              self.eval_prompts, self.ent_prompts)
        assert classify_mode(b, self.eval_prompts) == "chair"

    def test_tie_earliest_view(self):
        b = bundle_predicting(["chair", "table"],
                              self.eval_prompts, self.ent_prompts)
        assert classify_mode(b, self.eval_prompts) == "chair"

    def test_unanimous(self):
        b = bundle_predicting(["lamp", "lamp", "lamp"],
                              self.eval_prompts, self.ent_prompts)
        assert classify_mode(b, self.eval_prompts) == "lamp"

    def test_tie_resolved_by_modal_count_not_first_label(self):
        # counts: chair 1, table 2 -> table despite chair appearing first
        b = bundle_predicting(["chair", "table", "table"],
                              self.eval_prompts, self.ent_prompts)
        assert classify_mode(b, self.eval_prompts) == "table"


class TestUpperBound:
    def setup_method(self):
        self.eval_prompts = label_prompts("chair", "table", "lamp")
        self.ent_prompts = label_prompts("chair", "table", "lamp",
                                         role=ROLE_ENTROPY)

    def test_any_view_correct(self):
        b = bundle_predicting(["chair", "table", "lamp"],
                              self.eval_prompts, self.ent_prompts)
        assert upper_bound_correct(b, "table", self.eval_prompts)

    def test_no_view_correct(self):
        b = bundle_predicting(["chair", "chair"],
                              self.eval_prompts, self.ent_prompts)
        assert not upper_bound_correct(b, "lamp", self.eval_prompts)

    def test_case_folded_match(self):
        b = bundle_predicting(["chair"], self.eval_prompts, self.ent_prompts)
        assert upper_bound_correct(b, "CHAIR", self.eval_prompts)

    def test_ground_truth_not_in_list(self):
        b = bundle_predicting(["chair"], self.eval_prompts, self.ent_prompts)
        with pytest.raises(ValueError):
            upper_bound_correct(b, "sofa", self.eval_prompts)


class TestApplyStrategy:
    def test_unknown_strategy(self):
        b = bundle_with(entropies=[1.0])
        with pytest.raises(ValueError):
            apply_strategy("psychic", b, label_prompts("a", role=ROLE_ENTROPY),
                           label_prompts("a"))

    def test_upper_bound_rejected(self):
        b = bundle_with(entropies=[1.0])
        with pytest.raises(ValueError, match="ground truth"):
            apply_strategy("upper_bound", b,
                           label_prompts("a", role=ROLE_ENTROPY),
                           label_prompts("a"))

    def test_role_enforcement(self):
        prompts = label_prompts("a", "b")
        with pytest.raises(ValueError, match="entropy role"):
            build_view_bundle(0, [prompts.embeddings[0]], prompts, prompts)

    def test_selection_strategies_return_input_feature(self):
        pb = make_planted_bundles(n_objects=5, seed=3)
        for b in pb.bundles:
            for strategy in ("min_entropy", "max_score"):
                res = apply_strategy(strategy, b, pb.entropy_prompts,
                                     pb.eval_prompts)
                assert any(res.feature is f for f in b.features)

    def test_permutation_changes_nothing_without_ties(self, rng):
        pb = make_planted_bundles(n_objects=8, seed=4)
        for b in pb.bundles[:4]:
            perm = rng.permutation(len(b))
            shuffled = ViewBundle(b.segment_id,
                                  tuple(b.features[i] for i in perm),
                                  tuple(b.entropy_dists[i] for i in perm),
                                  tuple(b.eval_dists[i] for i in perm))
            for strategy in ("average", "min_entropy", "max_score",
                             "entropy_weighted", "score_weighted"):
                a = apply_strategy(strategy, b, pb.entropy_prompts, pb.eval_prompts)
                c = apply_strategy(strategy, shuffled, pb.entropy_prompts,
                                   pb.eval_prompts)
                assert a.label == c.label
                np.testing.assert_allclose(a.feature, c.feature, atol=1e-12)


class TestDominanceAndSelectionAdvantage:
    def test_upper_bound_dominates_every_strategy(self):
        for seed in range(3):
            pb = make_planted_bundles(n_objects=30, seed=seed,
                                      views_per_object=int(3 + seed))
            ub = np.mean([upper_bound_correct(b, gt, pb.eval_prompts)
                          for b, gt in zip(pb.bundles, pb.gt_labels)])
            for strategy in ("average", "entropy_weighted", "score_weighted",
                             "min_entropy", "max_score", "mode"):
                acc = np.mean([
                    apply_strategy(strategy, b, pb.entropy_prompts,
                                   pb.eval_prompts).label.casefold() == gt
                    for b, gt in zip(pb.bundles, pb.gt_labels)])
                assert ub >= acc

    def test_min_entropy_beats_average_with_planted_concepts(self):
        pb = make_planted_bundles(n_objects=60, seed=11)
        min_h = np.mean([apply_strategy("min_entropy", b, pb.entropy_prompts,
                                        pb.eval_prompts).label.casefold() == gt
                         for b, gt in zip(pb.bundles, pb.gt_labels)])
        avg = np.mean([apply_strategy("average", b, pb.entropy_prompts,
                                      pb.eval_prompts).label.casefold() == gt
                       for b, gt in zip(pb.bundles, pb.gt_labels)])
        assert min_h > avg

    def test_advantage_vanishes_off_vocabulary(self):
        pb = make_planted_bundles(n_objects=80, seed=12)
        off = rebundle(pb.bundles, pb.off_vocab_prompts, pb.eval_prompts)
        min_h = np.mean([apply_strategy("min_entropy", b, pb.off_vocab_prompts,
                                        pb.eval_prompts).label.casefold() == gt
                         for b, gt in zip(off, pb.gt_labels)])
        avg = np.mean([apply_strategy("average", b, pb.off_vocab_prompts,
                                      pb.eval_prompts).label.casefold() == gt
                       for b, gt in zip(off, pb.gt_labels)])
        assert abs(min_h - avg) < 0.15

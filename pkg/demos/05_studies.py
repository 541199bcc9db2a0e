"""The three comparative studies, desk-scale, no dataset required.

Study 1 sweeps crop scales and multi-scale fusion (accuracy and cost per
view). Study 2 compares fusing strategies against the any-view-correct
upper bound. Study 3 sweeps entropy prompt lists for the selection
strategies. CSVs land in ./demo_studies/.
"""
from pathlib import Path

from ovseg3d.embedders import MockEmbedder
from ovseg3d.features import ROLE_EVALUATION, build_prompt_list
from ovseg3d.studies import (study1_crops, study2_fusion, study3_selection,
                             write_gnuplot_dat, write_study1_csv,
                             write_study2_csv, write_study3_csv)
from ovseg3d.synthetic import (make_planted_bundles, scene_camera_centers,
                               three_card_scene)

out = Path("demo_studies")
out.mkdir(exist_ok=True)

print("== study 1: crop scales ==")
scene = three_card_scene()
frames = scene.frames(scene_camera_centers(6))
gt = scene.ground_truth_cloud(pitch=0.02)
embedder = MockEmbedder(scene.labels, dimension=32, seed=0, noise=0.02)
eval_prompts = build_prompt_list(scene.labels + ["sofa", "rug"], embedder,
                                 role=ROLE_EVALUATION)
scale_sets = [(1.0,), (1.2,), (1.5,), (1.8,), (2.0,),
              (1.0, 1.5), (1.0, 1.2, 1.8), (1.0, 1.2, 1.5, 1.8, 2.0)]
rows1 = study1_crops(gt, scene.labels, frames, embedder, eval_prompts,
                     scale_sets=scale_sets, min_visible=10)
for row in rows1:
    print(f"  scales {row.name:20s} accuracy {row.accuracy:.3f}  "
          f"{row.embed_ms_per_view:6.2f} ms/view")
write_study1_csv(rows1, out / "study1_crops.csv")

print("\n== study 2: fusion vs upper bound ==")
pb = make_planted_bundles(n_objects=150, views_per_object=5, seed=1)
table = study2_fusion(pb.bundles, pb.gt_labels, pb.eval_prompts)
for name, value in table.items():
    print(f"  {name:12s} {value:.3f}")
write_study2_csv(table, out / "study2_fusion.csv")

print("\n== study 3: entropy-list sensitivity ==")
features = [b.features for b in pb.bundles]
rows3 = study3_selection(features, pb.gt_labels, pb.eval_prompts,
                         {"scene_vocabulary": pb.entropy_prompts,
                          "unrelated_labels": pb.off_vocab_prompts,
                          "evaluation_list": pb.eval_prompts.with_role("entropy")})
for row in rows3:
    cells = "  ".join(f"{k}={row[k]:.3f}" for k in
                      ("min_entropy", "max_score", "average", "upper_bound"))
    print(f"  {row['entropy_list']:18s} {cells}")
write_study3_csv(rows3, out / "study3_selection.csv")
write_gnuplot_dat(rows3, out / "study3_selection.dat")
print(f"\nCSV + gnuplot data in {out}/")
